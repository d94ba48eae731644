//! Baton scheduler for sequential-interleaving mode.
//!
//! Every model still runs on its own thread, but only the baton holder
//! executes. The holder keeps the baton until it would block on an empty
//! RX queue or exits; the baton then moves round-robin to the next model
//! that can make progress. All decisions depend only on queue contents, so
//! the interleaving is a pure function of the scenario.

use std::sync::{Condvar, Mutex, MutexGuard};

use crossbeam_channel::Receiver;

use super::{Packet, RuntimeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Ready,
    Blocked,
    Done,
}

struct State {
    current: Option<usize>,
    status: Vec<Status>,
    /// Model handed the baton only to be told that nobody can progress.
    victim: Option<usize>,
}

pub(crate) struct Baton {
    state: Mutex<State>,
    turn: Condvar,
    inboxes: Vec<Receiver<Packet>>,
}

impl Baton {
    pub(crate) fn new(inboxes: Vec<Receiver<Packet>>) -> Self {
        let n = inboxes.len();
        Self {
            state: Mutex::new(State {
                current: if n > 0 { Some(0) } else { None },
                status: vec![Status::Ready; n],
                victim: None,
            }),
            turn: Condvar::new(),
            inboxes,
        }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn wait_turn(&self, me: usize, mut st: MutexGuard<'_, State>) -> Result<(), RuntimeError> {
        while st.current != Some(me) {
            st = self.turn.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        st.status[me] = Status::Ready;
        if st.victim == Some(me) {
            st.victim = None;
            return Err(RuntimeError::Deadlock);
        }
        Ok(())
    }

    /// Blocks the calling worker until model `me` holds the baton.
    pub(crate) fn acquire(&self, me: usize) -> Result<(), RuntimeError> {
        let st = self.lock();
        self.wait_turn(me, st)
    }

    /// Called by the holder when its RX queue is empty.
    pub(crate) fn block(&self, me: usize) -> Result<(), RuntimeError> {
        let mut st = self.lock();
        st.status[me] = Status::Blocked;
        self.pass(&mut st, me);
        self.wait_turn(me, st)
    }

    pub(crate) fn exit(&self, me: usize) {
        let mut st = self.lock();
        st.status[me] = Status::Done;
        self.pass(&mut st, me);
    }

    fn pass(&self, st: &mut State, me: usize) {
        let n = st.status.len();
        let order = (1..=n).map(|off| (me + off) % n);
        let next = order.clone().find(|&idx| match st.status[idx] {
            Status::Ready => true,
            Status::Blocked => !self.inboxes[idx].is_empty(),
            Status::Done => false,
        });
        st.current = next.or_else(|| {
            // Everyone left is blocked on an empty queue. The first of them
            // in baton order gets the baton together with a deadlock error;
            // its exit then releases the others through synthesized FINs.
            let victim = order.clone().find(|&idx| st.status[idx] != Status::Done);
            st.victim = victim;
            victim
        });
        self.turn.notify_all();
    }
}
