use std::collections::{BTreeSet, VecDeque};
use std::sync::{Arc, Mutex, MutexGuard};

use crossbeam_channel::{Receiver, Sender, TryRecvError};
use serde::Serialize;

use super::sched::Baton;
use super::{ModelId, Packet, PacketHeader, PacketType, RuntimeError};

/// Per-model traffic bookkeeping, readable after the run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TileStats {
    /// Packets addressed to this model.
    pub delivered: u64,
    /// Packets handed to the model code.
    pub returned: u64,
    pub pending_at_exit: u64,
    pub rx_at_exit: u64,
    /// Packets sent by this model, indexed by [`PacketType::index`].
    pub sent: [u64; 5],
    /// FIN packets the runtime sent on this model's behalf.
    pub synthesized_fin: u64,
    pub fin_sent_to: BTreeSet<ModelId>,
    /// Headers of returned packets, in the order the model saw them.
    pub consumed: Vec<PacketHeader>,
}

impl TileStats {
    pub fn sent_of(&self, ptype: PacketType) -> u64 {
        self.sent[ptype.index()]
    }

    pub fn consumed_of(&self, ptype: PacketType) -> usize {
        self.consumed.iter().filter(|h| h.ptype == ptype).count()
    }
}

#[derive(Default)]
pub(crate) struct TileShared {
    stats: Mutex<TileStats>,
}

impl TileShared {
    pub(crate) fn stats(&self) -> MutexGuard<'_, TileStats> {
        self.stats.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Addressing layer shared by all tiles: one sender per model RX queue.
#[derive(Clone)]
pub struct Router {
    inner: Arc<RouterInner>,
}

struct RouterInner {
    senders: Vec<Sender<Packet>>,
    shared: Vec<Arc<TileShared>>,
}

impl Router {
    pub(crate) fn new(senders: Vec<Sender<Packet>>, shared: Vec<Arc<TileShared>>) -> Self {
        Self { inner: Arc::new(RouterInner { senders, shared }) }
    }

    fn slot(&self, id: ModelId) -> Option<usize> {
        let idx = (id.0 as usize).checked_sub(1)?;
        (idx < self.inner.senders.len()).then_some(idx)
    }

    pub fn model_count(&self) -> usize {
        self.inner.senders.len()
    }

    /// Enqueues `packet` on its destination's RX queue.
    pub fn send(&self, packet: Packet) -> Result<(), RuntimeError> {
        self.dispatch(packet, false)
    }

    fn dispatch(&self, packet: Packet, synthesized: bool) -> Result<(), RuntimeError> {
        let dst = self.slot(packet.destination()).ok_or(RuntimeError::UnknownModel(packet.destination()))?;
        let src = self.slot(packet.source()).ok_or(RuntimeError::UnknownModel(packet.source()))?;
        {
            let mut s = self.inner.shared[src].stats();
            s.sent[packet.ptype().index()] += 1;
            if packet.ptype() == PacketType::Fin {
                s.fin_sent_to.insert(packet.destination());
                if synthesized {
                    s.synthesized_fin += 1;
                }
            }
        }
        self.inner.shared[dst].stats().delivered += 1;
        self.inner.senders[dst].send(packet).map_err(|_| RuntimeError::Disconnected)
    }

    /// Sends FIN from `id` to every model it has not already sent one to.
    pub(crate) fn synthesize_fins(&self, id: ModelId, timestamp: u64) {
        let Some(src) = self.slot(id) else { return };
        let already = self.inner.shared[src].stats().fin_sent_to.clone();
        for dst in 1..=self.model_count() as u32 {
            let dst = ModelId(dst);
            if dst == id || already.contains(&dst) {
                continue;
            }
            if let Ok(fin) = Packet::fin(id, dst, timestamp) {
                let _ = self.dispatch(fin, true);
            }
        }
    }
}

/// A model's communication endpoint: the main RX queue plus one pending
/// queue per packet type.
///
/// Only the owning worker receives through a tile; any worker may send to
/// it through the [`Router`]. Pending entries carry their arrival number so
/// that pending-first scans return packets in the order they arrived.
pub struct Tile {
    model_id: ModelId,
    rx: Receiver<Packet>,
    pending: [VecDeque<(u64, Packet)>; 5],
    arrivals: u64,
    router: Router,
    shared: Arc<TileShared>,
    baton: Option<Arc<Baton>>,
}

impl Tile {
    pub(crate) fn new(model_id: ModelId, rx: Receiver<Packet>, router: Router, shared: Arc<TileShared>) -> Self {
        Self {
            model_id,
            rx,
            pending: Default::default(),
            arrivals: 0,
            router,
            shared,
            baton: None,
        }
    }

    pub(crate) fn attach_baton(&mut self, baton: Arc<Baton>) {
        self.baton = Some(baton);
    }

    pub fn model_id(&self) -> ModelId {
        self.model_id
    }

    pub fn model_count(&self) -> usize {
        self.router.model_count()
    }

    /// Sends a packet from this tile's model.
    pub fn send(&self, packet: Packet) -> Result<(), RuntimeError> {
        if packet.source() != self.model_id {
            return Err(RuntimeError::InvalidPacket(format!(
                "{} cannot send a packet whose source is {}",
                self.model_id,
                packet.source()
            )));
        }
        self.router.send(packet)
    }

    pub fn pending_len(&self, ptype: PacketType) -> usize {
        self.pending[ptype.index()].len()
    }

    pub fn rx_len(&self) -> usize {
        self.rx.len()
    }

    /// Snapshot of this tile's counters.
    pub fn stats(&self) -> TileStats {
        self.shared.stats().clone()
    }

    fn hand_over(&self, packet: Packet) -> Packet {
        let mut s = self.shared.stats();
        s.returned += 1;
        s.consumed.push(packet.header());
        packet
    }

    fn bank(&mut self, seq: u64, packet: Packet) {
        self.pending[packet.ptype().index()].push_back((seq, packet));
    }

    fn stamp(&mut self, packet: Packet) -> (u64, Packet) {
        let seq = self.arrivals;
        self.arrivals += 1;
        (seq, packet)
    }

    fn next_arrival(&mut self) -> Result<(u64, Packet), RuntimeError> {
        loop {
            match self.rx.try_recv() {
                Ok(p) => return Ok(self.stamp(p)),
                Err(TryRecvError::Disconnected) => return Err(RuntimeError::Disconnected),
                Err(TryRecvError::Empty) => {}
            }
            match &self.baton {
                Some(baton) => baton.block(self.model_id.0 as usize - 1)?,
                None => {
                    let p = self.rx.recv().map_err(|_| RuntimeError::Disconnected)?;
                    return Ok(self.stamp(p));
                }
            }
        }
    }

    fn take_pending(&mut self, accept: &mut impl FnMut(&Packet) -> bool) -> Option<Packet> {
        let mut best: Option<(u64, usize, usize)> = None;
        for (q, queue) in self.pending.iter().enumerate() {
            if let Some((pos, (seq, _))) = queue.iter().enumerate().find(|(_, (_, p))| accept(p)) {
                if best.is_none_or(|(s, _, _)| *seq < s) {
                    best = Some((*seq, q, pos));
                }
            }
        }
        let (_, q, pos) = best?;
        self.pending[q].remove(pos).map(|(_, p)| p)
    }

    /// Blocks until a packet satisfying `accept` is available and returns it.
    ///
    /// Pending queues are searched first, oldest arrival first; packets read
    /// from RX that are not accepted are banked in their pending queue.
    pub fn wait_matching(&mut self, mut accept: impl FnMut(&Packet) -> bool) -> Result<Packet, RuntimeError> {
        if let Some(p) = self.take_pending(&mut accept) {
            return Ok(self.hand_over(p));
        }
        loop {
            let (seq, p) = self.next_arrival()?;
            if accept(&p) {
                return Ok(self.hand_over(p));
            }
            self.bank(seq, p);
        }
    }

    /// Non-blocking variant of [`Tile::wait_matching`]: drains RX until a
    /// match is found or RX is empty.
    pub fn poll_matching(&mut self, mut accept: impl FnMut(&Packet) -> bool) -> Option<Packet> {
        if let Some(p) = self.take_pending(&mut accept) {
            return Some(self.hand_over(p));
        }
        while let Ok(p) = self.rx.try_recv() {
            let (seq, p) = self.stamp(p);
            if accept(&p) {
                return Some(self.hand_over(p));
            }
            self.bank(seq, p);
        }
        None
    }

    /// Returns one packet of type `ptype` from every model in `from`.
    ///
    /// A FIN from an awaited model fills that model's slot instead; callers
    /// must inspect the returned types. Packets are returned in the order the
    /// slots were filled.
    pub fn wait_for(&mut self, ptype: PacketType, from: &[ModelId]) -> Result<Vec<Packet>, RuntimeError> {
        let mut awaiting = BTreeSet::new();
        for &id in from {
            if id == self.model_id || id.0 == 0 || id.0 as usize > self.model_count() {
                return Err(RuntimeError::UnknownModel(id));
            }
            awaiting.insert(id);
        }
        let mut out = Vec::with_capacity(awaiting.len());
        while !awaiting.is_empty() {
            let p = self.wait_matching(|p| {
                awaiting.contains(&p.source()) && (p.ptype() == ptype || p.ptype() == PacketType::Fin)
            })?;
            awaiting.remove(&p.source());
            out.push(p);
        }
        Ok(out)
    }

    /// Removes and returns the oldest pending packet of `ptype`, without
    /// looking at RX.
    pub fn shift_pending(&mut self, ptype: PacketType) -> Option<Packet> {
        let (_, p) = self.pending[ptype.index()].pop_front()?;
        Some(self.hand_over(p))
    }
}

impl Drop for Tile {
    fn drop(&mut self) {
        let pending: usize = self.pending.iter().map(VecDeque::len).sum();
        self.shared.stats().pending_at_exit = pending as u64;
    }
}
