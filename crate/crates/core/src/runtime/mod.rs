//! The coupling runtime: one worker per registered model, each owning a
//! [`Tile`], with packets routed between tiles over unbounded FIFOs.
//!
//! There is no central scheduler. Models block on their own RX queue and
//! everything else follows from the packets they exchange. For the
//! determinism oracle the runtime can also run in
//! [`ExecutionMode::Sequential`], where a baton lets exactly one model
//! execute at a time.

mod packet;
mod sched;
mod tile;

use std::any::Any;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver};
use thiserror::Error;

pub use packet::{ModelId, Packet, PacketHeader, PacketType};
pub use tile::{Router, Tile, TileStats};

use sched::Baton;
use tile::TileShared;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("addressing error: {0} does not exist")]
    UnknownModel(ModelId),
    #[error("invalid packet: {0}")]
    InvalidPacket(String),
    #[error("no registered entry point named `{0}`")]
    MissingEntry(String),
    #[error("tile of {0} was taken out of the runtime")]
    TileTaken(ModelId),
    #[error("every remaining model is blocked on an empty queue")]
    Deadlock,
    #[error("packet queue disconnected")]
    Disconnected,
}

/// One registered model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub id: ModelId,
    pub entry: String,
    pub dt_seconds: f64,
}

/// Validated model list. The microstep is the smallest `dt`; the coupled
/// interval is the largest.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeConfig {
    models: Vec<ModelSpec>,
    microstep: f64,
    reference_dt: f64,
}

fn integer_ratio(num: f64, den: f64) -> Option<u64> {
    let r = num / den;
    let n = r.round();
    ((r - n).abs() <= 1e-9 * n.max(1.0) && n >= 1.0).then_some(n as u64)
}

impl RuntimeConfig {
    pub fn new<S: Into<String>>(models: impl IntoIterator<Item = (u32, S, f64)>) -> Result<Self, RuntimeError> {
        let mut models: Vec<ModelSpec> = models
            .into_iter()
            .map(|(id, entry, dt)| ModelSpec { id: ModelId(id), entry: entry.into(), dt_seconds: dt })
            .collect();
        if models.is_empty() {
            return Err(RuntimeError::Config("no models configured".into()));
        }
        let ids: BTreeSet<_> = models.iter().map(|m| m.id).collect();
        if ids.len() != models.len() {
            return Err(RuntimeError::Config("duplicate model id".into()));
        }
        models.sort_by_key(|m| m.id);
        for (n, m) in models.iter().enumerate() {
            if m.id.0 as usize != n + 1 {
                return Err(RuntimeError::Config(format!(
                    "model ids must be contiguous from 1, found {}",
                    m.id.0
                )));
            }
            if !(m.dt_seconds.is_finite() && m.dt_seconds > 0.0) {
                return Err(RuntimeError::Config(format!("{} has non-positive dt {}", m.id, m.dt_seconds)));
            }
        }
        let microstep = models.iter().map(|m| m.dt_seconds).fold(f64::INFINITY, f64::min);
        let reference_dt = models.iter().map(|m| m.dt_seconds).fold(0.0, f64::max);
        for m in &models {
            if integer_ratio(reference_dt, m.dt_seconds).is_none() {
                return Err(RuntimeError::Config(format!(
                    "dt {} of {} does not divide the reference dt {}",
                    m.dt_seconds, m.id, reference_dt
                )));
            }
            if integer_ratio(m.dt_seconds, microstep).is_none() {
                return Err(RuntimeError::Config(format!(
                    "dt {} of {} is not a multiple of the microstep {}",
                    m.dt_seconds, m.id, microstep
                )));
            }
        }
        Ok(Self { models, microstep, reference_dt })
    }

    pub fn models(&self) -> &[ModelSpec] {
        &self.models
    }

    pub fn model(&self, id: ModelId) -> Option<&ModelSpec> {
        self.models.get((id.0 as usize).checked_sub(1)?)
    }

    pub fn microstep_seconds(&self) -> f64 {
        self.microstep
    }

    pub fn reference_dt(&self) -> f64 {
        self.reference_dt
    }

    /// `reference_dt / microstep`.
    pub fn coupled_interval_microsteps(&self) -> u64 {
        integer_ratio(self.reference_dt, self.microstep).unwrap_or(1)
    }

    pub fn dt_microsteps(&self, id: ModelId) -> Option<u64> {
        let m = self.model(id)?;
        integer_ratio(m.dt_seconds, self.microstep)
    }

    /// Every model id except `id`.
    pub fn peers_of(&self, id: ModelId) -> Vec<ModelId> {
        self.models.iter().map(|m| m.id).filter(|&m| m != id).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    /// One free-running OS thread per model.
    #[default]
    Threaded,
    /// One thread per model, but only one executes at a time (baton passing).
    Sequential,
}

/// Why a model did not complete.
#[derive(Debug)]
pub enum ModelFailure<E> {
    Error(E),
    Panic(String),
    Runtime(RuntimeError),
}

impl<E: fmt::Display> fmt::Display for ModelFailure<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelFailure::Error(e) => write!(f, "{e}"),
            ModelFailure::Panic(msg) => write!(f, "panicked: {msg}"),
            ModelFailure::Runtime(e) => write!(f, "{e}"),
        }
    }
}

pub struct ModelOutcome<R, E> {
    pub id: ModelId,
    pub entry: String,
    pub result: Result<R, ModelFailure<E>>,
    pub wall_time: Duration,
    pub stats: TileStats,
}

impl<R, E> ModelOutcome<R, E> {
    pub fn succeeded(&self) -> bool {
        self.result.is_ok()
    }
}

pub struct RunReport<R, E> {
    pub outcomes: Vec<ModelOutcome<R, E>>,
}

impl<R, E> RunReport<R, E> {
    pub fn all_succeeded(&self) -> bool {
        self.outcomes.iter().all(ModelOutcome::succeeded)
    }

    pub fn outcome(&self, id: ModelId) -> Option<&ModelOutcome<R, E>> {
        self.outcomes.iter().find(|o| o.id == id)
    }
}

type Entry<R, E> = Box<dyn FnOnce(Tile, ModelId) -> Result<R, E> + Send>;

/// Owns the tiles and registered entry points until [`Runtime::run`].
pub struct Runtime<R, E> {
    config: RuntimeConfig,
    mode: ExecutionMode,
    router: Router,
    receivers: Vec<Receiver<Packet>>,
    shared: Vec<Arc<TileShared>>,
    tiles: Vec<Option<Tile>>,
    entries: HashMap<String, Entry<R, E>>,
}

/// Creates one tile per configured model. No workers are started.
pub fn create_runtime<R, E>(config: RuntimeConfig) -> Runtime<R, E> {
    Runtime::new(config)
}

impl<R, E> Runtime<R, E> {
    pub fn new(config: RuntimeConfig) -> Self {
        let n = config.models().len();
        let (senders, receivers): (Vec<_>, Vec<_>) = (0..n).map(|_| unbounded()).unzip();
        let shared: Vec<Arc<TileShared>> = (0..n).map(|_| Arc::new(TileShared::default())).collect();
        let router = Router::new(senders, shared.clone());
        let tiles = config
            .models()
            .iter()
            .enumerate()
            .map(|(i, m)| Some(Tile::new(m.id, receivers[i].clone(), router.clone(), shared[i].clone())))
            .collect();
        Self {
            config,
            mode: ExecutionMode::Threaded,
            router,
            receivers,
            shared,
            tiles,
            entries: HashMap::new(),
        }
    }

    pub fn with_mode(mut self, mode: ExecutionMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.config
    }

    pub fn router(&self) -> Router {
        self.router.clone()
    }

    /// Low-level push onto a destination tile's RX queue.
    pub fn send(&self, packet: Packet) -> Result<(), RuntimeError> {
        self.router.send(packet)
    }

    pub fn tile(&self, id: ModelId) -> Result<&Tile, RuntimeError> {
        let slot = (id.0 as usize).checked_sub(1).and_then(|i| self.tiles.get(i)).ok_or(RuntimeError::UnknownModel(id))?;
        slot.as_ref().ok_or(RuntimeError::TileTaken(id))
    }

    /// Detaches a tile so it can be driven by hand; the runtime can no
    /// longer run that model afterwards.
    pub fn take_tile(&mut self, id: ModelId) -> Result<Tile, RuntimeError> {
        let slot = (id.0 as usize)
            .checked_sub(1)
            .and_then(|i| self.tiles.get_mut(i))
            .ok_or(RuntimeError::UnknownModel(id))?;
        slot.take().ok_or(RuntimeError::TileTaken(id))
    }

    /// Binds `entry` (a name used in the config) to the procedure the
    /// model's worker runs, mirroring `program_<model>(tile, model_id)`.
    pub fn register(
        &mut self,
        entry: &str,
        f: impl FnOnce(Tile, ModelId) -> Result<R, E> + Send + 'static,
    ) -> Result<(), RuntimeError> {
        if !self.config.models().iter().any(|m| m.entry == entry) {
            return Err(RuntimeError::MissingEntry(entry.to_string()));
        }
        self.entries.insert(entry.to_string(), Box::new(f));
        Ok(())
    }
}

fn panic_message(payload: Box<dyn Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

impl<R: Send + 'static, E: Send + 'static> Runtime<R, E> {
    /// Runs every model's entry exactly once on its own worker and waits for
    /// all of them.
    ///
    /// A model that returns (successfully or not) without having sent FIN to
    /// every peer has FIN sent on its behalf, so peers blocked on it are
    /// released.
    pub fn run(mut self) -> Result<RunReport<R, E>, RuntimeError> {
        let mut jobs = Vec::with_capacity(self.config.models().len());
        for (idx, spec) in self.config.models().iter().enumerate() {
            let tile = self.tiles[idx].take().ok_or(RuntimeError::TileTaken(spec.id))?;
            let entry = self.entries.remove(&spec.entry).ok_or_else(|| RuntimeError::MissingEntry(spec.entry.clone()))?;
            jobs.push((spec.clone(), tile, entry));
        }
        let baton = (self.mode == ExecutionMode::Sequential).then(|| Arc::new(Baton::new(self.receivers.clone())));

        let mut handles = Vec::with_capacity(jobs.len());
        for (idx, (spec, mut tile, entry)) in jobs.into_iter().enumerate() {
            let router = self.router.clone();
            let baton = baton.clone();
            if let Some(b) = &baton {
                tile.attach_baton(b.clone());
            }
            let id = spec.id;
            let handle = thread::Builder::new()
                .name(format!("gmcf-{}", spec.entry))
                .spawn(move || {
                    let start = Instant::now();
                    let result = match baton.as_ref().map(|b| b.acquire(idx)) {
                        Some(Err(e)) => Err(ModelFailure::Runtime(e)),
                        _ => match catch_unwind(AssertUnwindSafe(move || entry(tile, id))) {
                            Ok(Ok(r)) => Ok(r),
                            Ok(Err(e)) => Err(ModelFailure::Error(e)),
                            Err(payload) => Err(ModelFailure::Panic(panic_message(payload))),
                        },
                    };
                    let wall_time = start.elapsed();
                    router.synthesize_fins(id, 0);
                    if let Some(b) = &baton {
                        b.exit(idx);
                    }
                    (result, wall_time)
                })
                .map_err(|e| RuntimeError::Config(format!("cannot spawn worker: {e}")))?;
            handles.push((spec, handle));
        }

        let mut outcomes = Vec::with_capacity(handles.len());
        for (spec, handle) in handles {
            let (result, wall_time) = handle
                .join()
                .unwrap_or_else(|p| (Err(ModelFailure::Panic(panic_message(p))), Duration::ZERO));
            outcomes.push((spec, result, wall_time));
        }
        let outcomes = outcomes
            .into_iter()
            .enumerate()
            .map(|(idx, (spec, result, wall_time))| {
                let mut stats = self.shared[idx].stats().clone();
                stats.rx_at_exit = self.receivers[idx].len() as u64;
                ModelOutcome { id: spec.id, entry: spec.entry, result, wall_time, stats }
            })
            .collect();
        Ok(RunReport { outcomes })
    }
}
