//! Per-model coupling calls layered on a [`Tile`]: `init`, `sync`,
//! `pre_exchange`, `post_exchange` and `finished`.
//!
//! A model's time is counted in microsteps. Synchronisation and data
//! exchange only happen at coupled boundaries, i.e. model times that are a
//! multiple of the coupled interval; elsewhere `sync` is a no-op.
//!
//! A consumer declares its producer with
//! [`ModelCouplingState::with_demand`]. Its boundary REQTIME then carries
//! the data id it is about to request, so the producer's `post_exchange`
//! knows which requests are still in flight and waits for exactly those.
//! Without the announcement, a request racing the producer's post would be
//! missed and both sides would end up blocked on each other.

mod profile;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::runtime::{ModelId, Packet, PacketType, RuntimeError, Tile};

pub use profile::{interpolate_profile, WindProfile, WindProfileSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("coupling configuration error: {0}")]
    Config(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("interpolation needs two received profiles, have {received}")]
    InterpolationGuard { received: u64 },
    #[error("t={t} is outside the profile bracket [{start}, {end}]")]
    OutOfRange { t: u64, start: u64, end: u64 },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("data exchange requested off a coupled boundary (t={t})")]
    NotAtBoundary { t: u64 },
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncStatus {
    Proceed,
    /// At least one peer has finished; see [`ModelCouplingState::peers_finished`].
    PeerFinished,
}

/// Result of a consumer's data request.
#[derive(Debug, Clone, PartialEq)]
pub enum DataExchange {
    Profile(WindProfile),
    PeerFinished,
}

/// What a consumer requests and from whom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Demand {
    pub producer: ModelId,
    pub data_id: u32,
}

pub struct ModelCouplingState {
    tile: Tile,
    model_id: ModelId,
    peers: Vec<ModelId>,
    dt_microsteps: u64,
    coupled_interval_microsteps: u64,
    current_step: u64,
    step_time: u64,
    peers_finished: BTreeSet<ModelId>,
    series: WindProfileSeries,
    demand: Option<Demand>,
    announced: Vec<(ModelId, u32)>,
    fin_sent: bool,
}

impl ModelCouplingState {
    pub fn init(
        tile: Tile,
        model_id: ModelId,
        peers: &[ModelId],
        dt_microsteps: u64,
        coupled_interval_microsteps: u64,
    ) -> Result<Self, CouplingError> {
        if tile.model_id() != model_id {
            return Err(CouplingError::Config(format!("tile belongs to {}, not {}", tile.model_id(), model_id)));
        }
        if dt_microsteps == 0 || coupled_interval_microsteps == 0 {
            return Err(CouplingError::Config("time steps must be at least one microstep".into()));
        }
        if coupled_interval_microsteps % dt_microsteps != 0 {
            return Err(CouplingError::Config(format!(
                "coupled interval {coupled_interval_microsteps} is not a multiple of dt {dt_microsteps}"
            )));
        }
        let mut unique = BTreeSet::new();
        for &p in peers {
            if p == model_id || p.0 == 0 || p.0 as usize > tile.model_count() || !unique.insert(p) {
                return Err(CouplingError::Config(format!("invalid peer {p} for {model_id}")));
            }
        }
        Ok(Self {
            tile,
            model_id,
            peers: unique.into_iter().collect(),
            dt_microsteps,
            coupled_interval_microsteps,
            current_step: 0,
            step_time: 0,
            peers_finished: BTreeSet::new(),
            series: WindProfileSeries::new(),
            demand: None,
            announced: Vec::new(),
            fin_sent: false,
        })
    }

    /// Declares this model a consumer of `data_id` from `producer`.
    pub fn with_demand(mut self, producer: ModelId, data_id: u32) -> Result<Self, CouplingError> {
        if !self.peers.contains(&producer) {
            return Err(CouplingError::Config(format!("{producer} is not a peer of {}", self.model_id)));
        }
        if data_id == 0 {
            return Err(CouplingError::Config("data id 0 is reserved".into()));
        }
        self.demand = Some(Demand { producer, data_id });
        Ok(self)
    }

    pub fn model_id(&self) -> ModelId {
        self.model_id
    }

    pub fn peers(&self) -> &[ModelId] {
        &self.peers
    }

    pub fn dt_microsteps(&self) -> u64 {
        self.dt_microsteps
    }

    pub fn coupled_interval_microsteps(&self) -> u64 {
        self.coupled_interval_microsteps
    }

    /// Number of `sync` calls made so far, i.e. the model loop counter.
    pub fn current_step(&self) -> u64 {
        self.current_step
    }

    /// Skips the loop counter ahead; only meaningful before the first sync.
    pub fn set_current_step(&mut self, step: u64) {
        self.current_step = step;
    }

    /// Model time of the iteration in progress, in microsteps.
    pub fn model_time(&self) -> u64 {
        self.step_time
    }

    pub fn at_boundary(&self) -> bool {
        self.step_time % self.coupled_interval_microsteps == 0
    }

    pub fn peers_finished(&self) -> &BTreeSet<ModelId> {
        &self.peers_finished
    }

    pub fn all_peers_finished(&self) -> bool {
        self.peers.iter().all(|p| self.peers_finished.contains(p))
    }

    pub fn series(&self) -> &WindProfileSeries {
        &self.series
    }

    pub fn demand(&self) -> Option<Demand> {
        self.demand
    }

    pub fn tile(&self) -> &Tile {
        &self.tile
    }

    pub fn into_tile(self) -> Tile {
        self.tile
    }

    fn live_peers(&self) -> Vec<ModelId> {
        self.peers.iter().copied().filter(|p| !self.peers_finished.contains(p)).collect()
    }

    fn answer_time_request(&mut self, req: &Packet) -> Result<(), CouplingError> {
        if req.data_id() != 0 {
            self.announced.push((req.source(), req.data_id()));
        }
        self.tile.send(Packet::resp_time(self.model_id, req.source(), self.step_time)?)?;
        Ok(())
    }

    /// Starts a model loop iteration.
    ///
    /// Off a coupled boundary this only advances the step counter. On a
    /// boundary it sends REQTIME to every unfinished peer and blocks until
    /// each has answered with the same time, answering their REQTIMEs in
    /// the meantime. A FIN from a peer fills that peer's slot.
    pub fn sync(&mut self) -> Result<SyncStatus, CouplingError> {
        let now = self.current_step * self.dt_microsteps;
        self.step_time = now;
        self.current_step += 1;
        if now % self.coupled_interval_microsteps != 0 {
            return Ok(SyncStatus::Proceed);
        }
        self.announced.clear();
        let live = self.live_peers();
        for &peer in &live {
            let announce = match self.demand {
                Some(d) if d.producer == peer => d.data_id,
                _ => 0,
            };
            self.tile.send(Packet::req_time(self.model_id, peer, now, announce)?)?;
        }
        let mut awaiting: BTreeSet<ModelId> = live.into_iter().collect();
        while !awaiting.is_empty() {
            let pkt = self.tile.wait_matching(|p| {
                p.ptype() == PacketType::ReqTime
                    || (awaiting.contains(&p.source()) && matches!(p.ptype(), PacketType::RespTime | PacketType::Fin))
            })?;
            match pkt.ptype() {
                PacketType::ReqTime => self.answer_time_request(&pkt)?,
                PacketType::RespTime => {
                    if pkt.timestamp() != now {
                        return Err(CouplingError::Protocol(format!(
                            "{} answered t={} while {} is at t={now}",
                            pkt.source(),
                            pkt.timestamp(),
                            self.model_id
                        )));
                    }
                    awaiting.remove(&pkt.source());
                }
                _ => {
                    self.peers_finished.insert(pkt.source());
                    awaiting.remove(&pkt.source());
                }
            }
        }
        Ok(if self.peers_finished.is_empty() { SyncStatus::Proceed } else { SyncStatus::PeerFinished })
    }

    /// Consumer side: requests `data_id` from the producer and blocks for it.
    ///
    /// On receipt the profile is pushed onto the series (`prev ← next`).
    pub fn pre_exchange(&mut self, data_id: u32) -> Result<DataExchange, CouplingError> {
        let demand = self
            .demand
            .ok_or_else(|| CouplingError::Config(format!("{} has no declared producer", self.model_id)))?;
        if demand.data_id != data_id {
            return Err(CouplingError::Config(format!(
                "data id {data_id} differs from the declared demand {}",
                demand.data_id
            )));
        }
        if !self.at_boundary() {
            return Err(CouplingError::NotAtBoundary { t: self.step_time });
        }
        let producer = demand.producer;
        if self.peers_finished.contains(&producer) {
            return Ok(DataExchange::PeerFinished);
        }
        let now = self.step_time;
        self.tile.send(Packet::req_data(self.model_id, producer, now, data_id)?)?;
        let reply = self
            .tile
            .wait_for(PacketType::RespData, &[producer])?
            .pop()
            .ok_or_else(|| CouplingError::Protocol("empty reply set".into()))?;
        if reply.ptype() == PacketType::Fin {
            self.peers_finished.insert(producer);
            return Ok(DataExchange::PeerFinished);
        }
        if reply.data_id() != data_id {
            return Err(CouplingError::Protocol(format!(
                "requested data id {data_id}, received {}",
                reply.data_id()
            )));
        }
        if reply.timestamp() != now {
            return Err(CouplingError::Protocol(format!(
                "requested data for t={now}, received t={}",
                reply.timestamp()
            )));
        }
        let profile = reply
            .into_payload()
            .ok_or_else(|| CouplingError::Protocol("RESPDATA without payload".into()))?;
        self.series.push(profile.clone())?;
        Ok(DataExchange::Profile(profile))
    }

    fn serve(&mut self, req: &Packet, provider: &mut impl FnMut() -> WindProfile) -> Result<(), CouplingError> {
        let mut profile = provider();
        profile.t = self.step_time;
        let resp = Packet::resp_data(self.model_id, req.source(), self.step_time, req.data_id(), profile)?;
        self.tile.send(resp)?;
        Ok(())
    }

    /// Producer side: answers every data request addressed to this model.
    ///
    /// Requests already queued are served without blocking. Requests that a
    /// peer announced in this boundary's sync but that have not arrived yet
    /// are waited for. With no requests the provider is never called.
    pub fn post_exchange(&mut self, mut provider: impl FnMut() -> WindProfile) -> Result<usize, CouplingError> {
        if self.fin_sent {
            return Ok(0);
        }
        let mut expected: BTreeSet<ModelId> = self
            .announced
            .drain(..)
            .map(|(peer, _)| peer)
            .filter(|p| !self.peers_finished.contains(p))
            .collect();
        let mut served = 0;
        while let Some(req) = self.tile.poll_matching(|p| p.ptype() == PacketType::ReqData) {
            self.serve(&req, &mut provider)?;
            expected.remove(&req.source());
            served += 1;
        }
        if !expected.is_empty() {
            let from: Vec<ModelId> = expected.into_iter().collect();
            for pkt in self.tile.wait_for(PacketType::ReqData, &from)? {
                if pkt.ptype() == PacketType::Fin {
                    self.peers_finished.insert(pkt.source());
                } else {
                    self.serve(&pkt, &mut provider)?;
                    served += 1;
                }
            }
        }
        Ok(served)
    }

    /// Broadcasts FIN to every peer, then waits until every peer has sent
    /// its own FIN. Requests arriving from then on are never answered.
    /// A second call does nothing.
    pub fn finished(&mut self) -> Result<(), CouplingError> {
        if self.fin_sent {
            return Ok(());
        }
        for &peer in &self.peers {
            self.tile.send(Packet::fin(self.model_id, peer, self.step_time)?)?;
        }
        self.fin_sent = true;
        let live = self.live_peers();
        for pkt in self.tile.wait_for(PacketType::Fin, &live)? {
            self.peers_finished.insert(pkt.source());
        }
        Ok(())
    }
}
