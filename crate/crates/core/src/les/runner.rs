use crossbeam_channel::Sender;
use serde::Serialize;

use super::{step, FlowState, LesParams};
use crate::coupling::{DataExchange, ModelCouplingState, SyncStatus, WindProfile, WindProfileSeries};
use crate::error::ModelError;
use crate::runtime::{ModelId, Tile, TileStats};
use crate::sor::Grid;

/// Data id of the wind profile variable.
pub const WIND_PROFILE_ID: u32 = 1;

#[derive(Debug, Clone)]
pub struct LesRunConfig {
    pub grid: Grid,
    pub params: LesParams,
    pub steps: u64,
    pub producer: ModelId,
    pub peers: Vec<ModelId>,
    pub dt_microsteps: u64,
    pub coupled_interval_microsteps: u64,
    pub microstep_seconds: f64,
    /// Solid block, inclusive cell-index bounds.
    pub block: Option<((usize, usize, usize), (usize, usize, usize))>,
    /// Receives each interval record as soon as it closes, so the log
    /// survives a run that fails part way.
    pub log: Option<Sender<IntervalRecord>>,
    /// Seed and amplitude of the initial velocity noise.
    pub perturbation: Option<(u64, f32)>,
}

/// One line of the coupling log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalRecord {
    /// 1-based interval number.
    pub interval: u64,
    /// Time of the profile received at the start of the interval, seconds.
    pub driver_time: Option<f64>,
    pub les_steps_run: u64,
    pub packets_in: u64,
    pub packets_out: u64,
    pub interp_steps: u64,
}

#[derive(Debug, Clone)]
pub struct LesOutcome {
    pub steps_run: u64,
    pub profiles_received: u64,
    pub interp_steps: u64,
    /// First step (0-based) whose inflow came from interpolation.
    pub first_interp_step: Option<u64>,
    pub records: Vec<IntervalRecord>,
    pub final_residual: Option<f64>,
    pub state: FlowState,
}

/// Inflow at model time `t`: the two latest profiles interpolated at
/// `t − interval`, so every value is bracketed by data already received.
/// Before the second profile arrives, or once `t − interval` has run past
/// the newest profile, the newest profile is used unchanged.
pub fn inflow_at(
    series: &WindProfileSeries,
    t: u64,
    interval: u64,
    kp: usize,
) -> Result<(WindProfile, bool), ModelError> {
    let Some(latest) = series.latest() else {
        return Ok((WindProfile::calm(kp, t), false));
    };
    if series.can_interpolate() && t >= interval && t - interval <= latest.t {
        return Ok((series.interpolate(t - interval)?, true));
    }
    Ok((latest.clone(), false))
}

struct Counter {
    returned: u64,
    sent: u64,
}

impl Counter {
    fn of(stats: &TileStats) -> Self {
        Self { returned: stats.returned, sent: stats.sent.iter().sum() }
    }
}

fn close(rec: &mut IntervalRecord, start: &Counter, now: &TileStats) {
    let now = Counter::of(now);
    rec.packets_in = now.returned - start.returned;
    rec.packets_out = now.sent - start.sent;
}

fn emit(log: &Option<Sender<IntervalRecord>>, rec: &IntervalRecord) {
    if let Some(tx) = log {
        // A dropped receiver only means nobody is listening.
        let _ = tx.send(rec.clone());
    }
}

/// LES time loop: sync every step; at coupled boundaries request the next
/// profile, then step with the interpolated inflow.
pub fn les_main(tile: Tile, model_id: ModelId, cfg: LesRunConfig) -> Result<LesOutcome, ModelError> {
    let interval = cfg.coupled_interval_microsteps;
    let mut cs = ModelCouplingState::init(tile, model_id, &cfg.peers, cfg.dt_microsteps, interval)?
        .with_demand(cfg.producer, WIND_PROFILE_ID)?;
    let mut state = FlowState::new(cfg.grid.clone(), cfg.params)?;
    if let Some((lo, hi)) = cfg.block {
        state = state.with_block(lo, hi)?;
    }
    if let Some((seed, amplitude)) = cfg.perturbation {
        state.perturb(seed, amplitude);
    }
    let kp = cfg.grid.km;
    let mut out = LesOutcome {
        steps_run: 0,
        profiles_received: 0,
        interp_steps: 0,
        first_interp_step: None,
        records: Vec::new(),
        final_residual: None,
        state: state.clone(),
    };
    let mut producer_done = false;
    let mut open: Option<(IntervalRecord, Counter)> = None;
    for n in 0..cfg.steps {
        let boundary = (n * cfg.dt_microsteps) % interval == 0;
        if boundary {
            let stats = cs.tile().stats();
            if let Some((mut rec, start)) = open.take() {
                close(&mut rec, &start, &stats);
                emit(&cfg.log, &rec);
                out.records.push(rec);
            }
            let rec = IntervalRecord {
                interval: out.records.len() as u64 + 1,
                driver_time: None,
                les_steps_run: 0,
                packets_in: 0,
                packets_out: 0,
                interp_steps: 0,
            };
            open = Some((rec, Counter::of(&stats)));
        }
        let status = cs.sync()?;
        if boundary {
            if status == SyncStatus::PeerFinished && cs.peers_finished().contains(&cfg.producer) {
                producer_done = true;
            }
            if !producer_done {
                match cs.pre_exchange(WIND_PROFILE_ID)? {
                    DataExchange::Profile(p) => {
                        out.profiles_received += 1;
                        if let Some((rec, _)) = open.as_mut() {
                            rec.driver_time = Some(p.t as f64 * cfg.microstep_seconds);
                        }
                    }
                    DataExchange::PeerFinished => producer_done = true,
                }
            }
        }
        let (inflow, interpolated) = inflow_at(cs.series(), cs.model_time(), interval, kp)?;
        let report = step(&mut state, &inflow)?;
        out.final_residual = report.residuals.last().copied();
        out.steps_run += 1;
        if let Some((rec, _)) = open.as_mut() {
            rec.les_steps_run += 1;
            if interpolated {
                rec.interp_steps += 1;
            }
        }
        if interpolated {
            out.interp_steps += 1;
            out.first_interp_step.get_or_insert(n);
        }
    }
    cs.finished()?;
    if let Some((mut rec, start)) = open.take() {
        close(&mut rec, &start, &cs.tile().stats());
        emit(&cfg.log, &rec);
        out.records.push(rec);
    }
    out.state = state;
    Ok(out)
}
