//! Synthetic coarse-grid producer: a log-law wind profile with a periodic
//! gust factor, computed once per coupled interval and served on request.

use serde::Serialize;

use crate::coupling::{ModelCouplingState, SyncStatus, WindProfile};
use crate::error::ModelError;
use crate::runtime::{ModelId, Tile};

pub const VON_KARMAN: f64 = 0.41;

#[derive(Debug, Clone, PartialEq)]
pub struct DriverConfig {
    pub u_star: f64,
    pub z0: f64,
    pub level_heights: Vec<f64>,
    pub gust_amplitude: f64,
    pub gust_period: f64,
}

impl DriverConfig {
    pub fn new(
        u_star: f64,
        z0: f64,
        level_heights: Vec<f64>,
        gust_amplitude: f64,
        gust_period: f64,
    ) -> Result<Self, String> {
        if level_heights.is_empty() {
            return Err("at least one level is required".into());
        }
        if !(z0 > 0.0) {
            return Err(format!("z0 must be positive, got {z0}"));
        }
        if level_heights.windows(2).any(|w| w[1] <= w[0]) {
            return Err("level heights must be strictly increasing".into());
        }
        if level_heights[0] <= z0 {
            return Err(format!("lowest level {} is not above z0 = {z0}", level_heights[0]));
        }
        if !(gust_period > 0.0) {
            return Err(format!("gust period must be positive, got {gust_period}"));
        }
        if !u_star.is_finite() || !gust_amplitude.is_finite() {
            return Err("u_star and gust amplitude must be finite".into());
        }
        Ok(Self { u_star, z0, level_heights, gust_amplitude, gust_period })
    }

    /// Levels at the cell centres of a uniform column: (k − ½)·dz.
    pub fn cell_centres(kp: usize, dz: f64) -> Vec<f64> {
        (1..=kp).map(|k| (k as f64 - 0.5) * dz).collect()
    }

    pub fn kp(&self) -> usize {
        self.level_heights.len()
    }

    /// Gust factor 1 + A·sin(2πt/T), with the phase reduced exactly modulo T.
    pub fn gust_factor(&self, t: f64) -> f64 {
        let phase = t.rem_euclid(self.gust_period) / self.gust_period;
        1.0 + self.gust_amplitude * (2.0 * std::f64::consts::PI * phase).sin()
    }

    /// Analytic u at level index `k` (0-based) and time `t` seconds.
    pub fn u_at(&self, k: usize, t: f64) -> f64 {
        (self.u_star / VON_KARMAN) * (self.level_heights[k] / self.z0).ln() * self.gust_factor(t)
    }
}

/// Profile at `t` seconds; the timestamp is left at 0 for the sender to set.
pub fn generate_profile(cfg: &DriverConfig, t: f64) -> WindProfile {
    let kp = cfg.kp();
    let u = (0..kp).map(|k| cfg.u_at(k, t) as f32).collect();
    WindProfile { u, v: vec![0.0; kp], w: vec![0.0; kp], t: 0 }
}

#[derive(Debug, Clone)]
pub struct DriverRunConfig {
    pub driver: DriverConfig,
    pub steps: u64,
    pub peers: Vec<ModelId>,
    pub dt_microsteps: u64,
    pub coupled_interval_microsteps: u64,
    pub microstep_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriverOutcome {
    pub steps_run: u64,
    pub profiles_served: u64,
    /// Model time (microsteps) of every step that served at least one profile.
    pub served_times: Vec<u64>,
    pub stopped_early: bool,
}

/// Driver time loop: sync, build the profile, serve pending requests;
/// `finished` once the loop ends or a peer has finished.
pub fn driver_main(tile: Tile, model_id: ModelId, cfg: DriverRunConfig) -> Result<DriverOutcome, ModelError> {
    let mut cs =
        ModelCouplingState::init(tile, model_id, &cfg.peers, cfg.dt_microsteps, cfg.coupled_interval_microsteps)?;
    let mut out = DriverOutcome { steps_run: 0, profiles_served: 0, served_times: Vec::new(), stopped_early: false };
    for _ in 0..cfg.steps {
        if cs.sync()? == SyncStatus::PeerFinished {
            out.stopped_early = true;
            break;
        }
        let now = cs.model_time();
        let profile = generate_profile(&cfg.driver, now as f64 * cfg.microstep_seconds);
        let served = cs.post_exchange(|| profile.clone())?;
        if served > 0 {
            out.profiles_served += served as u64;
            out.served_times.push(now);
        }
        out.steps_run += 1;
    }
    cs.finished()?;
    Ok(out)
}
