//! Assembly of the two-model driver/LES run on the runtime.

use crossbeam_channel::Sender;

use crate::driver::{driver_main, DriverConfig, DriverOutcome, DriverRunConfig};
use crate::error::ModelError;
use crate::les::{les_main, IntervalRecord, LesOutcome, LesParams, LesRunConfig};
use crate::runtime::{ExecutionMode, ModelId, RunReport, Runtime, RuntimeConfig, RuntimeError};
use crate::sor::Grid;

pub const DRIVER_ENTRY: &str = "driver";
pub const LES_ENTRY: &str = "les";

#[derive(Debug, Clone)]
pub struct CoupledSetup {
    /// (entry name, dt seconds) in id order; ids are assigned from 1.
    pub models: Vec<(String, f64)>,
    pub driver: DriverConfig,
    pub driver_steps: u64,
    pub les_steps: u64,
    pub grid: Grid,
    pub les: LesParams,
    pub block: Option<((usize, usize, usize), (usize, usize, usize))>,
    pub mode: ExecutionMode,
    pub log: Option<Sender<IntervalRecord>>,
    pub perturbation: Option<(u64, f32)>,
}

impl CoupledSetup {
    /// Driver at `driver_dt`, LES at `les.dt`, running `intervals` coupled
    /// intervals on both sides.
    pub fn standard(driver: DriverConfig, grid: Grid, les: LesParams, driver_dt: f64, intervals: u64) -> Self {
        let ratio = (driver_dt / f64::from(les.dt)).round() as u64;
        Self {
            models: vec![(DRIVER_ENTRY.into(), driver_dt), (LES_ENTRY.into(), f64::from(les.dt))],
            driver,
            driver_steps: intervals,
            les_steps: intervals * ratio,
            grid,
            les,
            block: None,
            mode: ExecutionMode::Threaded,
            log: None,
            perturbation: None,
        }
    }

    pub fn runtime_config(&self) -> Result<RuntimeConfig, RuntimeError> {
        RuntimeConfig::new(self.models.iter().enumerate().map(|(n, (name, dt))| (n as u32 + 1, name.clone(), *dt)))
    }
}

#[derive(Debug, Clone)]
pub enum ModelReport {
    Driver(DriverOutcome),
    Les(Box<LesOutcome>),
}

impl ModelReport {
    pub fn as_driver(&self) -> Option<&DriverOutcome> {
        match self {
            ModelReport::Driver(d) => Some(d),
            ModelReport::Les(_) => None,
        }
    }

    pub fn as_les(&self) -> Option<&LesOutcome> {
        match self {
            ModelReport::Les(l) => Some(l),
            ModelReport::Driver(_) => None,
        }
    }
}

pub type CoupledReport = RunReport<ModelReport, ModelError>;

fn find(config: &RuntimeConfig, entry: &str) -> Result<ModelId, RuntimeError> {
    config
        .models()
        .iter()
        .find(|m| m.entry == entry)
        .map(|m| m.id)
        .ok_or_else(|| RuntimeError::Config(format!("no model named `{entry}`")))
}

/// Registers the driver and LES entry points and runs them to completion.
pub fn run_coupled_models(setup: &CoupledSetup) -> Result<CoupledReport, RuntimeError> {
    let config = setup.runtime_config()?;
    let driver_id = find(&config, DRIVER_ENTRY)?;
    let les_id = find(&config, LES_ENTRY)?;
    let les_dt = config.dt_microsteps(les_id).expect("registered model");
    if (les_dt as f64 * config.microstep_seconds() - f64::from(setup.les.dt)).abs() > 1e-9 {
        return Err(RuntimeError::Config("LES time step differs from its model entry".into()));
    }
    let interval = config.coupled_interval_microsteps();
    let driver_cfg = DriverRunConfig {
        driver: setup.driver.clone(),
        steps: setup.driver_steps,
        peers: config.peers_of(driver_id),
        dt_microsteps: config.dt_microsteps(driver_id).expect("registered model"),
        coupled_interval_microsteps: interval,
        microstep_seconds: config.microstep_seconds(),
    };
    let les_cfg = LesRunConfig {
        grid: setup.grid.clone(),
        params: setup.les,
        steps: setup.les_steps,
        producer: driver_id,
        peers: config.peers_of(les_id),
        dt_microsteps: les_dt,
        coupled_interval_microsteps: interval,
        microstep_seconds: config.microstep_seconds(),
        block: setup.block,
        log: setup.log.clone(),
        perturbation: setup.perturbation,
    };
    let mut rt = Runtime::new(config).with_mode(setup.mode);
    rt.register(DRIVER_ENTRY, move |tile, id| driver_main(tile, id, driver_cfg).map(ModelReport::Driver))?;
    rt.register(LES_ENTRY, move |tile, id| les_main(tile, id, les_cfg).map(|o| ModelReport::Les(Box::new(o))))?;
    rt.run()
}
