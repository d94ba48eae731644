use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{ConfigError, RunConfig};
use super::output::{dump_field, encode_field, fnv1a, residual_csv, write_atomic, write_json};
use super::CliError;
use crate::driver::{generate_profile, DriverOutcome};
use crate::error::ModelError;
use crate::les::{divergence, step, FlowState, IntervalRecord, LesError, LesParams, PressureSettings};
use crate::runtime::{ExecutionMode, ModelFailure, PacketType, RuntimeConfig, RuntimeError};
use crate::scenario::{run_coupled_models, CoupledSetup, ModelReport, DRIVER_ENTRY, LES_ENTRY};
use crate::sor::{audit_boundary, build_uniform_coeffs, solve_pressure, Grid, Scheme, SorError};

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn les_grid(cfg: &RunConfig) -> Result<Grid, CliError> {
    let l = &cfg.les;
    Grid::uniform(l.im, l.jm, l.km, l.h).map_err(|e| CliError::Config(ConfigError::key("les", e.to_string())))
}

fn les_params(cfg: &RunConfig) -> Result<LesParams, CliError> {
    let dt = cfg.les_dt().ok_or_else(|| ConfigError::key("runtime.models", "no `les` model entry"))?;
    let s = &cfg.sor;
    Ok(LesParams {
        dt: dt as f32,
        vn: cfg.les.vn,
        cs: cfg.les.cs,
        pressure: PressureSettings { scheme: s.scheme, omega: s.omega_for(s.scheme), n_iter: s.n_iter, workers: s.workers },
    })
}

fn perturbation(cfg: &RunConfig) -> Option<(u64, f32)> {
    (cfg.les.perturbation > 0.0).then_some((cfg.seed, cfg.les.perturbation))
}

fn execution_name(m: ExecutionMode) -> &'static str {
    match m {
        ExecutionMode::Threaded => "threaded",
        ExecutionMode::Sequential => "sequential",
    }
}

#[derive(Serialize)]
struct FieldSummary {
    max_abs_u: f32,
    max_abs_v: f32,
    max_abs_w: f32,
    max_abs_divergence: f32,
    checksums: BTreeMap<&'static str, String>,
}

fn field_summary(s: &FlowState) -> FieldSummary {
    let checksums = [("u", &s.u), ("v", &s.v), ("w", &s.w), ("p", &s.p)]
        .into_iter()
        .map(|(n, f)| (n, format!("{:016x}", fnv1a(&encode_field(f)))))
        .collect();
    FieldSummary {
        max_abs_u: s.u.interior_max_abs(),
        max_abs_v: s.v.interior_max_abs(),
        max_abs_w: s.w.interior_max_abs(),
        max_abs_divergence: divergence(s).interior_max_abs(),
        checksums,
    }
}

fn dump_state(dir: &Path, s: &FlowState) -> Result<Vec<String>, CliError> {
    let mut files = Vec::new();
    for (name, f) in [("u", &s.u), ("v", &s.v), ("w", &s.w), ("p", &s.p)] {
        for p in dump_field(dir, name, f).map_err(io(dir))? {
            files.push(p.display().to_string());
        }
    }
    Ok(files)
}

#[derive(Serialize)]
struct ModelSummary {
    id: u32,
    entry: String,
    status: &'static str,
    error: Option<String>,
    sent: BTreeMap<&'static str, u64>,
    consumed: BTreeMap<&'static str, usize>,
    synthesized_fin: u64,
    pending_at_exit: u64,
    rx_at_exit: u64,
}

#[derive(Serialize)]
struct LesSummary {
    steps_run: u64,
    profiles_received: u64,
    interp_steps: u64,
    first_interp_step: Option<u64>,
    final_residual: Option<f64>,
    fields: FieldSummary,
}

#[derive(Serialize)]
struct CoupledSummary {
    mode: &'static str,
    seed: u64,
    execution: &'static str,
    microstep_seconds: f64,
    coupled_interval_microsteps: u64,
    intervals: u64,
    grid: [usize; 3],
    models: Vec<ModelSummary>,
    reqdata: u64,
    respdata: u64,
    driver: Option<DriverOutcome>,
    les: Option<LesSummary>,
    intervals_log: Vec<IntervalRecord>,
}

#[derive(Serialize)]
struct Timing {
    entry: String,
    wall_seconds: f64,
}

#[derive(Serialize)]
struct TimingReport {
    models: Vec<Timing>,
    total_seconds: f64,
}

pub fn log_line(r: &IntervalRecord) -> String {
    let t = r.driver_time.map_or_else(|| "-".to_string(), |t| format!("{t}"));
    format!(
        "interval={} driver_time={t} les_steps_run={} packets_in={} packets_out={} interp_steps={}",
        r.interval, r.les_steps_run, r.packets_in, r.packets_out, r.interp_steps
    )
}

fn failure_class(f: &ModelFailure<ModelError>) -> CliError {
    match f {
        ModelFailure::Error(ModelError::Les(LesError::Blowup { .. } | LesError::Solver(_))) => {
            CliError::Numerical(f.to_string())
        }
        ModelFailure::Error(ModelError::Les(e)) => CliError::Config(ConfigError::key("les", e.to_string())),
        ModelFailure::Error(ModelError::Coupling(_)) | ModelFailure::Runtime(_) => CliError::Protocol(f.to_string()),
        ModelFailure::Panic(_) => CliError::Failure(f.to_string()),
    }
}

pub fn run_coupled(cfg: &RunConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let rc = RuntimeConfig::new(cfg.models.iter().enumerate().map(|(n, m)| (n as u32 + 1, m.name.clone(), m.dt)))
        .map_err(|e| ConfigError::key("runtime.models", e.to_string()))?;
    let per = |name: &str| {
        let m = rc.models().iter().find(|m| m.entry == name).expect("validated model list");
        rc.coupled_interval_microsteps() / rc.dt_microsteps(m.id).expect("configured model")
    };
    let grid = les_grid(cfg)?;
    let (tx, rx) = crossbeam_channel::unbounded();
    let setup = CoupledSetup {
        models: cfg.models.iter().map(|m| (m.name.clone(), m.dt)).collect(),
        driver: cfg.driver_config()?,
        driver_steps: cfg.intervals * per(DRIVER_ENTRY),
        les_steps: cfg.intervals * per(LES_ENTRY),
        grid: grid.clone(),
        les: les_params(cfg)?,
        block: cfg.les.block,
        mode: cfg.execution,
        log: Some(tx),
        perturbation: perturbation(cfg),
    };
    let started = Instant::now();
    let report = run_coupled_models(&setup).map_err(|e| match e {
        RuntimeError::Config(m) => CliError::Config(ConfigError::key("runtime.models", m)),
        other => CliError::Protocol(other.to_string()),
    })?;
    let total = started.elapsed();
    drop(setup);
    let records: Vec<IntervalRecord> = rx.try_iter().collect();

    let mut log = String::new();
    for r in &records {
        log.push_str(&log_line(r));
        log.push('\n');
    }
    let log_path = out.join("coupling.log");
    write_atomic(&log_path, log.as_bytes()).map_err(io(&log_path))?;

    let mut driver = None;
    let mut les = None;
    let mut models = Vec::new();
    let mut failure: Option<CliError> = None;
    for o in &report.outcomes {
        let st = &o.stats;
        match &o.result {
            Ok(ModelReport::Driver(d)) => driver = Some(d.clone()),
            Ok(ModelReport::Les(l)) => les = Some(l.clone()),
            Err(f) => {
                let class = failure_class(f);
                // A numerical failure explains the protocol fallout it causes.
                let replace = match (&failure, &class) {
                    (None, _) => true,
                    (Some(CliError::Numerical(_)), _) => false,
                    (Some(_), CliError::Numerical(_)) => true,
                    _ => false,
                };
                if replace {
                    failure = Some(class);
                }
            }
        }
        models.push(ModelSummary {
            id: o.id.0,
            entry: o.entry.clone(),
            status: if o.succeeded() { "ok" } else { "failed" },
            error: o.result.as_ref().err().map(ToString::to_string),
            sent: PacketType::ALL.iter().map(|&t| (t.name(), st.sent_of(t))).collect(),
            consumed: PacketType::ALL.iter().map(|&t| (t.name(), st.consumed_of(t))).collect(),
            synthesized_fin: st.synthesized_fin,
            pending_at_exit: st.pending_at_exit,
            rx_at_exit: st.rx_at_exit,
        });
    }
    let count = |entry: &str, t: PacketType| {
        report.outcomes.iter().filter(|o| o.entry == entry).map(|o| o.stats.sent_of(t)).sum::<u64>()
    };
    let summary = CoupledSummary {
        mode: "coupled",
        seed: cfg.seed,
        execution: execution_name(cfg.execution),
        microstep_seconds: rc.microstep_seconds(),
        coupled_interval_microsteps: rc.coupled_interval_microsteps(),
        intervals: cfg.intervals,
        grid: [grid.im, grid.jm, grid.km],
        models,
        reqdata: count(LES_ENTRY, PacketType::ReqData),
        respdata: count(DRIVER_ENTRY, PacketType::RespData),
        driver: driver.clone(),
        les: les.as_ref().map(|l| LesSummary {
            steps_run: l.steps_run,
            profiles_received: l.profiles_received,
            interp_steps: l.interp_steps,
            first_interp_step: l.first_interp_step,
            final_residual: l.final_residual,
            fields: field_summary(&l.state),
        }),
        intervals_log: records.clone(),
    };
    let summary_path = out.join("summary.json");
    write_json(&summary_path, &summary).map_err(io(&summary_path))?;
    let timing = TimingReport {
        models: report
            .outcomes
            .iter()
            .map(|o| Timing { entry: o.entry.clone(), wall_seconds: o.wall_time.as_secs_f64() })
            .collect(),
        total_seconds: total.as_secs_f64(),
    };
    let timing_path = out.join("timing.json");
    write_json(&timing_path, &timing).map_err(io(&timing_path))?;

    if let Some(f) = failure {
        return Err(f);
    }
    let mut lines: Vec<String> = records.iter().map(log_line).collect();
    if let (Some(l), true) = (&les, cfg.dump_fields) {
        dump_state(out, &l.state)?;
    }
    lines.push(format!(
        "coupled run finished: {} REQDATA / {} RESPDATA, LES steps {}, driver steps {}",
        summary.reqdata,
        summary.respdata,
        les.as_ref().map_or(0, |l| l.steps_run),
        driver.as_ref().map_or(0, |d| d.steps_run)
    ));
    for t in &timing.models {
        lines.push(format!("{} wall time {:.3} s", t.entry, t.wall_seconds));
    }
    Ok(lines)
}

#[derive(Serialize)]
struct StandaloneSummary {
    mode: &'static str,
    seed: u64,
    steps: u64,
    steps_run: u64,
    grid: [usize; 3],
    scheme: &'static str,
    final_residual: Option<f64>,
    fields: FieldSummary,
}

pub fn run_les_standalone(cfg: &RunConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let grid = les_grid(cfg)?;
    let params = les_params(cfg)?;
    let les_err = |e: LesError| match e {
        LesError::Blowup { .. } | LesError::Solver(_) => CliError::Numerical(e.to_string()),
        other => CliError::Config(ConfigError::key("les", other.to_string())),
    };
    let mut state = FlowState::new(grid.clone(), params).map_err(les_err)?;
    if let Some((lo, hi)) = cfg.les.block {
        state = state.with_block(lo, hi).map_err(les_err)?;
    }
    if let Some((seed, amp)) = perturbation(cfg) {
        state.perturb(seed, amp);
    }
    let inflow = generate_profile(&cfg.driver_config()?, 0.0);
    let started = Instant::now();
    let mut finals = Vec::new();
    let mut failure = None;
    for _ in 0..cfg.les_steps {
        match step(&mut state, &inflow) {
            Ok(r) => finals.push(r.residuals.last().copied().unwrap_or(0.0)),
            Err(e) => {
                failure = Some(les_err(e));
                break;
            }
        }
    }
    let wall = started.elapsed();
    let csv_path = out.join("residuals.csv");
    write_atomic(&csv_path, residual_csv("step", "final_residual", &finals).as_bytes()).map_err(io(&csv_path))?;
    if let Some(f) = failure {
        return Err(f);
    }
    let summary = StandaloneSummary {
        mode: "les-standalone",
        seed: cfg.seed,
        steps: cfg.les_steps,
        steps_run: finals.len() as u64,
        grid: [grid.im, grid.jm, grid.km],
        scheme: params.pressure.scheme.name(),
        final_residual: finals.last().copied(),
        fields: field_summary(&state),
    };
    let summary_path = out.join("summary.json");
    write_json(&summary_path, &summary).map_err(io(&summary_path))?;
    let timing_path = out.join("timing.json");
    let timing = TimingReport {
        models: vec![Timing { entry: LES_ENTRY.into(), wall_seconds: wall.as_secs_f64() }],
        total_seconds: wall.as_secs_f64(),
    };
    write_json(&timing_path, &timing).map_err(io(&timing_path))?;
    if cfg.dump_fields {
        dump_state(out, &state)?;
    }
    Ok(vec![format!(
        "les-standalone: {} steps, final residual {:e}, max |u| {}, wall time {:.3} s",
        summary.steps_run,
        summary.final_residual.unwrap_or(0.0),
        summary.fields.max_abs_u,
        wall.as_secs_f64()
    )])
}

#[derive(Serialize)]
struct BenchSummary {
    mode: &'static str,
    seed: u64,
    dims: [usize; 3],
    n_iter: usize,
    omega: BTreeMap<&'static str, f32>,
    final_residual: BTreeMap<&'static str, f64>,
    twinned_worker_counts: Vec<usize>,
    twinned_identical_across_workers: bool,
}

fn sor_err(e: SorError) -> CliError {
    match e {
        SorError::Unsupported(_) | SorError::InvalidArgument(_) => CliError::Config(ConfigError::key("sor", e.to_string())),
        SorError::Shape(_) => CliError::Failure(e.to_string()),
    }
}

pub fn run_sor_bench(cfg: &RunConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let s = &cfg.sor;
    let grid = Grid::uniform(s.im, s.jm, s.km, 1.0).map_err(sor_err)?;
    let coeffs = build_uniform_coeffs(&grid).map_err(sor_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rhs = grid.field();
    for p in grid.field().interior() {
        rhs[p] = rng.gen_range(-1.0f32..=1.0);
    }
    let p0 = grid.field();
    let mut timing = String::from("scheme,workers,wall_seconds\n");
    let mut lines = Vec::new();

    let omega_rb = s.omega_for(Scheme::RedBlack);
    let t0 = Instant::now();
    let (_, rb) = solve_pressure(&p0, &rhs, &coeffs, omega_rb, s.n_iter, Scheme::RedBlack, 1).map_err(sor_err)?;
    let rb_time = t0.elapsed().as_secs_f64();
    timing.push_str(&format!("redblack,1,{rb_time:.6}\n"));
    lines.push(format!("redblack workers=1 wall={rb_time:.4}s final residual {:e}", rb.last().unwrap()));

    let omega_tw = s.omega_for(Scheme::Twinned);
    let mut reference: Option<(Vec<u32>, Vec<u64>)> = None;
    let mut identical = true;
    let mut tw_residuals = Vec::new();
    for &w in &s.bench_workers {
        let t0 = Instant::now();
        let (p, res) = solve_pressure(&p0, &rhs, &coeffs, omega_tw, s.n_iter, Scheme::Twinned, w).map_err(sor_err)?;
        let secs = t0.elapsed().as_secs_f64();
        timing.push_str(&format!("twinned,{w},{secs:.6}\n"));
        lines.push(format!("twinned workers={w} wall={secs:.4}s final residual {:e}", res.last().unwrap()));
        let bits = (p.as_slice().iter().map(|v| v.to_bits()).collect(), res.iter().map(|r| r.to_bits()).collect());
        match &reference {
            None => {
                reference = Some(bits);
                tw_residuals = res;
            }
            Some(r) => identical &= *r == bits,
        }
    }
    for (name, res) in [("redblack", &rb), ("twinned", &tw_residuals)] {
        let path = out.join(format!("residuals_{name}.csv"));
        write_atomic(&path, residual_csv("iteration", "residual", res).as_bytes()).map_err(io(&path))?;
    }
    let timing_path = out.join("timing.csv");
    write_atomic(&timing_path, timing.as_bytes()).map_err(io(&timing_path))?;
    let finite = rb.iter().chain(&tw_residuals).all(|r| r.is_finite());
    let summary = BenchSummary {
        mode: "sor-bench",
        seed: cfg.seed,
        dims: [s.im, s.jm, s.km],
        n_iter: s.n_iter,
        omega: [("redblack", omega_rb), ("twinned", omega_tw)].into_iter().collect(),
        final_residual: [("redblack", *rb.last().unwrap()), ("twinned", *tw_residuals.last().unwrap())]
            .into_iter()
            .collect(),
        twinned_worker_counts: s.bench_workers.clone(),
        twinned_identical_across_workers: identical,
    };
    let path = out.join("bench.json");
    write_json(&path, &summary).map_err(io(&path))?;
    if !finite {
        return Err(CliError::Numerical("residual history contains non-finite values".into()));
    }
    if !identical {
        return Err(CliError::Numerical("twinned results differ between worker counts".into()));
    }
    lines.push(format!("twinned results identical across workers {:?}", s.bench_workers));
    Ok(lines)
}

pub fn run_boundary_audit(cfg: &RunConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let a = &cfg.audit;
    match audit_boundary(a.ip, a.jp, a.kp, a.nthreads, a.nunits) {
        Ok(r) => {
            let path = out.join("audit.json");
            write_json(&path, &r).map_err(io(&path))?;
            Ok(vec![format!(
                "boundary-audit ({},{},{}) m={}: boundary_range={} padded_range={} covered={} padding={} yz={} zx={} xy={}",
                r.ip,
                r.jp,
                r.kp,
                r.nthreads * r.nunits,
                r.boundary_range,
                r.padded_range,
                r.covered,
                r.padding,
                r.yz,
                r.zx,
                r.xy
            )])
        }
        Err(v) => Err(CliError::Failure(format!("coverage violation at gid {}: {}", v.gid, v.reason))),
    }
}
