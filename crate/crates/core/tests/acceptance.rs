//! Acceptance suite: one PASS/FAIL line per criterion. Criterion 10 is
//! reported but never fails the run.

mod common;

use std::sync::mpsc;
use std::time::{Duration, Instant};

use common::*;
use gmcf_mini::cli::{execute, Args, Mode};
use gmcf_mini::coupling::{WindProfile, WindProfileSeries};
use gmcf_mini::driver::generate_profile;
use gmcf_mini::field::Field3D;
use gmcf_mini::les::{velfg_merged, velfg_twopass, FlowState, LesParams};
use gmcf_mini::runtime::{ExecutionMode, ModelId, PacketType};
use gmcf_mini::scenario::{run_coupled_models, CoupledReport};
use gmcf_mini::sor::{audit_boundary, solve_pressure, Grid, Scheme};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Runs `f` on its own thread; `None` if it has not returned within `limit`.
fn within<T: Send + 'static>(limit: Duration, f: impl FnOnce() -> T + Send + 'static) -> Option<T> {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let _ = tx.send(f());
    });
    rx.recv_timeout(limit).ok()
}

fn bits(f: &Field3D<f32>) -> Vec<u32> {
    f.as_slice().iter().map(|v| v.to_bits()).collect()
}

fn sor_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let attempt = |pb: &Problem, scheme: Scheme, omega: f32, budget: usize| -> Result<(usize, f64), String> {
        let oracle = direct_solve(&pb.p0, &pb.rhs, pb.h);
        let mut p = pb.p0.clone();
        let mut done = 0;
        while done < budget {
            let (next, _) = solve_pressure(&p, &pb.rhs, &pb.coeffs, omega, 10, scheme, 1).map_err(|e| e.to_string())?;
            p = next;
            done += 10;
            let err = max_err(&p, &oracle);
            if err < 1e-4 {
                return Ok((done, err));
            }
        }
        Err(format!("{scheme} omega={omega}: no convergence within {budget} iterations"))
    };
    let mut notes = Vec::new();
    for n in [8, 16] {
        let pb = random_problem(n, 100 + n as u64);
        for (scheme, omega, budget) in [(Scheme::RedBlack, 1.0, 500), (Scheme::RedBlack, 1.7, 500), (Scheme::Twinned, 1.0, 2000)] {
            let (iters, err) = attempt(&pb, scheme, omega, budget).map_err(|e| format!("{n}^3 {e}"))?;
            worst = worst.max(err);
            notes.push(format!("{n}^3 {scheme}/{omega}:{iters}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 10.0, format!("took {secs:.1} s"))?;
    Ok(format!("max err {worst:.1e}, {secs:.2} s [{}]", notes.join(" ")))
}

fn fixed_point() -> Outcome {
    let mut worst = 0.0f64;
    for n in [8, 16] {
        let pb = exact_integer_problem(n, 40 + n as u64);
        for scheme in [Scheme::RedBlack, Scheme::Twinned] {
            let (_, res) =
                solve_pressure(&pb.p0, &pb.rhs, &pb.coeffs, scheme.default_omega(), 1, scheme, 1).map_err(|e| e.to_string())?;
            check(res[0] < 1e-12, format!("{n}^3 {scheme}: sor = {:e}", res[0]))?;
            worst = worst.max(res[0]);
        }
    }
    Ok(format!("max sor {worst:e}"))
}

fn twinned_determinism() -> Outcome {
    let pb = random_problem(16, 2024);
    let run = |w| solve_pressure(&pb.p0, &pb.rhs, &pb.coeffs, 1.0, 50, Scheme::Twinned, w).unwrap();
    let (p1, r1) = run(1);
    for w in [2, 4] {
        let (p, r) = run(w);
        check(bits(&p) == bits(&p1), format!("field differs at workers={w}"))?;
        check(r == r1, format!("residuals differ at workers={w}"))?;
    }
    Ok("workers 1, 2, 4 bitwise identical".into())
}

fn boundary_coverage() -> Outcome {
    let mut audits = 0;
    for ip in 1..=8 {
        for jp in 1..=8 {
            for kp in 1..=8 {
                for (nt, nu) in [(1, 1), (2, 3), (4, 4), (32, 15)] {
                    audit_boundary(ip, jp, kp, nt, nu).map_err(|v| format!("({ip},{jp},{kp}) m={}: {v:?}", nt * nu))?;
                    audits += 1;
                }
            }
        }
    }
    let r = audit_boundary(150, 150, 90, 32, 15).map_err(|v| format!("{v:?}"))?;
    check(r.boundary_range == 49500, format!("boundary_range {}", r.boundary_range))?;
    check(r.padding == 420, format!("padding {}", r.padding))?;
    check(r.covered == 49500, format!("covered {}", r.covered))?;
    Ok(format!("{audits} small audits, (150,150,90) m=480: 49500 covered + 420 padding"))
}

fn loop_merge() -> Outcome {
    for seed in 0..20u64 {
        let grid = Grid::uniform(16, 16, 8, 4.0).unwrap();
        let mut a = FlowState::new(grid, LesParams::default()).unwrap();
        let mut r = rng(seed);
        for c in 0..3 {
            for v in a.velocity_mut(c).as_mut_slice() {
                *v = r.gen_range(-3.0f32..=3.0);
            }
        }
        let mut b = a.clone();
        velfg_merged(&mut a);
        velfg_twopass(&mut b);
        let same = a.fgh.as_slice().iter().zip(b.fgh.as_slice()).all(|(x, y)| x.map(f32::to_bits) == y.map(f32::to_bits));
        check(same, format!("seed {seed}: merged and two-pass differ"))?;
    }
    Ok("20 seeded states bitwise equal".into())
}

const DRV: ModelId = ModelId(1);
const LES: ModelId = ModelId(2);

fn coupling_protocol() -> Outcome {
    let started = Instant::now();
    let report = within(Duration::from_secs(30), || run_coupled_models(&coupled_setup(5, ExecutionMode::Threaded)))
        .ok_or("no completion within 30 s")?
        .map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    check(report.all_succeeded(), "a model failed")?;
    let drv = report.outcome(DRV).unwrap();
    let les = report.outcome(LES).unwrap();
    let l = les.result.as_ref().unwrap().as_les().unwrap();
    let req = les.stats.sent_of(PacketType::ReqData);
    let resp = drv.stats.sent_of(PacketType::RespData);
    check(req == 5 && resp == 5, format!("{req} REQDATA / {resp} RESPDATA"))?;
    check(drv.stats.consumed_of(PacketType::ReqData) == 5 && les.stats.consumed_of(PacketType::RespData) == 5, "pairs not consumed")?;
    check(l.steps_run == 600, format!("LES ran {} steps", l.steps_run))?;
    let first = l.first_interp_step.ok_or("interpolation never used")?;
    check((120..240).contains(&first), format!("first interpolated step {first}"))?;
    check(l.records[0].interp_steps == 0, "interpolation during interval 1")?;
    for (me, peer) in [(drv, LES), (les, DRV)] {
        let fins: Vec<_> = me.stats.consumed.iter().filter(|h| h.ptype == PacketType::Fin).collect();
        check(fins.len() == 1 && fins[0].source == peer, format!("{} saw FIN {fins:?}", me.entry))?;
        check(me.stats.synthesized_fin == 0, format!("{} needed a synthesized FIN", me.entry))?;
    }
    Ok(format!("5 pairs, 600 LES steps, first interpolated step {first} (interval 2), FIN both ways, {secs:.2} s"))
}

fn ulps(a: f32, b: f32) -> u32 {
    let key = |x: f32| {
        let b = x.to_bits() as i32;
        if b < 0 {
            i32::MIN - b
        } else {
            b
        }
    };
    key(a).abs_diff(key(b))
}

fn interpolation() -> Outcome {
    let cfg = test_driver(8, 4.0);
    let stamped = |t_s: f64, t: u64| {
        let mut p = generate_profile(&cfg, t_s);
        p.t = t;
        p
    };

    let mut mid = WindProfileSeries::new();
    mid.push(WindProfile::new(vec![1.0, -3.0, 0.25, 1e6], vec![0.5; 4], vec![0.0; 4], 0).unwrap()).unwrap();
    mid.push(WindProfile::new(vec![2.0, 5.0, 0.75, 3e6], vec![1.5; 4], vec![2.0; 4], 120).unwrap()).unwrap();
    let m = mid.interpolate(60).unwrap();
    check(m.u == [1.5, 1.0, 0.5, 2e6] && m.v == [1.0; 4] && m.w == [1.0; 4], format!("midpoint {m:?}"))?;

    let mut worst = 0;
    let mut series = WindProfileSeries::new();
    series.push(stamped(0.0, 0)).unwrap();
    for n in 1..=10u64 {
        let prev_s = 60.0 * (n - 1) as f64;
        let next_s = 60.0 * n as f64;
        series.push(stamped(next_s, 120 * n)).unwrap();
        let (lo, hi) = (generate_profile(&cfg, prev_s), generate_profile(&cfg, next_s));
        let at_lo = series.interpolate(120 * (n - 1)).unwrap();
        let at_hi = series.interpolate(120 * n).unwrap();
        check(at_lo.u.iter().map(|v| v.to_bits()).eq(lo.u.iter().map(|v| v.to_bits())), format!("start of interval {n}"))?;
        check(at_hi.u.iter().map(|v| v.to_bits()).eq(hi.u.iter().map(|v| v.to_bits())), format!("end of interval {n}"))?;
        for step in [1u64, 17, 59, 60, 61, 101, 119] {
            let got = series.interpolate(120 * (n - 1) + step).unwrap();
            let a = step as f64 / 120.0;
            for k in 0..cfg.kp() {
                let law = (1.0 - a) * f64::from(lo.u[k]) + a * f64::from(hi.u[k]);
                let d = ulps(got.u[k], law as f32);
                worst = worst.max(d);
                check(d <= 4, format!("interval {n} step {step} level {k}: {} vs {law} ({d} ulp)", got.u[k]))?;
            }
        }
    }
    Ok(format!("endpoints bitwise, midpoint exact, gust law within {worst} ulp over 10 intervals"))
}

fn coupled_dir(seed: u64, tag: &str, root: &std::path::Path) -> Result<std::path::PathBuf, String> {
    let config = root.join("det.ini");
    std::fs::write(&config, "[runtime]\nintervals = 3\n[les]\nperturbation = 0.01\n").map_err(|e| e.to_string())?;
    let out = root.join(tag);
    let args = Args { mode: Mode::Coupled, config, out: Some(out.clone()), seed: Some(seed), workers: None, steps: None };
    execute(&args).map_err(|e| e.to_string())?;
    Ok(out)
}

fn coupling_determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = coupled_dir(5, "a", root.path())?;
    let b = coupled_dir(5, "b", root.path())?;
    for f in ["summary.json", "coupling.log", "u.bin", "v.bin", "w.bin", "p.bin"] {
        let same = std::fs::read(a.join(f)).ok() == std::fs::read(b.join(f)).ok();
        check(same, format!("{f} differs between identical runs"))?;
    }
    let les_state = |r: &CoupledReport| r.outcome(LES).unwrap().result.as_ref().unwrap().as_les().unwrap().state.clone();
    let oracle = run_coupled_models(&coupled_setup(3, ExecutionMode::Sequential)).map_err(|e| e.to_string())?;
    for rep in 0..3 {
        let threaded = run_coupled_models(&coupled_setup(3, ExecutionMode::Threaded)).map_err(|e| e.to_string())?;
        for (t, s) in threaded.outcomes.iter().zip(&oracle.outcomes) {
            check(t.stats.consumed == s.stats.consumed, format!("run {rep}: {} consumed a different sequence", t.entry))?;
        }
        check(les_state(&threaded) == les_state(&oracle), format!("run {rep}: final LES state differs"))?;
    }
    Ok("identical summaries and dumps; threaded consumption equals sequential oracle (3 runs)".into())
}

fn early_termination() -> Outcome {
    let scenario = |les_first: bool, mode: ExecutionMode| {
        let grid = Grid::uniform(4, 4, 2, 4.0).unwrap();
        let mut s = gmcf_mini::scenario::CoupledSetup::standard(test_driver(2, 4.0), grid, LesParams::default(), 60.0, 4);
        s.mode = mode;
        if les_first {
            s.les_steps = 150;
        } else {
            s.driver_steps = 2;
        }
        s
    };
    let mut slowest = Duration::ZERO;
    for rep in 0..100 {
        for les_first in [true, false] {
            let mode = if rep % 2 == 0 { ExecutionMode::Threaded } else { ExecutionMode::Sequential };
            let setup = scenario(les_first, mode);
            let t0 = Instant::now();
            let report = within(Duration::from_secs(10), move || run_coupled_models(&setup))
                .ok_or(format!("rep {rep} les_first={les_first}: hung"))?
                .map_err(|e| e.to_string())?;
            slowest = slowest.max(t0.elapsed());
            check(report.outcomes.len() == 2 && report.all_succeeded(), format!("rep {rep} les_first={les_first}: a model failed"))?;
            let l = report.outcome(LES).unwrap().result.as_ref().unwrap().as_les().unwrap();
            let expected = if les_first { 150 } else { 480 };
            check(l.steps_run == expected, format!("rep {rep}: LES ran {} steps", l.steps_run))?;
        }
    }
    Ok(format!("200 runs (both orders, both modes) exited cleanly, slowest {:.3} s", slowest.as_secs_f64()))
}

/// Returns (line, gate met) for the non-gating scaling check.
fn soft_scaling() -> (String, bool) {
    let pb = random_problem_dims(150, 150, 90, 9);
    let time = |w: usize| {
        let t0 = Instant::now();
        solve_pressure(&pb.p0, &pb.rhs, &pb.coeffs, 1.0, 50, Scheme::Twinned, w).unwrap();
        t0.elapsed().as_secs_f64()
    };
    let t1 = time(1);
    let t4 = time(4);
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let speedup = t1 / t4;
    let line = format!("1 worker {t1:.2} s, 4 workers {t4:.2} s, speedup {speedup:.2}x on {cores} core(s)");
    if cores < 4 {
        (format!("{line}; host below the 4-core requirement"), false)
    } else {
        (line, speedup >= 1.5)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("SOR oracle equivalence", sor_oracle),
        ("fixed-point agreement", fixed_point),
        ("twinned determinism", twinned_determinism),
        ("boundary coverage", boundary_coverage),
        ("loop-merge equivalence", loop_merge),
        ("coupling protocol", coupling_protocol),
        ("interpolation exactness", interpolation),
        ("coupling determinism", coupling_determinism),
        ("early-termination safety", early_termination),
    ];
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail})", n + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({why})", n + 1);
            }
        }
    }
    let (detail, met) = soft_scaling();
    println!("criterion 10 soft scaling (non-gating): {} ({detail})", if met { "PASS" } else { "FAIL" });
    if failed > 0 {
        eprintln!("{failed} gating criteria failed");
        std::process::exit(1);
    }
}
