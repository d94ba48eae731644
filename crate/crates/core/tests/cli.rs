use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gmcf_mini::cli::output::decode_field;
use serde_json::Value;

struct Case {
    dir: tempfile::TempDir,
}

impl Case {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.ini"), config).unwrap();
        Self { dir }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, mode: &str, out: &str, extra: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_gmcf-mini"))
            .arg(mode)
            .arg("--config")
            .arg(self.dir.path().join("run.ini"))
            .arg("--out")
            .arg(self.out(out))
            .args(extra)
            .output()
            .unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("process exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn help_exits_zero_and_bad_arguments_exit_two() {
    let help = Command::new(env!("CARGO_BIN_EXE_gmcf-mini")).arg("--help").output().unwrap();
    assert_eq!(code(&help), 0);
    assert!(String::from_utf8_lossy(&help.stdout).contains("--config"));

    let case = Case::new("");
    assert_eq!(code(&case.run("warp-drive", "o", &[])), 2);
    let no_config = Command::new(env!("CARGO_BIN_EXE_gmcf-mini")).arg("coupled").output().unwrap();
    assert_eq!(code(&no_config), 2);
    let missing = Command::new(env!("CARGO_BIN_EXE_gmcf-mini"))
        .args(["coupled", "--config", "/nonexistent/run.ini"])
        .output()
        .unwrap();
    assert_eq!(code(&missing), 2);
}

#[test]
fn config_errors_name_key_and_line() {
    let case = Case::new("[runtime]\nintervals = 2\n\n[sor]\nscheme = redblack\nworkers = 4\n");
    let o = case.run("coupled", "o", &[]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("line 6") && err.contains("sor.workers") && err.contains("unsupported combination"), "{err}");
    assert!(!case.out("o").exists(), "nothing is written for a rejected configuration");

    let case = Case::new("[les]\nim = 16\ncolour = blue\n");
    let err = stderr(&case.run("les-standalone", "o", &[]));
    assert!(err.contains("line 3") && err.contains("colour"), "{err}");

    let case = Case::new("[runtime]\nmode = sor-bench\n");
    assert_eq!(code(&case.run("coupled", "o", &[])), 2);

    let case = Case::new("[runtime]\nmodels = les:0.5\n");
    assert_eq!(code(&case.run("coupled", "o", &[])), 2);
}

#[test]
fn overrides_are_validated_like_config_keys() {
    let case = Case::new("");
    let o = case.run("les-standalone", "o", &["--workers", "4"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("unsupported combination"));
    assert_eq!(code(&case.run("coupled", "o", &["--steps", "0"])), 2);
    assert_eq!(code(&case.run("sor-bench", "o", &["--workers", "0"])), 2);
}

const SMALL_COUPLED: &str = "\
# two models, 8 x 8 x 4 LES
[runtime]
models = driver:60, les:0.5
intervals = 3

[les]
im = 8
jm = 8
km = 4
perturbation = 0.01
";

#[test]
fn coupled_run_writes_log_summary_and_dumps() {
    let case = Case::new(SMALL_COUPLED);
    let o = case.run("coupled", "a", &["--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = case.out("a");

    let log = std::fs::read_to_string(out.join("coupling.log")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 3);
    for (n, l) in lines.iter().enumerate() {
        let keys: Vec<&str> = l.split(' ').map(|kv| kv.split('=').next().unwrap()).collect();
        assert_eq!(keys, ["interval", "driver_time", "les_steps_run", "packets_in", "packets_out", "interp_steps"]);
        assert!(l.starts_with(&format!("interval={} driver_time={} les_steps_run=120 ", n + 1, 60 * n)), "{l}");
    }

    let s = json(&out.join("summary.json"));
    assert_eq!(s["reqdata"], 3);
    assert_eq!(s["respdata"], 3);
    assert_eq!(s["les"]["steps_run"], 360);
    // zero-based: the first step of interval 2
    assert_eq!(s["les"]["first_interp_step"], 120);
    for m in s["models"].as_array().unwrap() {
        assert_eq!(m["status"], "ok");
        assert_eq!(m["sent"]["FIN"], 1);
        assert_eq!(m["consumed"]["FIN"], 1);
    }
    let t = json(&out.join("timing.json"));
    assert_eq!(t["models"].as_array().unwrap().len(), 2);

    for name in ["u", "v", "w", "p"] {
        let (dims, values) = decode_field(&std::fs::read(out.join(format!("{name}.bin"))).unwrap()).unwrap();
        assert_eq!(dims, [10, 10, 6]);
        assert!(values.iter().all(|v| v.is_finite()));
        let hdr = std::fs::read_to_string(out.join(format!("{name}.hdr"))).unwrap();
        assert!(hdr.contains("extents = 10 10 6"));
    }
}

#[test]
fn identical_seed_and_config_reproduce_summary_and_dumps() {
    let case = Case::new(SMALL_COUPLED);
    for (dir, seed) in [("a", "11"), ("b", "11"), ("c", "12")] {
        let o = case.run("coupled", dir, &["--seed", seed, "--steps", "2"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let read = |d: &str, f: &str| std::fs::read(case.out(d).join(f)).unwrap();
    for f in ["summary.json", "coupling.log", "u.bin", "v.bin", "w.bin", "p.bin"] {
        assert_eq!(read("a", f), read("b", f), "{f} differs between identical runs");
    }
    assert_ne!(read("a", "u.bin"), read("c", "u.bin"), "the seed drives the perturbation");
}

#[test]
fn one_interval_run_never_interpolates() {
    let case = Case::new(SMALL_COUPLED);
    let o = case.run("coupled", "a", &["--steps", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = json(&case.out("a").join("summary.json"));
    assert_eq!(s["les"]["interp_steps"], 0);
    assert_eq!(s["les"]["first_interp_step"], Value::Null);
    assert_eq!(s["reqdata"], 1);
}

#[test]
fn sequential_execution_matches_threaded() {
    let case = Case::new(SMALL_COUPLED);
    std::fs::write(
        case.dir.path().join("seq.ini"),
        format!("{SMALL_COUPLED}\n[output]\ndump_fields = false\n").replace("intervals = 3", "intervals = 3\nexecution = sequential"),
    )
    .unwrap();
    let threaded = case.run("coupled", "t", &[]);
    assert_eq!(code(&threaded), 0);
    let seq = Command::new(env!("CARGO_BIN_EXE_gmcf-mini"))
        .args(["coupled", "--config"])
        .arg(case.dir.path().join("seq.ini"))
        .arg("--out")
        .arg(case.out("s"))
        .output()
        .unwrap();
    assert_eq!(code(&seq), 0, "{}", stderr(&seq));
    let t = json(&case.out("t").join("summary.json"));
    let s = json(&case.out("s").join("summary.json"));
    assert_eq!(s["execution"], "sequential");
    assert_eq!(t["les"]["fields"], s["les"]["fields"]);
    assert_eq!(t["models"], s["models"]);
    assert!(!case.out("s").join("u.bin").exists());
}

#[test]
fn coupled_blowup_exits_four_and_keeps_partial_logs() {
    let case = Case::new("[driver]\nu_star = 0.3\n[les]\nim = 8\njm = 8\nkm = 8\n");
    let o = case.run("coupled", "x", &[]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"));
    let out = case.out("x");
    let s = json(&out.join("summary.json"));
    let les = s["models"].as_array().unwrap().iter().find(|m| m["entry"] == "les").unwrap().clone();
    assert_eq!(les["status"], "failed");
    assert!(out.join("coupling.log").exists());
    assert!(!out.join("u.bin").exists());
    let leftovers: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn les_standalone_writes_residual_history() {
    let case = Case::new("[les]\nim = 8\njm = 8\nkm = 4\n");
    let o = case.run("les-standalone", "a", &["--steps", "12"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&case.out("a").join("residuals.csv"));
    assert_eq!(rows[0], ["step", "final_residual"]);
    assert_eq!(rows.len(), 13);
    for (n, r) in rows[1..].iter().enumerate() {
        assert_eq!(r[0], (n + 1).to_string());
        assert!(r[1].parse::<f64>().unwrap() >= 0.0);
    }
    let s = json(&case.out("a").join("summary.json"));
    assert_eq!(s["steps_run"], 12);
}

#[test]
fn les_standalone_blowup_exits_four() {
    let case = Case::new("[driver]\nu_star = 1.0\n[les]\nsteps = 100\n");
    let o = case.run("les-standalone", "a", &[]);
    assert_eq!(code(&o), 4);
    let rows = csv_rows(&case.out("a").join("residuals.csv"));
    assert!(rows.len() > 1 && rows.len() < 101, "history stops at the failing step");
    assert!(!case.out("a").join("summary.json").exists());
}

#[test]
fn sor_bench_writes_one_row_per_iteration() {
    let case = Case::new("[sor]\nn_iter = 30\n");
    let o = case.run("sor-bench", "a", &["--workers", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = case.out("a");
    for scheme in ["redblack", "twinned"] {
        let rows = csv_rows(&out.join(format!("residuals_{scheme}.csv")));
        assert_eq!(rows[0], ["iteration", "residual"]);
        assert_eq!(rows.len(), 31);
    }
    let timing = csv_rows(&out.join("timing.csv"));
    assert_eq!(timing[0], ["scheme", "workers", "wall_seconds"]);
    let workers: Vec<&str> = timing[1..].iter().map(|r| r[1].as_str()).collect();
    assert_eq!(workers, ["1", "1", "2", "4"]);
    let b = json(&out.join("bench.json"));
    assert_eq!(b["twinned_identical_across_workers"], true);
    assert_eq!(b["dims"], serde_json::json!([16, 16, 16]));

    let single = case.run("sor-bench", "b", &["--workers", "1", "--steps", "30"]);
    assert_eq!(code(&single), 0);
    assert_eq!(
        std::fs::read(out.join("residuals_twinned.csv")).unwrap(),
        std::fs::read(case.out("b").join("residuals_twinned.csv")).unwrap()
    );
}

fn audit(ip: usize, jp: usize, kp: usize, nthreads: usize, nunits: usize) -> Value {
    let case = Case::new(&format!(
        "[audit]\nip = {ip}\njp = {jp}\nkp = {kp}\nnthreads = {nthreads}\nnunits = {nunits}\n"
    ));
    let o = case.run("boundary-audit", "a", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("covered="));
    json(&case.out("a").join("audit.json"))
}

#[test]
fn boundary_audit_examples() {
    let a = audit(2, 3, 4, 2, 3);
    assert_eq!((a["covered"].as_u64(), a["padding"].as_u64()), (Some(26), Some(4)));
    let a = audit(1, 1, 1, 1, 1);
    assert_eq!((a["covered"].as_u64(), a["padding"].as_u64()), (Some(3), Some(0)));
    let a = audit(150, 150, 90, 32, 15);
    assert_eq!((a["covered"].as_u64(), a["padding"].as_u64()), (Some(49500), Some(420)));
}
