//! INI-style run configuration: `[section]` headers, `key = value` lines and
//! `#` comments. Every key is optional; unknown sections and keys are
//! rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::driver::DriverConfig;
use crate::runtime::ExecutionMode;
use crate::sor::Scheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Coupled,
    LesStandalone,
    SorBench,
    BoundaryAudit,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Coupled => "coupled",
            Mode::LesStandalone => "les-standalone",
            Mode::SorBench => "sor-bench",
            Mode::BoundaryAudit => "boundary-audit",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Mode::Coupled, Mode::LesStandalone, Mode::SorBench, Mode::BoundaryAudit]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

/// A diagnostic naming the offending key and, when it came from the file,
/// its line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, key: Option<&str>, message: impl Into<String>) -> Self {
        Self { line: Some(line), key: key.map(str::to_string), message: message.into() }
    }

    pub fn key(key: &str, message: impl Into<String>) -> Self {
        Self { line: None, key: Some(key.to_string()), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "{key}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEntry {
    pub name: String,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LesSection {
    pub im: usize,
    pub jm: usize,
    pub km: usize,
    pub h: f32,
    pub vn: f32,
    pub cs: f32,
    pub block: Option<((usize, usize, usize), (usize, usize, usize))>,
    pub perturbation: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SorSection {
    pub scheme: Scheme,
    /// None means each scheme's own default.
    pub omega: Option<f32>,
    pub n_iter: usize,
    pub workers: usize,
    /// Problem size of `sor-bench`.
    pub im: usize,
    pub jm: usize,
    pub km: usize,
    pub bench_workers: Vec<usize>,
}

impl SorSection {
    pub fn omega_for(&self, scheme: Scheme) -> f32 {
        self.omega.unwrap_or(scheme.default_omega())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriverSection {
    pub u_star: f64,
    pub z0: f64,
    /// Explicit level heights; by default the LES cell centres.
    pub levels: Option<Vec<f64>>,
    pub gust_amplitude: f64,
    pub gust_period: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditSection {
    pub ip: usize,
    pub jp: usize,
    pub kp: usize,
    pub nthreads: usize,
    pub nunits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Mode named in the file, if any; the command line decides otherwise.
    pub mode: Option<Mode>,
    pub models: Vec<ModelEntry>,
    pub intervals: u64,
    pub les_steps: u64,
    pub execution: ExecutionMode,
    pub seed: u64,
    pub les: LesSection,
    pub sor: SorSection,
    pub driver: DriverSection,
    pub audit: AuditSection,
    pub out_dir: PathBuf,
    pub dump_fields: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: None,
            models: vec![ModelEntry { name: "driver".into(), dt: 60.0 }, ModelEntry { name: "les".into(), dt: 0.5 }],
            intervals: 5,
            les_steps: 600,
            execution: ExecutionMode::Threaded,
            seed: 0,
            les: LesSection { im: 16, jm: 16, km: 8, h: 4.0, vn: 0.05, cs: 0.1, block: None, perturbation: 0.0 },
            sor: SorSection {
                scheme: Scheme::RedBlack,
                omega: None,
                n_iter: crate::sor::DEFAULT_N_ITER,
                workers: 1,
                im: 16,
                jm: 16,
                km: 16,
                bench_workers: vec![1, 2, 4],
            },
            driver: DriverSection { u_star: 0.1, z0: 0.1, levels: None, gust_amplitude: 0.2, gust_period: 600.0 },
            audit: AuditSection { ip: 150, jp: 150, kp: 90, nthreads: 32, nunits: 15 },
            out_dir: PathBuf::from("out"),
            dump_fields: true,
        }
    }
}

const KEYS: &[(&str, &[&str])] = &[
    ("runtime", &["mode", "models", "intervals", "execution", "seed"]),
    ("les", &["im", "jm", "km", "h", "vn", "cs", "steps", "block", "perturbation"]),
    ("sor", &["scheme", "omega", "n_iter", "workers", "im", "jm", "km", "bench_workers"]),
    ("driver", &["u_star", "z0", "levels", "gust_amplitude", "gust_period"]),
    ("audit", &["ip", "jp", "kp", "nthreads", "nunits"]),
    ("output", &["dir", "dump_fields"]),
];

struct Entry {
    value: String,
    line: usize,
}

struct Raw(BTreeMap<(String, String), Entry>);

impl Raw {
    fn take<T>(
        &self,
        section: &str,
        key: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Option<T>, ConfigError> {
        let Some(e) = self.0.get(&(section.to_string(), key.to_string())) else {
            return Ok(None);
        };
        let name = format!("{section}.{key}");
        parse(&e.value).map(Some).map_err(|m| ConfigError::at(e.line, Some(&name), m))
    }

    fn set<T>(&self, section: &str, key: &str, slot: &mut T, parse: impl Fn(&str) -> Result<T, String>) -> Result<(), ConfigError> {
        if let Some(v) = self.take(section, key, parse)? {
            *slot = v;
        }
        Ok(())
    }

    fn line(&self, section: &str, key: &str) -> Option<usize> {
        self.0.get(&(section.to_string(), key.to_string())).map(|e| e.line)
    }
}

fn number<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.parse::<T>().map_err(|e| format!("`{s}` is not a valid {}: {e}", std::any::type_name::<T>()))
}

fn boolean(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("`{s}` is not a boolean")),
    }
}

fn list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    s.split(',').map(|p| number::<T>(p.trim())).collect()
}

fn models(s: &str) -> Result<Vec<ModelEntry>, String> {
    s.split(',')
        .map(|item| {
            let (name, dt) = item
                .trim()
                .split_once(':')
                .ok_or_else(|| format!("`{}` is not of the form name:dt_seconds", item.trim()))?;
            Ok(ModelEntry { name: name.trim().to_string(), dt: number::<f64>(dt.trim())? })
        })
        .collect()
}

fn execution(s: &str) -> Result<ExecutionMode, String> {
    match s {
        "threaded" => Ok(ExecutionMode::Threaded),
        "sequential" => Ok(ExecutionMode::Sequential),
        _ => Err(format!("`{s}` is neither `threaded` nor `sequential`")),
    }
}

fn block(s: &str) -> Result<Option<((usize, usize, usize), (usize, usize, usize))>, String> {
    if s == "none" {
        return Ok(None);
    }
    match list::<usize>(s)?.as_slice() {
        &[a, b, c, d, e, f] => Ok(Some(((a, b, c), (d, e, f)))),
        _ => Err("expected `none` or six indices i0,j0,k0,i1,j1,k1".into()),
    }
}

fn tokenize(text: &str) -> Result<Raw, ConfigError> {
    let mut raw = BTreeMap::new();
    let mut section: Option<&str> = None;
    for (n, full) in text.lines().enumerate() {
        let line = n + 1;
        let body = full.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(line, None, format!("malformed section header `{body}`")))?
                .trim();
            let known = KEYS.iter().find(|(s, _)| *s == name).map(|(s, _)| *s);
            section = Some(known.ok_or_else(|| ConfigError::at(line, None, format!("unknown section [{name}]")))?);
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| ConfigError::at(line, None, format!("expected `key = value`, found `{body}`")))?;
        let key = key.trim();
        let value = value.trim();
        let sec = section.ok_or_else(|| ConfigError::at(line, Some(key), "key appears before any section"))?;
        let allowed = KEYS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or_default();
        let name = format!("{sec}.{key}");
        if !allowed.contains(&key) {
            return Err(ConfigError::at(line, Some(&name), "unknown key"));
        }
        if value.is_empty() {
            return Err(ConfigError::at(line, Some(&name), "missing value"));
        }
        let slot = (sec.to_string(), key.to_string());
        if let Some(prev) = raw.get(&slot) {
            let prev: &Entry = prev;
            return Err(ConfigError::at(line, Some(&name), format!("duplicate key, first set on line {}", prev.line)));
        }
        raw.insert(slot, Entry { value: value.to_string(), line });
    }
    Ok(Raw(raw))
}

/// Parses and validates a configuration; absent keys take their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw = tokenize(text)?;
    let mut c = RunConfig::default();
    c.mode = raw.take("runtime", "mode", |s| s.parse::<Mode>())?;
    raw.set("runtime", "models", &mut c.models, models)?;
    raw.set("runtime", "intervals", &mut c.intervals, number)?;
    raw.set("runtime", "execution", &mut c.execution, execution)?;
    raw.set("runtime", "seed", &mut c.seed, number)?;

    let l = &mut c.les;
    raw.set("les", "im", &mut l.im, number)?;
    raw.set("les", "jm", &mut l.jm, number)?;
    raw.set("les", "km", &mut l.km, number)?;
    raw.set("les", "h", &mut l.h, number)?;
    raw.set("les", "vn", &mut l.vn, number)?;
    raw.set("les", "cs", &mut l.cs, number)?;
    raw.set("les", "block", &mut l.block, block)?;
    raw.set("les", "perturbation", &mut l.perturbation, number)?;
    raw.set("les", "steps", &mut c.les_steps, number)?;

    let s = &mut c.sor;
    raw.set("sor", "scheme", &mut s.scheme, |v| v.parse::<Scheme>().map_err(|e| e.to_string()))?;
    s.omega = raw.take("sor", "omega", number)?;
    raw.set("sor", "n_iter", &mut s.n_iter, number)?;
    raw.set("sor", "workers", &mut s.workers, number)?;
    raw.set("sor", "im", &mut s.im, number)?;
    raw.set("sor", "jm", &mut s.jm, number)?;
    raw.set("sor", "km", &mut s.km, number)?;
    raw.set("sor", "bench_workers", &mut s.bench_workers, list)?;

    let d = &mut c.driver;
    raw.set("driver", "u_star", &mut d.u_star, number)?;
    raw.set("driver", "z0", &mut d.z0, number)?;
    d.levels = raw.take("driver", "levels", list)?;
    raw.set("driver", "gust_amplitude", &mut d.gust_amplitude, number)?;
    raw.set("driver", "gust_period", &mut d.gust_period, number)?;

    let a = &mut c.audit;
    raw.set("audit", "ip", &mut a.ip, number)?;
    raw.set("audit", "jp", &mut a.jp, number)?;
    raw.set("audit", "kp", &mut a.kp, number)?;
    raw.set("audit", "nthreads", &mut a.nthreads, number)?;
    raw.set("audit", "nunits", &mut a.nunits, number)?;

    raw.set("output", "dir", &mut c.out_dir, |v| Ok(PathBuf::from(v)))?;
    raw.set("output", "dump_fields", &mut c.dump_fields, boolean)?;

    c.validate().map_err(|mut e| {
        if e.line.is_none() {
            if let Some((sec, key)) = e.key.as_deref().and_then(|k| k.split_once('.')) {
                e.line = raw.line(sec, key);
            }
        }
        e
    })?;
    Ok(c)
}

impl RunConfig {
    /// Checks the invariants that do not depend on the mode.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: usize| {
            if v == 0 {
                Err(ConfigError::key(key, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        if self.models.is_empty() {
            return Err(ConfigError::key("runtime.models", "at least one model is required"));
        }
        for m in &self.models {
            if m.name.is_empty() || !(m.dt > 0.0 && m.dt.is_finite()) {
                return Err(ConfigError::key("runtime.models", format!("invalid entry {}:{}", m.name, m.dt)));
            }
        }
        positive("les.im", self.les.im)?;
        positive("les.jm", self.les.jm)?;
        positive("les.km", self.les.km)?;
        if !(self.les.h > 0.0 && self.les.h.is_finite()) {
            return Err(ConfigError::key("les.h", "must be positive"));
        }
        if !(self.les.vn >= 0.0) {
            return Err(ConfigError::key("les.vn", "must be non-negative"));
        }
        if !(self.les.cs >= 0.0) {
            return Err(ConfigError::key("les.cs", "must be non-negative"));
        }
        if !(self.les.perturbation >= 0.0 && self.les.perturbation.is_finite()) {
            return Err(ConfigError::key("les.perturbation", "must be a non-negative amplitude"));
        }
        positive("sor.n_iter", self.sor.n_iter)?;
        positive("sor.workers", self.sor.workers)?;
        positive("sor.im", self.sor.im)?;
        positive("sor.jm", self.sor.jm)?;
        positive("sor.km", self.sor.km)?;
        if self.sor.bench_workers.is_empty() || self.sor.bench_workers.contains(&0) {
            return Err(ConfigError::key("sor.bench_workers", "worker counts must be at least 1"));
        }
        if let Some(w) = self.sor.omega {
            if !(w > 0.0 && w < 2.0) {
                return Err(ConfigError::key("sor.omega", format!("{w} is outside (0, 2)")));
            }
        }
        if self.sor.scheme == Scheme::RedBlack && self.sor.workers > 1 {
            return Err(ConfigError::key(
                "sor.workers",
                format!("unsupported combination: scheme redblack runs on one worker, got workers = {}", self.sor.workers),
            ));
        }
        positive("audit.ip", self.audit.ip)?;
        positive("audit.jp", self.audit.jp)?;
        positive("audit.kp", self.audit.kp)?;
        positive("audit.nthreads", self.audit.nthreads)?;
        positive("audit.nunits", self.audit.nunits)?;
        self.driver_config().map(|_| ())
    }

    /// Mode-specific requirements on top of [`RunConfig::validate`].
    pub fn validate_for(&self, mode: Mode) -> Result<(), ConfigError> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(ConfigError::key("runtime.mode", format!("file says {}, command line says {}", m.name(), mode.name())));
            }
        }
        let has = |name: &str| self.models.iter().any(|m| m.name == name);
        match mode {
            Mode::Coupled => {
                if self.models.len() < 2 || !has("driver") || !has("les") {
                    return Err(ConfigError::key("runtime.models", "coupled mode needs a `driver` and an `les` model"));
                }
                positive_u64("runtime.intervals", self.intervals)?;
            }
            Mode::LesStandalone => {
                if !has("les") {
                    return Err(ConfigError::key("runtime.models", "an `les` model entry supplies the LES time step"));
                }
                positive_u64("les.steps", self.les_steps)?;
            }
            Mode::SorBench | Mode::BoundaryAudit => {}
        }
        if matches!(mode, Mode::Coupled | Mode::LesStandalone) && self.driver_config()?.kp() != self.les.km {
            return Err(ConfigError::key("driver.levels", format!("need exactly {} levels, one per LES layer", self.les.km)));
        }
        Ok(())
    }

    pub fn les_dt(&self) -> Option<f64> {
        self.models.iter().find(|m| m.name == "les").map(|m| m.dt)
    }

    pub fn driver_config(&self) -> Result<DriverConfig, ConfigError> {
        let d = &self.driver;
        let levels = d
            .levels
            .clone()
            .unwrap_or_else(|| DriverConfig::cell_centres(self.les.km, f64::from(self.les.h)));
        DriverConfig::new(d.u_star, d.z0, levels, d.gust_amplitude, d.gust_period)
            .map_err(|m| ConfigError::key("driver", m))
    }
}

fn positive_u64(key: &str, v: u64) -> Result<(), ConfigError> {
    if v == 0 {
        Err(ConfigError::key(key, "must be at least 1"))
    } else {
        Ok(())
    }
}
