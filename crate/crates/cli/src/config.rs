//! Experiment configuration: flat `key=value` files, command-line overrides
//! and validation into an [`ExperimentConfig`].
//!
//! File format: one `key = value` per line, `#` starts a comment, blank lines
//! are ignored. Later sources override earlier ones: file, then flags, then
//! `--set` pairs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use robsub::glad::StepSchedule;
use robsub::privacy::Mechanism;

use crate::error::{CliError, CliResult};

/// Every key the harness understands, with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("algorithm", "comma-separated list of ggd, nggd, sggd, nsggd, gd-reap, sgd-reap, md-reap, smd-reap"),
    ("data", "points CSV; when absent a haystack is generated"),
    ("truth", "ground-truth basis CSV for `data`"),
    ("rank", "subspace dimension r (default 2)"),
    ("dim", "ambient dimension D of generated data (default 20)"),
    ("n", "number of generated points N (default 2000)"),
    ("inlier_ratio", "fraction of generated points that are inliers (default 0.5)"),
    ("epsilon", "privacy budget; enables calibrated noise"),
    ("delta", "privacy delta (default 1/sqrt(N))"),
    ("c", "calibration constant c (default 1)"),
    ("c2", "calibration constant c2 (default 1)"),
    ("noise_variance", "explicit noise variance for nonprivate noisy runs (default 0)"),
    ("iterations", "iterations T (run: default N; phase always uses 2N)"),
    ("schedule", "GLAD step rule: halving, constant or power (default halving)"),
    ("s0", "halving schedule initial step (default 1)"),
    ("period", "halving schedule period (default 50)"),
    ("step", "constant step size"),
    ("c1", "power-law constant c1 (default 1)"),
    ("a", "power-law constant a (default 1)"),
    ("nu", "power-law exponent in (0.5, 1) (default 0.75)"),
    ("step0", "REAPER step eta_k = step0/sqrt(k) (default 8)"),
    ("batch_size", "minibatch size; private stochastic runs default to the batch rule"),
    ("init", "GLAD initialization: pca, dp-pca or random (default pca, dp-pca when private)"),
    ("reps", "repetitions (default 20 for run, 10 for phase)"),
    ("seed", "master seed (default 0)"),
    ("out", "output directory (default out)"),
    ("threads", "worker threads (default: all cores)"),
    ("paper_scale", "true restores 100 repetitions for run and 50 for phase"),
    ("gamma", "stability gamma in (0, 1] (default 0.5)"),
    ("stat_batch", "stats: batch size of the expected minibatch stability"),
    ("stat_samples", "stats: Monte-Carlo batches for the expected stability (default 1000)"),
    ("n_grid", "phase: comma-separated N values"),
    ("d_grid", "phase: comma-separated D values"),
    ("dry_run", "true prints the work estimate without running"),
    ("record_time", "true records wall-clock seconds (breaks byte-identical output)"),
    ("record_objective", "false skips the per-iteration objective (default true for run, false for phase)"),
];

/// Raw configuration as ordered key/value pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut kv = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("config line {}: expected key=value, got `{line}`", i + 1)))?;
            kv.set(k.trim(), v.trim())?;
        }
        Ok(kv)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> CliResult<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("expected key=value, got `{pair}`")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> CliResult<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            let valid: Vec<&str> = KEYS.iter().map(|(k, _)| *k).collect();
            return Err(CliError::usage(format!("unknown key `{key}`; valid keys: {}", valid.join(", "))));
        }
        self.map.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::usage(format!("bad value `{v}` for `{key}`: {e}")))
            })
            .transpose()
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> CliResult<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn list(&self, key: &str) -> CliResult<Vec<usize>> {
        match self.get(key) {
            None => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|e| CliError::usage(format!("bad entry `{s}` in `{key}`: {e}")))
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Ggd,
    Nggd,
    Sggd,
    Nsggd,
    GdReap,
    SgdReap,
    MdReap,
    SmdReap,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::Ggd,
        Algorithm::Nggd,
        Algorithm::Sggd,
        Algorithm::Nsggd,
        Algorithm::GdReap,
        Algorithm::SgdReap,
        Algorithm::MdReap,
        Algorithm::SmdReap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ggd => "ggd",
            Algorithm::Nggd => "nggd",
            Algorithm::Sggd => "sggd",
            Algorithm::Nsggd => "nsggd",
            Algorithm::GdReap => "gd-reap",
            Algorithm::SgdReap => "sgd-reap",
            Algorithm::MdReap => "md-reap",
            Algorithm::SmdReap => "smd-reap",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            Algorithm::Sggd | Algorithm::Nsggd | Algorithm::SgdReap | Algorithm::SmdReap
        )
    }

    pub fn is_reaper(self) -> bool {
        matches!(
            self,
            Algorithm::GdReap | Algorithm::SgdReap | Algorithm::MdReap | Algorithm::SmdReap
        )
    }

    /// Calibration used when a privacy budget is present.
    pub fn mechanism(self) -> Mechanism {
        match self {
            Algorithm::Ggd | Algorithm::Nggd => Mechanism::Nggd,
            Algorithm::Sggd | Algorithm::Nsggd => Mechanism::Nsggd,
            Algorithm::GdReap | Algorithm::MdReap => Mechanism::ReapFull,
            Algorithm::SgdReap | Algorithm::SmdReap => Mechanism::ReapStochastic,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                CliError::usage(format!("unknown algorithm `{s}`; valid names: {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Haystack drawn per repetition.
    Generate { dim: usize, n: usize, inlier_ratio: f64 },
    File { points: PathBuf, truth: Option<PathBuf> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacySettings {
    pub epsilon: f64,
    /// `None` means `1/sqrt(N)`.
    pub delta: Option<f64>,
    pub c: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Pca,
    DpPca,
    Random,
}

/// GLAD schedule before the horizon `T` is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleSpec {
    Halving { s0: f64, period: usize },
    Constant(f64),
    PowerLaw { c1: f64, a: f64, nu: f64 },
}

impl ScheduleSpec {
    pub fn resolve(self, iterations: usize) -> StepSchedule {
        match self {
            ScheduleSpec::Halving { s0, period } => StepSchedule::Halving { s0, period },
            ScheduleSpec::Constant(s) => StepSchedule::Constant(s),
            ScheduleSpec::PowerLaw { c1, a, nu } => StepSchedule::PowerLaw {
                c1,
                a,
                nu,
                horizon: iterations.max(1),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithms: Vec<Algorithm>,
    pub source: DataSource,
    pub rank: usize,
    pub privacy: Option<PrivacySettings>,
    pub noise_variance: f64,
    pub iterations: Option<usize>,
    pub schedule: ScheduleSpec,
    pub step0: f64,
    pub batch_size: Option<usize>,
    pub init: Option<Init>,
    pub reps: Option<usize>,
    pub paper_scale: bool,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub gamma: f64,
    pub stat_batch: Option<usize>,
    pub stat_samples: usize,
    pub n_grid: Vec<usize>,
    pub d_grid: Vec<usize>,
    pub dry_run: bool,
    pub record_time: bool,
    /// `None` lets each command pick its default.
    pub record_objective: Option<bool>,
}

impl ExperimentConfig {
    pub fn from_kv(kv: &KeyValues) -> CliResult<Self> {
        let algorithms = match kv.get("algorithm") {
            None => vec![Algorithm::Ggd],
            Some(v) => v.split(',').map(|s| s.trim().parse()).collect::<CliResult<_>>()?,
        };
        let source = match kv.get("data") {
            Some(p) => DataSource::File {
                points: PathBuf::from(p),
                truth: kv.get("truth").map(PathBuf::from),
            },
            None => {
                if kv.contains("truth") {
                    return Err(CliError::usage("`truth` needs `data`"));
                }
                DataSource::Generate {
                    dim: kv.or("dim", 20)?,
                    n: kv.or("n", 2000)?,
                    inlier_ratio: kv.or("inlier_ratio", 0.5)?,
                }
            }
        };
        let privacy = match kv.parsed::<f64>("epsilon")? {
            Some(epsilon) => Some(PrivacySettings {
                epsilon,
                delta: kv.parsed("delta")?,
                c: kv.or("c", 1.0)?,
                c2: kv.or("c2", 1.0)?,
            }),
            None => {
                for key in ["delta", "c", "c2"] {
                    if kv.contains(key) {
                        return Err(CliError::usage(format!("`{key}` needs `epsilon`")));
                    }
                }
                None
            }
        };
        let schedule = match kv.get("schedule").unwrap_or("halving") {
            "halving" => ScheduleSpec::Halving {
                s0: kv.or("s0", 1.0)?,
                period: kv.or("period", 50)?,
            },
            "constant" => ScheduleSpec::Constant(
                kv.parsed("step")?
                    .ok_or_else(|| CliError::usage("constant schedule needs `step`"))?,
            ),
            "power" => ScheduleSpec::PowerLaw {
                c1: kv.or("c1", 1.0)?,
                a: kv.or("a", 1.0)?,
                nu: kv.or("nu", 0.75)?,
            },
            other => {
                return Err(CliError::usage(format!(
                    "unknown schedule `{other}`; valid: halving, constant, power"
                )))
            }
        };
        let init = match kv.get("init") {
            None => None,
            Some("pca") => Some(Init::Pca),
            Some("dp-pca") => Some(Init::DpPca),
            Some("random") => Some(Init::Random),
            Some(other) => {
                return Err(CliError::usage(format!("unknown init `{other}`; valid: pca, dp-pca, random")))
            }
        };
        let cfg = Self {
            algorithms,
            source,
            rank: kv.or("rank", 2)?,
            privacy,
            noise_variance: kv.or("noise_variance", 0.0)?,
            iterations: kv.parsed("iterations")?,
            schedule,
            step0: kv.or("step0", 8.0)?,
            batch_size: kv.parsed("batch_size")?,
            init,
            reps: kv.parsed("reps")?,
            paper_scale: kv.or("paper_scale", false)?,
            seed: kv.or("seed", 0)?,
            out: PathBuf::from(kv.get("out").unwrap_or("out")),
            threads: kv.parsed("threads")?,
            gamma: kv.or("gamma", 0.5)?,
            stat_batch: kv.parsed("stat_batch")?,
            stat_samples: kv.or("stat_samples", 1000)?,
            n_grid: kv.list("n_grid")?,
            d_grid: kv.list("d_grid")?,
            dry_run: kv.or("dry_run", false)?,
            record_time: kv.or("record_time", false)?,
            record_objective: kv.parsed("record_objective")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that do not depend on the data.
    pub fn validate(&self) -> CliResult<()> {
        if self.algorithms.is_empty() {
            return Err(CliError::usage("no algorithm given"));
        }
        if self.rank == 0 {
            return Err(CliError::usage("rank must be positive"));
        }
        if let DataSource::Generate { dim, n, inlier_ratio } = self.source {
            if dim <= self.rank {
                return Err(CliError::usage(format!("need D > r, got D = {dim}, r = {}", self.rank)));
            }
            if n == 0 {
                return Err(CliError::usage("n must be positive"));
            }
            if !(0.0..=1.0).contains(&inlier_ratio) {
                return Err(CliError::usage(format!("inlier_ratio must lie in [0, 1], got {inlier_ratio}")));
            }
        }
        if let DataSource::File { points, truth } = &self.source {
            for p in std::iter::once(points).chain(truth) {
                if !p.exists() {
                    return Err(CliError::usage(format!("file {} does not exist", p.display())));
                }
            }
        }
        if let Some(p) = &self.privacy {
            if !(p.epsilon > 0.0 && p.epsilon.is_finite()) {
                return Err(CliError::usage(format!("epsilon must be > 0, got {}", p.epsilon)));
            }
            if let Some(d) = p.delta {
                if !(d > 0.0 && d < 1.0) {
                    return Err(CliError::usage(format!("delta must lie in (0, 1), got {d}")));
                }
            }
            if !(p.c > 0.0 && p.c2 > 0.0) {
                return Err(CliError::usage("calibration constants must be positive"));
            }
            if self.noise_variance != 0.0 {
                return Err(CliError::usage("`noise_variance` conflicts with `epsilon`; the budget sets the noise"));
            }
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(CliError::usage("noise_variance must be finite and >= 0"));
        }
        for &alg in &self.algorithms {
            match alg {
                Algorithm::Ggd | Algorithm::Sggd if self.privacy.is_some() || self.noise_variance > 0.0 => {
                    return Err(CliError::usage(format!(
                        "{alg} is noiseless; use {} for noisy or private runs",
                        if alg == Algorithm::Ggd { "nggd" } else { "nsggd" }
                    )));
                }
                Algorithm::Nggd | Algorithm::Nsggd if self.privacy.is_none() && self.noise_variance == 0.0 => {
                    return Err(CliError::usage(format!("{alg} needs `epsilon` or `noise_variance`")));
                }
                _ => {}
            }
            if self.batch_size.is_some() && !alg.is_stochastic() {
                return Err(CliError::usage(format!(
                    "`batch_size` requires a stochastic algorithm (sggd, nsggd, sgd-reap, smd-reap), got {alg}"
                )));
            }
            if alg.is_stochastic() && self.batch_size.is_none() && self.privacy.is_none() {
                return Err(CliError::usage(format!("{alg} needs `batch_size` (or `epsilon` for the batch rule)")));
            }
        }
        if self.batch_size == Some(0) {
            return Err(CliError::usage("batch_size must be positive"));
        }
        if self.init == Some(Init::DpPca) && self.privacy.is_none() {
            return Err(CliError::usage("init = dp-pca needs `epsilon`"));
        }
        if self.reps == Some(0) {
            return Err(CliError::usage("reps must be positive"));
        }
        if self.threads == Some(0) {
            return Err(CliError::usage("threads must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(CliError::usage(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if self.stat_batch == Some(0) || self.stat_samples == 0 {
            return Err(CliError::usage("stat_batch and stat_samples must be positive"));
        }
        if !(self.step0 > 0.0 && self.step0.is_finite()) {
            return Err(CliError::usage("step0 must be > 0"));
        }
        let probe = self.schedule.resolve(1);
        probe.validate().map_err(|e| CliError::usage(e.to_string()))?;
        if self.n_grid.contains(&0) || self.d_grid.iter().any(|&d| d <= self.rank) {
            return Err(CliError::usage("grid entries need N > 0 and D > r"));
        }
        Ok(())
    }

    pub fn run_reps(&self) -> usize {
        self.reps.unwrap_or(if self.paper_scale { 100 } else { 20 })
    }

    pub fn phase_reps(&self) -> usize {
        self.reps.unwrap_or(if self.paper_scale { 50 } else { 10 })
    }
}
