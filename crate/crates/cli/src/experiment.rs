//! Seeded execution of single repetitions, repeated runs and phase grids.
//!
//! Seeds: repetition `k` of grid cell `c` uses `rep = derive_seed(master, [c, k])`
//! and splits it into a data seed `derive_seed(rep, [0])`, an optimizer seed
//! `derive_seed(rep, [1])` and an initialization seed `derive_seed(rep, [2])`.
//! A plain run is cell 0, so a 1x1 phase grid replays it. Results do not
//! depend on the number of worker threads.

use rayon::prelude::*;

use robsub::data::{gen_haystack, load_basis_csv, HaystackParams};
use robsub::glad::{self, GladConfig};
use robsub::privacy::{self, BudgetWarning, NoisePlan, PrivacyBudget};
use robsub::reaper::{self, ReaperConfig, Solver};
use robsub::seeding::{self, derive_seed};
use robsub::{LabeledDataset, SubspaceBasis, Trajectory};

use crate::config::{Algorithm, DataSource, ExperimentConfig, Init};
use crate::error::{CliError, CliResult};

/// Errors are floored here before taking logarithms.
pub const ERROR_FLOOR: f64 = f64::MIN_POSITIVE;

pub fn log10_error(x: f64) -> f64 {
    if x.is_nan() {
        f64::NAN
    } else {
        x.max(ERROR_FLOOR).log10()
    }
}

pub fn rep_seed(master: u64, cell: u64, rep: u64) -> u64 {
    derive_seed(master, &[cell, rep])
}

/// Loads the file source, attaching the truth basis when one is given.
pub fn load_file_source(cfg: &ExperimentConfig) -> CliResult<Option<LabeledDataset>> {
    let DataSource::File { points, truth } = &cfg.source else {
        return Ok(None);
    };
    let raw = LabeledDataset::load_csv(points)
        .map_err(|e| CliError::runtime(format!("reading {}", points.display()), e))?;
    let (mut data, dropped) = raw
        .normalized()
        .map_err(|e| CliError::runtime(format!("normalizing {}", points.display()), e))?;
    if dropped > 0 {
        log::warn!("dropped {dropped} zero rows from {}", points.display());
    }
    if let Some(t) = truth {
        let basis = load_basis_csv(t).map_err(|e| CliError::runtime(format!("reading {}", t.display()), e))?;
        data = data
            .with_truth(basis)
            .map_err(|e| CliError::runtime(format!("attaching {}", t.display()), e))?;
    }
    Ok(Some(data))
}

/// The haystack of one repetition.
pub fn generated(cfg: &ExperimentConfig, dim: usize, n: usize, inlier_ratio: f64, seed: u64) -> CliResult<LabeledDataset> {
    let params = HaystackParams::with_ratio(cfg.rank, dim, n, inlier_ratio, derive_seed(seed, &[0]));
    gen_haystack(&params).map_err(|e| CliError::runtime("generating haystack", e))
}

/// Noise and batch settings of one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSetting {
    pub batch_size: Option<usize>,
    pub noise_variance: f64,
    pub plan: Option<NoisePlan>,
    /// `(epsilon, delta)` for dp-PCA.
    pub budget: Option<(f64, f64)>,
    /// Non-blocking budget warnings, reported once per command.
    pub warnings: Vec<String>,
}

pub fn resolve_noise(cfg: &ExperimentConfig, alg: Algorithm, n: usize, iterations: usize) -> CliResult<NoiseSetting> {
    let Some(p) = cfg.privacy else {
        return Ok(NoiseSetting {
            batch_size: if alg.is_stochastic() { cfg.batch_size } else { None },
            noise_variance: cfg.noise_variance,
            plan: None,
            budget: None,
            warnings: Vec::new(),
        });
    };
    let batch_size = alg
        .is_stochastic()
        .then(|| cfg.batch_size.unwrap_or_else(|| privacy::batch_size_rule(n, p.epsilon, iterations)));
    let delta = p.delta.unwrap_or(1.0 / (n as f64).sqrt());
    let mut budget = PrivacyBudget::new(p.epsilon, delta, iterations, n);
    budget.batch_size = batch_size;
    budget.c = p.c;
    budget.c2 = p.c2;
    let mechanism = alg.mechanism();
    let mut warnings = Vec::new();
    for w in privacy::validate_budget(&budget, mechanism) {
        if let BudgetWarning::IterationCeiling { .. } = w {
            return Err(CliError::usage(format!("{alg}: {w}")));
        }
        warnings.push(format!("{alg}: {w}"));
    }
    let plan = privacy::calibrate(mechanism, &budget).map_err(|e| CliError::runtime(format!("calibrating {alg}"), e))?;
    Ok(NoiseSetting {
        batch_size,
        noise_variance: plan.sigma2,
        plan: Some(plan),
        budget: Some((p.epsilon, delta)),
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct RepOutcome {
    pub trajectory: Trajectory,
    pub noise: NoiseSetting,
    pub iterations: usize,
}

impl RepOutcome {
    pub fn final_log10_dist2(&self) -> f64 {
        log10_error(self.trajectory.final_dist2())
    }
}

fn initial_basis(
    cfg: &ExperimentConfig,
    data: &LabeledDataset,
    noise: &NoiseSetting,
    seed: u64,
) -> robsub::Result<SubspaceBasis> {
    let default = if noise.budget.is_some() { Init::DpPca } else { Init::Pca };
    let mut rng = seeding::rng(derive_seed(seed, &[2]));
    let space = match cfg.init.unwrap_or(default) {
        Init::Pca => glad::pca_init(data.points(), cfg.rank)?,
        Init::DpPca => {
            let (eps, delta) = noise.budget.expect("dp-pca init is validated to need a budget");
            glad::dp_pca_init(data.points(), cfg.rank, eps, delta, &mut rng)?
        }
        Init::Random => return SubspaceBasis::random(data.dim(), cfg.rank, &mut rng),
    };
    if let Some(w) = space.warning() {
        log::warn!("{w}");
    }
    Ok(space.basis)
}

/// One repetition of `alg` on `data` with `T = iterations`.
pub fn run_once(
    cfg: &ExperimentConfig,
    alg: Algorithm,
    data: &LabeledDataset,
    iterations: usize,
    seed: u64,
    record_objective: bool,
) -> CliResult<RepOutcome> {
    let noise = resolve_noise(cfg, alg, data.len(), iterations)?;
    let opt_seed = derive_seed(seed, &[1]);
    let trajectory = if alg.is_reaper() {
        let solver = match alg {
            Algorithm::GdReap | Algorithm::SgdReap => Solver::Gd,
            _ => Solver::Md,
        };
        let mut rc = ReaperConfig::new(iterations, solver);
        rc.step0 = cfg.step0;
        rc.batch_size = noise.batch_size;
        rc.noise_variance = noise.noise_variance;
        rc.seed = opt_seed;
        rc.record_objective = record_objective;
        rc.record_time = cfg.record_time;
        let run = reaper::run_reaper(data, cfg.rank, &rc).map_err(|e| CliError::runtime(alg.name(), e))?;
        if !run.floor_events.is_empty() {
            log::info!("{alg}: eigenvalue floor applied at {} iterations", run.floor_events.len());
        }
        run.trajectory
    } else {
        let v0 = initial_basis(cfg, data, &noise, seed).map_err(|e| CliError::runtime("initialization", e))?;
        let gc = GladConfig {
            iterations,
            schedule: cfg.schedule.resolve(iterations),
            batch_size: noise.batch_size,
            noise_variance: noise.noise_variance,
            residual_tolerance: glad::RESIDUAL_TOL,
            seed: opt_seed,
            record_objective,
            record_time: cfg.record_time,
        };
        glad::run(data, &v0, &gc).map_err(|e| CliError::runtime(alg.name(), e))?
    };
    Ok(RepOutcome {
        trajectory,
        noise,
        iterations,
    })
}

/// Runs `f` on a pool of `threads` workers, or the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match threads {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| CliError::usage(format!("cannot start {k} threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// All repetitions of one algorithm in a run.
#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    pub algorithm: Algorithm,
    pub reps: Vec<RepOutcome>,
    pub n: usize,
    pub dim: usize,
}

/// Iterations of a run on a dataset of `n` points.
pub fn run_iterations(cfg: &ExperimentConfig, n: usize) -> usize {
    cfg.iterations.unwrap_or(n)
}

/// `(N, D)` of the run's data without executing anything.
pub fn run_shape(cfg: &ExperimentConfig, file: Option<&LabeledDataset>) -> (usize, usize) {
    match (&cfg.source, file) {
        (DataSource::Generate { dim, n, .. }, _) => (*n, *dim),
        (DataSource::File { .. }, Some(d)) => (d.len(), d.dim()),
        (DataSource::File { .. }, None) => (0, 0),
    }
}

/// The repetitions of every configured algorithm (cell 0).
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<Vec<AlgorithmRun>> {
    let file = load_file_source(cfg)?;
    let reps = cfg.run_reps();
    let record_objective = cfg.record_objective.unwrap_or(true);
    let tasks: Vec<(Algorithm, usize)> = cfg
        .algorithms
        .iter()
        .flat_map(|&a| (0..reps).map(move |k| (a, k)))
        .collect();
    let outcomes: Vec<CliResult<RepOutcome>> = with_threads(cfg.threads, || {
        tasks
            .par_iter()
            .map(|&(alg, k)| {
                let seed = rep_seed(cfg.seed, 0, k as u64);
                let data = match (&file, &cfg.source) {
                    (Some(d), _) => d.clone(),
                    (None, DataSource::Generate { dim, n, inlier_ratio }) => generated(cfg, *dim, *n, *inlier_ratio, seed)?,
                    (None, DataSource::File { .. }) => unreachable!("file sources are loaded up front"),
                };
                let t = run_iterations(cfg, data.len());
                run_once(cfg, alg, &data, t, seed, record_objective).map_err(|e| with_rep(e, alg, k))
            })
            .collect()
    })?;
    let (n, dim) = run_shape(cfg, file.as_ref());
    let mut out = Vec::new();
    let mut iter = outcomes.into_iter();
    for &alg in &cfg.algorithms {
        let reps: Vec<RepOutcome> = iter.by_ref().take(reps).collect::<CliResult<_>>()?;
        out.push(AlgorithmRun {
            algorithm: alg,
            reps,
            n,
            dim,
        });
    }
    Ok(out)
}

fn with_rep(e: CliError, alg: Algorithm, k: usize) -> CliError {
    match e {
        CliError::Runtime { context, source } => CliError::Runtime {
            context: format!("{alg} repetition {k}: {context}"),
            source,
        },
        other => other,
    }
}

/// Mean log10 final error per `(N, D)` cell for one algorithm.
#[derive(Debug, Clone)]
pub struct PhaseGrid {
    pub algorithm: Algorithm,
    pub n_grid: Vec<usize>,
    pub d_grid: Vec<usize>,
    /// `values[i][j]` for `N = n_grid[i]`, `D = d_grid[j]`; `NaN` marks a failed cell.
    pub values: Vec<Vec<f64>>,
    /// Noise settings of each cell (identical across its repetitions).
    pub noise: Vec<Vec<Option<NoiseSetting>>>,
}

fn check_phase(cfg: &ExperimentConfig) -> CliResult<(f64, &[usize], &[usize])> {
    let DataSource::Generate { inlier_ratio, .. } = cfg.source else {
        return Err(CliError::usage("phase sweeps generate their data; drop `data`"));
    };
    if cfg.n_grid.is_empty() || cfg.d_grid.is_empty() {
        return Err(CliError::usage("phase needs nonempty `n_grid` and `d_grid`"));
    }
    if cfg.iterations.is_some() {
        return Err(CliError::usage("phase uses T = 2N; drop `iterations`"));
    }
    Ok((inlier_ratio, &cfg.n_grid, &cfg.d_grid))
}

/// Total optimizer iterations of a phase sweep: `sum over cells of reps * 2N`.
pub fn phase_work(cfg: &ExperimentConfig) -> CliResult<usize> {
    let (_, ns, ds) = check_phase(cfg)?;
    let per_alg: usize = ns.iter().map(|&n| 2 * n * ds.len()).sum();
    Ok(per_alg * cfg.phase_reps() * cfg.algorithms.len())
}

pub fn run_phase(cfg: &ExperimentConfig) -> CliResult<Vec<PhaseGrid>> {
    let (ratio, ns, ds) = check_phase(cfg)?;
    let reps = cfg.phase_reps();
    let record_objective = cfg.record_objective.unwrap_or(false);
    let mut tasks = Vec::new();
    for &alg in &cfg.algorithms {
        for (i, &n) in ns.iter().enumerate() {
            for (j, &d) in ds.iter().enumerate() {
                for k in 0..reps {
                    tasks.push((alg, i, j, n, d, k));
                }
            }
        }
    }
    let results: Vec<CliResult<(f64, NoiseSetting)>> = with_threads(cfg.threads, || {
        tasks
            .par_iter()
            .map(|&(alg, i, j, n, d, k)| {
                let cell = (i * ds.len() + j) as u64;
                let seed = rep_seed(cfg.seed, cell, k as u64);
                let data = generated(cfg, d, n, ratio, seed)?;
                let rep = run_once(cfg, alg, &data, 2 * n, seed, record_objective)?;
                Ok((rep.final_log10_dist2(), rep.noise))
            })
            .collect()
    })?;
    let mut grids = Vec::new();
    let mut iter = tasks.iter().zip(results);
    for &alg in &cfg.algorithms {
        let mut values = vec![vec![f64::NAN; ds.len()]; ns.len()];
        let mut noise = vec![vec![None; ds.len()]; ns.len()];
        for (i, &n) in ns.iter().enumerate() {
            for (j, &d) in ds.iter().enumerate() {
                let mut sum = 0.0;
                let mut failed = false;
                for (_, res) in iter.by_ref().take(reps) {
                    match res {
                        Ok((v, plan)) => {
                            sum += v;
                            noise[i][j] = Some(plan);
                        }
                        // usage errors are configuration problems, not cell failures
                        Err(e @ CliError::Usage(_)) => return Err(e),
                        Err(e) => {
                            log::error!("{alg} cell N={n} D={d}: {e}");
                            failed = true;
                        }
                    }
                }
                values[i][j] = if failed { f64::NAN } else { sum / reps as f64 };
            }
        }
        grids.push(PhaseGrid {
            algorithm: alg,
            n_grid: ns.to_vec(),
            d_grid: ds.to_vec(),
            values,
            noise,
        });
    }
    Ok(grids)
}
