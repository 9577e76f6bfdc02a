//! Grassmannian least absolute deviations (GLAD) and its geodesic gradient
//! methods.
//!
//! The objective is `F(V; X) = (1/|X|) sum_x ||(I - V V^T) x||` over
//! semiorthogonal `V`. One iteration of every method here is
//!
//! ```text
//! V_{k+1} = P_{O(D,r)}(V_k - eta_k (G_k + B_k))
//! ```
//!
//! where `G_k` is the Riemannian gradient on the full data (GGD, NGGD) or on a
//! minibatch drawn with replacement (SGGD, NSGGD), and `B_k` is i.i.d.
//! `N(0, sigma^2)` noise (zero for the noiseless variants).

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::geometry::{self, SubspaceBasis, TangentVector, TopEigenspace};
use crate::seeding::{self, Rng as SeededRng};
use crate::trajectory::{Record, Trajectory};
use crate::Matrix;

/// Residual norm at or below which a point is left out of the gradient sum.
pub const RESIDUAL_TOL: f64 = 1e-12;

fn check_points(v: &SubspaceBasis, x: &Matrix) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if x.ncols() != v.ambient_dim() {
        return Err(Error::shape(
            format!("points of dimension {}", v.ambient_dim()),
            format!("dimension {}", x.ncols()),
        ));
    }
    Ok(())
}

/// `(1/N) sum_i ||(I - V V^T) x_i||` over the rows of `x`.
pub fn glad_value(v: &SubspaceBasis, x: &Matrix) -> Result<f64> {
    check_points(v, x)?;
    let vm = v.matrix();
    let residual = x - (x * vm) * vm.transpose();
    let total: f64 = residual.row_iter().map(|row| row.norm()).sum();
    Ok(total / x.nrows() as f64)
}

/// Riemannian gradient `-(1/N) Q_V sum_x x x^T V / ||Q_V x||`.
///
/// The sign makes this the direction of steepest ascent of [`glad_value`], so
/// `V - eta G` is a descent step. Points whose residual `||Q_V x||` is at most
/// `tol` are skipped; the expression is undefined there.
pub fn glad_gradient(v: &SubspaceBasis, x: &Matrix, tol: f64) -> Result<TangentVector> {
    check_points(v, x)?;
    let vm = v.matrix();
    let coords = x * vm; // N x r, rows x^T V
    let mut residual = x - &coords * vm.transpose(); // rows (Q_V x)^T
    for mut row in residual.row_iter_mut() {
        let n = row.norm();
        if n > tol {
            row /= n;
        } else {
            row.fill(0.0);
        }
    }
    // -sum_i (Q_V x_i / ||Q_V x_i||) (x_i^T V)
    let grad = residual.transpose() * coords * (-1.0 / x.nrows() as f64);
    Ok(TangentVector::at(v, grad.clone()).unwrap_or_else(|_| {
        // rounding can leave a tiny normal component; strip it
        geometry::tangent_project(v, &grad).expect("shapes already checked")
    }))
}

/// `B` rows drawn uniformly with replacement.
pub fn sample_minibatch<R: Rng + ?Sized>(x: &Matrix, batch_size: usize, rng: &mut R) -> Matrix {
    let idx = sample_indices(x.nrows(), batch_size, rng);
    x.select_rows(idx.iter())
}

pub fn sample_indices<R: Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Vec<usize> {
    (0..batch_size).map(|_| rng.random_range(0..n)).collect()
}

/// `D x r` matrix of i.i.d. `N(0, sigma2)` entries.
pub fn noise_sample<R: Rng + ?Sized>(d: usize, r: usize, sigma2: f64, rng: &mut R) -> Matrix {
    if sigma2 <= 0.0 {
        return Matrix::zeros(d, r);
    }
    let sd = sigma2.sqrt();
    Matrix::from_fn(d, r, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

/// Step-size rules. `step(k)` is queried with the 1-based iteration index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `s = c1 * a / T^nu`, held constant over a run of `T` iterations.
    PowerLaw { c1: f64, a: f64, nu: f64, horizon: usize },
    /// `s0 / 2^floor(k / period)`.
    Halving { s0: f64, period: usize },
}

impl StepSchedule {
    /// The halving rule used in the synthetic experiments: `1 / 2^floor(k/50)`.
    pub const EXPERIMENT: StepSchedule = StepSchedule::Halving { s0: 1.0, period: 50 };

    pub fn step(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Constant(s) => s,
            StepSchedule::PowerLaw { c1, a, nu, horizon } => c1 * a / (horizon as f64).powf(nu),
            StepSchedule::Halving { s0, period } => {
                let halvings = (k / period.max(1)).min(2000) as i32;
                s0 * 0.5f64.powi(halvings)
            }
        }
    }

    /// The same rule with every step multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            StepSchedule::Constant(s) => StepSchedule::Constant(s * factor),
            StepSchedule::PowerLaw { c1, a, nu, horizon } => StepSchedule::PowerLaw {
                c1: c1 * factor,
                a,
                nu,
                horizon,
            },
            StepSchedule::Halving { s0, period } => StepSchedule::Halving { s0: s0 * factor, period },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant(s) => s > 0.0 && s.is_finite(),
            StepSchedule::PowerLaw { c1, a, nu, horizon } => {
                c1 > 0.0 && a > 0.0 && nu > 0.5 && nu < 1.0 && horizon > 0
            }
            StepSchedule::Halving { s0, period } => s0 > 0.0 && s0.is_finite() && period > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid step schedule {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GladConfig {
    pub iterations: usize,
    pub schedule: StepSchedule,
    /// Minibatch size; `None` uses the full gradient.
    pub batch_size: Option<usize>,
    /// Entrywise variance of the Gaussian gradient noise.
    pub noise_variance: f64,
    pub residual_tolerance: f64,
    pub seed: u64,
    /// Evaluate the full-data objective at every iterate.
    pub record_objective: bool,
    /// Record wall-clock seconds; off keeps trajectories bitwise reproducible.
    pub record_time: bool,
}

impl GladConfig {
    /// Noiseless full-gradient GGD with the experiment halving schedule.
    pub fn new(iterations: usize) -> Self {
        Self {
            iterations,
            schedule: StepSchedule::EXPERIMENT,
            batch_size: None,
            noise_variance: 0.0,
            residual_tolerance: RESIDUAL_TOL,
            seed: 0,
            record_objective: true,
            record_time: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.batch_size == Some(0) {
            return Err(Error::InvalidParameter("batch size must be positive".into()));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::InvalidParameter("noise variance must be finite and >= 0".into()));
        }
        Ok(())
    }
}

struct Recorder<'a> {
    truth: Option<&'a SubspaceBasis>,
    points: &'a Matrix,
    record_objective: bool,
    clock: Option<Instant>,
    records: Vec<Record>,
}

impl<'a> Recorder<'a> {
    fn new(data: &'a LabeledDataset, cfg: &GladConfig, capacity: usize) -> Self {
        Self {
            truth: data.truth(),
            points: data.points(),
            record_objective: cfg.record_objective,
            clock: cfg.record_time.then(Instant::now),
            records: Vec::with_capacity(capacity),
        }
    }

    fn push(&mut self, iter: usize, v: &SubspaceBasis) -> Result<()> {
        let (dr2, dist2) = match self.truth {
            Some(t) => (geometry::dr2(v, t)?, geometry::grassmann_dist2(v, t)?),
            None => (f64::NAN, f64::NAN),
        };
        let objective = if self.record_objective {
            glad_value(v, self.points)?
        } else {
            f64::NAN
        };
        let seconds = self.clock.map(|c| c.elapsed().as_secs_f64()).unwrap_or(0.0);
        self.records.push(Record {
            iter,
            dr2,
            dist2,
            objective,
            seconds,
        });
        Ok(())
    }
}

/// Runs `iterations` steps from `v`, numbering them from `first_iter + 1`.
/// `step_offset` is the iteration index passed to the schedule minus one.
fn iterate(
    data: &LabeledDataset,
    mut v: SubspaceBasis,
    cfg: &GladConfig,
    schedule: &StepSchedule,
    iterations: usize,
    first_iter: usize,
    rng: &mut SeededRng,
    recorder: &mut Recorder<'_>,
) -> Result<SubspaceBasis> {
    let x = data.points();
    let (d, r) = (v.ambient_dim(), v.rank());
    for k in 1..=iterations {
        let grad = match cfg.batch_size {
            Some(b) => {
                let batch = sample_minibatch(x, b, rng);
                glad_gradient(&v, &batch, cfg.residual_tolerance)?
            }
            None => glad_gradient(&v, x, cfg.residual_tolerance)?,
        };
        let noise = noise_sample(d, r, cfg.noise_variance, rng);
        let eta = schedule.step(k);
        let step = v.matrix() - (grad.matrix() + noise) * eta;
        let iteration = first_iter + k;
        v = geometry::project_stiefel(&step).map_err(|e| match e {
            Error::RankDeficient { sigma_min } => Error::IterateCollapsed {
                iteration,
                step: eta,
                sigma_min,
            },
            other => other,
        })?;
        recorder.push(iteration, &v)?;
    }
    Ok(v)
}

fn check_start(data: &LabeledDataset, v0: &SubspaceBasis) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.dim() != v0.ambient_dim() {
        return Err(Error::shape(
            format!("initial basis with {} rows", data.dim()),
            format!("{} rows", v0.ambient_dim()),
        ));
    }
    if let Some(t) = data.truth() {
        if t.rank() != v0.rank() {
            return Err(Error::shape(
                format!("initial basis of rank {}", t.rank()),
                format!("rank {}", v0.rank()),
            ));
        }
    }
    Ok(())
}

/// GGD / NGGD / SGGD / NSGGD depending on `batch_size` and `noise_variance`.
///
/// The trajectory holds `T + 1` records, starting with the initial basis.
pub fn run(data: &LabeledDataset, v0: &SubspaceBasis, cfg: &GladConfig) -> Result<Trajectory> {
    restart_run(data, v0, cfg, &[cfg.iterations])
}

/// Restarted runs: stage `l` (1-based) uses the base schedule scaled by
/// `2^-(l-1)` for `stage_iterations[l-1]` iterations, warm-started from the
/// previous stage's last iterate. A single stage is identical to [`run`].
pub fn restart_run(
    data: &LabeledDataset,
    v0: &SubspaceBasis,
    cfg: &GladConfig,
    stage_iterations: &[usize],
) -> Result<Trajectory> {
    cfg.validate()?;
    check_start(data, v0)?;
    if stage_iterations.is_empty() {
        return Err(Error::InvalidParameter("need at least one restart stage".into()));
    }
    let total: usize = stage_iterations.iter().sum();
    let mut rng = seeding::rng(cfg.seed);
    let mut recorder = Recorder::new(data, cfg, total + 1);
    recorder.push(0, v0)?;

    let mut v = v0.clone();
    let mut boundaries = Vec::with_capacity(stage_iterations.len());
    let mut done = 0;
    for (l, &t_l) in stage_iterations.iter().enumerate() {
        boundaries.push(done);
        let schedule = cfg.schedule.scaled(0.5f64.powi(l as i32));
        v = iterate(data, v, cfg, &schedule, t_l, done, &mut rng, &mut recorder)?;
        done += t_l;
    }
    Ok(Trajectory {
        records: recorder.records,
        final_basis: v,
        stage_boundaries: boundaries,
    })
}

/// Top-`r` principal subspace of `sum_x x x^T`.
pub fn pca_init(x: &Matrix, r: usize) -> Result<TopEigenspace> {
    if x.nrows() < r {
        return Err(Error::InvalidParameter(format!(
            "PCA needs at least r = {r} points, got {}",
            x.nrows()
        )));
    }
    geometry::top_eigenspace(&(x.transpose() * x), r)
}

/// Noise scale of the Gaussian mechanism applied to `(1/N) sum x x^T`:
/// `(2 / (N eps)) sqrt(2 ln(1.25 / delta))`. The sensitivity `2/N` comes from
/// replacing one unit-norm point.
pub fn dp_pca_noise_scale(n: usize, epsilon: f64, delta: f64) -> f64 {
    (2.0 / (n as f64 * epsilon)) * (2.0 * (1.25 / delta).ln()).sqrt()
}

/// `(1/N) sum x x^T` plus a symmetric matrix with i.i.d. `N(0, s^2)` upper
/// triangle, `s` from [`dp_pca_noise_scale`].
pub fn dp_pca_perturbed_moment<R: Rng + ?Sized>(x: &Matrix, epsilon: f64, delta: f64, rng: &mut R) -> Result<Matrix> {
    if !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need epsilon > 0 and delta in (0, 1), got ({epsilon}, {delta})"
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let n = x.nrows();
    let scale = dp_pca_noise_scale(n, epsilon, delta);
    let mut m = x.transpose() * x / n as f64;
    let d = m.nrows();
    for i in 0..d {
        for j in i..d {
            let e = scale * rng.sample::<f64, _>(StandardNormal);
            m[(i, j)] += e;
            if i != j {
                m[(j, i)] += e;
            }
        }
    }
    Ok(m)
}

/// Differentially private PCA initialization.
pub fn dp_pca_init<R: Rng + ?Sized>(x: &Matrix, r: usize, epsilon: f64, delta: f64, rng: &mut R) -> Result<TopEigenspace> {
    let m = dp_pca_perturbed_moment(x, epsilon, delta, rng)?;
    geometry::top_eigenspace(&m, r)
}
