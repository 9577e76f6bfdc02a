//! The REAPER convex relaxation and its first-order solvers.
//!
//! ```text
//! min_{P in H} G(P; X) = (1/N) sum_x ||(I - P) x||,   H = {0 <= P <= I, tr P = r}
//! ```
//!
//! Two solvers are provided, each in a full-batch and a minibatch form and
//! with optional symmetric Gaussian noise on the subgradient:
//!
//! * projected subgradient descent, `P <- Proj_H(P - eta (g + B))`, where the
//!   projection is water-filling on the eigenvalues;
//! * entropic mirror descent, `P <- exp(log P - eta (g + B))` followed by trace
//!   renormalization.
//!
//! Both return the average of the iterates. The recovered subspace is the
//! top-`r` eigenspace of that average.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::geometry::{self, SubspaceBasis, TopEigenspace};
use crate::glad::sample_indices;
use crate::seeding;
use crate::trajectory::{Record, Trajectory};
use crate::Matrix;

/// Residual norm at or below which a point is left out of the subgradient.
pub const RESIDUAL_TOL: f64 = 1e-12;

/// Default eigenvalue floor applied before the matrix logarithm.
pub const EIG_FLOOR: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;
const EIGENVALUE_SLACK: f64 = 1e-9;
const TRACE_TOL: f64 = 1e-6;
const BISECTION_STEPS: usize = 200;
const BISECTION_TOL: f64 = 1e-10;

/// A symmetric `D x D` matrix in `H = {0 <= P <= I, tr P = r}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedProjection {
    matrix: Matrix,
    rank: usize,
}

impl RelaxedProjection {
    /// Checks symmetry, the eigenvalue range and the trace.
    pub fn new(matrix: Matrix, rank: usize) -> Result<Self> {
        check_square(&matrix)?;
        check_relaxed_rank(matrix.nrows(), rank)?;
        let asym = asymmetry(&matrix);
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidParameter(format!("matrix is not symmetric (max |P - P^T| = {asym:e})")));
        }
        let (eigenvalues, _) = geometry::sorted_symmetric_eigen(&matrix);
        let (hi, lo) = (eigenvalues[0], eigenvalues[eigenvalues.len() - 1]);
        if lo < -EIGENVALUE_SLACK || hi > 1.0 + EIGENVALUE_SLACK {
            return Err(Error::InvalidParameter(format!(
                "eigenvalues must lie in [0, 1], found range [{lo:e}, {hi:e}]"
            )));
        }
        let trace = matrix.trace();
        if (trace - rank as f64).abs() > TRACE_TOL {
            return Err(Error::InvalidParameter(format!("trace must equal r = {rank}, got {trace}")));
        }
        Ok(Self { matrix, rank })
    }

    /// `V V^T` for a basis of the target subspace.
    pub fn from_basis(basis: &SubspaceBasis) -> Self {
        Self {
            matrix: basis.projector(),
            rank: basis.rank(),
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }
}

fn check_square(m: &Matrix) -> Result<()> {
    if !m.is_square() || m.is_empty() {
        return Err(Error::shape("nonempty square matrix", format!("{}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

fn check_relaxed_rank(d: usize, r: usize) -> Result<()> {
    if r == 0 || r >= d {
        return Err(Error::InvalidDimensions(format!("need 1 <= r < D, got r = {r}, D = {d}")));
    }
    Ok(())
}

fn asymmetry(m: &Matrix) -> f64 {
    (m - m.transpose()).amax()
}

fn check_finite(m: &Matrix) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "matrix has non-finite entries; the step size is too large for the noise level".into(),
        ));
    }
    Ok(())
}

fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

fn check_points(p: &Matrix, x: &Matrix) -> Result<()> {
    check_square(p)?;
    if x.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if x.ncols() != p.nrows() {
        return Err(Error::shape(
            format!("points of dimension {}", p.nrows()),
            format!("dimension {}", x.ncols()),
        ));
    }
    Ok(())
}

/// `G(P; X) = (1/N) sum_x ||(I - P) x||` over the rows of `x`. `P` is assumed
/// symmetric.
pub fn reaper_value(p: &Matrix, x: &Matrix) -> Result<f64> {
    check_points(p, x)?;
    let residual = x - x * p;
    let total: f64 = residual.row_iter().map(|row| row.norm()).sum();
    Ok(total / x.nrows() as f64)
}

/// Subgradient of [`reaper_value`]:
/// `-(1/N) sum_x ((I - P) x x^T + x x^T (I - P)) / (2 ||(I - P) x||)`,
/// skipping points whose residual is at most `tol`.
pub fn reaper_subgradient(p: &Matrix, x: &Matrix, tol: f64) -> Result<Matrix> {
    check_points(p, x)?;
    let mut residual = x - x * p; // rows ((I - P) x)^T
    for mut row in residual.row_iter_mut() {
        let n = row.norm();
        if n > tol {
            row /= n;
        } else {
            row.fill(0.0);
        }
    }
    let m = residual.transpose() * x; // sum_x (I-P)x x^T / ||(I-P)x||
    Ok((&m + m.transpose()) * (-0.5 / x.nrows() as f64))
}

/// Result of the water-filling projection onto `H`.
#[derive(Debug, Clone)]
pub struct HProjection {
    pub projection: RelaxedProjection,
    /// The shift `t` with `sum_i clip(a_i - t, 0, 1) = r`.
    pub shift: f64,
    /// Eigenvalues `a` of the (symmetrized) input, descending.
    pub input_eigenvalues: Vec<f64>,
    /// `clip(a - t, 0, 1)`, aligned with `input_eigenvalues`.
    pub output_eigenvalues: Vec<f64>,
}

impl HProjection {
    /// Largest violation of the optimality conditions of the eigenvalue
    /// problem `min ||lambda - a||` over `{0 <= lambda <= 1, sum lambda = r}`:
    /// primal feasibility, stationarity on free coordinates and the sign
    /// conditions on clipped ones.
    pub fn kkt_residual(&self) -> f64 {
        let r = self.projection.rank() as f64;
        let mut worst = (self.output_eigenvalues.iter().sum::<f64>() - r).abs();
        for (&a, &l) in self.input_eigenvalues.iter().zip(&self.output_eigenvalues) {
            let z = a - self.shift;
            let v = if l <= 0.0 {
                z.max(0.0) // multiplier of lambda >= 0 must be >= 0
            } else if l >= 1.0 {
                (1.0 - z).max(0.0)
            } else {
                (z - l).abs()
            };
            worst = worst.max(v).max((-l).max(l - 1.0).max(0.0));
        }
        worst
    }
}

fn clipped_sum(a: &[f64], t: f64) -> f64 {
    a.iter().map(|&ai| (ai - t).clamp(0.0, 1.0)).sum()
}

/// Frobenius projection of a symmetric matrix onto `H`.
///
/// Eigendecomposes `A = U diag(a) U^T`, bisects for the shift `t` on
/// `[min(a) - 1, max(a)]` and returns `U diag(clip(a - t, 0, 1)) U^T`.
pub fn project_h(a: &Matrix, rank: usize) -> Result<HProjection> {
    check_square(a)?;
    let d = a.nrows();
    check_relaxed_rank(d, rank)?;
    check_finite(a)?;
    let (values, vectors) = geometry::sorted_symmetric_eigen(&symmetrize(a));
    let target = rank as f64;
    let (mut lo, mut hi) = (values[d - 1] - 1.0, values[0]);
    // clipped_sum(lo) = D > r, clipped_sum(hi) = 0 < r
    let mut t = 0.5 * (lo + hi);
    let mut residual = clipped_sum(&values, t) - target;
    for _ in 0..BISECTION_STEPS {
        if residual.abs() <= BISECTION_TOL {
            break;
        }
        if residual > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        t = 0.5 * (lo + hi);
        residual = clipped_sum(&values, t) - target;
    }
    if residual.abs() > BISECTION_TOL {
        return Err(Error::BisectionFailed { residual });
    }
    let clipped: Vec<f64> = values.iter().map(|&ai| (ai - t).clamp(0.0, 1.0)).collect();
    let scaled = Matrix::from_fn(d, d, |i, j| vectors[(i, j)] * clipped[j]);
    let p = symmetrize(&(scaled * vectors.transpose()));
    Ok(HProjection {
        projection: RelaxedProjection { matrix: p, rank },
        shift: t,
        input_eigenvalues: values,
        output_eigenvalues: clipped,
    })
}

/// Symmetric `D x D` matrix whose upper triangle (diagonal included) is i.i.d.
/// `N(0, sigma2)`, mirrored below.
pub fn symmetric_noise<R: Rng + ?Sized>(d: usize, sigma2: f64, rng: &mut R) -> Matrix {
    let mut m = Matrix::zeros(d, d);
    if sigma2 <= 0.0 {
        return m;
    }
    let sd = sigma2.sqrt();
    for i in 0..d {
        for j in i..d {
            let e = sd * rng.sample::<f64, _>(StandardNormal);
            m[(i, j)] = e;
            m[(j, i)] = e;
        }
    }
    m
}

/// Top-`r` eigenspace of a symmetric matrix, with a logged warning when the
/// eigengap vanishes.
pub fn principal_subspace(p: &Matrix, rank: usize) -> Result<TopEigenspace> {
    let top = geometry::top_eigenspace(&symmetrize(p), rank)?;
    if let Some(w) = top.warning() {
        log::warn!("{w}");
    }
    Ok(top)
}

/// Frobenius diameter of `H`: `sqrt(2 min(r, D - r))`.
pub fn h_diameter(d: usize, rank: usize) -> f64 {
    (2.0 * rank.min(d.saturating_sub(rank)) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Solver {
    /// Projected subgradient descent.
    Gd,
    /// Entropic (von Neumann) mirror descent.
    Md,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Gd => "gd",
            Solver::Md => "md",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReaperConfig {
    pub iterations: usize,
    /// `eta_k = step0 / sqrt(k)`.
    pub step0: f64,
    /// Minibatch size; `None` uses the full subgradient.
    pub batch_size: Option<usize>,
    pub noise_variance: f64,
    pub solver: Solver,
    pub eig_floor: f64,
    pub residual_tolerance: f64,
    pub seed: u64,
    pub record_objective: bool,
    pub record_time: bool,
}

impl ReaperConfig {
    /// Noiseless full-batch run with `eta_k = 8 / sqrt(k)`.
    pub fn new(iterations: usize, solver: Solver) -> Self {
        Self {
            iterations,
            step0: 8.0,
            batch_size: None,
            noise_variance: 0.0,
            solver,
            eig_floor: EIG_FLOOR,
            residual_tolerance: RESIDUAL_TOL,
            seed: 0,
            record_objective: true,
            record_time: false,
        }
    }

    pub fn step(&self, k: usize) -> f64 {
        self.step0 / (k as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step0 > 0.0 && self.step0.is_finite()) {
            return Err(Error::InvalidParameter(format!("step0 must be > 0, got {}", self.step0)));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidParameter("batch size must be positive".into()));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::InvalidParameter("noise variance must be finite and >= 0".into()));
        }
        if !(self.eig_floor > 0.0) {
            return Err(Error::InvalidParameter("eigenvalue floor must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ReaperRun {
    /// `(1/T) sum_{k=1}^T P_k`. For mirror descent this need not satisfy `P <= I`.
    pub averaged: Matrix,
    /// The average projected onto `H`; the subspace is extracted from it.
    pub output: RelaxedProjection,
    pub principal: TopEigenspace,
    /// Records iterate objectives and the error of the running average's
    /// principal subspace. `final_basis` is the principal subspace of `output`.
    pub trajectory: Trajectory,
    /// Iterations at which the mirror-descent eigenvalue floor was applied.
    pub floor_events: Vec<usize>,
    pub diameter: f64,
}

/// `A^T A` with `A_ij ~ N(1, 0.01)`.
fn initial_matrix<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Matrix {
    let a = Matrix::from_fn(d, d, |_, _| 1.0 + 0.1 * rng.sample::<f64, _>(StandardNormal));
    a.transpose() * a
}

fn renormalize_trace(p: &Matrix, rank: usize) -> Matrix {
    symmetrize(p) * (rank as f64 / p.trace())
}

/// One mirror step `exp(log P - eta G)` followed by trace renormalization.
/// Returns the new iterate and whether any eigenvalue was floored.
fn mirror_step(p: &Matrix, direction: &Matrix, rank: usize, floor: f64) -> Result<(Matrix, bool)> {
    check_finite(direction)?;
    let d = p.nrows();
    let (values, vectors) = geometry::sorted_symmetric_eigen(p);
    let floored = values.iter().any(|&v| v < floor);
    let logs: Vec<f64> = values.iter().map(|&v| v.max(floor).ln()).collect();
    let log_p = Matrix::from_fn(d, d, |i, j| vectors[(i, j)] * logs[j]) * vectors.transpose();
    let (mu, w) = geometry::sorted_symmetric_eigen(&symmetrize(&(log_p - direction)));
    // the common factor exp(max mu) cancels in the trace renormalization
    let top = mu[0];
    let e: Vec<f64> = mu.iter().map(|&m| (m - top).exp()).collect();
    let total: f64 = e.iter().sum();
    let scale = rank as f64 / total;
    let next = Matrix::from_fn(d, d, |i, j| w[(i, j)] * e[j] * scale) * w.transpose();
    Ok((symmetrize(&next), floored))
}

/// Runs projected subgradient or mirror descent on the REAPER objective.
///
/// The iterate `P_k` (for `k = 1..T`) is obtained from `P_{k-1}` with step
/// `eta_k`; the output averages `P_1..P_T`. `P_0 = A^T A` is projected onto `H`
/// (GD) or renormalized to trace `r` (MD).
pub fn run_reaper(data: &LabeledDataset, rank: usize, cfg: &ReaperConfig) -> Result<ReaperRun> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.iterations == 0 {
        return Err(Error::InvalidParameter("REAPER needs at least one iteration".into()));
    }
    let d = data.dim();
    check_relaxed_rank(d, rank)?;
    if let Some(t) = data.truth() {
        if t.rank() != rank {
            return Err(Error::shape(format!("rank {}", t.rank()), format!("rank {rank}")));
        }
    }
    let x = data.points();
    let truth = data.truth();
    let clock = cfg.record_time.then(Instant::now);
    let mut rng = seeding::rng(cfg.seed);

    let p0 = initial_matrix(d, &mut rng);
    let mut p = match cfg.solver {
        Solver::Gd => project_h(&p0, rank)?.projection.into_matrix(),
        Solver::Md => renormalize_trace(&p0, rank),
    };

    let mut records = Vec::with_capacity(cfg.iterations + 1);
    let mut record = |iter: usize, current: &Matrix, average: &Matrix| -> Result<()> {
        let (dr2, dist2) = match truth {
            Some(t) => {
                let v = principal_subspace_quiet(average, rank)?;
                (geometry::dr2(&v, t)?, geometry::grassmann_dist2(&v, t)?)
            }
            None => (f64::NAN, f64::NAN),
        };
        let objective = if cfg.record_objective {
            reaper_value(current, x)?
        } else {
            f64::NAN
        };
        let seconds = clock.map(|c| c.elapsed().as_secs_f64()).unwrap_or(0.0);
        records.push(Record {
            iter,
            dr2,
            dist2,
            objective,
            seconds,
        });
        Ok(())
    };
    record(0, &p, &p)?;

    let mut average = Matrix::zeros(d, d);
    let mut floor_events = Vec::new();
    for k in 1..=cfg.iterations {
        let g = match cfg.batch_size {
            Some(b) => {
                let idx = sample_indices(x.nrows(), b, &mut rng);
                reaper_subgradient(&p, &x.select_rows(idx.iter()), cfg.residual_tolerance)?
            }
            None => reaper_subgradient(&p, x, cfg.residual_tolerance)?,
        };
        let noise = symmetric_noise(d, cfg.noise_variance, &mut rng);
        let direction = (g + noise) * cfg.step(k);
        p = match cfg.solver {
            Solver::Gd => project_h(&(&p - direction), rank)?.projection.into_matrix(),
            Solver::Md => {
                let (next, floored) = mirror_step(&p, &direction, rank, cfg.eig_floor)?;
                if floored {
                    log::debug!("eigenvalue floor applied at iteration {k}");
                    floor_events.push(k);
                }
                next
            }
        };
        average += (&p - &average) / k as f64;
        record(k, &p, &average)?;
    }

    let output = project_h(&average, rank)?.projection;
    let principal = principal_subspace(output.matrix(), rank)?;
    Ok(ReaperRun {
        averaged: average,
        output,
        trajectory: Trajectory {
            records,
            final_basis: principal.basis.clone(),
            stage_boundaries: vec![0],
        },
        principal,
        floor_events,
        diameter: h_diameter(d, rank),
    })
}

fn principal_subspace_quiet(p: &Matrix, rank: usize) -> Result<SubspaceBasis> {
    Ok(geometry::top_eigenspace(&symmetrize(p), rank)?.basis)
}
