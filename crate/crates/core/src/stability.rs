//! Recovery diagnostics: the GLAD stability statistic and its permeance and
//! alignment terms, the PCA-initialization statistic, the minibatch expected
//! stability, and the REAPER permeance/alignment/stability triple.
//!
//! All statistics take unit-norm rows. Sums over inliers or outliers are
//! divided by the size of the whole dataset, not of the subset.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::geometry::{self, SubspaceBasis};
use crate::glad::{glad_gradient, sample_indices, RESIDUAL_TOL};
use crate::seeding;
use crate::Matrix;

/// GLAD stability `S_gamma = gamma P(X_in) - A(X_out)`, bracketed because the
/// alignment is only bracketed.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub gamma: f64,
    pub rank: usize,
    pub n_in: usize,
    pub n_out: usize,
    pub permeance: f64,
    /// Fewer than `r` inliers; the permeance is 0.
    pub inlier_deficient: bool,
    /// Best value found by search.
    pub alignment_lower: f64,
    /// Analytic bound.
    pub alignment_upper: f64,
    /// `gamma * permeance - alignment_upper`.
    pub stability_lower: f64,
    /// `gamma * permeance - alignment_lower`.
    pub stability_upper: f64,
}

impl StabilityReport {
    pub fn key_values(&self) -> Vec<(String, String)> {
        vec![
            ("gamma".into(), fmt(self.gamma)),
            ("rank".into(), self.rank.to_string()),
            ("n_in".into(), self.n_in.to_string()),
            ("n_out".into(), self.n_out.to_string()),
            ("permeance".into(), fmt(self.permeance)),
            ("inlier_deficient".into(), self.inlier_deficient.to_string()),
            ("alignment_lower".into(), fmt(self.alignment_lower)),
            ("alignment_upper".into(), fmt(self.alignment_upper)),
            ("stability_lower".into(), fmt(self.stability_lower)),
            ("stability_upper".into(), fmt(self.stability_upper)),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReaperStabilityReport {
    pub rank: usize,
    pub permeance_reap: f64,
    pub alignment_reap: f64,
    /// `permeance_reap / (4 sqrt(r)) - alignment_reap`.
    pub stability_reap: f64,
}

impl ReaperStabilityReport {
    pub fn key_values(&self) -> Vec<(String, String)> {
        vec![
            ("permeance_reap".into(), fmt(self.permeance_reap)),
            ("alignment_reap".into(), fmt(self.alignment_reap)),
            ("stability_reap".into(), fmt(self.stability_reap)),
        ]
    }
}

fn fmt(x: f64) -> String {
    crate::trajectory::fmt_f64(x)
}

fn check_total(n_total: usize) -> Result<()> {
    if n_total == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

/// `lambda_r((1/N) sum_{x in X_in} x x^T / ||x||)` with `N = n_total`.
///
/// Returns 0 when there are fewer than `r` inliers.
pub fn permeance(inliers: &Matrix, n_total: usize, rank: usize) -> Result<f64> {
    check_total(n_total)?;
    let d = inliers.ncols();
    if rank == 0 || rank > d {
        return Err(Error::InvalidDimensions(format!("need 1 <= r <= D, got r = {rank}, D = {d}")));
    }
    if inliers.nrows() < rank {
        return Ok(0.0);
    }
    let mut weighted = inliers.clone();
    for mut row in weighted.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n.sqrt();
        }
    }
    let moment = weighted.transpose() * weighted / n_total as f64;
    let (values, _) = geometry::sorted_symmetric_eigen(&moment);
    Ok(values[rank - 1].max(0.0))
}

/// Settings of the multistart search for the alignment lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentSearch {
    pub restarts: usize,
    /// Proposals per restart.
    pub iterations: usize,
    /// Initial perturbation size; halved after a run of rejections.
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for AlignmentSearch {
    fn default() -> Self {
        Self {
            restarts: 8,
            iterations: 300,
            initial_step: 0.5,
            seed: 0,
        }
    }
}

/// `sigma_1((1/N) sum_{x in X_out} Q_V x x^T V / ||Q_V x||)`.
pub fn outlier_gradient_norm(v: &SubspaceBasis, outliers: &Matrix, n_total: usize) -> Result<f64> {
    check_total(n_total)?;
    if outliers.nrows() == 0 {
        return Ok(0.0);
    }
    let g = glad_gradient(v, outliers, RESIDUAL_TOL)?;
    Ok(g.spectral_norm() * outliers.nrows() as f64 / n_total as f64)
}

/// Analytic upper bound on `max_V sigma_1(grad F(V; X_out))`:
/// `min(n_out, sqrt(n_out) ||X_out||_2) / N`.
///
/// The gradient is `U W^T / N` with unit columns in `U` and `W = V^T X_out^T`,
/// so its spectral norm is at most `||U||_F ||X_out||_2 / N`.
pub fn alignment_upper(outliers: &Matrix, n_total: usize) -> Result<f64> {
    check_total(n_total)?;
    let n_out = outliers.nrows();
    if n_out == 0 {
        return Ok(0.0);
    }
    let fraction = n_out as f64;
    let spectral = (n_out as f64).sqrt() * geometry::spectral_norm(outliers);
    Ok(fraction.min(spectral) / n_total as f64)
}

/// Bracket `(lower, upper)` for the alignment `max_V sigma_1(grad F(V; X_out))`.
///
/// `lower` is the best value found by randomized hill climbing on `O(D, r)`
/// started from the top outlier principal subspace and from random bases.
pub fn alignment(outliers: &Matrix, n_total: usize, rank: usize, search: &AlignmentSearch) -> Result<(f64, f64)> {
    check_total(n_total)?;
    let upper = alignment_upper(outliers, n_total)?;
    if outliers.nrows() == 0 {
        return Ok((0.0, 0.0));
    }
    let d = outliers.ncols();
    let mut starts = Vec::with_capacity(search.restarts + 1);
    if outliers.nrows() >= rank {
        starts.push(geometry::top_eigenspace(&(outliers.transpose() * outliers), rank)?.basis);
    }
    let mut rng = seeding::rng(search.seed);
    for _ in 0..search.restarts {
        starts.push(SubspaceBasis::random(d, rank, &mut rng)?);
    }

    let mut best = 0.0f64;
    for start in starts {
        let mut v = start;
        let mut value = outlier_gradient_norm(&v, outliers, n_total)?;
        let mut tau = search.initial_step;
        let mut rejected = 0;
        for _ in 0..search.iterations {
            let kick = Matrix::from_fn(d, rank, |_, _| tau * rng.sample::<f64, _>(StandardNormal));
            let Ok(candidate) = geometry::project_stiefel(&(v.matrix() + kick)) else {
                continue;
            };
            let cv = outlier_gradient_norm(&candidate, outliers, n_total)?;
            if cv > value {
                v = candidate;
                value = cv;
                rejected = 0;
            } else {
                rejected += 1;
                if rejected >= 10 {
                    tau *= 0.5;
                    rejected = 0;
                }
            }
        }
        best = best.max(value);
    }
    Ok((best.min(upper), upper))
}

/// Inlier and outlier rows of a labeled dataset.
fn split(data: &LabeledDataset) -> Result<(Matrix, Matrix)> {
    data.require_labels()?;
    Ok((data.inliers()?, data.outliers()?))
}

pub fn stability_glad(data: &LabeledDataset, rank: usize, gamma: f64, search: &AlignmentSearch) -> Result<StabilityReport> {
    check_gamma(gamma)?;
    let (inl, out) = split(data)?;
    let n = data.len();
    let permeance = permeance(&inl, n, rank)?;
    let (alignment_lower, alignment_upper) = alignment(&out, n, rank, search)?;
    Ok(StabilityReport {
        gamma,
        rank,
        n_in: inl.nrows(),
        n_out: out.nrows(),
        permeance,
        inlier_deficient: inl.nrows() < rank,
        alignment_lower,
        alignment_upper,
        stability_lower: gamma * permeance - alignment_upper,
        stability_upper: gamma * permeance - alignment_lower,
    })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    Ok(())
}

/// `2 sin(arccos(gamma)) lambda_r(X_in^T X_in) - ||X_out||_2^2` on the raw Gram
/// matrices.
pub fn stability_pca(data: &LabeledDataset, rank: usize, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let (inl, out) = split(data)?;
    let d = data.dim();
    if rank == 0 || rank > d {
        return Err(Error::InvalidDimensions(format!("need 1 <= r <= D, got r = {rank}, D = {d}")));
    }
    let lambda_r = if inl.nrows() == 0 {
        0.0
    } else {
        geometry::sorted_symmetric_eigen(&(inl.transpose() * &inl)).0[rank - 1].max(0.0)
    };
    let out_norm = geometry::spectral_norm(&out);
    Ok(2.0 * gamma.acos().sin() * lambda_r - out_norm * out_norm)
}

/// Monte-Carlo estimate of the expected minibatch stability.
///
/// Each of `n_samples` batches draws `batch_size` rows uniformly with
/// replacement (batch `i` from seed `derive_seed(seed, [i])`) and scores
/// `gamma * permeance - alignment_upper` with `N` replaced by the batch size.
/// Returns the sample mean and its standard error.
pub fn stability_expected(
    data: &LabeledDataset,
    rank: usize,
    gamma: f64,
    batch_size: usize,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_gamma(gamma)?;
    let labels = data.require_labels()?;
    if batch_size == 0 || n_samples == 0 {
        return Err(Error::InvalidParameter("batch size and sample count must be positive".into()));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let x = data.points();
    let values: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeding::rng(seeding::derive_seed(seed, &[i as u64]));
            let idx = sample_indices(x.nrows(), batch_size, &mut rng);
            let (inl, out): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&j| labels[j] == Label::Inlier);
            let p = permeance(&x.select_rows(inl.iter()), batch_size, rank)?;
            let a = alignment_upper(&x.select_rows(out.iter()), batch_size)?;
            Ok(gamma * p - a)
        })
        .collect::<Result<_>>()?;
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let se = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    } else {
        0.0
    };
    Ok((mean, se))
}

/// `inf_{|w| = 1} (1/N) sum_i |w^T c_i|` over the rows `c_i` of `coords`.
///
/// Exact for `r <= 2`: for `r = 2` the objective is concave in the angle
/// between consecutive kinks, so its minimum sits on a kink. Each kink is
/// evaluated together with a 1 degree grid. For `r > 2`, 64 starts of local
/// descent on the sphere.
pub fn min_abs_projection(coords: &Matrix, n_total: usize) -> Result<f64> {
    check_total(n_total)?;
    let r = coords.ncols();
    let n = n_total as f64;
    if coords.nrows() == 0 {
        return Ok(0.0);
    }
    let value = |w: &[f64]| -> f64 {
        coords
            .row_iter()
            .map(|c| c.iter().zip(w).map(|(a, b)| a * b).sum::<f64>().abs())
            .sum::<f64>()
            / n
    };
    match r {
        0 => Err(Error::InvalidDimensions("need r >= 1".into())),
        1 => Ok(value(&[1.0])),
        2 => {
            let mut angles: Vec<f64> = (0..180).map(|deg| (deg as f64).to_radians()).collect();
            for c in coords.row_iter() {
                if c.norm() > 0.0 {
                    angles.push(c[1].atan2(c[0]) + std::f64::consts::FRAC_PI_2);
                }
            }
            Ok(angles
                .iter()
                .map(|&t| value(&[t.cos(), t.sin()]))
                .fold(f64::INFINITY, f64::min))
        }
        _ => Ok(sphere_descent(coords, n, 64, &value)),
    }
}

fn sphere_descent(coords: &Matrix, n: f64, starts: usize, value: &dyn Fn(&[f64]) -> f64) -> f64 {
    let r = coords.ncols();
    let mut rng = seeding::rng(0x5eed);
    let mut best = f64::INFINITY;
    for s in 0..starts {
        let mut w: Vec<f64> = if s < r {
            (0..r).map(|j| if j == s { 1.0 } else { 0.0 }).collect()
        } else {
            (0..r).map(|_| rng.sample(StandardNormal)).collect()
        };
        normalize(&mut w);
        let mut f = value(&w);
        let mut step = 0.1;
        for _ in 0..5000 {
            if step < 1e-9 {
                break;
            }
            // subgradient of sum |w^T c| / n, projected to the tangent space
            let mut g = vec![0.0; r];
            for c in coords.row_iter() {
                let s = c.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>().signum();
                for j in 0..r {
                    g[j] += s * c[j] / n;
                }
            }
            let radial: f64 = g.iter().zip(&w).map(|(a, b)| a * b).sum();
            let mut cand: Vec<f64> = (0..r).map(|j| w[j] - step * (g[j] - radial * w[j])).collect();
            normalize(&mut cand);
            let fc = value(&cand);
            if fc < f - 1e-15 {
                w = cand;
                f = fc;
            } else {
                step *= 0.5;
            }
        }
        best = best.min(f);
    }
    best
}

fn normalize(w: &mut [f64]) {
    let n = w.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n > 0.0 {
        w.iter_mut().for_each(|a| *a /= n);
    }
}

/// REAPER permeance, alignment and stability with respect to the truth.
///
/// `P = inf_{u in L*, |u|=1} (1/N) sum_in |u^T x|`,
/// `A = (1/N) ||X_out||_2 ||[Q* x / ||Q* x||]||_2` (columns with
/// `||Q* x|| <= 1e-12` dropped) and `S = P / (4 sqrt(r)) - A`.
pub fn reaper_stats(data: &LabeledDataset) -> Result<ReaperStabilityReport> {
    let truth = data.require_truth()?;
    let (inl, out) = split(data)?;
    let n = data.len();
    check_total(n)?;
    let rank = truth.rank();
    let v = truth.matrix();
    let permeance_reap = min_abs_projection(&(&inl * v), n)?;

    let alignment_reap = if out.nrows() == 0 {
        0.0
    } else {
        let mut resid = &out - (&out * v) * v.transpose();
        let keep: Vec<usize> = (0..resid.nrows()).filter(|&i| resid.row(i).norm() > RESIDUAL_TOL).collect();
        resid = resid.select_rows(keep.iter());
        for mut row in resid.row_iter_mut() {
            let nr = row.norm();
            row /= nr;
        }
        geometry::spectral_norm(&out) * geometry::spectral_norm(&resid) / n as f64
    };
    Ok(ReaperStabilityReport {
        rank,
        permeance_reap,
        alignment_reap,
        stability_reap: permeance_reap / (4.0 * (rank as f64).sqrt()) - alignment_reap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_haystack, HaystackParams};

    fn labeled(points: Matrix, labels: Vec<Label>, truth: Option<SubspaceBasis>) -> LabeledDataset {
        LabeledDataset::new(points, Some(labels), truth).unwrap()
    }

    fn axes(d: usize, copies: &[usize]) -> Matrix {
        let n: usize = copies.iter().sum();
        let mut m = Matrix::zeros(n, d);
        let mut row = 0;
        for (axis, &c) in copies.iter().enumerate() {
            for _ in 0..c {
                m[(row, axis)] = 1.0;
                row += 1;
            }
        }
        m
    }

    #[test]
    fn permeance_of_axis_copies() {
        let inl = axes(4, &[3, 3]);
        let p = permeance(&inl, 10, 2).unwrap();
        assert!((p - 0.3).abs() < 1e-14);
        assert_eq!(permeance(&Matrix::zeros(0, 4), 10, 2).unwrap(), 0.0);
        assert_eq!(permeance(&axes(4, &[1]), 10, 2).unwrap(), 0.0);
    }

    #[test]
    fn permeance_of_large_haystack() {
        let p = HaystackParams::with_ratio(2, 10, 20_000, 0.5, 4);
        let data = gen_haystack(&p).unwrap();
        let value = permeance(&data.inliers().unwrap(), data.len(), 2).unwrap();
        let model = 0.5 / 2.0;
        assert!((value / model - 1.0).abs() < 0.1, "{value}");
    }

    #[test]
    fn alignment_without_outliers() {
        let search = AlignmentSearch::default();
        assert_eq!(alignment(&Matrix::zeros(0, 3), 10, 1, &search).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn alignment_of_single_outlier() {
        let out = Matrix::from_row_slice(1, 3, &[0.0, 0.6, 0.8]);
        let (lo, hi) = alignment(&out, 7, 1, &AlignmentSearch::default()).unwrap();
        assert!((hi - 1.0 / 7.0).abs() < 1e-15);
        assert!(lo <= hi);
    }

    #[test]
    fn alignment_matches_sphere_grid_in_three_dimensions() {
        // outliers are copies of e1 plus a few other directions
        let mut out = axes(3, &[12]);
        let extra = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.6, 0.0, 0.8, 0.0, 0.6, 0.8]);
        out = Matrix::from_fn(15, 3, |i, j| if i < 12 { out[(i, j)] } else { extra[(i - 12, j)] });
        let n_total = 40;
        let mut grid_best = 0.0f64;
        let steps = 720;
        for a in 0..=steps {
            let theta = std::f64::consts::PI * a as f64 / steps as f64;
            for b in 0..(2 * steps) {
                let phi = std::f64::consts::PI * b as f64 / steps as f64;
                let v = Matrix::from_column_slice(3, 1, &[theta.cos(), theta.sin() * phi.cos(), theta.sin() * phi.sin()]);
                let basis = SubspaceBasis::new(v.clone() / v.norm()).unwrap();
                grid_best = grid_best.max(outlier_gradient_norm(&basis, &out, n_total).unwrap());
            }
        }
        let (lo, hi) = alignment(&out, n_total, 1, &AlignmentSearch::default()).unwrap();
        assert!((lo - grid_best).abs() < 1e-3, "search {lo} vs grid {grid_best}");
        assert!(lo <= hi);
    }

    #[test]
    fn stability_trivial_cases() {
        let search = AlignmentSearch::default();
        let truth = SubspaceBasis::canonical(4, 2).unwrap();
        let all_in = labeled(axes(4, &[5, 5]), vec![Label::Inlier; 10], Some(truth.clone()));
        let rep = stability_glad(&all_in, 2, 1.0, &search).unwrap();
        assert!(rep.stability_lower > 0.0);
        assert!((rep.stability_lower - rep.permeance).abs() < 1e-15);

        let all_out = labeled(axes(4, &[3, 3, 2, 2]), vec![Label::Outlier; 10], Some(truth));
        let rep = stability_glad(&all_out, 2, 1.0, &search).unwrap();
        assert!(rep.stability_upper <= 0.0);
        assert!(rep.alignment_lower <= rep.alignment_upper);

        let unlabeled = LabeledDataset::unlabeled(axes(4, &[2]));
        assert!(matches!(stability_glad(&unlabeled, 2, 1.0, &search), Err(Error::MissingLabels)));
    }

    #[test]
    fn adding_an_outlier_never_raises_stability() {
        let search = AlignmentSearch::default();
        let mut p = HaystackParams::with_ratio(2, 6, 40, 0.75, 8);
        p.n_out = 10;
        let data = gen_haystack(&p).unwrap();
        let before = stability_glad(&data, 2, 0.5, &search).unwrap();
        let x = data.points();
        let extra = Matrix::from_fn(x.nrows() + 1, 6, |i, j| {
            if i < x.nrows() {
                x[(i, j)]
            } else if j == 0 {
                1.0
            } else {
                0.0
            }
        });
        let mut labels = data.labels().unwrap().to_vec();
        labels.push(Label::Outlier);
        let after = stability_glad(&labeled(extra, labels, data.truth().cloned()), 2, 0.5, &search).unwrap();
        assert!(after.permeance < before.permeance);
        assert!(after.stability_upper <= before.stability_upper + 1e-12);
        assert!(after.stability_lower <= before.stability_lower + 1e-12);
    }

    #[test]
    fn pca_statistic_signs() {
        let truth = SubspaceBasis::canonical(4, 2).unwrap();
        let all_in = labeled(axes(4, &[5, 5]), vec![Label::Inlier; 10], Some(truth.clone()));
        assert!(stability_pca(&all_in, 2, 0.5).unwrap() > 0.0);
        let out = axes(4, &[3, 1]);
        let all_out = labeled(out.clone(), vec![Label::Outlier; 4], Some(truth));
        let s = stability_pca(&all_out, 2, 0.5).unwrap();
        assert!((s + 3.0).abs() < 1e-12, "{s}");
    }

    #[test]
    fn expected_stability_trivial_cases() {
        let truth = SubspaceBasis::canonical(4, 2).unwrap();
        let all_in = labeled(axes(4, &[25, 25]), vec![Label::Inlier; 50], Some(truth.clone()));
        let (mean, se) = stability_expected(&all_in, 2, 1.0, 50, 400, 3).unwrap();
        assert!(mean > 0.0);
        assert!(se < 0.01);
        let all_out = labeled(axes(4, &[10, 10, 10, 10]), vec![Label::Outlier; 40], Some(truth));
        let (mean, _) = stability_expected(&all_out, 2, 1.0, 8, 100, 3).unwrap();
        assert!(mean <= 0.0);
    }

    #[test]
    fn expected_stability_error_halves() {
        let data = gen_haystack(&HaystackParams::with_ratio(2, 8, 200, 0.7, 2)).unwrap();
        let (m1, se1) = stability_expected(&data, 2, 0.5, 200, 500, 1).unwrap();
        let (m4, se4) = stability_expected(&data, 2, 0.5, 200, 2000, 1).unwrap();
        let ratio = se1 / se4;
        assert!((1.6..2.5).contains(&ratio), "se ratio {ratio}");
        assert!((m1 - m4).abs() < 4.0 * se1);
    }

    #[test]
    fn expected_stability_is_deterministic() {
        let data = gen_haystack(&HaystackParams::with_ratio(2, 8, 100, 0.6, 2)).unwrap();
        let a = stability_expected(&data, 2, 0.5, 10, 64, 9).unwrap();
        let b = stability_expected(&data, 2, 0.5, 10, 64, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reaper_stats_balanced_inliers() {
        let truth = SubspaceBasis::canonical(5, 2).unwrap();
        let data = labeled(axes(5, &[4, 4]), vec![Label::Inlier; 8], Some(truth));
        let rep = reaper_stats(&data).unwrap();
        assert_eq!(rep.alignment_reap, 0.0);
        // (1/N) sum |u . x| = (|u1| + |u2|) / 2, minimized on an axis
        assert!((rep.permeance_reap - 0.5).abs() < 1e-12);

        let truth3 = SubspaceBasis::canonical(5, 3).unwrap();
        let data3 = labeled(axes(5, &[2, 2, 2]), vec![Label::Inlier; 6], Some(truth3));
        let rep3 = reaper_stats(&data3).unwrap();
        assert!((rep3.permeance_reap - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn reaper_stats_all_outliers() {
        let data = gen_haystack(&HaystackParams::with_ratio(2, 6, 30, 0.0, 1)).unwrap();
        let rep = reaper_stats(&data).unwrap();
        assert_eq!(rep.permeance_reap, 0.0);
        assert!(rep.alignment_reap > 0.0);
        assert!((rep.stability_reap + rep.alignment_reap).abs() < 1e-15);
    }

    #[test]
    fn reaper_permeance_rank_one_is_a_direct_sum() {
        let data = gen_haystack(&HaystackParams::with_ratio(1, 5, 40, 0.5, 6)).unwrap();
        let rep = reaper_stats(&data).unwrap();
        let v = data.truth().unwrap().matrix();
        let inl = data.inliers().unwrap();
        let direct: f64 = (&inl * v).iter().map(|c| c.abs()).sum::<f64>() / 40.0;
        assert!((rep.permeance_reap - direct).abs() < 1e-10);
    }

    #[test]
    fn reaper_permeance_rank_two_beats_fine_grid() {
        let data = gen_haystack(&HaystackParams::with_ratio(2, 6, 300, 0.5, 12)).unwrap();
        let coords = data.inliers().unwrap() * data.truth().unwrap().matrix();
        let exact = min_abs_projection(&coords, 300).unwrap();
        let mut grid = f64::INFINITY;
        for k in 0..200_000 {
            let t = std::f64::consts::PI * k as f64 / 200_000.0;
            let v: f64 = coords.row_iter().map(|c| (c[0] * t.cos() + c[1] * t.sin()).abs()).sum::<f64>() / 300.0;
            grid = grid.min(v);
        }
        assert!(exact <= grid + 1e-12);
        assert!(grid - exact < 1e-6);
    }

    #[test]
    fn reaper_stats_are_scale_invariant() {
        let data = gen_haystack(&HaystackParams::with_ratio(2, 6, 50, 0.6, 3)).unwrap();
        let scaled = LabeledDataset::new(
            data.points() * 3.5,
            Some(data.labels().unwrap().to_vec()),
            data.truth().cloned(),
        )
        .unwrap()
        .normalized()
        .unwrap()
        .0;
        let a = reaper_stats(&data).unwrap();
        let b = reaper_stats(&scaled).unwrap();
        assert!((a.permeance_reap - b.permeance_reap).abs() < 1e-12);
        assert!((a.alignment_reap - b.alignment_reap).abs() < 1e-12);
        assert!((a.stability_reap - b.stability_reap).abs() < 1e-12);
    }
}
