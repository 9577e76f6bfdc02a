//! Grassmannian primitives: semiorthogonal bases, tangent projection, the
//! Procrustes retraction and principal-angle distances.
//!
//! A point of the Grassmannian `G(D, r)` is represented by a `D x r` matrix
//! `V` with `V^T V = I_r`. Two bases related by an `r x r` orthogonal factor
//! represent the same subspace; every distance here is invariant under that
//! change of basis.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::Matrix;

/// Maximum entrywise deviation of `V^T V` from the identity accepted for a basis.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Smallest singular value below which the Procrustes projection is refused.
pub const RANK_TOL: f64 = 1e-12;

/// Eigengap at or below which a top-`r` eigenspace is reported as ill-defined.
pub const EIGENGAP_TOL: f64 = 1e-12;

/// A `D x r` matrix with orthonormal columns, `1 <= r < D`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    matrix: Matrix,
}

impl SubspaceBasis {
    pub fn new(matrix: Matrix) -> Result<Self> {
        check_rank(matrix.nrows(), matrix.ncols())?;
        let deviation = orthonormality_defect(&matrix);
        if deviation > ORTHONORMALITY_TOL {
            return Err(Error::NotSemiorthogonal { deviation });
        }
        Ok(Self { matrix })
    }

    /// Wraps a matrix already known to be orthonormal to working precision.
    pub(crate) fn from_orthonormal(matrix: Matrix) -> Self {
        debug_assert!(orthonormality_defect(&matrix) < 1e-8);
        Self { matrix }
    }

    /// The span of the first `r` standard basis vectors of `R^D`.
    pub fn canonical(ambient_dim: usize, rank: usize) -> Result<Self> {
        check_rank(ambient_dim, rank)?;
        Ok(Self {
            matrix: Matrix::identity(ambient_dim, rank),
        })
    }

    /// A uniformly distributed subspace: the orthonormalized columns of an
    /// i.i.d. standard Gaussian `D x r` frame.
    pub fn random<R: Rng + ?Sized>(ambient_dim: usize, rank: usize, rng: &mut R) -> Result<Self> {
        check_rank(ambient_dim, rank)?;
        let frame = Matrix::from_fn(ambient_dim, rank, |_, _| rng.sample(StandardNormal));
        project_stiefel(&frame)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn ambient_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rank(&self) -> usize {
        self.matrix.ncols()
    }

    /// The orthogonal projector `V V^T`.
    pub fn projector(&self) -> Matrix {
        &self.matrix * self.matrix.transpose()
    }
}

fn check_rank(ambient_dim: usize, rank: usize) -> Result<()> {
    if rank == 0 || rank >= ambient_dim {
        return Err(Error::InvalidDimensions(format!(
            "need 1 <= r < D, got r = {rank}, D = {ambient_dim}"
        )));
    }
    Ok(())
}

/// `max |V^T V - I|` over entries.
pub fn orthonormality_defect(matrix: &Matrix) -> f64 {
    let r = matrix.ncols();
    (matrix.transpose() * matrix - Matrix::identity(r, r)).amax()
}

/// A horizontal tangent vector at some base point `V`: `V^T G = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    matrix: Matrix,
}

impl TangentVector {
    /// Accepts `matrix` as a tangent vector at `base` if `V^T G` vanishes to 1e-8
    /// (relative to the size of `G`).
    pub fn at(base: &SubspaceBasis, matrix: Matrix) -> Result<Self> {
        check_same_shape(base.matrix(), &matrix)?;
        let off = (base.matrix().transpose() * &matrix).amax();
        if off > 1e-8 * matrix.norm().max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "matrix is not tangent at the base point (|V^T G| = {off:e})"
            )));
        }
        Ok(Self { matrix })
    }

    pub(crate) fn from_projected(matrix: Matrix) -> Self {
        Self { matrix }
    }

    pub fn zeros(ambient_dim: usize, rank: usize) -> Self {
        Self {
            matrix: Matrix::zeros(ambient_dim, rank),
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        spectral_norm(&self.matrix)
    }
}

fn check_same_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            format!("{}x{}", a.nrows(), a.ncols()),
            format!("{}x{}", b.nrows(), b.ncols()),
        ));
    }
    Ok(())
}

fn check_comparable(v1: &SubspaceBasis, v2: &SubspaceBasis) -> Result<()> {
    check_same_shape(v1.matrix(), v2.matrix())
}

/// `Q_V A = (I - V V^T) A`.
pub fn tangent_project(base: &SubspaceBasis, a: &Matrix) -> Result<TangentVector> {
    check_same_shape(base.matrix(), a)?;
    let v = base.matrix();
    let coeffs = v.transpose() * a;
    Ok(TangentVector::from_projected(a - v * coeffs))
}

/// Nearest semiorthogonal matrix in Frobenius norm (orthogonal Procrustes).
///
/// With the thin SVD `A = U S W^T` the minimizer is `U W^T`. Fails when the
/// smallest singular value is at most [`RANK_TOL`], where the projection is
/// not unique, or when `a` has a non-finite entry.
pub fn project_stiefel(a: &Matrix) -> Result<SubspaceBasis> {
    check_rank(a.nrows(), a.ncols())?;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficient { sigma_min: f64::NAN });
    }
    let svd = a.clone().svd(true, true);
    let sigma_min = svd.singular_values.min();
    if !(sigma_min > RANK_TOL) {
        return Err(Error::RankDeficient { sigma_min });
    }
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    Ok(SubspaceBasis::from_orthonormal(u * v_t))
}

/// One projection-retraction step `P_{O(D,r)}(V - eta G)`.
pub fn retract_step(base: &SubspaceBasis, direction: &TangentVector, eta: f64) -> Result<SubspaceBasis> {
    check_same_shape(base.matrix(), direction.matrix())?;
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::InvalidParameter(format!("step size must be finite and >= 0, got {eta}")));
    }
    project_stiefel(&(base.matrix() - direction.matrix() * eta))
}

/// Singular values in descending order.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    m.singular_values().iter().copied().collect()
}

pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Principal angles `theta_1 >= ... >= theta_r` between two subspaces.
///
/// Cosines come from the singular values of `V1^T V2`, clamped to `[0, 1]`.
/// Angles below `pi/4` are taken from the sines, the singular values of
/// `(I - V1 V1^T) V2`, which keeps full relative accuracy for nearly equal
/// subspaces where `arccos` loses half the digits.
pub fn principal_angles(v1: &SubspaceBasis, v2: &SubspaceBasis) -> Result<Vec<f64>> {
    check_comparable(v1, v2)?;
    let (a, b) = canonical_order(v1, v2);
    Ok(angles_unchecked(a.matrix(), b.matrix()))
}

// Fixes argument order so that symmetric quantities are bitwise symmetric.
fn canonical_order<'a>(v1: &'a SubspaceBasis, v2: &'a SubspaceBasis) -> (&'a SubspaceBasis, &'a SubspaceBasis) {
    for (x, y) in v1.matrix().iter().zip(v2.matrix().iter()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return (v1, v2),
            std::cmp::Ordering::Greater => return (v2, v1),
            std::cmp::Ordering::Equal => {}
        }
    }
    (v1, v2)
}

fn angles_unchecked(v1: &Matrix, v2: &Matrix) -> Vec<f64> {
    let r = v1.ncols();
    // cosines ascending <-> angles descending
    let mut cosines = singular_values(&(v1.transpose() * v2));
    cosines.reverse();
    let residual = v2 - v1 * (v1.transpose() * v2);
    // sines descending <-> angles descending
    let sines = singular_values(&residual);
    let mut angles: Vec<f64> = (0..r)
        .map(|j| {
            let c = cosines[j].clamp(0.0, 1.0);
            if c < FRAC_1_SQRT_2 {
                c.acos()
            } else {
                sines[j].clamp(0.0, 1.0).asin()
            }
        })
        .collect();
    angles.sort_by(|a, b| b.total_cmp(a));
    angles
}

/// `d_r^2(V1, V2) = 1 - sigma_r(V1^T V2) = 1 - cos(theta_1)`, in `[0, 1]`.
///
/// Evaluated as `2 sin^2(theta_1 / 2)` so that tiny distances are resolved.
pub fn dr2(v1: &SubspaceBasis, v2: &SubspaceBasis) -> Result<f64> {
    let theta_max = principal_angles(v1, v2)?[0];
    let half = (0.5 * theta_max).sin();
    Ok((2.0 * half * half).clamp(0.0, 1.0))
}

/// Squared geodesic distance `sum_j theta_j^2`.
pub fn grassmann_dist2(v1: &SubspaceBasis, v2: &SubspaceBasis) -> Result<f64> {
    Ok(principal_angles(v1, v2)?.iter().map(|t| t * t).sum())
}

/// Leading eigenvectors of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct TopEigenspace {
    pub basis: SubspaceBasis,
    /// All eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// `lambda_r - lambda_{r+1}`.
    pub eigengap: f64,
}

impl TopEigenspace {
    /// `true` when the eigengap is too small for the subspace to be well defined.
    pub fn is_ill_defined(&self) -> bool {
        self.eigengap <= EIGENGAP_TOL
    }

    pub fn warning(&self) -> Option<String> {
        self.is_ill_defined().then(|| {
            format!(
                "eigengap lambda_r - lambda_(r+1) = {:e} is at most {:e}; the top-{} eigenspace is ill-defined",
                self.eigengap,
                EIGENGAP_TOL,
                self.basis.rank()
            )
        })
    }
}

/// Eigenvalues (descending) and matching eigenvectors of a symmetric matrix.
pub fn sorted_symmetric_eigen(sym: &Matrix) -> (Vec<f64>, Matrix) {
    let eig = SymmetricEigen::new(sym.clone());
    let n = sym.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Matrix::from_fn(n, n, |row, col| eig.eigenvectors[(row, order[col])]);
    (values, vectors)
}

/// Top-`r` eigenspace of a symmetric `D x D` matrix.
pub fn top_eigenspace(sym: &Matrix, rank: usize) -> Result<TopEigenspace> {
    if !sym.is_square() {
        return Err(Error::shape("square matrix", format!("{}x{}", sym.nrows(), sym.ncols())));
    }
    check_rank(sym.nrows(), rank)?;
    let (eigenvalues, vectors) = sorted_symmetric_eigen(sym);
    let eigengap = eigenvalues[rank - 1] - eigenvalues[rank];
    let top = vectors.columns(0, rank).into_owned();
    // Re-orthonormalize to absorb eigensolver rounding.
    let basis = project_stiefel(&top)?;
    Ok(TopEigenspace {
        basis,
        eigenvalues,
        eigengap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;
    use std::f64::consts::FRAC_PI_2;

    fn rotated_pair(d: usize, r: usize, theta: f64) -> (SubspaceBasis, SubspaceBasis) {
        // V2 rotates e_1 towards e_{r+1}; the other r-1 directions are shared.
        let v1 = SubspaceBasis::canonical(d, r).unwrap();
        let mut m = Matrix::identity(d, r);
        m[(0, 0)] = theta.cos();
        m[(r, 0)] = theta.sin();
        (v1, SubspaceBasis::new(m).unwrap())
    }

    fn random_orthogonal(r: usize, rng: &mut seeding::Rng) -> Matrix {
        let g = Matrix::from_fn(r, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let svd = g.svd(true, true);
        svd.u.unwrap() * svd.v_t.unwrap()
    }

    #[test]
    fn basis_rejects_bad_shapes() {
        assert!(SubspaceBasis::canonical(3, 3).is_err());
        assert!(SubspaceBasis::canonical(3, 0).is_err());
        let mut m = Matrix::identity(4, 2);
        m[(0, 0)] = 1.1;
        assert!(matches!(SubspaceBasis::new(m), Err(Error::NotSemiorthogonal { .. })));
    }

    #[test]
    fn tangent_project_of_own_span_is_zero() {
        let v = SubspaceBasis::canonical(5, 2).unwrap();
        let t = tangent_project(&v, v.matrix()).unwrap();
        assert_eq!(t.norm(), 0.0);
    }

    #[test]
    fn tangent_project_fixes_tangent_vectors() {
        let mut rng = seeding::rng(1);
        let v = SubspaceBasis::random(7, 3, &mut rng).unwrap();
        let a = Matrix::from_fn(7, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let t = tangent_project(&v, &a).unwrap();
        let again = tangent_project(&v, t.matrix()).unwrap();
        assert!((again.matrix() - t.matrix()).amax() < 1e-12);
    }

    #[test]
    fn tangent_project_matches_entrywise_formula() {
        let mut rng = seeding::rng(2);
        let v = SubspaceBasis::random(6, 2, &mut rng).unwrap();
        let a = Matrix::from_fn(6, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let t = tangent_project(&v, &a).unwrap();
        // independent path: explicit (I - V V^T) A via loops
        let vm = v.matrix();
        for i in 0..6 {
            for j in 0..2 {
                let mut acc = a[(i, j)];
                for k in 0..6 {
                    let p: f64 = (0..2).map(|l| vm[(i, l)] * vm[(k, l)]).sum();
                    acc -= p * a[(k, j)];
                }
                assert!((t.matrix()[(i, j)] - acc).abs() < 1e-12);
            }
        }
        assert!((vm.transpose() * t.matrix()).amax() < 1e-12);
    }

    #[test]
    fn tangent_project_shape_mismatch() {
        let v = SubspaceBasis::canonical(5, 2).unwrap();
        assert!(matches!(
            tangent_project(&v, &Matrix::zeros(5, 3)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn project_stiefel_fixes_semiorthogonal() {
        let mut rng = seeding::rng(3);
        let v = SubspaceBasis::random(8, 3, &mut rng).unwrap();
        let p = project_stiefel(v.matrix()).unwrap();
        assert!((p.matrix() - v.matrix()).amax() < 1e-10);
    }

    #[test]
    fn project_stiefel_removes_column_scales() {
        let mut rng = seeding::rng(4);
        let frame = SubspaceBasis::random(6, 3, &mut rng).unwrap();
        let mut scaled = frame.matrix().clone();
        for (j, c) in [0.3, 2.0, 7.5].iter().enumerate() {
            scaled.column_mut(j).scale_mut(*c);
        }
        let p = project_stiefel(&scaled).unwrap();
        assert!((p.matrix() - frame.matrix()).amax() < 1e-10);
    }

    #[test]
    fn project_stiefel_rejects_rank_deficient() {
        let mut a = Matrix::zeros(5, 2);
        a[(0, 0)] = 1.0;
        a[(0, 1)] = 1.0;
        assert!(matches!(project_stiefel(&a), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn angles_identical_and_orthogonal() {
        let v = SubspaceBasis::canonical(6, 2).unwrap();
        assert!(principal_angles(&v, &v).unwrap().iter().all(|&t| t.abs() < 1e-15));
        let mut m = Matrix::zeros(6, 2);
        m[(2, 0)] = 1.0;
        m[(3, 1)] = 1.0;
        let w = SubspaceBasis::new(m).unwrap();
        for t in principal_angles(&v, &w).unwrap() {
            assert!((t - FRAC_PI_2).abs() < 1e-15);
        }
        assert!((dr2(&v, &w).unwrap() - 1.0).abs() < 1e-15);
        let two_right_angles = 2.0 * FRAC_PI_2 * FRAC_PI_2;
        assert!((grassmann_dist2(&v, &w).unwrap() - two_right_angles).abs() < 1e-12);
        assert!((two_right_angles - 4.9348).abs() < 1e-4);
    }

    #[test]
    fn single_plane_rotation() {
        for &theta in &[1e-9, 1e-4, 0.3, 0.9, 1.4] {
            let (v1, v2) = rotated_pair(7, 3, theta);
            let angles = principal_angles(&v1, &v2).unwrap();
            assert!((angles[0] - theta).abs() <= 1e-12 * theta.max(1.0), "{angles:?}");
            assert!(angles[1..].iter().all(|t| t.abs() < 1e-14));
            let expected_dr2 = 1.0 - theta.cos();
            let got = dr2(&v1, &v2).unwrap();
            assert!((got - expected_dr2).abs() <= 1e-15 + 1e-12 * expected_dr2);
            let d2 = grassmann_dist2(&v1, &v2).unwrap();
            assert!((d2 - theta * theta).abs() <= 1e-12 * theta * theta + 1e-28);
        }
    }

    #[test]
    fn distances_reject_dimension_mismatch() {
        let a = SubspaceBasis::canonical(5, 2).unwrap();
        let b = SubspaceBasis::canonical(6, 2).unwrap();
        let c = SubspaceBasis::canonical(5, 3).unwrap();
        assert!(dr2(&a, &b).is_err());
        assert!(grassmann_dist2(&a, &c).is_err());
        assert!(principal_angles(&a, &c).is_err());
    }

    #[test]
    fn dr2_symmetric_and_basis_free() {
        let mut rng = seeding::rng(5);
        for _ in 0..50 {
            let a = SubspaceBasis::random(9, 3, &mut rng).unwrap();
            let b = SubspaceBasis::random(9, 3, &mut rng).unwrap();
            assert_eq!(dr2(&a, &b).unwrap(), dr2(&b, &a).unwrap());
            let rot = random_orthogonal(3, &mut rng);
            let a_rot = SubspaceBasis::new(a.matrix() * rot).unwrap();
            assert!((dr2(&a_rot, &b).unwrap() - dr2(&a, &b).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn dr2_agrees_with_largest_angle_and_sigma_r() {
        let mut rng = seeding::rng(6);
        for _ in 0..100 {
            let a = SubspaceBasis::random(8, 2, &mut rng).unwrap();
            let b = SubspaceBasis::random(8, 2, &mut rng).unwrap();
            let theta = principal_angles(&a, &b).unwrap()[0];
            let d = dr2(&a, &b).unwrap();
            assert!((d - (1.0 - theta.cos())).abs() < 1e-10);
            let sigma_r = *singular_values(&(a.matrix().transpose() * b.matrix())).last().unwrap();
            assert!((d - (1.0 - sigma_r)).abs() < 1e-10);
        }
    }

    #[test]
    fn pythagorean_identity_for_tangent_projection() {
        let mut rng = seeding::rng(7);
        for _ in 0..50 {
            let v = SubspaceBasis::random(10, 4, &mut rng).unwrap();
            let a = Matrix::from_fn(10, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
            let t = tangent_project(&v, &a).unwrap();
            let lhs = a.norm_squared();
            let rhs = t.matrix().norm_squared() + (&a - t.matrix()).norm_squared();
            assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn retraction_trivial_steps() {
        let mut rng = seeding::rng(8);
        let v = SubspaceBasis::random(6, 2, &mut rng).unwrap();
        let zero = TangentVector::zeros(6, 2);
        let same = retract_step(&v, &zero, 0.7).unwrap();
        assert!((same.matrix() - v.matrix()).amax() < 1e-12);
        let a = Matrix::from_fn(6, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let g = tangent_project(&v, &a).unwrap();
        let same = retract_step(&v, &g, 0.0).unwrap();
        assert!((same.matrix() - v.matrix()).amax() < 1e-12);
        assert!(retract_step(&v, &g, -1.0).is_err());
    }

    #[test]
    fn top_eigenspace_warns_on_flat_spectrum() {
        let top = top_eigenspace(&(Matrix::identity(5, 5) * 0.4), 2).unwrap();
        assert!(top.is_ill_defined());
        assert!(top.warning().is_some());
        assert!(orthonormality_defect(top.basis.matrix()) < 1e-12);
    }
}
