use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use robsub::geometry::{self, SubspaceBasis, TangentVector};
use robsub::seeding;
use robsub::Matrix;

fn gaussian(d: usize, r: usize, rng: &mut seeding::Rng) -> Matrix {
    Matrix::from_fn(d, r, |_, _| rng.sample(StandardNormal))
}

#[test]
fn procrustes_is_never_beaten_by_random_comparators() {
    let mut rng = seeding::rng(2024);
    for _ in 0..5 {
        let a = gaussian(9, 3, &mut rng);
        let best = geometry::project_stiefel(&a).unwrap();
        let score = best.matrix().dot(&a);
        for _ in 0..1000 {
            let w = SubspaceBasis::random(9, 3, &mut rng).unwrap();
            assert!(w.matrix().dot(&a) <= score + 1e-12);
            assert!((-w.matrix()).dot(&a) <= score + 1e-12);
        }
    }
}

#[test]
fn procrustes_is_idempotent() {
    let mut rng = seeding::rng(7);
    for _ in 0..20 {
        let once = geometry::project_stiefel(&gaussian(7, 2, &mut rng)).unwrap();
        let twice = geometry::project_stiefel(once.matrix()).unwrap();
        assert!((once.matrix() - twice.matrix()).amax() < 1e-10);
    }
}

/// `Exp_V(t H) = V W cos(S t) W^T + U sin(S t) W^T` for the compact SVD
/// `H = U S W^T` of a horizontal tangent vector.
fn geodesic(v: &Matrix, h: &Matrix, t: f64) -> Matrix {
    let svd = h.clone().svd(true, true);
    let u = svd.u.unwrap();
    let wt = svd.v_t.unwrap();
    let r = h.ncols();
    let cos = Matrix::from_fn(r, r, |i, j| if i == j { (svd.singular_values[i] * t).cos() } else { 0.0 });
    let sin = Matrix::from_fn(r, r, |i, j| if i == j { (svd.singular_values[i] * t).sin() } else { 0.0 });
    v * wt.transpose() * cos * &wt + u * sin * wt
}

#[test]
fn retraction_agrees_with_geodesic_to_third_order() {
    let mut rng = seeding::rng(31);
    for _ in 0..5 {
        let v = SubspaceBasis::random(8, 2, &mut rng).unwrap();
        let g = geometry::tangent_project(&v, &gaussian(8, 2, &mut rng)).unwrap();
        let g = TangentVector::at(&v, g.matrix() / g.norm()).unwrap();
        let err = |eta: f64| {
            let retracted = geometry::retract_step(&v, &g, eta).unwrap();
            let exact = SubspaceBasis::new(geodesic(v.matrix(), &(-g.matrix()), eta)).unwrap();
            geometry::grassmann_dist2(&retracted, &exact).unwrap()
        };
        let (e1, e2) = (err(0.08), err(0.04));
        assert!(e1 < 1e-4, "{e1}");
        let ratio = e1 / e2;
        assert!((48.0..80.0).contains(&ratio), "halving eta changed the error by {ratio}");
    }
}

#[test]
fn dr2_matches_largest_angle_on_random_pairs() {
    let mut rng = seeding::rng(5);
    for _ in 0..100 {
        let a = SubspaceBasis::random(10, 3, &mut rng).unwrap();
        let b = SubspaceBasis::random(10, 3, &mut rng).unwrap();
        let theta = geometry::principal_angles(&a, &b).unwrap()[0];
        assert!((geometry::dr2(&a, &b).unwrap() - (1.0 - theta.cos())).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn angles_are_sorted_and_in_range(seed in any::<u64>(), d in 3usize..9, r_frac in 0.0f64..1.0) {
        let r = 1 + ((d - 2) as f64 * r_frac) as usize;
        let mut rng = seeding::rng(seed);
        let a = SubspaceBasis::random(d, r, &mut rng).unwrap();
        let b = SubspaceBasis::random(d, r, &mut rng).unwrap();
        let angles = geometry::principal_angles(&a, &b).unwrap();
        prop_assert_eq!(angles.len(), r);
        for w in angles.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        for t in &angles {
            prop_assert!((0.0..=std::f64::consts::FRAC_PI_2 + 1e-15).contains(t));
        }
        let d2 = geometry::grassmann_dist2(&a, &b).unwrap();
        prop_assert!(d2 <= r as f64 * std::f64::consts::FRAC_PI_2.powi(2) + 1e-12);
        prop_assert_eq!(geometry::dr2(&a, &b).unwrap(), geometry::dr2(&b, &a).unwrap());
    }

    #[test]
    fn tangent_projection_is_orthogonal(seed in any::<u64>()) {
        let mut rng = seeding::rng(seed);
        let v = SubspaceBasis::random(6, 2, &mut rng).unwrap();
        let a = gaussian(6, 2, &mut rng);
        let t = geometry::tangent_project(&v, &a).unwrap();
        prop_assert!((v.matrix().transpose() * t.matrix()).amax() < 1e-12);
        let again = geometry::tangent_project(&v, t.matrix()).unwrap();
        prop_assert!((again.matrix() - t.matrix()).amax() < 1e-12);
        let lhs = a.norm_squared();
        let rhs = t.matrix().norm_squared() + (&a - t.matrix()).norm_squared();
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn retraction_stays_on_the_manifold(seed in any::<u64>(), eta in 0.0f64..2.0) {
        let mut rng = seeding::rng(seed);
        let v = SubspaceBasis::random(7, 3, &mut rng).unwrap();
        let g = geometry::tangent_project(&v, &gaussian(7, 3, &mut rng)).unwrap();
        let next = geometry::retract_step(&v, &g, eta).unwrap();
        prop_assert!(geometry::orthonormality_defect(next.matrix()) < 1e-10);
    }
}
