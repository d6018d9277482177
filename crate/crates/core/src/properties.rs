//! Property tests spanning several modules.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::estimators::{estimate_fn, estimate_gg_residual, estimate_positivity, fn_exact, Replication, TestFunction};
use crate::field::{covariance_matrix, sample_field_covariance, xi, Backend, FieldSpec};
use crate::generators::random_with;
use crate::sphere::{product_probability_exact, DiscreteMeasure, ReplicaPredicate};
use crate::verification::{check_gu_bound, check_pos1, check_step2_bound};

fn arb_measure() -> impl Strategy<Value = DiscreteMeasure<f64>> {
    (1usize..=6, 1usize..=8, any::<u64>())
        .prop_map(|(dim, atoms, seed)| random_with(dim, atoms, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap())
}

fn arb_field(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-40.0..40.0f64, len)
}

fn measure_and_fields() -> impl Strategy<Value = (DiscreteMeasure<f64>, Vec<f64>, Vec<f64>)> {
    arb_measure().prop_flat_map(|m| {
        let n = m.len();
        (Just(m), arb_field(n), arb_field(n))
    })
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

const SMALL: Replication = Replication {
    x_draws: 3,
    field_draws: 8,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tilt_is_projective((m, f, g) in measure_and_fields()) {
        let sum: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
        let twice = m.tilt(&f).unwrap().tilt(&g).unwrap();
        let once = m.tilt(&sum).unwrap();
        prop_assert!(close(twice.weights(), once.weights(), 1e-12));
    }

    #[test]
    fn tilt_ignores_constant_shift((m, f, _) in measure_and_fields(), c in -100.0..100.0f64) {
        let shifted: Vec<f64> = f.iter().map(|x| x + c).collect();
        prop_assert!(close(m.tilt(&f).unwrap().weights(), m.tilt(&shifted).unwrap().weights(), 1e-12));
    }

    #[test]
    fn mean_overlap_is_a_nonnegative_double_sum((m, f, _) in measure_and_fields()) {
        let t = m.tilt(&f).unwrap();
        let r = t.overlaps().unwrap();
        let w = t.weights();
        let mut direct = 0.0;
        for a in 0..w.len() {
            for b in 0..w.len() {
                direct += w[a] * w[b] * r.get(a, b);
            }
        }
        prop_assert!(t.mean_overlap() >= 0.0);
        prop_assert!((t.mean_overlap() - direct).abs() <= 1e-12);
    }

    #[test]
    fn pair_enumeration_matches_double_sum(m in arb_measure(), eps in 0.01..0.99f64) {
        let r = m.overlaps().unwrap();
        let w = m.weights();
        let mut direct = 0.0;
        for a in 0..w.len() {
            for b in 0..w.len() {
                if r.get(a, b) <= -eps {
                    direct += w[a] * w[b];
                }
            }
        }
        let pred = ReplicaPredicate::overlap_leq(2, 0, 1, eps).unwrap();
        prop_assert!((product_probability_exact(&m, &pred).unwrap() - direct).abs() <= 1e-12);
        prop_assert!((m.pair_probability_leq(&r, eps) - direct).abs() <= 1e-12);
    }

    #[test]
    fn pos1_always_holds((m, f, _) in measure_and_fields(), eps in 0.001..0.999f64) {
        prop_assert!(check_pos1(&m.tilt(&f).unwrap(), eps).unwrap().pass);
    }

    #[test]
    fn gu_bound_always_holds(
        (m, f, _) in measure_and_fields(),
        eps in 0.01..0.99f64,
        gamma in 0.01..0.99f64,
        n in 2usize..=5,
    ) {
        let tilted = m.tilt(&f).unwrap();
        for g in [&m, &tilted] {
            let r = check_gu_bound(g, n, eps, gamma).unwrap();
            prop_assert!(r.pass(), "{r:?}");
            let closed = fn_exact(g.weights(), &g.overlaps().unwrap(), n, eps);
            prop_assert!((closed - r.fn_value).abs() <= 1e-12);
            prop_assert!(r.fn_value <= check_step2_bound(n, eps).unwrap().value + 1e-12);
        }
    }

    #[test]
    fn fn_is_non_increasing_in_n((m, f, _) in measure_and_fields(), eps in 0.01..0.99f64) {
        let t = m.tilt(&f).unwrap();
        let r = t.overlaps().unwrap();
        let values: Vec<f64> = (2..8).map(|n| fn_exact(t.weights(), &r, n, eps)).collect();
        prop_assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn covariance_is_psd(m in arb_measure(), p_max in 1usize..=12, seed in any::<u64>(), first in any::<bool>()) {
        let backend = if first { Backend::FirstOrder } else { Backend::Covariance };
        let spec = FieldSpec::new(1.0).with_p_max(p_max).with_backend(backend);
        let x = crate::field::sample_x::<f64, _>(p_max, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let c = covariance_matrix(m.support(), &spec, &x).unwrap();
        let n = c.size();
        let mat = DMatrix::from_fn(n, n, |a, b| c.get(a, b));
        let min = mat.symmetric_eigenvalues().min();
        prop_assert!(min >= -1e-10, "{min}");
    }

    #[test]
    fn xi_is_monotone_convex_and_bounded(seed in any::<u64>(), p_max in 1usize..=12) {
        let x = crate::field::sample_x::<f64, _>(p_max, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let grid: Vec<f64> = (0..=200).map(|i| xi(i as f64 / 200.0, &x, p_max).unwrap()).collect();
        prop_assert!(grid.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(grid.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] >= -1e-15));
        prop_assert!(grid[200] <= 1.0 / 3.0);
    }

    #[test]
    fn positivity_mean_is_a_probability(m in arb_measure(), v in 0.0..30.0f64, seed in any::<u64>()) {
        let r = estimate_positivity(&m, &FieldSpec::new(v), 0.2, SMALL, seed).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.mean));
    }

    #[test]
    fn seeded_estimates_are_bit_identical(m in arb_measure(), v in 0.0..10.0f64, seed in any::<u64>()) {
        let spec = FieldSpec::new(v);
        prop_assert_eq!(
            estimate_positivity(&m, &spec, 0.3, SMALL, seed).unwrap(),
            estimate_positivity(&m, &spec, 0.3, SMALL, seed).unwrap()
        );
        let f = ReplicaPredicate::overlap_leq(2, 0, 1, 0.3).unwrap();
        let psi = TestFunction::smoothed(0.3);
        prop_assert_eq!(
            estimate_gg_residual(&m, &spec, &f, &psi, SMALL, seed).unwrap(),
            estimate_gg_residual(&m, &spec, &f, &psi, SMALL, seed).unwrap()
        );
    }

    #[test]
    fn v_zero_estimates_are_exact(m in arb_measure(), eps in 0.01..0.99f64, n in 2usize..5, seed in any::<u64>()) {
        let spec = FieldSpec::new(0.0);
        let r = m.overlaps().unwrap();
        let pos = estimate_positivity(&m, &spec, eps, SMALL, seed).unwrap();
        prop_assert_eq!(pos.stderr, 0.0);
        prop_assert!((pos.mean - m.pair_probability_leq(&r, eps)).abs() <= 1e-12);
        let fr = estimate_fn(&m, &spec, n, eps, SMALL, seed).unwrap();
        prop_assert_eq!(fr.stderr, 0.0);
        prop_assert!((fr.mean - fn_exact(m.weights(), &r, n, eps)).abs() <= 1e-12);
    }

    #[test]
    fn f32_agrees_with_f64(m in arb_measure(), eps in 0.05..0.95f64) {
        let doc = m.to_document();
        let m32: DiscreteMeasure<f32> = DiscreteMeasure::from_document(&doc).unwrap();
        let a = m.pair_probability_leq(&m.overlaps().unwrap(), eps);
        let b = m32.pair_probability_leq(&m32.overlaps().unwrap(), eps as f32) as f64;
        // atoms within float resolution of the threshold may flip
        let r = m.overlaps().unwrap();
        let near = (0..m.len()).any(|i| (0..m.len()).any(|j| (r.get(i, j) + eps).abs() < 1e-5));
        prop_assert!(near || (a - b).abs() < 1e-5);
        prop_assert!((m.mean_overlap() - m32.mean_overlap() as f64).abs() < 1e-5);
    }
}

#[test]
fn field_variance_matches_xi_and_stays_below_a_third() {
    let spec = FieldSpec::new(3.0f64).with_p_max(12);
    let x = [1.0f64; 12];
    let support = vec![crate::sphere::UnitVector::basis(2, 0).unwrap()];
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let draws = 20_000;
    let var = (0..draws)
        .map(|_| sample_field_covariance(&support, &spec, &x, &mut rng).unwrap()[0].powi(2))
        .sum::<f64>()
        / draws as f64;
    let target = 9.0 * xi(1.0, &x, 12).unwrap();
    assert!((var / target - 1.0).abs() < 0.04, "{var} vs {target}");
    assert!(target <= 9.0 / 3.0);
}

#[test]
fn gg_trivial_residual_vanishes() {
    let m = random_with::<f64, _>(4, 6, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let one = ReplicaPredicate::constant(1, 1.0).unwrap();
    for v in [0.0, 2.0, 10.0] {
        let g = estimate_gg_residual(&m, &FieldSpec::new(v), &one, &TestFunction::Monomial { p: 2 }, SMALL, 8)
            .unwrap();
        assert!(g.report.mean <= 3.0 * g.inner_stderr + 1e-12, "{v}: {g:?}");
    }
}
