use delayfw::oracle::{expected_prediction, ftpl_query_expected};
use delayfw::{ConstraintSet, FtplOracle, OnlineLinearOracle};

fn l1(m: usize) -> ConstraintSet {
    ConstraintSet::l1_ball(1.0, m).unwrap()
}

#[test]
fn noise_is_uniform_on_the_unit_cube() {
    let count = 100_000;
    let mut sums = [0.0; 3];
    for seed in 0..count {
        let o = FtplOracle::new(l1(3), 1.0, seed).unwrap();
        for (s, n) in sums.iter_mut().zip(o.noise()) {
            assert!((0.0..=1.0).contains(n));
            *s += n;
        }
    }
    for s in sums {
        let mean = s / count as f64;
        assert!((0.49..=0.51).contains(&mean), "{mean}");
    }
}

#[test]
fn query_is_lmo_of_perturbed_accumulator() {
    let mut rng = delayfw::seed::rng(5);
    for case in 0..500 {
        let set = l1(4);
        let zeta = rand::Rng::random_range(&mut rng, 0.01..2.0);
        let mut o = FtplOracle::new(set.clone(), zeta, case).unwrap();
        let mut acc = [0.0; 4];
        for _ in 0..rand::Rng::random_range(&mut rng, 0..6) {
            let g: Vec<f64> = (0..4).map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0)).collect();
            o.feedback(&g).unwrap();
            for (a, b) in acc.iter_mut().zip(&g) {
                *a += b;
            }
        }
        let arg: Vec<f64> = acc.iter().zip(o.noise()).map(|(a, n)| zeta * a + n).collect();
        assert_eq!(o.query(), set.lmo(&arg).unwrap());
        assert_eq!(o.query(), o.query());
    }
}

/// Midpoint-rule expectation of `lmo((0.5, 0) + n)` over `n ~ U[0,1]^2`.
fn quadrature() -> [f64; 2] {
    let cells = 1000;
    let set = l1(2);
    let mut acc = [0.0; 2];
    for i in 0..cells {
        for j in 0..cells {
            let n = [(i as f64 + 0.5) / cells as f64, (j as f64 + 0.5) / cells as f64];
            let v = set.lmo(&[0.5 + n[0], n[1]]).unwrap();
            acc[0] += v[0];
            acc[1] += v[1];
        }
    }
    let total = (cells * cells) as f64;
    [acc[0] / total, acc[1] / total]
}

#[test]
fn expected_prediction_matches_quadrature() {
    let q = quadrature();
    assert!((q[0] + 0.875).abs() < 1e-3 && (q[1] + 0.125).abs() < 1e-3, "{q:?}");
    let mc = ftpl_query_expected(&l1(2), 1.0, &[0.5, 0.0], 100_000, 11).unwrap();
    assert!((mc[0] - q[0]).abs() < 0.01 && (mc[1] - q[1]).abs() < 0.01, "{mc:?} vs {q:?}");
}

#[test]
fn forced_and_degenerate_expectations() {
    let forced = expected_prediction(&l1(3), 1.0, &[0.0, -1e6, 0.0], 1000, 2).unwrap();
    assert_eq!(forced.mean, vec![0.0, 1.0, 0.0]);
    assert_eq!(forced.std_err_norm(), 0.0);
    let one_d = ftpl_query_expected(&l1(1), 1.0, &[0.0], 1000, 2).unwrap();
    assert_eq!(one_d, vec![-1.0]);
}
