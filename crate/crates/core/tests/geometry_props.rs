use delayfw::linalg::{dist, dot};
use delayfw::{ConstraintSet, SetKind};
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = SetKind> {
    prop_oneof![Just(SetKind::L1Ball), Just(SetKind::L2Ball), Just(SetKind::Simplex), Just(SetKind::Hypercube)]
}

fn polytope_kind() -> impl Strategy<Value = SetKind> {
    prop_oneof![Just(SetKind::L1Ball), Just(SetKind::Simplex), Just(SetKind::Hypercube)]
}

fn vertices(set: &ConstraintSet) -> Vec<Vec<f64>> {
    let (m, r) = (set.dim(), set.radius());
    let unit = |i: usize, s: f64| {
        let mut e = vec![0.0; m];
        e[i] = s * r;
        e
    };
    match set.kind() {
        SetKind::L1Ball => (0..m).flat_map(|i| [unit(i, 1.0), unit(i, -1.0)]).collect(),
        SetKind::Simplex => (0..m).map(|i| unit(i, 1.0)).collect(),
        SetKind::Hypercube => {
            (0..1usize << m).map(|mask| (0..m).map(|i| if mask >> i & 1 == 1 { r } else { -r }).collect()).collect()
        }
        SetKind::L2Ball => unreachable!(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn lmo_matches_vertex_enumeration(kind in polytope_kind(), r in 0.1f64..10.0, g in prop::collection::vec(-5.0f64..5.0, 1..6)) {
        let set = ConstraintSet::new(kind, r, g.len()).unwrap();
        let v = set.lmo(&g).unwrap();
        let best = vertices(&set).iter().map(|u| dot(&g, u)).fold(f64::INFINITY, f64::min);
        prop_assert!((dot(&g, &v) - best).abs() <= 1e-12 * (1.0 + best.abs()));
        prop_assert!(set.contains(&v, 1e-12));
    }

    #[test]
    fn l2_lmo_attains_minus_r_norm(r in 0.1f64..10.0, g in prop::collection::vec(-5.0f64..5.0, 1..8)) {
        prop_assume!(g.iter().any(|x| x.abs() > 1e-9));
        let set = ConstraintSet::l2_ball(r, g.len()).unwrap();
        let v = set.lmo(&g).unwrap();
        let norm = dot(&g, &g).sqrt();
        prop_assert!((dot(&g, &v) + r * norm).abs() <= 1e-12 * (1.0 + r * norm));
    }

    #[test]
    fn lmo_is_scale_invariant(kind in kind(), c in 0.01f64..100.0, g in prop::collection::vec(-5.0f64..5.0, 1..6)) {
        let set = ConstraintSet::new(kind, 1.0, g.len()).unwrap();
        let scaled: Vec<f64> = g.iter().map(|x| c * x).collect();
        let a = set.lmo(&g).unwrap();
        let b = set.lmo(&scaled).unwrap();
        prop_assert!((dot(&g, &a) - dot(&g, &b)).abs() <= 1e-9 * (1.0 + dot(&g, &g)));
    }

    #[test]
    fn projection_is_idempotent_and_nonexpansive(
        kind in kind(),
        r in 0.1f64..5.0,
        (x, y) in (1usize..6).prop_flat_map(|m| (prop::collection::vec(-10.0f64..10.0, m), prop::collection::vec(-10.0f64..10.0, m))),
    ) {
        let set = ConstraintSet::new(kind, r, x.len()).unwrap();
        let px = set.project(&x).unwrap();
        let py = set.project(&y).unwrap();
        prop_assert!(set.contains(&px, 1e-9));
        let ppx = set.project(&px).unwrap();
        prop_assert!(dist(&px, &ppx) <= 1e-9);
        prop_assert!(dist(&px, &py) <= dist(&x, &y) + 1e-9);
    }

    #[test]
    fn projection_satisfies_variational_inequality(kind in kind(), x in prop::collection::vec(-4.0f64..4.0, 2..5)) {
        // <x - Px, z - Px> <= 0 for every feasible z; probe with extreme points and the center
        let set = ConstraintSet::new(kind, 1.0, x.len()).unwrap();
        let px = set.project(&x).unwrap();
        let resid: Vec<f64> = x.iter().zip(&px).map(|(a, b)| a - b).collect();
        let mut probes = vec![set.center()];
        if kind != SetKind::L2Ball {
            probes.extend(vertices(&set));
        } else if dot(&resid, &resid) > 0.0 {
            probes.push(set.lmo(&resid.iter().map(|v| -v).collect::<Vec<_>>()).unwrap());
        }
        for z in probes {
            let diff: Vec<f64> = z.iter().zip(&px).map(|(a, b)| a - b).collect();
            prop_assert!(dot(&resid, &diff) <= 1e-9);
        }
    }
}

#[test]
fn projection_beats_a_grid_of_feasible_points() {
    for kind in SetKind::ALL {
        let set = ConstraintSet::new(kind, 1.0, 2).unwrap();
        for x in [[1.7, -0.4], [0.2, 0.1], [-3.0, -3.0], [0.9, 0.9]] {
            let px = set.project(&x).unwrap();
            let best = dist(&x, &px);
            for i in -50..=50 {
                for j in -50..=50 {
                    let z = [i as f64 / 50.0, j as f64 / 50.0];
                    if set.contains(&z, 0.0) {
                        assert!(dist(&x, &z) >= best - 1e-12, "{kind} {x:?}: {z:?} beats {px:?}");
                    }
                }
            }
        }
    }
}
