use multilane_core::equilibria::{ClassTag, TwoLaneSystem};
use multilane_core::ModelParams64;
use proptest::prelude::*;

fn seeded(tol_eq: f64) -> TwoLaneSystem<f64> {
    let p = ModelParams64::normalized(vec![0.7, 1.0])
        .unwrap()
        .with_empty_lane_seed(1.0 / 150.0)
        .unwrap();
    TwoLaneSystem::new(p).unwrap().with_tol_eq(tol_eq)
}

fn radical_inverse(mut n: u64, base: u64) -> f64 {
    let (mut inv, mut f) = (0.0, 1.0 / base as f64);
    while n > 0 {
        inv += (n % base) as f64 * f;
        n /= base;
        f /= base as f64;
    }
    inv
}

/// With exact speed comparison every state gets one tag, and the tag says
/// "not an equilibrium" exactly when uniform flow would move.
#[test]
fn classify_partitions_the_square() {
    let sys = seeded(0.0);
    let mut counts = std::collections::BTreeMap::new();
    let mut check = |r1: f64, r2: f64| {
        let tag = sys.classify(r1, r2).unwrap().tag;
        let (s1, _) = sys.homogeneous_rhs(r1, r2);
        assert_eq!(
            tag == ClassTag::NotEquilibrium,
            s1 != 0.0,
            "({r1}, {r2}): {tag:?} with rhs {s1:e}"
        );
        *counts.entry(tag).or_insert(0usize) += 1;
    };
    for n in 1..=1_000_000u64 {
        check(radical_inverse(n, 2), radical_inverse(n, 3));
    }
    // Halton points miss the measure-zero classes; add points on them.
    for k in 0..=200 {
        let r1 = k as f64 / 200.0;
        let r2 = sys.equilibrium_curve(r1).unwrap();
        check(r1, r2);
        check(0.0, 0.3 * k as f64 / 200.0);
    }
    for tag in [ClassTag::A, ClassTag::C, ClassTag::D, ClassTag::E, ClassTag::NotEquilibrium] {
        assert!(counts.contains_key(&tag), "{tag:?} never seen: {counts:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn integration_ends_where_the_flow_stops(r1 in 0.0f64..=1.0, r2 in 0.0f64..=1.0) {
        let sys = seeded(multilane_core::equilibria::DEFAULT_TOL_EQ);
        let end = sys.homogeneous_endpoint((r1, r2), 200.0, 1e-3).unwrap();
        let predicted = sys.flow_limit((r1, r2));
        prop_assert!((end.0 - predicted.0).abs() <= 1e-6, "{end:?} vs {predicted:?}");
        prop_assert_eq!(end.1, (r1 + r2) - end.0);
        let class = sys.classify(end.0, end.1).unwrap();
        prop_assert!(class.is_equilibrium(), "endpoint {end:?} is {:?}", class.tag);
        prop_assert!(sys.is_rest_point(end.0, end.1, 1e-9));
    }

    #[test]
    fn trajectories_stay_on_their_anti_diagonal(r1 in 0.0f64..=1.0, r2 in 0.0f64..=1.0) {
        let sys = seeded(multilane_core::equilibria::DEFAULT_TOL_EQ);
        let traj = sys.integrate_strided((r1, r2), 20.0, 1e-3, 50).unwrap();
        prop_assert_eq!((traj.rho_1[0], traj.rho_2[0]), (r1, r2));
        for i in 1..traj.len() {
            prop_assert_eq!(traj.rho_2[i], (r1 + r2) - traj.rho_1[i]);
            prop_assert!((0.0..=1.0).contains(&traj.rho_1[i]) && (0.0..=1.0).contains(&traj.rho_2[i]));
        }
    }
}
