use multilane_core::equilibria::TwoLaneSystem;
use multilane_core::macroscopic::{rusanov_flux, BoundaryCondition, MacroModel};
use multilane_core::{DensityField64, Grid64, ModelParams64, SpeedLaw64};
use proptest::prelude::*;

fn params(vmax: Vec<f64>) -> ModelParams64 {
    ModelParams64::normalized(vmax).unwrap()
}

/// Strictly increasing speeds in `[0.2, 1.5]` for `lanes` lanes.
fn speeds(lanes: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..0.4, lanes).prop_map(|steps| {
        let mut v = Vec::with_capacity(steps.len());
        let mut acc = 0.15;
        for s in steps {
            acc += s;
            v.push(acc);
        }
        v
    })
}

fn field(lanes: usize, cells: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0f64..=1.0, cells), lanes)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn periodic_mass_is_conserved(
        (vmax, rho) in (1usize..=4).prop_flat_map(|j| (speeds(j), field(j, 40)))
    ) {
        let grid = Grid64::new(0.0, 1.0, 40).unwrap();
        let mut f = DensityField64::new(grid, rho, 1.0).unwrap();
        let model = MacroModel::new(params(vmax), BoundaryCondition::periodic(), 0.9).unwrap();
        let m0 = f.total_mass();
        for _ in 0..10_000 {
            f = model.step(&f).unwrap();
        }
        let drift = (f.total_mass() - m0).abs() / m0.max(f64::MIN_POSITIVE);
        prop_assert!(drift <= 1e-12, "relative drift {drift:e}");
        for lane in &f.rho {
            prop_assert!(lane.iter().all(|&r| (0.0..=1.0).contains(&r)));
        }
    }

    #[test]
    fn rusanov_is_consistent(vmax in 0.1f64..2.0, rho in 0.0f64..=1.0) {
        let law = SpeedLaw64::linear(vmax, 1.0);
        prop_assert_eq!(rusanov_flux(&law, rho, rho), law.flux(rho).unwrap());
    }

    #[test]
    fn single_lane_maximum_principle(
        vmax in 0.1f64..2.0,
        rho in prop::collection::vec(0.0f64..=1.0, 60),
        cfl in 0.05f64..=1.0,
    ) {
        let grid = Grid64::new(0.0, 1.0, 60).unwrap();
        let (lo, hi) = rho.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
        let mut f = DensityField64::new(grid, vec![rho], 1.0).unwrap();
        let model = MacroModel::new(params(vec![vmax]), BoundaryCondition::periodic(), cfl).unwrap();
        for _ in 0..500 {
            f = model.step(&f).unwrap();
            for &r in &f.rho[0] {
                prop_assert!(r >= lo - 1e-15 && r <= hi + 1e-15, "{r} outside [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn uniform_data_stays_uniform_and_follows_the_ode(r1 in 0.0f64..=1.0, r2 in 0.0f64..=1.0) {
        let p = params(vec![0.7, 1.0]).with_empty_lane_seed(1.0 / 150.0).unwrap();
        let grid = Grid64::new(-0.5, 0.5, 30).unwrap();
        let f = DensityField64::uniform(grid, &[r1, r2], 1.0).unwrap();
        let model = MacroModel::new(p.clone(), BoundaryCondition::periodic(), 0.9).unwrap();
        let (end, _) = model.advance_to(f, 60.0).unwrap();
        for lane in &end.rho {
            let spread = lane.iter().fold(0.0f64, |m, &r| m.max((r - lane[0]).abs()));
            prop_assert!(spread <= 1e-12, "spread {spread:e}");
        }
        let sys = TwoLaneSystem::new(p).unwrap();
        let ode = sys.homogeneous_endpoint((r1, r2), 60.0, 1e-3).unwrap();
        let err = (end.rho[0][0] - ode.0).abs().max((end.rho[1][0] - ode.1).abs());
        prop_assert!(err <= 1e-4, "macro ({}, {}) vs ode {ode:?}", end.rho[0][0], end.rho[1][0]);
    }
}

/// L1 distance of a smooth single-lane solution to a fine reference shrinks
/// under refinement.
#[test]
fn grid_refinement_converges() {
    let p = params(vec![1.0]);
    let profile = |x: f64| 0.3 + 0.2 * (2.0 * std::f64::consts::PI * x).sin();
    let solve = |cells: usize| {
        let grid = Grid64::new(0.0, 1.0, cells).unwrap();
        let f = DensityField64::from_fn(grid, 1, 1.0, |_, x| profile(x)).unwrap();
        let model = MacroModel::new(p.clone(), BoundaryCondition::periodic(), 0.9).unwrap();
        model.advance_to(f, 0.2).unwrap().0
    };
    let reference = solve(3200);
    let error = |cells: usize| {
        let f = solve(cells);
        let ratio = 3200 / cells;
        let dx = 1.0 / cells as f64;
        (0..cells)
            .map(|i| {
                let avg = reference.rho[0][i * ratio..(i + 1) * ratio].iter().sum::<f64>() / ratio as f64;
                (f.rho[0][i] - avg).abs() * dx
            })
            .sum::<f64>()
    };
    let errors: Vec<f64> = [50, 100, 200, 400].iter().map(|&m| error(m)).collect();
    for w in errors.windows(2) {
        assert!(w[1] < 0.75 * w[0], "errors {errors:?}");
    }
}
