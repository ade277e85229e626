use std::path::PathBuf;

use multilane_scenarios::config::{Experiment, LaneInitial};
use multilane_scenarios::output::read_table;
use multilane_scenarios::runs::{run_consistency, run_global_perturbation, run_local_perturbation};
use multilane_scenarios::{parse_config, run, ScenarioConfig};

fn preset(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    parse_config(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("multilane-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn identical_configs_give_identical_csvs() {
    let mut cfg = preset("local_bump.conf");
    cfg.time.t_end = 1.0;
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    let first = run(&cfg).unwrap().write(&a).unwrap();
    run(&cfg).unwrap().write(&b).unwrap();
    for path in first.iter().filter(|p| p.extension().is_some_and(|e| e == "csv")) {
        let name = path.file_name().unwrap();
        assert_eq!(std::fs::read(path).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name:?}");
    }
}

#[test]
fn report_is_recomputable_from_csvs() {
    let mut cfg = preset("closure_test1.conf");
    cfg.time.t_end = 0.3;
    let out = run(&cfg).unwrap();
    let dir = scratch("recompute");
    out.write(&dir).unwrap();

    let means = read_table(&dir.join("means.csv")).unwrap();
    let last = means.rows.last().unwrap();
    let snaps = read_table(&dir.join("snapshots.csv")).unwrap();
    let t_end = *snaps.column("t").unwrap().last().unwrap();
    assert_eq!(last[0], t_end);
    for (j, stats) in out.report.terminal.iter().enumerate() {
        assert_eq!(last[1 + 2 * j], stats.mean);
        assert_eq!(last[2 + 2 * j], stats.std);
        // Mean recomputed from the final snapshot rows.
        let rho = snaps.column(&format!("rho_{}", j + 1)).unwrap();
        let t = snaps.column("t").unwrap();
        let final_rows: Vec<f64> = rho.iter().zip(&t).filter(|(_, &tt)| tt == t_end).map(|(r, _)| *r).collect();
        assert_eq!(final_rows.len(), cfg.grid.cells);
        let mean = final_rows.iter().sum::<f64>() / final_rows.len() as f64;
        assert!((mean - stats.mean).abs() <= 1e-12, "lane {}: {mean} vs {}", j + 1, stats.mean);
    }
    let queue = read_table(&dir.join("queue.csv")).unwrap();
    assert_eq!(*queue.column("queue_front").unwrap().last().unwrap(), out.report.diagnostic("queue_front").unwrap());
}

#[test]
fn zero_perturbation_is_a_constant_run() {
    let mut cfg = preset("global_plus.conf");
    cfg.eps_rho0 = Some(0.0);
    cfg.equilibrium = Some((0.27, 1.0 - 0.7 * 0.73));
    cfg.time.t_end = 5.0;
    let out = run_global_perturbation(&cfg).unwrap();
    for (a, b) in out.report.initial.iter().zip(&out.report.terminal) {
        assert!((a.mean - b.mean).abs() <= 1e-12);
    }

    // (0.142, 0.400) itself is rounded off the equal-speed line and drifts onto it.
    let eq = (0.142, 1.0 - 0.7 * (1.0 - 0.142));
    let mut cfg = preset("local_bump.conf");
    cfg.equilibrium = Some(eq);
    cfg.initial[0] = LaneInitial {
        bump: Some(0.0),
        ..LaneInitial::default()
    };
    let out = run_local_perturbation(&cfg).unwrap();
    let stats = &out.report.terminal;
    assert!((stats[0].mean - eq.0).abs() <= 1e-12 && (stats[1].mean - eq.1).abs() <= 1e-12);
    assert!(stats[0].std <= 1e-12 && stats[1].std <= 1e-12);
}

#[test]
fn local_perturbation_refines_towards_the_equilibrium() {
    let distance = |cells: usize| {
        let mut cfg = preset("local_bump.conf");
        cfg.grid.cells = cells;
        run_local_perturbation(&cfg).unwrap().report.diagnostic("distance_to_equilibrium").unwrap()
    };
    let (coarse, fine) = (distance(100), distance(200));
    assert!(fine < coarse, "{fine} !< {coarse}");
}

#[test]
fn empty_slow_lane_sees_no_lane_changes() {
    let mut cfg = preset("consistency_test1.conf");
    cfg.initial[0].count = Some(0);
    let out = run_consistency(&cfg).unwrap();
    let micro = out.report.micro.as_ref().unwrap();
    assert_eq!(micro.events, 0);
    assert_eq!(micro.final_counts, vec![0, 30]);
    assert!((micro.final_density[1] - 0.2).abs() < 1e-12);
    let stats = &out.report.terminal;
    assert_eq!(stats[0].mean, 0.0);
    assert!((stats[1].mean - 0.2).abs() < 1e-12);
}

#[test]
fn every_preset_parses_and_matches_its_experiment() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = parse_config(&std::fs::read_to_string(&path).unwrap())
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
        seen.push(cfg.experiment);
    }
    for e in [
        Experiment::Consistency,
        Experiment::GlobalPerturbation,
        Experiment::LocalPerturbation,
        Experiment::LaneClosure,
        Experiment::Classify,
        Experiment::PhasePortrait,
    ] {
        assert!(seen.contains(&e), "no preset for {e:?}");
    }
}

#[test]
fn phase_portrait_endpoints_are_equilibria() {
    let mut cfg = preset("portrait.conf");
    cfg.time.t_end = 200.0;
    let out = run(&cfg).unwrap();
    assert_eq!(out.report.diagnostic("endpoints_not_classified"), Some(0.0));
    for p in &out.portrait {
        let total = p.start.0 + p.start.1;
        for (r1, r2) in p.trajectory.rho_1.iter().zip(&p.trajectory.rho_2).skip(1) {
            assert_eq!(*r2, total - r1);
        }
    }
}

#[test]
fn uncovered_segment_is_a_config_error() {
    let text = "experiment = custom\n[initial.1]\nsegments = -0.5 0 0.2\n[initial.2]\nuniform = 0.1\n";
    let cfg = parse_config(text).unwrap();
    let err = run(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}
