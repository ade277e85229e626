//! Experiment runners.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use multilane_core::equilibria::{ClassTag, PortraitTrajectory, TwoLaneSystem};
use multilane_core::macroscopic::{
    closure_mask, mean_density, project_micro, BoundaryCondition, BoundaryKind, ClosureMask, MacroModel,
};
use multilane_core::micro::{run_micro, LaneChangeEvent, MicroRunOptions, MicroState};
use multilane_core::{DensityField64, EquilibriumClass64, Grid64, ModelError, ModelParams64, StabilityVerdict64};

use crate::config::{BcSide, ConfigError, Experiment, Profile, ScenarioConfig};
use crate::output::{self, MeanSeries, OutputError};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("output error: {0}")]
    Output(#[from] OutputError),
}

impl RunError {
    /// 2 for bad input, 3 for a numerical failure, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Model(
                ModelError::InvalidParams(_)
                | ModelError::Configuration(_)
                | ModelError::LaneOutOfRange { .. }
                | ModelError::Domain { .. }
                | ModelError::NotEquilibrium { .. }
                | ModelError::NotApplicable(_),
            ) => 2,
            RunError::Model(_) => 3,
            RunError::Output(_) => 1,
        }
    }
}

pub type RunResult<T> = Result<T, RunError>;

/// Band `|rho - mu| <= NEAR_MU_BAND * rho_max` counted as "at the critical density".
pub const NEAR_MU_BAND: f64 = 0.05;
/// Width of the window upstream of a closure scanned for the peak density.
pub const CLOSURE_HEAD_WINDOW: f64 = 0.05;

/// Amplitude `R` of the Gaussian bump around `eq`.
pub fn bump_amplitude(eq: (f64, f64)) -> f64 {
    let (r1, r2) = eq;
    if r1 >= r2 {
        r1.min(1.0 - r2)
    } else {
        r2.min(1.0 - r1)
    }
}

/// `exp(-100 x^2) R`: added to lane 1 and subtracted from lane 2.
pub fn gaussian_bump(x: f64, eq: (f64, f64)) -> f64 {
    (-100.0 * x * x).exp() * bump_amplitude(eq)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroSummary {
    pub initial_counts: Vec<usize>,
    pub final_counts: Vec<usize>,
    /// Mean local density per lane.
    pub initial_density: Vec<f64>,
    pub final_density: Vec<f64>,
    pub events: usize,
    pub sweeps_checked: usize,
    pub steps: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub experiment: Experiment,
    /// Macro lane statistics; for classify, the given state with zero spread.
    /// Empty for phase portraits.
    pub initial: Vec<LaneStats>,
    pub terminal: Vec<LaneStats>,
    pub micro: Option<MicroSummary>,
    /// Class of the final (or given) uniform state.
    pub class: Option<EquilibriumClass64>,
    /// Predicted stability for each tried perturbation.
    pub stability: Vec<(f64, Result<StabilityVerdict64, String>)>,
    /// Named scalar diagnostics, in insertion order.
    pub diagnostics: Vec<(String, f64)>,
    pub wall_time: Duration,
}

impl RunReport {
    fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            initial: Vec::new(),
            terminal: Vec::new(),
            micro: None,
            class: None,
            stability: Vec::new(),
            diagnostics: Vec::new(),
            wall_time: Duration::ZERO,
        }
    }

    pub fn diagnostic(&self, name: &str) -> Option<f64> {
        self.diagnostics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    fn note(&mut self, name: &str, value: f64) {
        self.diagnostics.push((name.to_string(), value));
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment: {}", self.experiment.name());
        for (j, (a, b)) in self.initial.iter().zip(&self.terminal).enumerate() {
            let _ = writeln!(
                s,
                "lane {}: mean {:.6} (std {:.3e}) -> {:.6} (std {:.3e})",
                j + 1,
                a.mean,
                a.std,
                b.mean,
                b.std
            );
        }
        if let Some(m) = &self.micro {
            let _ = writeln!(
                s,
                "micro: counts {:?} -> {:?}, local density {} -> {}, {} lane changes in {} steps (dt {:.3e})",
                m.initial_counts,
                m.final_counts,
                fmt_list(&m.initial_density),
                fmt_list(&m.final_density),
                m.events,
                m.steps,
                m.dt
            );
        }
        if let Some(c) = &self.class {
            let _ = write!(s, "class: {:?}", c.tag);
            if let Some(v) = c.v_eq {
                let _ = write!(s, " (v_eq {v:.6})");
            }
            s.push('\n');
        }
        for (eps, verdict) in &self.stability {
            match verdict {
                Ok(v) => {
                    let _ = writeln!(
                        s,
                        "eps_rho0 {eps:+}: {:?}, limit ({:.6}, {:.6})",
                        v.tag, v.limit.0, v.limit.1
                    );
                }
                Err(e) => {
                    let _ = writeln!(s, "eps_rho0 {eps:+}: {e}");
                }
            }
        }
        for (name, v) in &self.diagnostics {
            let _ = writeln!(s, "{name}: {v}");
        }
        let _ = writeln!(s, "wall time: {:.3} s", self.wall_time.as_secs_f64());
        s
    }
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<_> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("({})", parts.join(", "))
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub lanes: usize,
    /// Macro fields every `stride` steps, plus the first and last.
    pub snapshots: Vec<DensityField64>,
    /// Macro lane means after every step.
    pub means: MeanSeries,
    /// Micro mean local densities at the micro snapshots.
    pub micro_means: Option<MeanSeries>,
    pub events: Vec<LaneChangeEvent<f64>>,
    pub portrait: Vec<PortraitTrajectory<f64>>,
    /// `(t, x)` of the upstream end of the queue before a closure.
    pub queue_front: Vec<(f64, f64)>,
}

impl RunOutput {
    fn new(report: RunReport, lanes: usize) -> Self {
        Self {
            report,
            lanes,
            snapshots: Vec::new(),
            means: MeanSeries::new(lanes),
            micro_means: None,
            events: Vec::new(),
            portrait: Vec::new(),
            queue_front: Vec::new(),
        }
    }

    /// Writes the CSVs and `report.txt` into `dir`; returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
        let mut written = Vec::new();
        let mut put = |name: &str, text: String| -> Result<(), OutputError> {
            let path = dir.join(name);
            output::write_text(&path, &text)?;
            written.push(path);
            Ok(())
        };
        if !self.snapshots.is_empty() {
            put("snapshots.csv", output::snapshots_csv(self.lanes, &self.snapshots))?;
        }
        if !self.means.is_empty() {
            put("means.csv", output::means_csv(&self.means))?;
        }
        if let Some(m) = &self.micro_means {
            put("micro_means.csv", output::means_csv(m))?;
            put("events.csv", output::events_csv(&self.events))?;
        }
        if !self.portrait.is_empty() {
            let mut s = String::from("trajectory,t,rho_1,rho_2\n");
            for (k, p) in self.portrait.iter().enumerate() {
                let tr = &p.trajectory;
                for i in 0..tr.len() {
                    let _ = writeln!(s, "{k},{:?},{:?},{:?}", tr.times[i], tr.rho_1[i], tr.rho_2[i]);
                }
            }
            put("portrait.csv", s)?;
        }
        if !self.queue_front.is_empty() {
            let mut s = String::from("t,queue_front\n");
            for (t, x) in &self.queue_front {
                let _ = writeln!(s, "{t:?},{x:?}");
            }
            put("queue.csv", s)?;
        }
        put("report.txt", self.report.summary())?;
        Ok(written)
    }
}

fn lane_stats(field: &DensityField64) -> RunResult<Vec<(f64, f64)>> {
    (1..=field.lane_count())
        .map(|j| mean_density(field, j).map_err(RunError::from))
        .collect()
}

fn to_stats(v: &[(f64, f64)]) -> Vec<LaneStats> {
    v.iter().map(|&(mean, std)| LaneStats { mean, std }).collect()
}

fn grid(cfg: &ScenarioConfig) -> RunResult<Grid64> {
    Ok(Grid64::new(cfg.grid.x_min, cfg.grid.x_max, cfg.grid.cells)?)
}

fn params(cfg: &ScenarioConfig) -> RunResult<ModelParams64> {
    Ok(cfg.model.params()?)
}

/// Initial field from the per-lane profiles and bumps.
pub fn initial_field(cfg: &ScenarioConfig) -> RunResult<DensityField64> {
    let g = grid(cfg)?;
    let mut rho = Vec::with_capacity(cfg.lanes());
    for (j, lane) in cfg.initial.iter().enumerate() {
        let mut values = Vec::with_capacity(g.cells);
        for i in 0..g.cells {
            let x = g.center(i);
            let base = match &lane.profile {
                Some(Profile::Uniform(v)) => *v,
                Some(Profile::Segments(segs)) => segs
                    .iter()
                    .find(|s| x >= s.a && x < s.b)
                    .map(|s| s.value)
                    .ok_or_else(|| ConfigError {
                        line: None,
                        key: format!("initial.{}.segments", j + 1),
                        message: format!("cell center {x} is not covered"),
                    })?,
                None => 0.0,
            };
            let bump = match (lane.bump, cfg.equilibrium) {
                (Some(k), Some(eq)) => k * gaussian_bump(x, eq),
                _ => 0.0,
            };
            values.push(base + bump);
        }
        rho.push(values);
    }
    Ok(DensityField64::new(g, rho, cfg.model.rho_max)?)
}

fn boundary(side: &BcSide, edge: Vec<f64>) -> BoundaryKind<f64> {
    match side {
        BcSide::Periodic => BoundaryKind::Periodic,
        BcSide::Dirichlet(Some(v)) => BoundaryKind::DirichletInflow(v.clone()),
        BcSide::Dirichlet(None) => BoundaryKind::DirichletInflow(edge),
        BcSide::Free => BoundaryKind::FreeOutflow,
    }
}

fn macro_model(cfg: &ScenarioConfig, initial: &DensityField64) -> RunResult<MacroModel<f64>> {
    let m = initial.grid.cells;
    let first: Vec<f64> = initial.rho.iter().map(|l| l[0]).collect();
    let last: Vec<f64> = initial.rho.iter().map(|l| l[m - 1]).collect();
    let bc = BoundaryCondition::new(boundary(&cfg.bc.left, first), boundary(&cfg.bc.right, last))?;
    let mut model = MacroModel::new(params(cfg)?, bc, cfg.time.cfl)?;
    if let Some(c) = cfg.closure {
        let mask = ClosureMask::open(cfg.lanes(), m);
        model = model.with_mask(closure_mask(mask, &initial.grid, c.lane, c.a, c.b)?);
    }
    Ok(model)
}

/// Steps `field` to `t_end`, recording means every step and snapshots every
/// `stride` steps.
fn run_macro(
    model: &MacroModel<f64>,
    field: DensityField64,
    t_end: f64,
    stride: usize,
    out: &mut RunOutput,
) -> RunResult<DensityField64> {
    let mut field = field;
    out.means.push(field.time, lane_stats(&field)?);
    out.snapshots.push(field.clone());
    let (mut steps, mut halvings, mut min_dt) = (0usize, 0usize, f64::INFINITY);
    while field.time < t_end {
        let (mut next, info) = model.step_bounded(&field, t_end - field.time)?;
        if t_end - next.time <= f64::EPSILON * t_end.abs().max(1.0) {
            next.time = t_end;
        }
        field = next;
        steps += 1;
        halvings += info.halvings;
        min_dt = min_dt.min(info.dt);
        out.means.push(field.time, lane_stats(&field)?);
        if steps % stride == 0 || field.time >= t_end {
            out.snapshots.push(field.clone());
        }
    }
    out.report.note("macro_steps", steps as f64);
    out.report.note("macro_halvings", halvings as f64);
    if steps > 0 {
        out.report.note("macro_min_dt", min_dt);
    }
    Ok(field)
}

/// Largest spread `max - min` of any lane.
fn spread(field: &DensityField64) -> f64 {
    field
        .rho
        .iter()
        .map(|l| {
            let (lo, hi) = l.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
            hi - lo
        })
        .fold(0.0, f64::max)
}

fn two_lane(cfg: &ScenarioConfig) -> RunResult<TwoLaneSystem<f64>> {
    Ok(TwoLaneSystem::new(params(cfg)?)?)
}

/// Per-lane mean and sample std of the local densities.
fn micro_lane_stats(state: &MicroState<f64>) -> RunResult<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for lane in 1..=state.params().lane_count {
        let ids = state.lane_order(lane)?;
        let mean = state.mean_local_density(lane)?;
        let n = ids.len();
        let std = if n < 2 {
            0.0
        } else {
            let mut ss = 0.0;
            for id in ids {
                let d = state.local_density(id)? - mean;
                ss += d * d;
            }
            (ss / (n - 1) as f64).sqrt()
        };
        out.push((mean, std));
    }
    Ok(out)
}

/// Micro run from equally spaced vehicles and the macro run from its projection,
/// on the same ring and horizon.
pub fn run_consistency(cfg: &ScenarioConfig) -> RunResult<RunOutput> {
    let clock = Instant::now();
    let p = params(cfg)?;
    let counts: Vec<usize> = cfg.initial.iter().map(|l| l.count.unwrap_or(0)).collect();
    let state = MicroState::init_uniform(&counts, cfg.domain_length(), p.clone())?;
    let mut out = RunOutput::new(RunReport::new(cfg.experiment), cfg.lanes());

    let field = project_micro(&state, grid(cfg)?)?;
    let model = macro_model(cfg, &field)?;
    out.report.initial = to_stats(&lane_stats(&field)?);
    let last = run_macro(&model, field, cfg.time.t_end, cfg.output.stride, &mut out)?;
    out.report.terminal = to_stats(&lane_stats(&last)?);

    let initial_density: Vec<f64> = micro_lane_stats(&state)?.iter().map(|s| s.0).collect();
    let options = MicroRunOptions {
        snapshot_every: cfg.output.stride,
        lane_changes: true,
    };
    let run = run_micro(state, cfg.time.t_end, cfg.time.micro_dt, &options)?;
    let mut series = MeanSeries::new(cfg.lanes());
    for snap in &run.snapshots {
        let s = MicroState::new(snap.vehicles.clone(), cfg.domain_length(), p.clone())?;
        series.push(snap.time, micro_lane_stats(&s)?);
    }
    let final_stats = micro_lane_stats(&run.state)?;
    out.report.micro = Some(MicroSummary {
        initial_counts: counts,
        final_counts: run.state.lane_counts(),
        initial_density,
        final_density: final_stats.iter().map(|s| s.0).collect(),
        events: run.events.len(),
        sweeps_checked: run.sweeps_checked,
        steps: run.steps,
        dt: run.dt,
    });
    out.micro_means = Some(series);
    out.events = run.events;
    out.report.wall_time = clock.elapsed();
    Ok(out)
}

/// Macro run from the uniformly shifted equilibrium `(rho_1 + eps, rho_2 - eps)`.
pub fn run_global_perturbation(cfg: &ScenarioConfig) -> RunResult<RunOutput> {
    let clock = Instant::now();
    let eq = cfg.equilibrium.ok_or_else(|| missing("equilibrium"))?;
    let eps = cfg.eps_rho0.ok_or_else(|| missing("eps_rho0"))?;
    let system = two_lane(cfg)?;
    let field = DensityField64::uniform(grid(cfg)?, &[eq.0 + eps, eq.1 - eps], cfg.model.rho_max)?;
    let model = macro_model(cfg, &field)?;
    let mut out = RunOutput::new(RunReport::new(cfg.experiment), 2);
    out.report.initial = to_stats(&lane_stats(&field)?);
    let last = run_macro(&model, field, cfg.time.t_end, cfg.output.stride, &mut out)?;
    let stats = lane_stats(&last)?;
    out.report.terminal = to_stats(&stats);
    let (m1, m2) = (stats[0].0, stats[1].0);
    out.report.class = Some(system.classify(m1.clamp(0.0, 1.0), m2.clamp(0.0, 1.0))?);
    out.report.stability.push((eps, system.predict_stability(eq, eps).map_err(|e| e.to_string())));
    out.report.note("distance_to_equilibrium", (m1 - eq.0).abs().max((m2 - eq.1).abs()));
    out.report.note("spread", spread(&last));
    out.report.wall_time = clock.elapsed();
    Ok(out)
}

/// Macro run from the equilibrium plus a Gaussian bump moved from lane 2 to lane 1.
pub fn run_local_perturbation(cfg: &ScenarioConfig) -> RunResult<RunOutput> {
    let clock = Instant::now();
    let eq = cfg.equilibrium.ok_or_else(|| missing("equilibrium"))?;
    // `[initial.1] bump` rescales the bump; unset means the plain amplitude rule.
    let scale = cfg.initial.first().and_then(|l| l.bump).unwrap_or(1.0);
    let field = DensityField64::from_fn(grid(cfg)?, 2, cfg.model.rho_max, |lane, x| {
        let g = scale * gaussian_bump(x, eq);
        if lane == 1 {
            eq.0 + g
        } else {
            eq.1 - g
        }
    })?;
    let model = macro_model(cfg, &field)?;
    let mut out = RunOutput::new(RunReport::new(cfg.experiment), 2);
    out.report.initial = to_stats(&lane_stats(&field)?);
    let last = run_macro(&model, field, cfg.time.t_end, cfg.output.stride, &mut out)?;
    let stats = lane_stats(&last)?;
    out.report.terminal = to_stats(&stats);
    out.report.note(
        "distance_to_equilibrium",
        (stats[0].0 - eq.0).abs().max((stats[1].0 - eq.1).abs()),
    );
    out.report.wall_time = clock.elapsed();
    Ok(out)
}

/// Upstream end of the congested run (`rho >= mu`) of `lane` ending right before
/// the closure at `a`; `a` itself when there is no queue.
pub fn queue_front(field: &DensityField64, lane: usize, a: f64, mu: f64) -> f64 {
    let g = &field.grid;
    let values = &field.rho[lane - 1];
    let mut front = a;
    for i in (0..g.cells).rev() {
        let x = g.center(i);
        if x >= a {
            continue;
        }
        if values[i] >= mu {
            front = x - 0.5 * g.dx;
        } else {
            break;
        }
    }
    front
}

/// Macro run with a closed stretch; also tracks the queue in the closed lane and
/// how much of the neighbouring slower lane settles near `mu` upstream.
pub fn run_lane_closure(cfg: &ScenarioConfig) -> RunResult<RunOutput> {
    let clock = Instant::now();
    let closure = cfg.closure.ok_or_else(|| missing("closure.lane"))?;
    let field = initial_field(cfg)?;
    let model = macro_model(cfg, &field)?;
    let mu = model.params.mu;
    let mut out = RunOutput::new(RunReport::new(cfg.experiment), cfg.lanes());
    out.report.initial = to_stats(&lane_stats(&field)?);
    let last = run_macro(&model, field, cfg.time.t_end, cfg.output.stride, &mut out)?;
    out.report.terminal = to_stats(&lane_stats(&last)?);
    out.queue_front = out
        .snapshots
        .iter()
        .map(|f| (f.time, queue_front(f, closure.lane, closure.a, mu)))
        .collect();
    let monotone = out.queue_front.windows(2).all(|w| w[1].1 <= w[0].1);
    out.report.note("queue_front", out.queue_front.last().map_or(closure.a, |q| q.1));
    out.report.note("queue_front_monotone", if monotone { 1.0 } else { 0.0 });
    if closure.lane >= 2 {
        let side = &last.rho[closure.lane - 2];
        let g = &last.grid;
        let band = NEAR_MU_BAND * model.params.rho_max;
        let (mut near, mut upstream, mut peak) = (0usize, 0usize, 0.0f64);
        for (i, &r) in side.iter().enumerate() {
            let x = g.center(i);
            if x < closure.a {
                upstream += 1;
                if (r - mu).abs() <= band {
                    near += 1;
                }
                if x >= closure.a - CLOSURE_HEAD_WINDOW {
                    peak = peak.max(r);
                }
            }
        }
        out.report.note("near_mu_fraction_upstream", near as f64 / upstream.max(1) as f64);
        out.report.note("max_density_near_closure_head", peak);
    }
    out.report.wall_time = clock.elapsed();
    Ok(out)
}

/// Macro run from the configured initial data.
pub fn run_custom(cfg: &ScenarioConfig) -> RunResult<RunOutput> {
    let clock = Instant::now();
    let field = initial_field(cfg)?;
    let model = macro_model(cfg, &field)?;
    let mut out = RunOutput::new(RunReport::new(cfg.experiment), cfg.lanes());
    out.report.initial = to_stats(&lane_stats(&field)?);
    let last = run_macro(&model, field, cfg.time.t_end, cfg.output.stride, &mut out)?;
    out.report.terminal = to_stats(&lane_stats(&last)?);
    out.report.wall_time = clock.elapsed();
    Ok(out)
}

/// Default perturbation sizes tried by [`classify`] when none is configured.
pub const CLASSIFY_EPS: f64 = 1e-2;

/// Class of the uniform state `equilibrium` and its predicted response to
/// `+-eps_rho0`.
pub fn classify(cfg: &ScenarioConfig) -> RunResult<RunOutput> {
    let clock = Instant::now();
    let eq = cfg.equilibrium.ok_or_else(|| missing("equilibrium"))?;
    let system = two_lane(cfg)?;
    let class = system.classify(eq.0, eq.1)?;
    let mut out = RunOutput::new(RunReport::new(cfg.experiment), 2);
    let point = vec![LaneStats { mean: eq.0, std: 0.0 }, LaneStats { mean: eq.1, std: 0.0 }];
    out.report.initial = point.clone();
    out.report.terminal = point;
    out.report.class = Some(class);
    if class.is_equilibrium() {
        let eps = cfg.eps_rho0.map_or(CLASSIFY_EPS, f64::abs);
        for e in [eps, -eps] {
            let verdict = system.predict_stability(eq, e).map_err(|err| err.to_string());
            out.report.stability.push((e, verdict));
        }
        if matches!(class.tag, ClassTag::A | ClassTag::E) {
            for (name, sign) in [("decay_rate_plus", 1.0), ("decay_rate_minus", -1.0)] {
                if let Ok(rate) = system.linear_decay_rate(eq, sign) {
                    out.report.note(name, rate);
                }
            }
        }
    }
    let crit = system.critical_densities();
    out.report.note("rho_1_mu", crit.rho_1_mu);
    out.report.note("rho_2_mu", crit.rho_2_mu);
    out.report.wall_time = clock.elapsed();
    Ok(out)
}

/// Uniform-flow trajectories from each configured start.
pub fn phase_portrait(cfg: &ScenarioConfig) -> RunResult<RunOutput> {
    let clock = Instant::now();
    let system = two_lane(cfg)?;
    let portrait = system.phase_portrait(&cfg.starts, cfg.time.t_end, cfg.time.ode_dt, cfg.output.stride)?;
    let mut out = RunOutput::new(RunReport::new(cfg.experiment), 2);
    let unresolved = portrait.iter().filter(|p| !p.endpoint.is_equilibrium()).count();
    out.report.note("trajectories", portrait.len() as f64);
    out.report.note("endpoints_not_classified", unresolved as f64);
    out.portrait = portrait;
    out.report.wall_time = clock.elapsed();
    Ok(out)
}

fn missing(key: &str) -> RunError {
    RunError::Config(ConfigError {
        line: None,
        key: key.to_string(),
        message: "missing".into(),
    })
}

/// Runs the configured experiment.
pub fn run(cfg: &ScenarioConfig) -> RunResult<RunOutput> {
    cfg.validate()?;
    match cfg.experiment {
        Experiment::Consistency => run_consistency(cfg),
        Experiment::GlobalPerturbation => run_global_perturbation(cfg),
        Experiment::LocalPerturbation => run_local_perturbation(cfg),
        Experiment::LaneClosure => run_lane_closure(cfg),
        Experiment::Classify => classify(cfg),
        Experiment::PhasePortrait => phase_portrait(cfg),
        Experiment::Custom => run_custom(cfg),
    }
}
