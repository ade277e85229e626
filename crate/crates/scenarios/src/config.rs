//! Line-oriented scenario files.
//!
//! ```text
//! # comment
//! experiment = perturb-global
//! equilibrium = 0.27, 0.49
//! eps_rho0 = 0.485
//!
//! [model]
//! vmax = 0.7, 1
//! vehicle_length = 1/300
//!
//! [grid]
//! cells = 300
//!
//! [initial.1]
//! uniform = 0.4
//! ```
//!
//! Values are decimal numbers or `a/b` fractions; lists are comma separated. Lanes
//! are numbered from 1. Every key except `experiment` has a default or is only
//! required by the experiments that use it.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use multilane_core::{ModelParams64, Result as ModelResult};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}`{key}`: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    /// 1-based line of the offending entry; `None` for a missing key.
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, key: &str, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            key: key.to_string(),
            message: message.into(),
        }
    }

    fn missing(key: &str, why: &str) -> Self {
        Self {
            line: None,
            key: key.to_string(),
            message: format!("missing, required {why}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    Consistency,
    GlobalPerturbation,
    LocalPerturbation,
    LaneClosure,
    Classify,
    PhasePortrait,
    Custom,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Consistency,
        Experiment::GlobalPerturbation,
        Experiment::LocalPerturbation,
        Experiment::LaneClosure,
        Experiment::Classify,
        Experiment::PhasePortrait,
        Experiment::Custom,
    ];

    /// Name used in config files and as the CLI subcommand.
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Consistency => "consistency",
            Experiment::GlobalPerturbation => "perturb-global",
            Experiment::LocalPerturbation => "perturb-local",
            Experiment::LaneClosure => "lane-closure",
            Experiment::Classify => "classify",
            Experiment::PhasePortrait => "phase-portrait",
            Experiment::Custom => "custom",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
                format!("unknown experiment `{s}`, expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// One maximum speed per lane; the lane count is its length.
    pub vmax: Vec<f64>,
    pub vehicle_length: f64,
    pub safety_distance: f64,
    pub rho_max: f64,
    pub nu: f64,
    /// Empty-lane seed density; defaults to `(l + d_s) / (x_max - x_min)`, the
    /// density of a single vehicle on the road.
    pub seed: f64,
}

impl ModelConfig {
    pub fn lanes(&self) -> usize {
        self.vmax.len()
    }

    pub fn params(&self) -> ModelResult<ModelParams64> {
        ModelParams64::new(self.vehicle_length, self.safety_distance, self.vmax.clone())?
            .with_rho_max(self.rho_max)?
            .with_nu(self.nu)?
            .with_empty_lane_seed(self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub cells: usize,
    pub x_min: f64,
    pub x_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeConfig {
    pub t_end: f64,
    pub cfl: f64,
    /// Requested micro step; the travel bound may shrink it.
    pub micro_dt: f64,
    /// Step of the uniform-flow ODE (classify, phase portrait).
    pub ode_dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BcSide {
    Periodic,
    /// Prescribed densities; `None` keeps the initial values at that end.
    Dirichlet(Option<Vec<f64>>),
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcConfig {
    pub left: BcSide,
    pub right: BcSide,
}

/// Constant `value` on `[a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: f64,
    pub b: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Uniform(f64),
    /// Cells take the value of the first segment containing their center.
    Segments(Vec<Segment>),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LaneInitial {
    pub profile: Option<Profile>,
    /// Multiple of the Gaussian bump added on top of the profile.
    pub bump: Option<f64>,
    /// Vehicle count for micro runs.
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Closure {
    pub lane: usize,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Snapshot every this many steps (plus the first and last state).
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub experiment: Experiment,
    pub equilibrium: Option<(f64, f64)>,
    pub eps_rho0: Option<f64>,
    /// Starting points of a phase portrait.
    pub starts: Vec<(f64, f64)>,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub bc: BcConfig,
    /// One entry per lane.
    pub initial: Vec<LaneInitial>,
    pub closure: Option<Closure>,
    pub output: OutputConfig,
}

pub const DEFAULT_VMAX: [f64; 2] = [0.7, 1.0];
pub const DEFAULT_CELLS: usize = 300;
pub const DEFAULT_T_END: f64 = 50.0;
pub const DEFAULT_CFL: f64 = 0.9;
pub const DEFAULT_MICRO_DT: f64 = 0.01;
pub const DEFAULT_STRIDE: usize = 50;

impl ScenarioConfig {
    /// Defaults for `experiment` with two lanes and the reference speed laws.
    pub fn new(experiment: Experiment) -> Self {
        let l = 1.0 / 300.0;
        Self {
            experiment,
            equilibrium: None,
            eps_rho0: None,
            starts: Vec::new(),
            model: ModelConfig {
                vmax: DEFAULT_VMAX.to_vec(),
                vehicle_length: l,
                safety_distance: l,
                rho_max: 1.0,
                nu: 1.0,
                seed: 2.0 * l,
            },
            grid: GridConfig {
                cells: DEFAULT_CELLS,
                x_min: -0.5,
                x_max: 0.5,
            },
            time: TimeConfig {
                t_end: DEFAULT_T_END,
                cfl: DEFAULT_CFL,
                micro_dt: DEFAULT_MICRO_DT,
                ode_dt: multilane_core::equilibria::DEFAULT_ODE_DT,
            },
            bc: BcConfig {
                left: BcSide::Periodic,
                right: BcSide::Periodic,
            },
            initial: vec![LaneInitial::default(); 2],
            closure: None,
            output: OutputConfig {
                dir: None,
                stride: DEFAULT_STRIDE,
            },
        }
    }

    pub fn lanes(&self) -> usize {
        self.model.lanes()
    }

    pub fn domain_length(&self) -> f64 {
        self.grid.x_max - self.grid.x_min
    }

    /// Checks ranges and the keys the experiment needs.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |key: &str, message: String| ConfigError {
            line: None,
            key: key.to_string(),
            message,
        };
        let m = &self.model;
        if m.vmax.is_empty() {
            return Err(err("model.vmax", "at least one lane required".into()));
        }
        if let Err(e) = m.params() {
            return Err(err("model", e.to_string()));
        }
        if self.initial.len() != m.lanes() {
            return Err(err(
                "initial",
                format!("{} lane entries for {} lanes", self.initial.len(), m.lanes()),
            ));
        }
        let g = &self.grid;
        if g.cells == 0 {
            return Err(err("grid.cells", "must be positive".into()));
        }
        if !(g.x_min.is_finite() && g.x_max.is_finite() && g.x_min < g.x_max) {
            return Err(err("grid", format!("x_min {} must be below x_max {}", g.x_min, g.x_max)));
        }
        let t = &self.time;
        if !(t.t_end >= 0.0 && t.t_end.is_finite()) {
            return Err(err("time.t_end", format!("{} must be non-negative", t.t_end)));
        }
        if !(t.cfl > 0.0 && t.cfl <= 1.0) {
            return Err(err("time.cfl", format!("{} not in (0, 1]", t.cfl)));
        }
        for (key, v) in [("time.micro_dt", t.micro_dt), ("time.ode_dt", t.ode_dt)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(err(key, format!("{v} must be positive")));
            }
        }
        if self.output.stride == 0 {
            return Err(err("output.stride", "must be positive".into()));
        }
        let periodic = |s: &BcSide| matches!(s, BcSide::Periodic);
        if periodic(&self.bc.left) != periodic(&self.bc.right) {
            return Err(err("bc", "periodic must be set on both sides".into()));
        }
        for (key, side) in [("bc.left_values", &self.bc.left), ("bc.right_values", &self.bc.right)] {
            if let BcSide::Dirichlet(Some(v)) = side {
                if v.len() != m.lanes() {
                    return Err(err(key, format!("{} values for {} lanes", v.len(), m.lanes())));
                }
                if let Some(x) = v.iter().find(|x| !(**x >= 0.0 && **x <= m.rho_max)) {
                    return Err(err(key, format!("{x} outside [0, {}]", m.rho_max)));
                }
            }
        }
        let in_range = |r: f64| r >= 0.0 && r <= m.rho_max;
        if let Some((r1, r2)) = self.equilibrium {
            if !(in_range(r1) && in_range(r2)) {
                return Err(err("equilibrium", format!("({r1}, {r2}) outside [0, {}]^2", m.rho_max)));
            }
        }
        for (j, lane) in self.initial.iter().enumerate() {
            let key = format!("initial.{}", j + 1);
            match &lane.profile {
                Some(Profile::Uniform(v)) if !in_range(*v) => {
                    return Err(err(&key, format!("uniform {v} outside [0, {}]", m.rho_max)))
                }
                Some(Profile::Segments(segs)) => {
                    for s in segs {
                        if !(s.a < s.b && s.a >= g.x_min && s.b <= g.x_max) {
                            return Err(err(
                                &key,
                                format!("segment [{}, {}) not inside [{}, {}]", s.a, s.b, g.x_min, g.x_max),
                            ));
                        }
                        if !in_range(s.value) {
                            return Err(err(&key, format!("value {} outside [0, {}]", s.value, m.rho_max)));
                        }
                    }
                }
                _ => {}
            }
        }
        if let Some(c) = self.closure {
            if c.lane == 0 || c.lane > m.lanes() {
                return Err(err("closure.lane", format!("lane {} not in 1..={}", c.lane, m.lanes())));
            }
            if !(c.a <= c.b && c.a >= g.x_min && c.b <= g.x_max) {
                return Err(err(
                    "closure",
                    format!("[{}, {}] not inside [{}, {}]", c.a, c.b, g.x_min, g.x_max),
                ));
            }
        }
        self.check_required()
    }

    fn check_required(&self) -> Result<(), ConfigError> {
        let why = format!("by experiment `{}`", self.experiment.name());
        let two_lanes = || {
            if self.lanes() == 2 {
                Ok(())
            } else {
                Err(ConfigError {
                    line: None,
                    key: "model.vmax".into(),
                    message: format!("{} lanes given, experiment `{}` needs 2", self.lanes(), self.experiment.name()),
                })
            }
        };
        let profiles = || {
            for (j, lane) in self.initial.iter().enumerate() {
                if lane.profile.is_none() {
                    return Err(ConfigError::missing(&format!("initial.{}.uniform", j + 1), &why));
                }
            }
            Ok(())
        };
        match self.experiment {
            Experiment::Consistency => {
                two_lanes()?;
                for (j, lane) in self.initial.iter().enumerate() {
                    if lane.count.is_none() {
                        return Err(ConfigError::missing(&format!("initial.{}.count", j + 1), &why));
                    }
                }
                if !matches!(self.bc.left, BcSide::Periodic) {
                    return Err(ConfigError {
                        line: None,
                        key: "bc".into(),
                        message: "the ring road needs periodic boundaries".into(),
                    });
                }
            }
            Experiment::GlobalPerturbation => {
                two_lanes()?;
                let (r1, r2) = self.equilibrium.ok_or_else(|| ConfigError::missing("equilibrium", &why))?;
                let eps = self.eps_rho0.ok_or_else(|| ConfigError::missing("eps_rho0", &why))?;
                let rm = self.model.rho_max;
                if !(r1 + eps >= 0.0 && r1 + eps <= rm && r2 - eps >= 0.0 && r2 - eps <= rm) {
                    return Err(ConfigError {
                        line: None,
                        key: "eps_rho0".into(),
                        message: format!("perturbed state ({}, {}) is inadmissible", r1 + eps, r2 - eps),
                    });
                }
            }
            Experiment::LocalPerturbation => {
                two_lanes()?;
                self.equilibrium.ok_or_else(|| ConfigError::missing("equilibrium", &why))?;
            }
            Experiment::Classify => {
                two_lanes()?;
                self.equilibrium.ok_or_else(|| ConfigError::missing("equilibrium", &why))?;
            }
            Experiment::PhasePortrait => {
                two_lanes()?;
                if self.starts.is_empty() {
                    return Err(ConfigError::missing("starts", &why));
                }
            }
            Experiment::LaneClosure => {
                profiles()?;
                self.closure.ok_or_else(|| ConfigError::missing("closure.lane", &why))?;
            }
            Experiment::Custom => profiles()?,
        }
        if self.initial.iter().any(|l| l.bump.is_some()) && self.equilibrium.is_none() {
            return Err(ConfigError::missing("equilibrium", "by the bump amplitude rule"));
        }
        Ok(())
    }

    /// Inverse of [`parse_config`]: every field is written explicitly, numbers in
    /// shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "experiment = {}", self.experiment.name());
        if let Some((a, b)) = self.equilibrium {
            let _ = writeln!(s, "equilibrium = {a:?}, {b:?}");
        }
        if let Some(e) = self.eps_rho0 {
            let _ = writeln!(s, "eps_rho0 = {e:?}");
        }
        if !self.starts.is_empty() {
            let pairs: Vec<_> = self.starts.iter().map(|(a, b)| format!("{a:?} {b:?}")).collect();
            let _ = writeln!(s, "starts = {}", pairs.join(", "));
        }
        let m = &self.model;
        let _ = writeln!(s, "\n[model]");
        let _ = writeln!(s, "vmax = {}", list(&m.vmax));
        let _ = writeln!(s, "vehicle_length = {:?}", m.vehicle_length);
        let _ = writeln!(s, "safety_distance = {:?}", m.safety_distance);
        let _ = writeln!(s, "rho_max = {:?}", m.rho_max);
        let _ = writeln!(s, "nu = {:?}", m.nu);
        let _ = writeln!(s, "seed = {:?}", m.seed);
        let _ = writeln!(s, "\n[grid]");
        let _ = writeln!(s, "cells = {}", self.grid.cells);
        let _ = writeln!(s, "x_min = {:?}", self.grid.x_min);
        let _ = writeln!(s, "x_max = {:?}", self.grid.x_max);
        let t = &self.time;
        let _ = writeln!(s, "\n[time]");
        let _ = writeln!(s, "t_end = {:?}", t.t_end);
        let _ = writeln!(s, "cfl = {:?}", t.cfl);
        let _ = writeln!(s, "micro_dt = {:?}", t.micro_dt);
        let _ = writeln!(s, "ode_dt = {:?}", t.ode_dt);
        let _ = writeln!(s, "\n[bc]");
        for (name, side) in [("left", &self.bc.left), ("right", &self.bc.right)] {
            let kind = match side {
                BcSide::Periodic => "periodic",
                BcSide::Dirichlet(_) => "dirichlet",
                BcSide::Free => "free",
            };
            let _ = writeln!(s, "{name} = {kind}");
            if let BcSide::Dirichlet(Some(v)) = side {
                let _ = writeln!(s, "{name}_values = {}", list(v));
            }
        }
        for (j, lane) in self.initial.iter().enumerate() {
            if *lane == LaneInitial::default() {
                continue;
            }
            let _ = writeln!(s, "\n[initial.{}]", j + 1);
            match &lane.profile {
                Some(Profile::Uniform(v)) => {
                    let _ = writeln!(s, "uniform = {v:?}");
                }
                Some(Profile::Segments(segs)) => {
                    let parts: Vec<_> = segs
                        .iter()
                        .map(|g| format!("{:?} {:?} {:?}", g.a, g.b, g.value))
                        .collect();
                    let _ = writeln!(s, "segments = {}", parts.join(", "));
                }
                None => {}
            }
            if let Some(b) = lane.bump {
                let _ = writeln!(s, "bump = {b:?}");
            }
            if let Some(n) = lane.count {
                let _ = writeln!(s, "count = {n}");
            }
        }
        if let Some(c) = self.closure {
            let _ = writeln!(s, "\n[closure]");
            let _ = writeln!(s, "lane = {}", c.lane);
            let _ = writeln!(s, "from = {:?}", c.a);
            let _ = writeln!(s, "to = {:?}", c.b);
        }
        let _ = writeln!(s, "\n[output]");
        if let Some(d) = &self.output.dir {
            let _ = writeln!(s, "dir = {}", d.display());
        }
        let _ = writeln!(s, "stride = {}", self.output.stride);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Section {
    Top,
    Model,
    Grid,
    Time,
    Bc,
    Initial(usize),
    Closure,
    Output,
}

fn section_name(s: &Section) -> String {
    match s {
        Section::Top => String::new(),
        Section::Model => "model.".into(),
        Section::Grid => "grid.".into(),
        Section::Time => "time.".into(),
        Section::Bc => "bc.".into(),
        Section::Initial(j) => format!("initial.{j}."),
        Section::Closure => "closure.".into(),
        Section::Output => "output.".into(),
    }
}

fn number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let parsed = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
            a / b
        }
        None => s.parse().map_err(|_| format!("`{s}` is not a number"))?,
    };
    if parsed.is_finite() {
        Ok(parsed)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn numbers(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(number).collect()
}

fn count(s: &str) -> Result<usize, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("`{}` is not a non-negative integer", s.trim()))
}

/// `count` whitespace-separated numbers.
fn tuple(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s.split_whitespace().map(number).collect::<Result<_, _>>()?;
    if v.len() == n {
        Ok(v)
    } else {
        Err(format!("`{}` should have {n} numbers", s.trim()))
    }
}

/// Parses and validates a scenario file.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    // Lane count is known only after [model]; collect entries first.
    let mut entries: Vec<(usize, Section, String, String)> = Vec::new();
    let mut section = Section::Top;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(line_no, line, "unterminated section header"))?
                .trim();
            section = match name {
                "model" => Section::Model,
                "grid" => Section::Grid,
                "time" => Section::Time,
                "bc" => Section::Bc,
                "closure" => Section::Closure,
                "output" => Section::Output,
                other => match other.strip_prefix("initial.") {
                    Some(j) => match j.parse::<usize>() {
                        Ok(j) if j >= 1 => Section::Initial(j),
                        _ => return Err(ConfigError::at(line_no, name, "lane index must be an integer >= 1")),
                    },
                    None => return Err(ConfigError::at(line_no, name, "unknown section")),
                },
            };
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::at(line_no, line, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::at(line_no, "", "empty key"));
        }
        if entries.iter().any(|(_, s, k, _)| *s == section && k == key) {
            return Err(ConfigError::at(
                line_no,
                &format!("{}{key}", section_name(&section)),
                "duplicate key",
            ));
        }
        entries.push((line_no, section.clone(), key.to_string(), value.to_string()));
    }

    let experiment = entries
        .iter()
        .find(|(_, s, k, _)| *s == Section::Top && k == "experiment")
        .ok_or_else(|| ConfigError::missing("experiment", "always"))?;
    let experiment: Experiment = experiment
        .3
        .parse()
        .map_err(|m: String| ConfigError::at(experiment.0, "experiment", m))?;
    let mut cfg = ScenarioConfig::new(experiment);
    if let Some((line, _, _, v)) = entries
        .iter()
        .find(|(_, s, k, _)| *s == Section::Model && k == "vmax")
    {
        cfg.model.vmax = numbers(v).map_err(|m| ConfigError::at(*line, "model.vmax", m))?;
    }
    let lanes = cfg.model.vmax.len();
    cfg.initial = vec![LaneInitial::default(); lanes];
    let mut seed = None;
    let mut left_values = None;
    let mut right_values = None;
    let mut closure = (None, None, None);
    let mut dx = None;

    for (line, section, key, value) in &entries {
        let full = format!("{}{key}", section_name(section));
        let at = |m: String| ConfigError::at(*line, &full, m);
        let v = value.as_str();
        match (section, key.as_str()) {
            (Section::Top, "experiment") | (Section::Model, "vmax") => {}
            (Section::Top, "equilibrium") => {
                let x = numbers(v).map_err(at)?;
                if x.len() != 2 {
                    return Err(at("expected `rho_1, rho_2`".into()));
                }
                cfg.equilibrium = Some((x[0], x[1]));
            }
            (Section::Top, "eps_rho0") => cfg.eps_rho0 = Some(number(v).map_err(at)?),
            (Section::Top, "starts") => {
                cfg.starts = v
                    .split(',')
                    .map(|p| tuple(p, 2).map(|x| (x[0], x[1])))
                    .collect::<Result<_, _>>()
                    .map_err(at)?;
            }
            (Section::Model, "lanes") => {
                let n = count(v).map_err(at)?;
                if n != lanes {
                    return Err(at(format!("{n} lanes but vmax lists {lanes}")));
                }
            }
            (Section::Model, "vehicle_length") => cfg.model.vehicle_length = number(v).map_err(at)?,
            (Section::Model, "safety_distance") => cfg.model.safety_distance = number(v).map_err(at)?,
            (Section::Model, "rho_max") => cfg.model.rho_max = number(v).map_err(at)?,
            (Section::Model, "nu") => cfg.model.nu = number(v).map_err(at)?,
            (Section::Model, "seed") => seed = Some(number(v).map_err(at)?),
            (Section::Grid, "cells") => cfg.grid.cells = count(v).map_err(at)?,
            (Section::Grid, "x_min") => cfg.grid.x_min = number(v).map_err(at)?,
            (Section::Grid, "x_max") => cfg.grid.x_max = number(v).map_err(at)?,
            (Section::Grid, "dx") => {
                let x = number(v).map_err(at)?;
                if !(x > 0.0) {
                    return Err(at(format!("{x} must be positive")));
                }
                dx = Some((*line, x));
            }
            (Section::Time, "t_end") => cfg.time.t_end = number(v).map_err(at)?,
            (Section::Time, "cfl") => cfg.time.cfl = number(v).map_err(at)?,
            (Section::Time, "micro_dt") => cfg.time.micro_dt = number(v).map_err(at)?,
            (Section::Time, "ode_dt") => cfg.time.ode_dt = number(v).map_err(at)?,
            (Section::Bc, "left") => cfg.bc.left = bc_side(v).map_err(at)?,
            (Section::Bc, "right") => cfg.bc.right = bc_side(v).map_err(at)?,
            (Section::Bc, "left_values") => left_values = Some((*line, numbers(v).map_err(at)?)),
            (Section::Bc, "right_values") => right_values = Some((*line, numbers(v).map_err(at)?)),
            (Section::Initial(j), k) => {
                if *j > lanes {
                    return Err(at(format!("lane {j} not in 1..={lanes}")));
                }
                let lane = &mut cfg.initial[j - 1];
                match k {
                    "uniform" | "segments" if lane.profile.is_some() => {
                        return Err(at("only one of `uniform` and `segments` per lane".into()))
                    }
                    "uniform" => lane.profile = Some(Profile::Uniform(number(v).map_err(at)?)),
                    "segments" => {
                        let segs = v
                            .split(',')
                            .map(|p| {
                                tuple(p, 3).map(|x| Segment {
                                    a: x[0],
                                    b: x[1],
                                    value: x[2],
                                })
                            })
                            .collect::<Result<_, _>>()
                            .map_err(at)?;
                        lane.profile = Some(Profile::Segments(segs));
                    }
                    "bump" => lane.bump = Some(number(v).map_err(at)?),
                    "count" => lane.count = Some(count(v).map_err(at)?),
                    _ => return Err(at("unknown key".into())),
                }
            }
            (Section::Closure, "lane") => {
                let j = count(v).map_err(at)?;
                if j == 0 || j > lanes {
                    return Err(at(format!("lane {j} not in 1..={lanes}")));
                }
                closure.0 = Some(j);
            }
            (Section::Closure, "from") => closure.1 = Some(number(v).map_err(at)?),
            (Section::Closure, "to") => closure.2 = Some(number(v).map_err(at)?),
            (Section::Output, "dir") => cfg.output.dir = Some(PathBuf::from(v)),
            (Section::Output, "stride") => cfg.output.stride = count(v).map_err(at)?,
            _ => return Err(at("unknown key".into())),
        }
    }
    if let Some((line, dx)) = dx {
        if entries.iter().any(|(_, s, k, _)| *s == Section::Grid && k == "cells") {
            return Err(ConfigError::at(line, "grid.dx", "give either `cells` or `dx`"));
        }
        let cells = (cfg.grid.x_max - cfg.grid.x_min) / dx;
        if !(cells >= 0.5) {
            return Err(ConfigError::at(line, "grid.dx", format!("{dx} exceeds the domain")));
        }
        cfg.grid.cells = cells.round() as usize;
    }
    for (side, values, name) in [
        (&mut cfg.bc.left, left_values, "bc.left_values"),
        (&mut cfg.bc.right, right_values, "bc.right_values"),
    ] {
        if let Some((line, v)) = values {
            match side {
                BcSide::Dirichlet(slot) => *slot = Some(v),
                _ => return Err(ConfigError::at(line, name, "values given for a non-Dirichlet side")),
            }
        }
    }
    cfg.closure = match closure {
        (None, None, None) => None,
        (Some(lane), Some(a), Some(b)) => Some(Closure { lane, a, b }),
        (None, _, _) => return Err(ConfigError::missing("closure.lane", "in a [closure] section")),
        (_, None, _) => return Err(ConfigError::missing("closure.from", "in a [closure] section")),
        (_, _, None) => return Err(ConfigError::missing("closure.to", "in a [closure] section")),
    };
    let spacing = cfg.model.vehicle_length + cfg.model.safety_distance;
    cfg.model.seed = seed.unwrap_or(spacing / (cfg.grid.x_max - cfg.grid.x_min));
    cfg.validate()?;
    Ok(cfg)
}

fn bc_side(s: &str) -> Result<BcSide, String> {
    match s {
        "periodic" => Ok(BcSide::Periodic),
        "dirichlet" => Ok(BcSide::Dirichlet(None)),
        "free" => Ok(BcSide::Free),
        other => Err(format!("unknown boundary `{other}`, expected periodic, dirichlet or free")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_global_perturbation_gets_defaults() {
        let cfg = parse_config("experiment = perturb-global\nequilibrium = 0.27, 0.49\neps_rho0 = 0.485\n").unwrap();
        assert_eq!(cfg.experiment, Experiment::GlobalPerturbation);
        assert_eq!(cfg.equilibrium, Some((0.27, 0.49)));
        assert_eq!(cfg.eps_rho0, Some(0.485));
        assert_eq!(cfg.time.cfl, 0.9);
        assert_eq!(cfg.model.nu, 1.0);
        assert_eq!(cfg.model.rho_max, 1.0);
        assert_eq!(cfg.model.vehicle_length, 1.0 / 300.0);
        assert_eq!(cfg.model.safety_distance, 1.0 / 300.0);
        assert_eq!(cfg.model.params().unwrap().mu, 0.5);
        assert_eq!(cfg.model.seed, (2.0 / 300.0) / 1.0);
        assert_eq!(cfg.output.stride, DEFAULT_STRIDE);
        assert_eq!(cfg.bc.left, BcSide::Periodic);
    }

    #[test]
    fn lane_index_beyond_lane_count_is_rejected() {
        let text = "experiment = custom\n[model]\nvmax = 0.6, 0.7, 1\n[initial.4]\nuniform = 0.1\n";
        let err = parse_config(text).unwrap_err();
        assert_eq!(err.line, Some(5));
        assert_eq!(err.key, "initial.4.uniform");
        let text = "experiment = custom\n[model]\nvmax = 0.6, 0.7, 1\n[closure]\nlane = 4\n";
        let err = parse_config(text).unwrap_err();
        assert_eq!((err.line, err.key.as_str()), (Some(5), "closure.lane"));
    }

    #[test]
    fn errors_name_line_and_key() {
        let err = parse_config("experiment = classify\nequilibrium = 0.1, 0.2\n[grid]\ncolls = 3\n").unwrap_err();
        assert_eq!((err.line, err.key.as_str()), (Some(4), "grid.colls"));
        assert!(err.to_string().starts_with("line 4: `grid.colls`"), "{err}");

        let err = parse_config("experiment = perturb-global\nequilibrium = 0.27, 0.49\n").unwrap_err();
        assert_eq!((err.line, err.key.as_str()), (None, "eps_rho0"));

        let err = parse_config("experiment = classify\nequilibrium = 0.1, 0.2\n[time]\ncfl = 1.5\n").unwrap_err();
        assert_eq!(err.key, "time.cfl");

        let err = parse_config("experiment = warp\n").unwrap_err();
        assert_eq!((err.line, err.key.as_str()), (Some(1), "experiment"));

        let err = parse_config("experiment = classify\nequilibrium = 0.1, 0.2\n[grid]\ncells = x\n").unwrap_err();
        assert_eq!((err.line, err.key.as_str()), (Some(4), "grid.cells"));

        let err = parse_config("equilibrium = 0.1, 0.2\n").unwrap_err();
        assert_eq!(err.key, "experiment");

        let err = parse_config("experiment = classify\n[mdl]\n").unwrap_err();
        assert_eq!(err.line, Some(2));
    }

    #[test]
    fn perturbation_must_stay_admissible() {
        let err = parse_config("experiment = perturb-global\nequilibrium = 0.27, 0.49\neps_rho0 = 0.8\n").unwrap_err();
        assert_eq!(err.key, "eps_rho0");
    }

    #[test]
    fn fractions_dx_and_comments() {
        let text = "experiment = perturb-local # bump\nequilibrium = 0.142, 0.400\n[model]\nvehicle_length = 1/300\n[grid]\ndx = 0.01\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.grid.cells, 100);
        assert_eq!(cfg.model.vehicle_length, 1.0 / 300.0);
    }

    #[test]
    fn local_perturbation_config_round_trips() {
        let text = "experiment = perturb-local\nequilibrium = 0.142, 0.400\n[grid]\ndx = 0.01\n[time]\nt_end = 5\ncfl = 0.9\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!((cfg.time.t_end, cfg.grid.cells, cfg.time.cfl), (5.0, 100, 0.9));
        let again = parse_config(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn closure_config_round_trips() {
        let text = "\
experiment = lane-closure
[model]
vmax = 0.6, 0.7, 1
[grid]
dx = 0.001
[bc]
left = dirichlet
right = free
left_values = 0.1, 0.2, 0.3
[initial.1]
uniform = 0.4
[initial.2]
uniform = 0.6
[initial.3]
segments = -0.5 0 0.2, 0 0.5 0
[closure]
lane = 3
from = 0
to = 0.25
[output]
dir = out/closure
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.lanes(), 3);
        assert_eq!(cfg.bc.right, BcSide::Free);
        assert_eq!(cfg.bc.left, BcSide::Dirichlet(Some(vec![0.1, 0.2, 0.3])));
        assert_eq!(
            cfg.closure,
            Some(Closure {
                lane: 3,
                a: 0.0,
                b: 0.25
            })
        );
        assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn values_for_a_non_dirichlet_side_are_rejected() {
        let err = parse_config("experiment = custom\n[bc]\nleft_values = 0.1, 0.2\n[initial.1]\nuniform = 0.1\n[initial.2]\nuniform = 0.1\n")
            .unwrap_err();
        assert_eq!((err.line, err.key.as_str()), (Some(3), "bc.left_values"));
    }
}
