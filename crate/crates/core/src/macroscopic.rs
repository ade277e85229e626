//! Finite-volume solver for the multi-lane system of balance laws
//!
//! ```text
//! d_t rho_j + d_x f_j(rho_j) = S_j(rho)
//! ```
//!
//! First order in space and time: Rusanov interface fluxes with the local two-point
//! wave speed, an explicit unsplit source, and a CFL-adaptive step.

use crate::error::{ModelError, Result};
use crate::kernel::{seeded_transfer, transfer_capacity};
use crate::micro::MicroState;
use crate::params::{ModelParams, SpeedLaw};
use crate::scalar::Scalar;

/// Tolerance of the post-update density box check.
pub const SCHEME_TOL: f64 = 1e-12;
/// Maximum number of step halvings before a positivity failure is reported.
pub const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    pub x_min: T,
    pub x_max: T,
    pub cells: usize,
    pub dx: T,
}

impl<T: Scalar> Grid<T> {
    pub fn new(x_min: T, x_max: T, cells: usize) -> Result<Self> {
        if cells == 0 || !(x_max > x_min) {
            return Err(ModelError::Configuration(format!(
                "grid [{x_min}, {x_max}] with {cells} cells is empty"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            cells,
            dx: (x_max - x_min) / T::from_count(cells),
        })
    }

    pub fn length(&self) -> T {
        self.x_max - self.x_min
    }

    #[inline]
    pub fn center(&self, i: usize) -> T {
        self.x_min + (T::from_count(i) + T::half()) * self.dx
    }

    pub fn centers(&self) -> Vec<T> {
        (0..self.cells).map(|i| self.center(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityField<T> {
    pub grid: Grid<T>,
    /// `rho[j][i]`: cell average of lane `j + 1` in cell `i`.
    pub rho: Vec<Vec<T>>,
    pub time: T,
}

impl<T: Scalar> DensityField<T> {
    pub fn new(grid: Grid<T>, rho: Vec<Vec<T>>, rho_max: T) -> Result<Self> {
        for (j, lane) in rho.iter().enumerate() {
            if lane.len() != grid.cells {
                return Err(ModelError::Configuration(format!(
                    "lane {} has {} cells, grid has {}",
                    j + 1,
                    lane.len(),
                    grid.cells
                )));
            }
            if let Some(v) = lane.iter().find(|v| !(**v >= T::zero() && **v <= rho_max)) {
                return Err(ModelError::Domain {
                    what: "initial density",
                    value: v.as_f64(),
                    lo: 0.0,
                    hi: rho_max.as_f64(),
                });
            }
        }
        Ok(Self {
            grid,
            rho,
            time: T::zero(),
        })
    }

    /// Constant value `values[j]` on lane `j + 1`.
    pub fn uniform(grid: Grid<T>, values: &[T], rho_max: T) -> Result<Self> {
        let rho = values.iter().map(|&v| vec![v; grid.cells]).collect();
        Self::new(grid, rho, rho_max)
    }

    /// Samples `f(lane, x)` at the cell centers; lanes are 1-based.
    pub fn from_fn(grid: Grid<T>, lanes: usize, rho_max: T, f: impl Fn(usize, T) -> T) -> Result<Self> {
        let rho = (1..=lanes)
            .map(|j| (0..grid.cells).map(|i| f(j, grid.center(i))).collect())
            .collect();
        Self::new(grid, rho, rho_max)
    }

    pub fn lane_count(&self) -> usize {
        self.rho.len()
    }

    /// `dx * sum_i rho[j][i]` for lane `lane` (1-based).
    pub fn lane_mass(&self, lane: usize) -> T {
        self.rho[lane - 1].iter().fold(T::zero(), |a, &r| a + r) * self.grid.dx
    }

    pub fn total_mass(&self) -> T {
        (1..=self.lane_count()).fold(T::zero(), |a, j| a + self.lane_mass(j))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryKind<T> {
    Periodic,
    /// Ghost cell fixed to one value per lane.
    DirichletInflow(Vec<T>),
    /// Zero-gradient copy of the adjacent interior cell.
    FreeOutflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCondition<T> {
    pub left: BoundaryKind<T>,
    pub right: BoundaryKind<T>,
}

impl<T: Scalar> BoundaryCondition<T> {
    pub fn periodic() -> Self {
        Self {
            left: BoundaryKind::Periodic,
            right: BoundaryKind::Periodic,
        }
    }

    /// Periodic must be used on both ends or on neither.
    pub fn new(left: BoundaryKind<T>, right: BoundaryKind<T>) -> Result<Self> {
        let lp = matches!(left, BoundaryKind::Periodic);
        let rp = matches!(right, BoundaryKind::Periodic);
        if lp != rp {
            return Err(ModelError::Configuration(
                "periodic boundary must apply to both ends".into(),
            ));
        }
        Ok(Self { left, right })
    }

    fn check_lanes(&self, lanes: usize) -> Result<()> {
        for side in [&self.left, &self.right] {
            if let BoundaryKind::DirichletInflow(v) = side {
                if v.len() != lanes {
                    return Err(ModelError::Configuration(format!(
                        "Dirichlet data has {} values for {lanes} lanes",
                        v.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Closed cells per lane: a closed cell has zero flux through its interfaces and
/// takes no part in lane changes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosureMask {
    closed: Vec<Vec<bool>>,
}

impl ClosureMask {
    pub fn open(lanes: usize, cells: usize) -> Self {
        Self {
            closed: vec![vec![false; cells]; lanes],
        }
    }

    #[inline]
    pub fn is_closed(&self, lane: usize, cell: usize) -> bool {
        self.closed[lane - 1][cell]
    }

    pub fn any_closed(&self) -> bool {
        self.closed.iter().any(|l| l.iter().any(|&c| c))
    }

    pub fn closed_cells(&self, lane: usize) -> usize {
        self.closed[lane - 1].iter().filter(|&&c| c).count()
    }
}

/// Closes the cells of `lane` whose centers lie in `[a, b]`.
pub fn closure_mask<T: Scalar>(
    mut mask: ClosureMask,
    grid: &Grid<T>,
    lane: usize,
    a: T,
    b: T,
) -> Result<ClosureMask> {
    if lane == 0 || lane > mask.closed.len() {
        return Err(ModelError::LaneOutOfRange {
            lane,
            lane_count: mask.closed.len(),
        });
    }
    if !(a <= b && a >= grid.x_min && b <= grid.x_max) {
        return Err(ModelError::Configuration(format!(
            "closure [{a}, {b}] not inside [{}, {}]",
            grid.x_min, grid.x_max
        )));
    }
    for i in 0..grid.cells {
        let x = grid.center(i);
        if x >= a && x <= b {
            mask.closed[lane - 1][i] = true;
        }
    }
    Ok(mask)
}

pub fn flux<T: Scalar>(law: &SpeedLaw<T>, rho: T) -> Result<T> {
    law.flux(rho)
}

/// `(f(L) + f(R)) / 2 - alpha (R - L) / 2` with `alpha = max(|f'(L)|, |f'(R)|)`.
#[inline]
pub fn rusanov_flux<T: Scalar>(law: &SpeedLaw<T>, rho_left: T, rho_right: T) -> T {
    let alpha = law
        .flux_derivative(rho_left)
        .abs()
        .max(law.flux_derivative(rho_right).abs());
    T::half() * (law.flux_clamped(rho_left) + law.flux_clamped(rho_right))
        - T::half() * alpha * (rho_right - rho_left)
}

/// Lane-change source of lane `lane` (1-based) in cell `cell`: gains from each
/// target lane minus losses to it. Uses [`seeded_transfer`], which equals the plain
/// kernel when `params.empty_lane_seed` is zero.
pub fn source<T: Scalar>(
    field: &DensityField<T>,
    cell: usize,
    lane: usize,
    params: &ModelParams<T>,
    laws: &[SpeedLaw<T>],
) -> T {
    let rho_j = field.rho[lane - 1][cell];
    params.target_lanes(lane).fold(T::zero(), |acc, k| {
        let rho_k = field.rho[k - 1][cell];
        let gain = seeded_transfer(rho_k, rho_j, &laws[k - 1], &laws[lane - 1], params);
        let loss = seeded_transfer(rho_j, rho_k, &laws[lane - 1], &laws[k - 1], params);
        acc + gain - loss
    })
}

/// Lower bound on the wave speed used for the step size, as a fraction of the
/// largest maximum speed.
pub const ALPHA_FLOOR_FRACTION: f64 = 0.1;

/// `cfl * dx / alpha_max`, with `alpha_max` floored at `0.1 * max vmax`.
pub fn cfl_dt<T: Scalar>(field: &DensityField<T>, laws: &[SpeedLaw<T>], cfl: T) -> T {
    alpha_dt(field, laws, cfl, None, &[])
}

fn alpha_dt<T: Scalar>(
    field: &DensityField<T>,
    laws: &[SpeedLaw<T>],
    cfl: T,
    mask: Option<&ClosureMask>,
    ghosts: &[(T, T)],
) -> T {
    let vmax = laws.iter().fold(T::zero(), |m, l| m.max(l.vmax));
    let mut alpha = T::lit(ALPHA_FLOOR_FRACTION) * vmax;
    for (j, lane) in field.rho.iter().enumerate() {
        let law = &laws[j];
        for (i, &r) in lane.iter().enumerate() {
            if mask.is_some_and(|m| m.is_closed(j + 1, i)) {
                continue;
            }
            alpha = alpha.max(law.flux_derivative(r).abs());
        }
        if let Some(&(l, r)) = ghosts.get(j) {
            alpha = alpha
                .max(law.flux_derivative(l).abs())
                .max(law.flux_derivative(r).abs());
        }
    }
    cfl * field.grid.dx / alpha
}

/// Left and right ghost values of every lane.
pub fn apply_bc<T: Scalar>(field: &DensityField<T>, bc: &BoundaryCondition<T>) -> Vec<(T, T)> {
    field
        .rho
        .iter()
        .enumerate()
        .map(|(j, lane)| {
            let first = lane[0];
            let last = lane[lane.len() - 1];
            let left = match &bc.left {
                BoundaryKind::Periodic => last,
                BoundaryKind::DirichletInflow(v) => v[j],
                BoundaryKind::FreeOutflow => first,
            };
            let right = match &bc.right {
                BoundaryKind::Periodic => first,
                BoundaryKind::DirichletInflow(v) => v[j],
                BoundaryKind::FreeOutflow => last,
            };
            (left, right)
        })
        .collect()
}

/// Lane mean `dx * sum rho / (x_max - x_min)` and the sample standard deviation of
/// the cell values.
pub fn mean_density<T: Scalar>(field: &DensityField<T>, lane: usize) -> Result<(T, T)> {
    if lane == 0 || lane > field.lane_count() {
        return Err(ModelError::LaneOutOfRange {
            lane,
            lane_count: field.lane_count(),
        });
    }
    let values = &field.rho[lane - 1];
    let m = values.len();
    let mean = field.lane_mass(lane) / field.grid.length();
    if m < 2 {
        return Ok((mean, T::zero()));
    }
    let avg = values.iter().fold(T::zero(), |a, &r| a + r) / T::from_count(m);
    let ss = values.iter().fold(T::zero(), |a, &r| a + (r - avg) * (r - avg));
    Ok((mean, (ss / T::from_count(m - 1)).sqrt()))
}

/// Cell averages of the piecewise-constant micro density: vehicle `n` spreads
/// `(l + d_s) / headway` over `[x_n, x_leader)`. Micro position 0 maps to `x_min`.
pub fn project_micro<T: Scalar>(state: &MicroState<T>, grid: Grid<T>) -> Result<DensityField<T>> {
    let length = state.road_length();
    let tol = T::lit(1e-12) * length;
    if (grid.length() - length).abs() > tol {
        return Err(ModelError::Configuration(format!(
            "road length {length} differs from grid extent {}",
            grid.length()
        )));
    }
    let lanes = state.params().lane_count;
    let spacing = state.params().jam_spacing();
    let mut rho = vec![vec![T::zero(); grid.cells]; lanes];
    for lane in 1..=lanes {
        let order = state.lane_order(lane)?;
        let n = order.len();
        for k in 0..n {
            let x = state.vehicles()[order[k]].position;
            let headway = state.headway(order[k])?;
            let density = spacing / headway;
            let end = x + headway;
            if end <= length {
                deposit(&mut rho[lane - 1], &grid, x, end, density);
            } else {
                deposit(&mut rho[lane - 1], &grid, x, length, density);
                deposit(&mut rho[lane - 1], &grid, T::zero(), end - length, density);
            }
            if n == 1 {
                break;
            }
        }
    }
    Ok(DensityField {
        grid,
        rho,
        time: T::zero(),
    })
}

/// Adds `density * |[a, b) ∩ cell| / dx` to each cell; `a`, `b` are offsets from `x_min`.
fn deposit<T: Scalar>(cells: &mut [T], grid: &Grid<T>, a: T, b: T, density: T) {
    if !(b > a) {
        return;
    }
    let m = grid.cells;
    let first = (a / grid.dx).floor().to_usize().unwrap_or(0).min(m - 1);
    let last = ((b / grid.dx).ceil().to_usize().unwrap_or(m)).min(m);
    for (i, cell) in cells.iter_mut().enumerate().take(last).skip(first) {
        let lo = T::from_count(i) * grid.dx;
        let hi = lo + grid.dx;
        let overlap = b.min(hi) - a.max(lo);
        if overlap > T::zero() {
            *cell = *cell + density * overlap / grid.dx;
        }
    }
}

/// Macroscopic model: parameters, boundary conditions, CFL number and an optional
/// lane closure.
#[derive(Debug, Clone)]
pub struct MacroModel<T> {
    pub params: ModelParams<T>,
    pub laws: Vec<SpeedLaw<T>>,
    pub bc: BoundaryCondition<T>,
    pub cfl: T,
    pub mask: Option<ClosureMask>,
    /// Limit each cell's transfer so it stops where the transfer would switch off
    /// (source empty, speeds equal, target at `mu`). Prevents the explicit source
    /// from chattering across the speed-equality line.
    pub cap_transfers: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo<T> {
    pub dt: T,
    pub halvings: usize,
}

impl<T: Scalar> MacroModel<T> {
    pub fn new(params: ModelParams<T>, bc: BoundaryCondition<T>, cfl: T) -> Result<Self> {
        params.validate()?;
        bc.check_lanes(params.lane_count)?;
        if !(cfl > T::zero() && cfl <= T::one()) {
            return Err(ModelError::Configuration(format!("cfl {cfl} must lie in (0, 1]")));
        }
        let laws = params.laws();
        Ok(Self {
            params,
            laws,
            bc,
            cfl,
            mask: None,
            cap_transfers: true,
        })
    }

    pub fn with_mask(mut self, mask: ClosureMask) -> Self {
        self.mask = Some(mask);
        self
    }

    pub fn with_capped_transfers(mut self, cap: bool) -> Self {
        self.cap_transfers = cap;
        self
    }

    fn closed(&self, lane: usize, cell: usize) -> bool {
        self.mask.as_ref().is_some_and(|m| m.is_closed(lane, cell))
    }

    /// Step size from the CFL condition for `field`.
    pub fn cfl_dt(&self, field: &DensityField<T>) -> T {
        let ghosts = apply_bc(field, &self.bc);
        alpha_dt(field, &self.laws, self.cfl, self.mask.as_ref(), &ghosts)
    }

    /// Interface fluxes `F[0..=M]` of every lane.
    fn interface_fluxes(&self, field: &DensityField<T>, ghosts: &[(T, T)]) -> Vec<Vec<T>> {
        let m = field.grid.cells;
        field
            .rho
            .iter()
            .enumerate()
            .map(|(j, lane)| {
                let law = &self.laws[j];
                (0..=m)
                    .map(|k| {
                        let gated = (k > 0 && self.closed(j + 1, k - 1)) || (k < m && self.closed(j + 1, k));
                        if gated {
                            return T::zero();
                        }
                        let left = if k == 0 { ghosts[j].0 } else { lane[k - 1] };
                        let right = if k == m { ghosts[j].1 } else { lane[k] };
                        rusanov_flux(law, left, right)
                    })
                    .collect()
            })
            .collect()
    }

    /// Source increments for a step of length `dt`, one entry per lane and cell.
    /// Each lane pair is evaluated once and applied with opposite signs.
    fn source_increments(&self, field: &DensityField<T>, dt: T) -> Vec<Vec<T>> {
        let lanes = field.lane_count();
        let m = field.grid.cells;
        let mut inc = vec![vec![T::zero(); m]; lanes];
        for j in 1..lanes {
            let (a, b) = (j, j + 1);
            for i in 0..m {
                if self.closed(a, i) || self.closed(b, i) {
                    continue;
                }
                let (ra, rb) = (field.rho[a - 1][i], field.rho[b - 1][i]);
                let (la, lb) = (&self.laws[a - 1], &self.laws[b - 1]);
                let mut a_to_b = dt * seeded_transfer(ra, rb, la, lb, &self.params);
                let mut b_to_a = dt * seeded_transfer(rb, ra, lb, la, &self.params);
                if self.cap_transfers {
                    a_to_b = a_to_b.min(transfer_capacity(ra, rb, la, lb, &self.params));
                    b_to_a = b_to_a.min(transfer_capacity(rb, ra, lb, la, &self.params));
                }
                let net = b_to_a - a_to_b;
                inc[a - 1][i] = inc[a - 1][i] + net;
                inc[b - 1][i] = inc[b - 1][i] - net;
            }
        }
        inc
    }

    fn update(&self, field: &DensityField<T>, fluxes: &[Vec<T>], dt: T) -> Vec<Vec<T>> {
        let ratio = dt / field.grid.dx;
        let inc = self.source_increments(field, dt);
        field
            .rho
            .iter()
            .enumerate()
            .map(|(j, lane)| {
                lane.iter()
                    .enumerate()
                    .map(|(i, &r)| r - ratio * (fluxes[j][i + 1] - fluxes[j][i]) + inc[j][i])
                    .collect()
            })
            .collect()
    }

    /// One explicit step of at most `dt_max` (and at most the CFL step). The step
    /// is halved while the update leaves `[0, rho_max]`; values within rounding
    /// of the box are snapped onto it.
    pub fn step_bounded(&self, field: &DensityField<T>, dt_max: T) -> Result<(DensityField<T>, StepInfo<T>)> {
        let ghosts = apply_bc(field, &self.bc);
        let fluxes = self.interface_fluxes(field, &ghosts);
        let mut dt = alpha_dt(field, &self.laws, self.cfl, self.mask.as_ref(), &ghosts).min(dt_max);
        let rho_max = self.params.rho_max;
        let snap = T::lit(1e-14) * rho_max;
        let fail = T::lit(SCHEME_TOL);
        let mut halvings = 0;
        loop {
            let mut rho = self.update(field, &fluxes, dt);
            let worst = worst_cell(&rho, rho_max);
            let outside = worst.map_or(false, |(_, _, v)| v < -snap || v > rho_max + snap);
            if outside && halvings < MAX_HALVINGS {
                dt = dt * T::half();
                halvings += 1;
                continue;
            }
            if let Some((j, i, v)) = worst {
                if v < -fail || v > rho_max + fail {
                    return Err(ModelError::SchemeFailure {
                        lane: j + 1,
                        cell: i,
                        value: v.as_f64(),
                        time: field.time.as_f64(),
                    });
                }
            }
            for lane in &mut rho {
                for r in lane.iter_mut() {
                    *r = r.clamp_to(T::zero(), rho_max);
                }
            }
            return Ok((
                DensityField {
                    grid: field.grid,
                    rho,
                    time: field.time + dt,
                },
                StepInfo { dt, halvings },
            ));
        }
    }

    /// One explicit step with the CFL step size.
    pub fn step(&self, field: &DensityField<T>) -> Result<DensityField<T>> {
        Ok(self.step_bounded(field, T::infinity())?.0)
    }

    /// Steps until `t_end`, shortening the final step to land on it exactly.
    /// Returns the field and the number of steps taken.
    pub fn advance_to(&self, field: DensityField<T>, t_end: T) -> Result<(DensityField<T>, usize)> {
        let mut field = field;
        let mut steps = 0;
        while field.time < t_end {
            let remaining = t_end - field.time;
            let (mut next, _) = self.step_bounded(&field, remaining)?;
            if t_end - next.time <= T::epsilon() * t_end.abs().max(T::one()) {
                next.time = t_end;
            }
            field = next;
            steps += 1;
        }
        Ok((field, steps))
    }
}

/// Cell farthest outside `[0, rho_max]`, if any.
fn worst_cell<T: Scalar>(rho: &[Vec<T>], rho_max: T) -> Option<(usize, usize, T)> {
    let mut worst: Option<(usize, usize, T, T)> = None;
    for (j, lane) in rho.iter().enumerate() {
        for (i, &r) in lane.iter().enumerate() {
            let excess = if r < T::zero() {
                -r
            } else if r > rho_max {
                r - rho_max
            } else if r.is_nan() {
                T::infinity()
            } else {
                continue;
            };
            if worst.map_or(true, |w| excess > w.3) {
                worst = Some((j, i, r, excess));
            }
        }
    }
    worst.map(|(j, i, r, _)| (j, i, r))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_lane_params() -> ModelParams<f64> {
        ModelParams::normalized(vec![0.7, 1.0]).unwrap()
    }

    #[test]
    fn flux_examples() {
        let law = SpeedLaw::linear(1.0, 1.0);
        assert_eq!(flux(&law, 0.0).unwrap(), 0.0);
        assert_eq!(flux(&law, 1.0).unwrap(), 0.0);
        assert_eq!(flux(&law, 0.5).unwrap(), 0.25);
        assert!(flux(&law, 1.5).is_err());
    }

    #[test]
    fn rusanov_examples() {
        let law = SpeedLaw::linear(1.0, 1.0);
        assert!((rusanov_flux(&law, 0.2f64, 0.4) - 0.14).abs() < 1e-15);
        assert_eq!(rusanov_flux(&law, 0.0, 1.0), -0.5);
        for k in 0..=100 {
            let r = k as f64 / 100.0;
            assert_eq!(rusanov_flux(&law, r, r), law.flux(r).unwrap());
        }
    }

    #[test]
    fn source_examples() {
        let p = two_lane_params();
        let laws = p.laws();
        let g = Grid::new(0.0, 1.0, 4).unwrap();
        let f = DensityField::uniform(g, &[0.6, 0.2], 1.0).unwrap();
        let k = 0.6 * (1.0 / 0.44 - 1.0) * 0.2;
        assert!((source(&f, 0, 1, &p, &laws) + k).abs() < 1e-12);
        assert!((source(&f, 0, 2, &p, &laws) - k).abs() < 1e-12);

        // The rounded point (0.27, 0.49) has v_1 = 0.511 > v_2 = 0.51, which switches
        // the 2 -> 1 transfer fully on; only the exact equal-speed point is steady.
        let exact = DensityField::uniform(g, &[0.27, 1.0 - 0.7 * 0.73], 1.0).unwrap();
        assert_eq!(source(&exact, 0, 1, &p, &laws), 0.0);
        let rounded = DensityField::uniform(g, &[0.27, 0.49], 1.0).unwrap();
        let k = 0.46 * (1.0 / (0.51 - 0.02 * 0.27) - 1.0) * 0.27;
        assert!((source(&rounded, 0, 1, &p, &laws) - k).abs() < 1e-12);

        let same = ModelParams::normalized(vec![1.0, 1.0, 1.0]).unwrap();
        let f = DensityField::uniform(g, &[0.3, 0.3, 0.3], 1.0).unwrap();
        for j in 1..=3 {
            assert_eq!(source(&f, 2, j, &same, &same.laws()), 0.0);
        }
    }

    #[test]
    fn cfl_examples() {
        let g = Grid::new(0.0, 1.0, 100).unwrap();
        let laws = vec![SpeedLaw::linear(1.0, 1.0)];
        let f = DensityField::new(g, vec![(0..100).map(|i| i as f64 / 200.0).collect()], 1.0).unwrap();
        assert!((cfl_dt(&f, &laws, 0.9) - 0.009).abs() < 1e-15);

        let g = Grid::new(-0.5, 0.5, 1000).unwrap();
        let laws3: Vec<_> = [0.6f64, 0.7, 1.0].iter().map(|&v| SpeedLaw::linear(v, 1.0)).collect();
        let f = DensityField::uniform(g, &[0.3, 0.2, 0.0], 1.0).unwrap();
        assert!((cfl_dt(&f, &laws3, 0.99) - 0.00099).abs() < 1e-15);

        let g = Grid::new(0.0, 1.0, 100).unwrap();
        let f = DensityField::uniform(g, &[0.5], 1.0).unwrap();
        assert!((cfl_dt(&f, &laws, 0.9) - 0.9 * 0.01 / 0.1).abs() < 1e-15);
    }

    #[test]
    fn boundary_examples() {
        let g = Grid::new(0.0, 1.0, 4).unwrap();
        let f = DensityField::new(g, vec![vec![0.1, 0.2, 0.3, 0.13]], 1.0).unwrap();
        assert_eq!(apply_bc(&f, &BoundaryCondition::periodic()), vec![(0.13, 0.1)]);
        let bc = BoundaryCondition::new(
            BoundaryKind::DirichletInflow(vec![0.4]),
            BoundaryKind::FreeOutflow,
        )
        .unwrap();
        assert_eq!(apply_bc(&f, &bc), vec![(0.4, 0.13)]);
        assert!(BoundaryCondition::<f64>::new(BoundaryKind::Periodic, BoundaryKind::FreeOutflow).is_err());
    }

    #[test]
    fn mean_density_uniform() {
        let g = Grid::new(-0.5, 0.5, 50).unwrap();
        let f = DensityField::uniform(g, &[0.4f64], 1.0).unwrap();
        let (m, s) = mean_density(&f, 1).unwrap();
        assert!((m - 0.4).abs() < 1e-15);
        assert!(s < 1e-15);
        assert!(mean_density(&f, 2).is_err());
    }

    #[test]
    fn mean_density_matches_brute_force() {
        let g = Grid::new(0.0, 2.0, 7).unwrap();
        let vals = vec![0.1, 0.5, 0.3, 0.9, 0.0, 0.2, 0.7];
        let f = DensityField::new(g, vec![vals.clone()], 1.0).unwrap();
        let (m, s) = mean_density(&f, 1).unwrap();
        let avg = vals.iter().sum::<f64>() / 7.0;
        let var = vals.iter().map(|v| (v - avg).powi(2)).sum::<f64>() / 6.0;
        assert!((m - avg).abs() < 1e-15);
        assert!((s - var.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn projection_examples() {
        let p = two_lane_params();
        let st = MicroState::init_uniform(&[150, 30], 1.0, p.clone()).unwrap();
        for cells in [7, 300, 1000] {
            let f = project_micro(&st, Grid::new(0.0, 1.0, cells).unwrap()).unwrap();
            assert!(f.rho[0].iter().all(|r| (r - 1.0).abs() < 1e-12));
            assert!(f.rho[1].iter().all(|r| (r - 0.2).abs() < 1e-12));
        }
        let st = MicroState::init_uniform(&[0, 1], 1.0, p).unwrap();
        let f = project_micro(&st, Grid::new(-0.5, 0.5, 13).unwrap()).unwrap();
        assert!(f.rho[0].iter().all(|&r| r == 0.0));
        assert!(f.rho[1].iter().all(|r| (r - 1.0 / 150.0).abs() < 1e-14));
    }

    #[test]
    fn projection_conserves_vehicle_mass() {
        use crate::micro::Vehicle;
        let p = two_lane_params();
        let xs = [0.01, 0.05, 0.33, 0.34, 0.8, 0.95];
        let vehicles = xs
            .iter()
            .enumerate()
            .map(|(id, &position)| Vehicle { id, position, lane: 1 + id % 2 })
            .collect();
        let st = MicroState::new(vehicles, 1.0, p.clone()).unwrap();
        let f = project_micro(&st, Grid::new(0.0, 1.0, 37).unwrap()).unwrap();
        for lane in 1..=2 {
            let expect = 3.0 * p.jam_spacing();
            assert!((f.lane_mass(lane) - expect).abs() <= 1e-14 * expect);
        }
    }

    #[test]
    fn uniform_equilibrium_is_fixed() {
        let p = two_lane_params();
        let g = Grid::new(-0.5, 0.5, 50).unwrap();
        let eq = [0.27, 1.0 - 0.7 * 0.73];
        let f = DensityField::uniform(g, &eq, 1.0).unwrap();
        let model = MacroModel::new(p, BoundaryCondition::periodic(), 0.9).unwrap();
        let next = model.step(&f).unwrap();
        assert_eq!(next.rho, f.rho);
        assert!(next.time > 0.0);
    }

    #[test]
    fn capped_transfer_lands_on_speed_equality() {
        let p = two_lane_params();
        let g = Grid::new(-0.5, 0.5, 10).unwrap();
        // Total 0.7: the speeds meet at rho_1 = 0.4 / 1.7 with lane 2 still below mu.
        let f = DensityField::uniform(g, &[0.6, 0.1], 1.0).unwrap();
        let model = MacroModel::new(p, BoundaryCondition::periodic(), 0.9).unwrap();
        let (end, _) = model.advance_to(f, 20.0).unwrap();
        let (r1, r2) = (end.rho[0][0], end.rho[1][0]);
        assert!((r1 + r2 - 0.7).abs() < 1e-14);
        assert!((r1 - 0.4 / 1.7).abs() < 1e-12);
        assert!((0.7 * (1.0 - r1) - (1.0 - r2)).abs() < 1e-12);
    }

    #[test]
    fn closure_blocks_flux_and_transfers() {
        let p = ModelParams::normalized(vec![0.6, 0.7, 1.0]).unwrap();
        let g = Grid::new(-0.5, 0.5, 100).unwrap();
        let mask = closure_mask(ClosureMask::open(3, 100), &g, 3, 0.0, 0.25).unwrap();
        assert_eq!(mask.closed_cells(3), 25);
        let f = DensityField::from_fn(g, 3, 1.0, |j, x| match j {
            3 if (0.0..=0.25).contains(&x) => 0.0,
            3 => 0.2,
            _ => 0.3,
        })
        .unwrap();
        let bc = BoundaryCondition::new(
            BoundaryKind::DirichletInflow(vec![0.3, 0.3, 0.2]),
            BoundaryKind::FreeOutflow,
        )
        .unwrap();
        let model = MacroModel::new(p, bc, 0.9).unwrap().with_mask(mask.clone());
        let (end, _) = model.advance_to(f, 0.3).unwrap();
        for i in 0..100 {
            if mask.is_closed(3, i) {
                assert_eq!(end.rho[2][i], 0.0);
            }
        }
    }

    #[test]
    fn open_mask_is_bitwise_identical() {
        let p = two_lane_params();
        let g = Grid::new(-0.5, 0.5, 40).unwrap();
        let f = DensityField::from_fn(g, 2, 1.0, |j, x: f64| if j == 1 { 0.3 + 0.2 * (-(x * x) * 50.0).exp() } else { 0.4 })
            .unwrap();
        let plain = MacroModel::new(p.clone(), BoundaryCondition::periodic(), 0.9).unwrap();
        let masked = plain.clone().with_mask(ClosureMask::open(2, 40));
        let (mut a, mut b) = (f.clone(), f);
        for _ in 0..100 {
            a = plain.step(&a).unwrap();
            b = masked.step(&b).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn works_in_f32() {
        let p = ModelParams::<f32>::normalized(vec![0.7, 1.0]).unwrap();
        let g = Grid::new(0.0f32, 1.0, 20).unwrap();
        let f = DensityField::uniform(g, &[0.6, 0.2], 1.0).unwrap();
        let model = MacroModel::new(p, BoundaryCondition::periodic(), 0.9).unwrap();
        let next = model.step(&f).unwrap();
        assert!((next.total_mass() - f.total_mass()).abs() < 1e-5);
    }
}
