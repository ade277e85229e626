//! Hybrid microscopic model on a multi-lane ring road.
//!
//! Within a lane each vehicle follows its leader with `x' = V_j(headway)`, where
//! `V_j` is the lane's macroscopic law evaluated at the local density
//! `(l + d_s) / headway`. Between continuous steps a sweep applies instantaneous
//! lane changes: a vehicle moves to an adjacent lane when it would be strictly
//! faster there and both gaps in that lane exceed `l + d_s`. It keeps its
//! position and its label.
//!
//! Lanes are numbered from 1; "left" is the higher index.

use crate::error::{ModelError, Result};
use crate::kernel::micro_speed_unchecked;
use crate::params::{ModelParams, SpeedLaw};
use crate::scalar::Scalar;

/// Default relative spacing tolerance of [`MicroState::detect_equilibrium`].
pub const DEFAULT_EQUILIBRIUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vehicle<T> {
    pub id: usize,
    /// Rear-bumper position in `[0, L)`.
    pub position: T,
    pub lane: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneChangeEvent<T> {
    pub time: T,
    pub vehicle: usize,
    pub from_lane: usize,
    pub to_lane: usize,
    pub position: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MicroEquilibrium {
    /// Equally spaced in every lane and no lane change admissible.
    Global,
    /// Equally spaced in every lane, but some vehicle may change lane.
    LocalOnly,
    None,
}

/// Per-lane vehicles sorted by position, as `(position, id)`.
#[derive(Debug, Clone)]
struct LaneIndex<T> {
    lanes: Vec<Vec<(T, usize)>>,
}

impl<T: Scalar> LaneIndex<T> {
    fn build(vehicles: &[Vehicle<T>], lane_count: usize) -> Self {
        let mut lanes = vec![Vec::new(); lane_count];
        for v in vehicles {
            lanes[v.lane - 1].push((v.position, v.id));
        }
        for lane in &mut lanes {
            lane.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        }
        Self { lanes }
    }

    fn lane(&self, lane: usize) -> &[(T, usize)] {
        &self.lanes[lane - 1]
    }

    /// Follower (largest position `<= x`, the same position counts) and leader
    /// (smallest position `> x`), cyclically, ignoring vehicle `skip`.
    fn neighbors(&self, lane: usize, x: T, skip: usize) -> (Option<(T, usize)>, Option<(T, usize)>) {
        let entries = self.lane(lane);
        let others = entries.iter().filter(|e| e.1 != skip).count();
        if others == 0 {
            return (None, None);
        }
        let split = entries.partition_point(|e| e.0 <= x);
        let follower = entries[..split]
            .iter()
            .rev()
            .chain(entries[split..].iter().rev())
            .find(|e| e.1 != skip)
            .copied();
        let leader = entries[split..]
            .iter()
            .chain(entries[..split].iter())
            .find(|e| e.1 != skip)
            .copied();
        (follower, leader)
    }

    fn remove(&mut self, lane: usize, id: usize) {
        let entries = &mut self.lanes[lane - 1];
        if let Some(k) = entries.iter().position(|e| e.1 == id) {
            entries.remove(k);
        }
    }

    fn insert(&mut self, lane: usize, x: T, id: usize) {
        let entries = &mut self.lanes[lane - 1];
        let k = entries.partition_point(|e| e.0 < x || (e.0 == x && e.1 < id));
        entries.insert(k, (x, id));
    }
}

/// Outcome of evaluating one candidate lane change.
#[derive(Debug, Clone, Copy)]
struct MoveCheck<T> {
    target_speed: T,
    admissible: bool,
}

/// Vehicles on a ring road of length `road_length`.
#[derive(Debug, Clone)]
pub struct MicroState<T> {
    vehicles: Vec<Vehicle<T>>,
    road_length: T,
    time: T,
    params: ModelParams<T>,
    laws: Vec<SpeedLaw<T>>,
}

impl<T: Scalar> MicroState<T> {
    /// Builds a state. Vehicle ids must be `0..n` in any order; positions are
    /// wrapped into `[0, L)`; two vehicles of one lane may not share a position.
    pub fn new(mut vehicles: Vec<Vehicle<T>>, road_length: T, params: ModelParams<T>) -> Result<Self> {
        params.validate()?;
        if !(road_length > T::zero()) {
            return Err(ModelError::Configuration(format!(
                "road length {road_length} must be positive"
            )));
        }
        vehicles.sort_by_key(|v| v.id);
        for (k, v) in vehicles.iter_mut().enumerate() {
            if v.id != k {
                return Err(ModelError::Configuration(format!(
                    "vehicle ids must be 0..{}, found {}",
                    k + 1,
                    v.id
                )));
            }
            params.check_lane(v.lane)?;
            if !v.position.is_finite() {
                return Err(ModelError::Configuration(format!("vehicle {k} has non-finite position")));
            }
            v.position = wrap(v.position, road_length);
        }
        let laws = params.laws();
        let state = Self {
            vehicles,
            road_length,
            time: T::zero(),
            params,
            laws,
        };
        let index = state.index();
        for (j, lane) in index.lanes.iter().enumerate() {
            if lane.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(ModelError::Configuration(format!(
                    "two vehicles share a position in lane {}",
                    j + 1
                )));
            }
        }
        Ok(state)
    }

    /// `counts[j]` vehicles equally spaced on lane `j + 1`, the first one at 0.
    pub fn init_uniform(counts: &[usize], road_length: T, params: ModelParams<T>) -> Result<Self> {
        if counts.len() != params.lane_count {
            return Err(ModelError::Configuration(format!(
                "{} lane counts given for {} lanes",
                counts.len(),
                params.lane_count
            )));
        }
        let mut vehicles = Vec::new();
        for (j, &n) in counts.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let spacing = road_length / T::from_count(n);
            if spacing < params.jam_spacing() {
                return Err(ModelError::Configuration(format!(
                    "lane {} cannot hold {n} vehicles: spacing {spacing} below l + d_s = {}",
                    j + 1,
                    params.jam_spacing()
                )));
            }
            for k in 0..n {
                vehicles.push(Vehicle {
                    id: vehicles.len(),
                    position: T::from_count(k) * spacing,
                    lane: j + 1,
                });
            }
        }
        Self::new(vehicles, road_length, params)
    }

    pub fn vehicles(&self) -> &[Vehicle<T>] {
        &self.vehicles
    }

    pub fn road_length(&self) -> T {
        self.road_length
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn laws(&self) -> &[SpeedLaw<T>] {
        &self.laws
    }

    pub fn vehicle(&self, id: usize) -> Result<&Vehicle<T>> {
        self.vehicles.get(id).ok_or(ModelError::UnknownVehicle(id))
    }

    pub fn lane_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.params.lane_count];
        for v in &self.vehicles {
            counts[v.lane - 1] += 1;
        }
        counts
    }

    fn index(&self) -> LaneIndex<T> {
        LaneIndex::build(&self.vehicles, self.params.lane_count)
    }

    /// Vehicle ids of `lane` ordered by position.
    pub fn lane_order(&self, lane: usize) -> Result<Vec<usize>> {
        self.params.check_lane(lane)?;
        Ok(self.index().lane(lane).iter().map(|e| e.1).collect())
    }

    /// Follower and leader of `vehicle` in `lane`. In an adjacent lane a vehicle at
    /// exactly the same position is the follower. A lane holding a single other
    /// vehicle returns it twice; a lane with no other vehicle returns `(None, None)`.
    pub fn neighbors(&self, vehicle: usize, lane: usize) -> Result<(Option<usize>, Option<usize>)> {
        self.params.check_lane(lane)?;
        let v = self.vehicle(vehicle)?;
        let (p, s) = self.index().neighbors(lane, v.position, vehicle);
        Ok((p.map(|e| e.1), s.map(|e| e.1)))
    }

    #[inline]
    fn leader_gap(&self, x: T, leader: T) -> T {
        let g = wrap(leader - x, self.road_length);
        if g == T::zero() {
            self.road_length
        } else {
            g
        }
    }

    #[inline]
    fn follower_gap(&self, x: T, follower: T) -> T {
        wrap(x - follower, self.road_length)
    }

    fn own_headway(&self, index: &LaneIndex<T>, id: usize) -> T {
        let v = &self.vehicles[id];
        match index.neighbors(v.lane, v.position, id).1 {
            Some((xs, _)) => self.leader_gap(v.position, xs),
            None => self.road_length,
        }
    }

    /// Headway of `vehicle` to its in-lane leader; `L` when alone in its lane.
    pub fn headway(&self, vehicle: usize) -> Result<T> {
        self.vehicle(vehicle)?;
        Ok(self.own_headway(&self.index(), vehicle))
    }

    /// Local density `(l + d_s) / headway`.
    pub fn local_density(&self, vehicle: usize) -> Result<T> {
        Ok(self.params.jam_spacing() / self.headway(vehicle)?)
    }

    /// Mean of the local densities of the vehicles in `lane`; zero for an empty lane.
    pub fn mean_local_density(&self, lane: usize) -> Result<T> {
        self.params.check_lane(lane)?;
        let index = self.index();
        let ids = index.lane(lane);
        if ids.is_empty() {
            return Ok(T::zero());
        }
        let s = self.params.jam_spacing();
        let sum = ids
            .iter()
            .fold(T::zero(), |acc, e| acc + s / self.own_headway(&index, e.1));
        Ok(sum / T::from_count(ids.len()))
    }

    /// Velocity of every vehicle, indexed by id.
    pub fn ode_rhs(&self) -> Vec<T> {
        let index = self.index();
        let positions: Vec<T> = self.vehicles.iter().map(|v| v.position).collect();
        let mut out = vec![T::zero(); positions.len()];
        self.velocities_into(&positions, &index, &mut out);
        out
    }

    fn velocities_into(&self, positions: &[T], index: &LaneIndex<T>, out: &mut [T]) {
        let s = self.params.jam_spacing();
        for (j, lane) in index.lanes.iter().enumerate() {
            let law = &self.laws[j];
            let n = lane.len();
            for k in 0..n {
                let me = lane[k].1;
                let headway = if n == 1 {
                    self.road_length
                } else {
                    let leader = lane[(k + 1) % n].1;
                    wrap(positions[leader] - positions[me], self.road_length)
                };
                out[me] = micro_speed_unchecked(law, headway, s);
            }
        }
    }

    /// One fixed fifth-order Runge-Kutta step (Dormand-Prince fifth-order weights)
    /// of the car-following system, without lane changes.
    pub fn step_continuous(&self, dt: T) -> Result<Self> {
        let mut next = self.clone();
        next.advance(dt)?;
        Ok(next)
    }

    /// In-place version of [`MicroState::step_continuous`].
    pub fn advance(&mut self, dt: T) -> Result<()> {
        if dt == T::zero() {
            return Ok(());
        }
        let index = self.index();
        let n = self.vehicles.len();
        let x0: Vec<T> = self.vehicles.iter().map(|v| v.position).collect();
        let a = dopri_a::<T>();
        let b = dopri_b::<T>();
        let mut k: Vec<Vec<T>> = vec![vec![T::zero(); n]; 6];
        let mut stage = x0.clone();
        for s in 0..6 {
            for i in 0..n {
                let mut acc = T::zero();
                for (r, coeff) in a[s].iter().enumerate() {
                    acc = acc + *coeff * k[r][i];
                }
                stage[i] = x0[i] + dt * acc;
            }
            let (done, rest) = k.split_at_mut(s);
            let _ = done;
            self.velocities_into(&stage, &index, &mut rest[0]);
        }
        let mut moved = x0.clone();
        for i in 0..n {
            let mut acc = T::zero();
            for s in 0..6 {
                acc = acc + b[s] * k[s][i];
            }
            moved[i] = x0[i] + dt * acc;
        }
        // Ordering holds iff the cyclic headways of each lane still add up to one lap.
        for (j, lane) in index.lanes.iter().enumerate() {
            let m = lane.len();
            if m < 2 {
                continue;
            }
            let mut total = T::zero();
            for q in 0..m {
                let h = moved[lane[(q + 1) % m].1] - moved[lane[q].1];
                let h = if q + 1 == m { h + self.road_length } else { h };
                if !(h > T::zero()) {
                    return Err(ModelError::StepTooLarge {
                        lane: j + 1,
                        time: self.time.as_f64(),
                    });
                }
                total = total + h;
            }
            let _ = total;
        }
        for (v, x) in self.vehicles.iter_mut().zip(moved) {
            v.position = wrap(x, self.road_length);
        }
        self.time = self.time + dt;
        Ok(())
    }

    fn check_move(&self, index: &LaneIndex<T>, id: usize, target: usize) -> MoveCheck<T> {
        let v = &self.vehicles[id];
        let s = self.params.jam_spacing();
        let own = self.own_headway(index, id);
        let current_speed = micro_speed_unchecked(&self.laws[v.lane - 1], own, s);
        let (p, l) = index.neighbors(target, v.position, id);
        let (lead_gap, follow_gap) = match (p, l) {
            (Some((xp, _)), Some((xs, _))) => (
                self.leader_gap(v.position, xs),
                self.follower_gap(v.position, xp),
            ),
            _ => (self.road_length, self.road_length),
        };
        let target_speed = micro_speed_unchecked(&self.laws[target - 1], lead_gap, s);
        MoveCheck {
            target_speed,
            admissible: target_speed > current_speed && lead_gap > s && follow_gap > s,
        }
    }

    fn check_adjacent(&self, vehicle: usize, target_lane: usize) -> Result<()> {
        self.params.check_lane(target_lane)?;
        let from = self.vehicle(vehicle)?.lane;
        if from.abs_diff(target_lane) != 1 {
            return Err(ModelError::NotAdjacent {
                from,
                to: target_lane,
            });
        }
        Ok(())
    }

    /// Incentive and safety criteria for moving `vehicle` to `target_lane`.
    pub fn lane_change_admissible(&self, vehicle: usize, target_lane: usize) -> Result<bool> {
        self.check_adjacent(vehicle, target_lane)?;
        Ok(self.check_move(&self.index(), vehicle, target_lane).admissible)
    }

    /// Lane a vehicle would move to, evaluated against `index`. Prefers the larger
    /// target speed, then the left (higher) lane.
    fn choose_lane(&self, index: &LaneIndex<T>, id: usize) -> Option<(usize, T)> {
        let lane = self.vehicles[id].lane;
        let mut best: Option<(usize, T)> = None;
        for target in self.params.target_lanes(lane) {
            let m = self.check_move(index, id, target);
            if !m.admissible {
                continue;
            }
            best = match best {
                Some((bl, bs)) if bs > m.target_speed || (bs == m.target_speed && bl > target) => {
                    Some((bl, bs))
                }
                _ => Some((target, m.target_speed)),
            };
        }
        best
    }

    /// Vehicles that admit some lane change in the current configuration.
    pub fn admissible_movers(&self) -> Vec<usize> {
        let index = self.index();
        (0..self.vehicles.len())
            .filter(|&id| self.choose_lane(&index, id).is_some())
            .collect()
    }

    /// One lane-change sweep in increasing position order. Each decision sees the
    /// moves already made in this sweep.
    pub fn apply_lane_changes(&mut self) -> Vec<LaneChangeEvent<T>> {
        self.apply_lane_changes_where(|_| true)
    }

    /// [`MicroState::apply_lane_changes`] where a vehicle with an admissible move
    /// only performs it if `allow(id)` returns true. `allow` is called once per such
    /// vehicle, in sweep order.
    pub fn apply_lane_changes_where(&mut self, mut allow: impl FnMut(usize) -> bool) -> Vec<LaneChangeEvent<T>> {
        let mut index = self.index();
        let mut order: Vec<usize> = (0..self.vehicles.len()).collect();
        order.sort_by(|&a, &b| {
            let (va, vb) = (&self.vehicles[a], &self.vehicles[b]);
            va.position
                .partial_cmp(&vb.position)
                .unwrap()
                .then(va.lane.cmp(&vb.lane))
                .then(a.cmp(&b))
        });
        let mut events = Vec::new();
        for id in order {
            if let Some((target, _)) = self.choose_lane(&index, id) {
                if !allow(id) {
                    continue;
                }
                let v = &mut self.vehicles[id];
                index.remove(v.lane, id);
                index.insert(target, v.position, id);
                events.push(LaneChangeEvent {
                    time: self.time,
                    vehicle: id,
                    from_lane: v.lane,
                    to_lane: target,
                    position: v.position,
                });
                v.lane = target;
            }
        }
        events
    }

    /// Both gaps of `vehicle` in its own lane, `(to leader, to follower)`.
    pub fn own_gaps(&self, vehicle: usize) -> Result<(T, T)> {
        let v = self.vehicle(vehicle)?;
        let (p, s) = self.index().neighbors(v.lane, v.position, vehicle);
        Ok(match (p, s) {
            (Some((xp, _)), Some((xs, _))) => (
                self.leader_gap(v.position, xs),
                self.follower_gap(v.position, xp),
            ),
            _ => (self.road_length, self.road_length),
        })
    }

    pub fn detect_equilibrium(&self, tol: T) -> MicroEquilibrium {
        let index = self.index();
        for lane in 1..=self.params.lane_count {
            let entries = index.lane(lane);
            if entries.len() < 2 {
                continue;
            }
            let headways: Vec<T> = entries
                .iter()
                .map(|e| self.own_headway(&index, e.1))
                .collect();
            let mean = headways.iter().fold(T::zero(), |a, &h| a + h) / T::from_count(headways.len());
            let lo = headways.iter().fold(T::infinity(), |a, &h| a.min(h));
            let hi = headways.iter().fold(T::neg_infinity(), |a, &h| a.max(h));
            if (hi - lo) / mean > tol {
                return MicroEquilibrium::None;
            }
        }
        let any_move = (0..self.vehicles.len()).any(|id| self.choose_lane(&index, id).is_some());
        if any_move {
            MicroEquilibrium::LocalOnly
        } else {
            MicroEquilibrium::Global
        }
    }
}

#[derive(Debug, Clone)]
pub struct MicroSnapshot<T> {
    pub time: T,
    pub vehicles: Vec<Vehicle<T>>,
}

#[derive(Debug, Clone)]
pub struct MicroRunOptions {
    /// Record a snapshot every this many steps (0 = only initial and final).
    pub snapshot_every: usize,
    /// Run the lane-change sweep after each continuous step.
    pub lane_changes: bool,
}

impl Default for MicroRunOptions {
    fn default() -> Self {
        Self {
            snapshot_every: 0,
            lane_changes: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MicroRun<T> {
    pub state: MicroState<T>,
    pub events: Vec<LaneChangeEvent<T>>,
    pub snapshots: Vec<MicroSnapshot<T>>,
    pub steps: usize,
    /// Sweeps whose post-sweep safety and count checks passed.
    pub sweeps_checked: usize,
    /// Step size actually used.
    pub dt: T,
}

/// Largest step honouring the travel bound: no vehicle covers more than a tenth of
/// `l + d_s` per step.
pub fn bounded_dt<T: Scalar>(dt: T, params: &ModelParams<T>) -> T {
    let bound = params.jam_spacing() / (T::lit(10.0) * params.max_vmax());
    dt.min(bound)
}

/// Alternates continuous steps and lane-change sweeps up to `horizon`.
///
/// After every sweep the vehicle count and the gaps of every vehicle that moved are
/// checked against the post-sweep configuration.
pub fn run_micro<T: Scalar>(
    mut state: MicroState<T>,
    horizon: T,
    dt: T,
    options: &MicroRunOptions,
) -> Result<MicroRun<T>> {
    if !(horizon > T::zero() && dt > T::zero()) {
        return Err(ModelError::Configuration(format!(
            "horizon {horizon} and step {dt} must be positive"
        )));
    }
    let dt = bounded_dt(dt, &state.params);
    let steps = (horizon / dt).ceil().to_usize().unwrap_or(usize::MAX).max(1);
    let start = state.time;
    let count = state.vehicles.len();
    let s = state.params.jam_spacing();
    let mut events = Vec::new();
    let mut snapshots = vec![MicroSnapshot {
        time: state.time,
        vehicles: state.vehicles.clone(),
    }];
    let mut sweeps_checked = 0;
    for step in 1..=steps {
        let target = start + horizon.min(T::from_count(step) * dt);
        let h = target - state.time;
        state.advance(h)?;
        state.time = target;
        if options.lane_changes {
            let moved = state.apply_lane_changes();
            if state.vehicles.len() != count {
                return Err(ModelError::CountNotConserved {
                    before: count,
                    after: state.vehicles.len(),
                });
            }
            for e in &moved {
                let (lead, follow) = state.own_gaps(e.vehicle)?;
                let gap = lead.min(follow);
                if !(gap > s) {
                    return Err(ModelError::SafetyViolation {
                        vehicle: e.vehicle,
                        lane: e.to_lane,
                        gap: gap.as_f64(),
                    });
                }
            }
            sweeps_checked += 1;
            events.extend(moved);
        }
        if options.snapshot_every > 0 && step % options.snapshot_every == 0 && step != steps {
            snapshots.push(MicroSnapshot {
                time: state.time,
                vehicles: state.vehicles.clone(),
            });
        }
    }
    snapshots.push(MicroSnapshot {
        time: state.time,
        vehicles: state.vehicles.clone(),
    });
    Ok(MicroRun {
        state,
        events,
        snapshots,
        steps,
        sweeps_checked,
        dt,
    })
}

#[inline]
fn wrap<T: Scalar>(x: T, length: T) -> T {
    let r = x % length;
    let r = if r < T::zero() { r + length } else { r };
    if r >= length {
        T::zero()
    } else {
        r
    }
}

fn dopri_a<T: Scalar>() -> [Vec<T>; 6] {
    let f = |n: f64, d: f64| T::lit(n) / T::lit(d);
    [
        vec![],
        vec![f(1.0, 5.0)],
        vec![f(3.0, 40.0), f(9.0, 40.0)],
        vec![f(44.0, 45.0), f(-56.0, 15.0), f(32.0, 9.0)],
        vec![
            f(19372.0, 6561.0),
            f(-25360.0, 2187.0),
            f(64448.0, 6561.0),
            f(-212.0, 729.0),
        ],
        vec![
            f(9017.0, 3168.0),
            f(-355.0, 33.0),
            f(46732.0, 5247.0),
            f(49.0, 176.0),
            f(-5103.0, 18656.0),
        ],
    ]
}

fn dopri_b<T: Scalar>() -> [T; 6] {
    let f = |n: f64, d: f64| T::lit(n) / T::lit(d);
    [
        f(35.0, 384.0),
        T::zero(),
        f(500.0, 1113.0),
        f(125.0, 192.0),
        f(-2187.0, 6784.0),
        f(11.0, 84.0),
    ]
}
