//! Constant states of the two-lane system.
//!
//! For spatially uniform data the balance laws reduce to the scalar ODE
//! `rho_1' = S_1(rho_1, M - rho_1)` on the anti-diagonal `rho_1 + rho_2 = M`.
//! Its right-hand side is discontinuous where the lane speeds cross, so
//! trajectories either stop where the transfer switches off (source empty, target
//! at `mu`) or slide into the speed-equality line and stay there.
//!
//! Lane 1 is the slow lane: `vmax_1 < vmax_2`.

use crate::error::{ModelError, Result};
use crate::kernel::{amplification_unchecked, g_derivative, seeded_transfer};
use crate::params::{ModelParams, SpeedLaw, SpeedLawKind};
use crate::scalar::Scalar;

pub const DEFAULT_TOL_EQ: f64 = 2e-3;
pub const DEFAULT_ODE_DT: f64 = 1e-3;
/// Largest gap to the predicted stopping point closed when the integrator stalls.
pub const STALL_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassTag {
    /// Equal speeds, both lanes below `mu`.
    A,
    /// Equal speeds, slow lane at or above `mu`.
    B1,
    /// Equal speeds, `rho_1 < mu <= rho_2`.
    B2,
    /// Different speeds, both lanes at or above `mu`.
    C,
    /// Slow lane slower, `rho_1 < mu <= rho_2`.
    D,
    /// Empty slow lane, fast lane at least as fast as the slow lane's free speed.
    E,
    NotEquilibrium,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumClass<T> {
    pub tag: ClassTag,
    /// Common speed for the equal-speed classes.
    pub v_eq: Option<T>,
    pub rho_1_mu: T,
    pub rho_2_mu: T,
    /// Set for B1, which the stability analysis treats as part of C.
    pub merged_into_c: bool,
}

impl<T> EquilibriumClass<T> {
    pub fn is_equilibrium(&self) -> bool {
        self.tag != ClassTag::NotEquilibrium
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityTag {
    GloballyAsymptoticallyStable,
    AsymptoticallyStable,
    MarginallyStable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict<T> {
    pub tag: StabilityTag,
    /// Predicted limit `(rho_1, rho_2)` of the perturbed state.
    pub limit: (T, T),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalDensities<T> {
    pub rho_1_mu: T,
    pub rho_2_mu: T,
    pub v_1_mu: T,
    pub v_2_mu: T,
}

/// Uniform trajectory `(t, rho_1, rho_2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub rho_1: Vec<T>,
    pub rho_2: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> (T, T) {
        let n = self.times.len() - 1;
        (self.rho_1[n], self.rho_2[n])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortraitTrajectory<T> {
    pub start: (T, T),
    pub trajectory: Trajectory<T>,
    pub endpoint: EquilibriumClass<T>,
}

/// Two-lane model with `vmax_1 < vmax_2`.
#[derive(Debug, Clone)]
pub struct TwoLaneSystem<T> {
    pub params: ModelParams<T>,
    pub laws: [SpeedLaw<T>; 2],
    pub tol_eq: T,
}

impl<T: Scalar> TwoLaneSystem<T> {
    pub fn new(params: ModelParams<T>) -> Result<Self> {
        params.validate()?;
        if params.lane_count != 2 {
            return Err(ModelError::InvalidParams(format!(
                "two lanes required, got {}",
                params.lane_count
            )));
        }
        params.check_lane_ordering()?;
        let laws = [params.law(1)?, params.law(2)?];
        Ok(Self {
            params,
            laws,
            tol_eq: T::lit(DEFAULT_TOL_EQ),
        })
    }

    pub fn with_tol_eq(mut self, tol_eq: T) -> Self {
        self.tol_eq = tol_eq;
        self
    }

    fn mu(&self) -> T {
        self.params.mu
    }

    fn rho_max(&self) -> T {
        self.params.rho_max
    }

    fn check_state(&self, rho_1: T, rho_2: T) -> Result<()> {
        for (what, r) in [("rho_1", rho_1), ("rho_2", rho_2)] {
            if !(r >= T::zero() && r <= self.rho_max()) {
                return Err(ModelError::Domain {
                    what,
                    value: r.as_f64(),
                    lo: 0.0,
                    hi: self.rho_max().as_f64(),
                });
            }
        }
        Ok(())
    }

    pub fn critical_densities(&self) -> CriticalDensities<T> {
        let [l1, l2] = &self.laws;
        let v_1_mu = l1.speed_clamped(self.mu());
        let v_2_mu = l2.speed_clamped(self.mu());
        // v_2(mu) may exceed vmax_1; the inverse then saturates at an empty lane.
        let rho_1_mu = l1.speed_inverse(v_2_mu.min(l1.vmax)).unwrap_or(T::zero());
        let rho_2_mu = l2.speed_inverse(v_1_mu).unwrap_or(T::zero());
        CriticalDensities {
            rho_1_mu,
            rho_2_mu,
            v_1_mu,
            v_2_mu,
        }
    }

    /// `rho_2 = rho_max (1 - (vmax_1 / vmax_2)(1 - rho_1 / rho_max))`: the states of
    /// equal speed.
    pub fn equilibrium_curve(&self, rho_1: T) -> Result<T> {
        let [l1, l2] = &self.laws;
        match (l1.kind, l2.kind) {
            (SpeedLawKind::Linear, SpeedLawKind::Linear) => {
                let r = self.rho_max();
                if !(rho_1 >= T::zero() && rho_1 <= r) {
                    return Err(ModelError::Domain {
                        what: "rho_1",
                        value: rho_1.as_f64(),
                        lo: 0.0,
                        hi: r.as_f64(),
                    });
                }
                Ok(r * (T::one() - (l1.vmax / l2.vmax) * (T::one() - rho_1 / r)))
            }
        }
    }

    pub fn classify(&self, rho_1: T, rho_2: T) -> Result<EquilibriumClass<T>> {
        self.check_state(rho_1, rho_2)?;
        let crit = self.critical_densities();
        let mu = self.mu();
        let v1 = self.laws[0].speed_clamped(rho_1);
        let v2 = self.laws[1].speed_clamped(rho_2);
        let equal = (v1 - v2).abs() <= self.tol_eq;
        let mut out = EquilibriumClass {
            tag: ClassTag::NotEquilibrium,
            v_eq: None,
            rho_1_mu: crit.rho_1_mu,
            rho_2_mu: crit.rho_2_mu,
            merged_into_c: false,
        };
        let e_bound = self.laws[1].speed_inverse(self.laws[0].vmax).unwrap_or(T::zero());
        out.tag = if equal && rho_1 < mu && rho_2 < mu {
            ClassTag::A
        } else if equal && rho_1 >= mu {
            out.merged_into_c = true;
            ClassTag::B1
        } else if equal && rho_1 < mu && mu <= rho_2 && rho_2 < crit.rho_2_mu {
            ClassTag::B2
        } else if !equal && rho_1 >= mu && rho_2 >= mu {
            ClassTag::C
        } else if v1 < v2 && rho_1 < mu && mu <= rho_2 && rho_2 <= crit.rho_2_mu {
            ClassTag::D
        } else if rho_1 == T::zero() && rho_2 <= e_bound {
            ClassTag::E
        } else {
            ClassTag::NotEquilibrium
        };
        if equal && out.tag != ClassTag::NotEquilibrium {
            out.v_eq = Some(T::half() * (v1 + v2));
        }
        Ok(out)
    }

    /// `(S_1, S_2)` for uniform densities, `S_2 = -S_1` exactly.
    pub fn homogeneous_rhs(&self, rho_1: T, rho_2: T) -> (T, T) {
        let s1 = self.source_1(rho_1, rho_2);
        (s1, -s1)
    }

    fn source_1(&self, rho_1: T, rho_2: T) -> T {
        let [l1, l2] = &self.laws;
        let gain = seeded_transfer(rho_2, rho_1, l2, l1, &self.params);
        let loss = seeded_transfer(rho_1, rho_2, l1, l2, &self.params);
        gain - loss
    }

    /// Admissible `rho_1` range on the line `rho_1 + rho_2 = total`.
    fn line_bounds(&self, total: T) -> (T, T) {
        let r = self.rho_max();
        ((total - r).max(T::zero()), total.min(r))
    }

    /// Classical RK4 on `rho_1` with `rho_2 = total - rho_1`. When the sign of the
    /// right-hand side changes across a step, the step is cut back to the switching
    /// point found by bisection.
    pub fn integrate_homogeneous(&self, start: (T, T), horizon: T, dt: T) -> Result<Trajectory<T>> {
        self.integrate_strided(start, horizon, dt, 1)
    }

    /// [`TwoLaneSystem::integrate_homogeneous`] recording every `stride`-th step
    /// (and always the last one).
    pub fn integrate_strided(&self, start: (T, T), horizon: T, dt: T, stride: usize) -> Result<Trajectory<T>> {
        self.check_state(start.0, start.1)?;
        if !(horizon >= T::zero() && dt > T::zero()) {
            return Err(ModelError::Configuration(format!(
                "horizon {horizon} and step {dt} must be non-negative and positive"
            )));
        }
        let stride = stride.max(1);
        let total = start.0 + start.1;
        let (lo, hi) = self.line_bounds(total);
        let f = |r: T| self.source_1(r.clamp_to(lo, hi), total - r.clamp_to(lo, hi));
        let mut traj = Trajectory {
            times: vec![T::zero()],
            rho_1: vec![start.0],
            rho_2: vec![start.1],
        };
        let steps = (horizon / dt).ceil().to_usize().unwrap_or(0);
        let mut r = start.0;
        let two = T::two();
        let six = T::lit(6.0);
        for n in 1..=steps {
            let t = horizon.min(T::from_count(n) * dt);
            let h = t - T::from_count(n - 1) * dt;
            let f0 = f(r);
            if f0 != T::zero() {
                let k1 = f0;
                let k2 = f(r + h / two * k1);
                let k3 = f(r + h / two * k2);
                let k4 = f(r + h * k3);
                // Stages straddling a switching surface would mix both sides; take an
                // Euler step there and let the bisection below locate the switch.
                let straddles = [k2, k3, k4].iter().any(|&k| sign(k) != sign(f0));
                let increment = if straddles {
                    h * k1
                } else {
                    h / six * (k1 + two * k2 + two * k3 + k4)
                };
                let mut next = (r + increment).clamp_to(lo, hi);
                let f1 = f(next);
                if sign(f1) != sign(f0) {
                    next = switching_point(&f, r, next, sign(f0));
                } else if next == r {
                    // The step no longer resolves the approach to a stop where the
                    // rate vanishes continuously (target lane at mu); finish it.
                    let stop = self.flow_limit((r, total - r)).0;
                    if (stop - r).abs() <= T::lit(STALL_SNAP) * self.rho_max() {
                        next = stop;
                    }
                }
                r = next;
            }
            if n % stride == 0 || n == steps {
                traj.times.push(t);
                traj.rho_1.push(r);
                traj.rho_2.push(total - r);
            }
        }
        Ok(traj)
    }

    /// Final state of [`TwoLaneSystem::integrate_homogeneous`] without storing the path.
    pub fn homogeneous_endpoint(&self, start: (T, T), horizon: T, dt: T) -> Result<(T, T)> {
        let steps = (horizon / dt).ceil().to_usize().unwrap_or(1).max(1);
        Ok(self.integrate_strided(start, horizon, dt, steps)?.last())
    }

    /// True if uniform flow at `(rho_1, rho_2)` cannot move: the right-hand side is
    /// zero, or it points inward from both sides of the line within `eta`.
    pub fn is_rest_point(&self, rho_1: T, rho_2: T, eta: T) -> bool {
        let total = rho_1 + rho_2;
        let (lo, hi) = self.line_bounds(total);
        let f = |r: T| self.source_1(r, total - r);
        let f0 = f(rho_1);
        if f0 == T::zero() {
            return true;
        }
        let below = if rho_1 - eta >= lo { f(rho_1 - eta) } else { T::zero() };
        let above = if rho_1 + eta <= hi { f(rho_1 + eta) } else { T::zero() };
        (rho_1 <= lo && f0 < T::zero())
            || (rho_1 >= hi && f0 > T::zero())
            || (below >= T::zero() && above <= T::zero())
    }

    /// Exponential rate of return to a class-A point (or class-E with `eps > 0`):
    /// `rho_t * A(rho_s, rho_t) * g'`, where the lane that gained mass is the source.
    pub fn linear_decay_rate(&self, eq: (T, T), eps_sign: T) -> Result<T> {
        let class = self.classify(eq.0, eq.1)?;
        let positive = eps_sign > T::zero();
        match class.tag {
            ClassTag::A => {}
            ClassTag::E if positive => {}
            other => {
                return Err(ModelError::NotApplicable(format!(
                    "linearized decay defined for class A (or E with eps > 0), got {other:?}"
                )))
            }
        }
        let (source, target) = if positive { (eq.0, eq.1) } else { (eq.1, eq.0) };
        if target == T::zero() {
            return Ok(T::zero());
        }
        let a = amplification_unchecked(source, target, self.rho_max())?;
        Ok(target * a * g_derivative(self.rho_max()))
    }

    /// Stability of equilibrium `eq` under the uniform shift `eps_rho0` (lane 1 gains,
    /// lane 2 loses). The limit is where the flow along `rho_1 + rho_2 = const`
    /// first stops: the source lane empties, the speeds equalize, or the target lane
    /// reaches `mu`.
    pub fn predict_stability(&self, eq: (T, T), eps_rho0: T) -> Result<StabilityVerdict<T>> {
        let class = self.classify(eq.0, eq.1)?;
        if !class.is_equilibrium() {
            return Err(ModelError::NotEquilibrium {
                rho_1: eq.0.as_f64(),
                rho_2: eq.1.as_f64(),
            });
        }
        let start = (eq.0 + eps_rho0, eq.1 - eps_rho0);
        self.check_state(start.0, start.1)?;
        let limit = self.flow_limit(start);
        let tag = match class.tag {
            ClassTag::A | ClassTag::E => StabilityTag::GloballyAsymptoticallyStable,
            _ => {
                let scale = T::lit(1e-12);
                if (limit.0 - eq.0).abs() <= scale && (limit.1 - eq.1).abs() <= scale {
                    StabilityTag::AsymptoticallyStable
                } else {
                    StabilityTag::MarginallyStable
                }
            }
        };
        Ok(StabilityVerdict { tag, limit })
    }

    /// End point of the uniform flow from `start`, computed from the switching
    /// geometry rather than by integration.
    pub fn flow_limit(&self, start: (T, T)) -> (T, T) {
        let total = start.0 + start.1;
        let (lo, hi) = self.line_bounds(total);
        let f0 = self.source_1(start.0, start.1);
        let mu = self.mu();
        let r_eq = self.speed_equality_on_line(total);
        let r = if f0 < T::zero() {
            // Lane 1 drains into lane 2: rho_1 decreases.
            let mut stop = lo;
            if let Some(x) = r_eq {
                if x < start.0 {
                    stop = stop.max(x);
                }
            }
            let target_full = total - mu;
            if target_full < start.0 {
                stop = stop.max(target_full);
            }
            stop
        } else if f0 > T::zero() {
            let mut stop = hi;
            if let Some(x) = r_eq {
                if x > start.0 {
                    stop = stop.min(x);
                }
            }
            if mu > start.0 {
                stop = stop.min(mu);
            }
            stop
        } else {
            start.0
        };
        (r, total - r)
    }

    /// `rho_1` on `rho_1 + rho_2 = total` where the lane speeds agree, if admissible.
    fn speed_equality_on_line(&self, total: T) -> Option<T> {
        let [l1, l2] = &self.laws;
        let (lo, hi) = self.line_bounds(total);
        let r = match (l1.kind, l2.kind) {
            (SpeedLawKind::Linear, SpeedLawKind::Linear) => {
                // a (1 - x / R) = b (1 - (total - x) / R)
                let (a, b, rm) = (l1.vmax, l2.vmax, self.rho_max());
                (rm * (a - b) + b * total) / (a + b)
            }
        };
        (r >= lo && r <= hi).then_some(r)
    }

    pub fn phase_portrait(
        &self,
        starts: &[(T, T)],
        horizon: T,
        dt: T,
        stride: usize,
    ) -> Result<Vec<PortraitTrajectory<T>>> {
        starts
            .iter()
            .map(|&start| {
                let trajectory = self.integrate_strided(start, horizon, dt, stride)?;
                let (r1, r2) = trajectory.last();
                let endpoint = self.classify(r1, r2)?;
                Ok(PortraitTrajectory {
                    start,
                    trajectory,
                    endpoint,
                })
            })
            .collect()
    }
}

fn sign<T: Scalar>(x: T) -> i8 {
    if x > T::zero() {
        1
    } else if x < T::zero() {
        -1
    } else {
        0
    }
}

/// Bisects `[a, b]` for the point where `f` stops having sign `s`; returns the
/// first point past it.
fn switching_point<T: Scalar>(f: &impl Fn(T) -> T, a: T, b: T, s: i8) -> T {
    let (mut inside, mut outside) = (a, b);
    for _ in 0..200 {
        let mid = T::half() * (inside + outside);
        if mid == inside || mid == outside {
            break;
        }
        if sign(f(mid)) == s {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    outside
}
