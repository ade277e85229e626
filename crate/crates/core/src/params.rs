//! Model constants and per-lane speed laws.

use crate::error::{ModelError, Result};
use crate::scalar::Scalar;

/// Shape of a lane's density-speed relation.
#[non_exhaustive]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpeedLawKind {
    /// `v(rho) = vmax * (1 - rho / rho_max)`.
    #[default]
    Linear,
}

/// Macroscopic speed law of one lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedLaw<T> {
    pub kind: SpeedLawKind,
    pub vmax: T,
    pub rho_max: T,
}

impl<T: Scalar> SpeedLaw<T> {
    pub fn linear(vmax: T, rho_max: T) -> Self {
        Self {
            kind: SpeedLawKind::Linear,
            vmax,
            rho_max,
        }
    }

    fn check_density(&self, rho: T) -> Result<()> {
        if rho >= T::zero() && rho <= self.rho_max {
            Ok(())
        } else {
            Err(ModelError::Domain {
                what: "density",
                value: rho.as_f64(),
                lo: 0.0,
                hi: self.rho_max.as_f64(),
            })
        }
    }

    /// Speed at density `rho`, which must lie in `[0, rho_max]`.
    pub fn speed(&self, rho: T) -> Result<T> {
        self.check_density(rho)?;
        Ok(self.speed_clamped(rho))
    }

    /// Speed with `rho` clamped into `[0, rho_max]`. Used in the solver hot loops,
    /// where densities may sit a rounding error outside the box.
    #[inline]
    pub fn speed_clamped(&self, rho: T) -> T {
        let rho = rho.clamp_to(T::zero(), self.rho_max);
        match self.kind {
            SpeedLawKind::Linear => self.vmax * (T::one() - rho / self.rho_max),
        }
    }

    /// The unique density with `speed(rho) == v`.
    pub fn speed_inverse(&self, v: T) -> Result<T> {
        if !(v >= T::zero() && v <= self.vmax) {
            return Err(ModelError::Domain {
                what: "speed",
                value: v.as_f64(),
                lo: 0.0,
                hi: self.vmax.as_f64(),
            });
        }
        Ok(match self.kind {
            SpeedLawKind::Linear => self.rho_max * (T::one() - v / self.vmax),
        })
    }

    /// Flow `rho * v(rho)`.
    pub fn flux(&self, rho: T) -> Result<T> {
        self.check_density(rho)?;
        Ok(self.flux_clamped(rho))
    }

    #[inline]
    pub fn flux_clamped(&self, rho: T) -> T {
        let rho = rho.clamp_to(T::zero(), self.rho_max);
        rho * self.speed_clamped(rho)
    }

    /// Characteristic speed `f'(rho)`.
    #[inline]
    pub fn flux_derivative(&self, rho: T) -> T {
        let rho = rho.clamp_to(T::zero(), self.rho_max);
        match self.kind {
            SpeedLawKind::Linear => self.vmax * (T::one() - T::two() * rho / self.rho_max),
        }
    }
}

/// Scalar constants of the multi-lane model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub lane_count: usize,
    pub vehicle_length: T,
    pub safety_distance: T,
    pub rho_max: T,
    /// Critical density, always `rho_max / 2`.
    pub mu: T,
    /// Lane-change frequency, shared by every lane pair.
    pub nu: T,
    /// Maximum speed of each lane, lane 1 first.
    pub vmax: Vec<T>,
    /// Density floor used for the `A * rho_target` product when the target lane
    /// is (nearly) empty. Zero disables it. See [`crate::kernel::seeded_transfer`].
    pub empty_lane_seed: T,
}

impl<T: Scalar> ModelParams<T> {
    /// Parameters with `rho_max = 1`, `mu = 1/2`, `nu = 1` and no empty-lane seed.
    pub fn new(vehicle_length: T, safety_distance: T, vmax: Vec<T>) -> Result<Self> {
        let p = Self {
            lane_count: vmax.len(),
            vehicle_length,
            safety_distance,
            rho_max: T::one(),
            mu: T::half(),
            nu: T::one(),
            vmax,
            empty_lane_seed: T::zero(),
        };
        p.validate()?;
        Ok(p)
    }

    /// The normalized setup of the numerical experiments: `l = d_s = 1/300`.
    pub fn normalized(vmax: Vec<T>) -> Result<Self> {
        let l = T::one() / T::lit(300.0);
        Self::new(l, l, vmax)
    }

    pub fn with_rho_max(mut self, rho_max: T) -> Result<Self> {
        self.rho_max = rho_max;
        self.mu = rho_max * T::half();
        self.validate()?;
        Ok(self)
    }

    pub fn with_nu(mut self, nu: T) -> Result<Self> {
        self.nu = nu;
        self.validate()?;
        Ok(self)
    }

    pub fn with_empty_lane_seed(mut self, seed: T) -> Result<Self> {
        self.empty_lane_seed = seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ModelError::InvalidParams(msg));
        if self.lane_count == 0 || self.vmax.len() != self.lane_count {
            return bad(format!(
                "lane_count {} does not match {} speed limits",
                self.lane_count,
                self.vmax.len()
            ));
        }
        if !(self.vehicle_length > T::zero()) {
            return bad(format!("vehicle length {} must be positive", self.vehicle_length));
        }
        if !(self.safety_distance > T::zero()) {
            return bad(format!("safety distance {} must be positive", self.safety_distance));
        }
        if !(self.rho_max > T::zero()) {
            return bad(format!("rho_max {} must be positive", self.rho_max));
        }
        if !(self.nu > T::zero()) {
            return bad(format!("nu {} must be positive", self.nu));
        }
        if self.mu != self.rho_max * T::half() {
            return bad(format!("mu {} must equal rho_max / 2", self.mu));
        }
        if let Some(v) = self.vmax.iter().find(|v| !(**v > T::zero())) {
            return bad(format!("maximum speed {v} must be positive"));
        }
        if !(self.empty_lane_seed >= T::zero() && self.empty_lane_seed < self.mu) {
            return bad(format!(
                "empty lane seed {} must lie in [0, mu)",
                self.empty_lane_seed
            ));
        }
        Ok(())
    }

    /// Checks `vmax_1 < vmax_2 < ... < vmax_J`. Required by the equilibrium analysis;
    /// the simulators accept any positive speeds.
    pub fn check_lane_ordering(&self) -> Result<()> {
        for (j, w) in self.vmax.windows(2).enumerate() {
            if !(w[0] < w[1]) {
                return Err(ModelError::InvalidParams(format!(
                    "maximum speeds must increase with lane index: lane {} has {}, lane {} has {}",
                    j + 1,
                    w[0],
                    j + 2,
                    w[1]
                )));
            }
        }
        Ok(())
    }

    /// `l + d_s`, the bumper-to-bumper spacing at maximum density.
    #[inline]
    pub fn jam_spacing(&self) -> T {
        self.vehicle_length + self.safety_distance
    }

    pub fn laws(&self) -> Vec<SpeedLaw<T>> {
        self.vmax
            .iter()
            .map(|&v| SpeedLaw::linear(v, self.rho_max))
            .collect()
    }

    /// Law of lane `lane` (1-based).
    pub fn law(&self, lane: usize) -> Result<SpeedLaw<T>> {
        self.check_lane(lane)?;
        Ok(SpeedLaw::linear(self.vmax[lane - 1], self.rho_max))
    }

    pub fn check_lane(&self, lane: usize) -> Result<()> {
        if lane == 0 || lane > self.lane_count {
            Err(ModelError::LaneOutOfRange {
                lane,
                lane_count: self.lane_count,
            })
        } else {
            Ok(())
        }
    }

    /// Target lanes of `lane` (1-based): its existing neighbours.
    pub fn target_lanes(&self, lane: usize) -> impl Iterator<Item = usize> + '_ {
        [lane.wrapping_sub(1), lane + 1]
            .into_iter()
            .filter(move |&k| k >= 1 && k <= self.lane_count && k != lane)
    }

    pub fn max_vmax(&self) -> T {
        self.vmax.iter().fold(T::zero(), |m, &v| m.max(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn speed_examples() {
        let l = SpeedLaw::linear(1.0, 1.0);
        assert_eq!(l.speed(0.0).unwrap(), 1.0);
        let l = SpeedLaw::linear(0.7, 1.0);
        assert_eq!(l.speed(1.0).unwrap(), 0.0);
        assert!(close(l.speed(0.27).unwrap(), 0.511));
        assert!(l.speed(1.01).is_err());
        assert!(l.speed(-0.01).is_err());
    }

    #[test]
    fn speed_inverse_examples() {
        assert_eq!(SpeedLaw::linear(1.0, 1.0).speed_inverse(1.0).unwrap(), 0.0);
        assert!(close(SpeedLaw::linear(0.7, 1.0).speed_inverse(0.35).unwrap(), 0.5));
        assert!(close(SpeedLaw::linear(1.0, 1.0).speed_inverse(0.7).unwrap(), 0.3));
        assert!(SpeedLaw::linear(0.7, 1.0).speed_inverse(0.71).is_err());
    }

    #[test]
    fn flux_examples() {
        let l = SpeedLaw::linear(1.0, 1.0);
        assert_eq!(l.flux(0.0).unwrap(), 0.0);
        assert_eq!(l.flux(1.0).unwrap(), 0.0);
        assert_eq!(l.flux(0.5).unwrap(), 0.25);
        assert_eq!(l.flux_derivative(0.5), 0.0);
        assert!(l.flux(2.0).is_err());
    }

    #[test]
    fn mu_is_half_rho_max() {
        let p = ModelParams::normalized(vec![0.7, 1.0]).unwrap();
        assert_eq!(p.mu, p.rho_max / 2.0);
        let p = p.with_rho_max(2.0).unwrap();
        assert_eq!(p.mu, 1.0);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::new(0.0, 0.1, vec![1.0]).is_err());
        assert!(ModelParams::new(0.1, -0.1, vec![1.0]).is_err());
        assert!(ModelParams::new(0.1, 0.1, vec![]).is_err());
        assert!(ModelParams::new(0.1, 0.1, vec![1.0, 0.0]).is_err());
        assert!(ModelParams::new(0.1, 0.1, vec![1.0]).unwrap().with_nu(0.0).is_err());
    }

    #[test]
    fn lane_ordering_is_validated() {
        let p = ModelParams::normalized(vec![0.7, 1.0]).unwrap();
        assert!(p.check_lane_ordering().is_ok());
        let p = ModelParams::normalized(vec![1.0, 0.7]).unwrap();
        assert!(p.check_lane_ordering().is_err());
        let p = ModelParams::normalized(vec![1.0, 1.0]).unwrap();
        assert!(p.check_lane_ordering().is_err());
    }

    #[test]
    fn target_sets() {
        let p = ModelParams::normalized(vec![0.6, 0.7, 1.0]).unwrap();
        assert_eq!(p.target_lanes(1).collect::<Vec<_>>(), vec![2]);
        assert_eq!(p.target_lanes(2).collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(p.target_lanes(3).collect::<Vec<_>>(), vec![2]);
        let single = ModelParams::normalized(vec![1.0]).unwrap();
        assert_eq!(single.target_lanes(1).count(), 0);
    }

    #[test]
    fn works_in_f32() {
        let l = SpeedLaw::<f32>::linear(0.7, 1.0);
        assert!((l.speed(0.27).unwrap() - 0.511).abs() < 1e-6);
    }
}
