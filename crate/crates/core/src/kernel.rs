//! Closed-form lane-change kernels shared by the microscopic, macroscopic and
//! equilibrium modules.
//!
//! Densities are dimensionless. The placement weight `lambda`, the transferred
//! fraction `g` and the amplification factor `A` are the linear choices; `A` is
//! written in terms of `rho / rho_max` so that it reduces to the usual form when
//! `rho_max = 1`.
//!
//! The mass rate moved from a source lane into a target lane is
//!
//! ```text
//! nu * g(rho_t) * 1_lc * A(rho_s, rho_t) * rho_t
//! ```
//!
//! with `1_lc = 1` iff the target lane is strictly faster and strictly below the
//! critical density `mu`.

use crate::error::{ModelError, Result};
use crate::params::{ModelParams, SpeedLaw, SpeedLawKind};
use crate::scalar::Scalar;

fn domain<T: Scalar>(what: &'static str, value: T, lo: T, hi: T) -> ModelError {
    ModelError::Domain {
        what,
        value: value.as_f64(),
        lo: lo.as_f64(),
        hi: hi.as_f64(),
    }
}

/// Follow-the-leader speed for a headway: the lane's macroscopic law evaluated at
/// the local density `(l + d_s) / headway`, saturated at `rho_max`.
pub fn micro_speed<T: Scalar>(law: &SpeedLaw<T>, headway: T, params: &ModelParams<T>) -> Result<T> {
    if !(headway > T::zero()) {
        return Err(domain("headway", headway, T::zero(), T::infinity()));
    }
    Ok(micro_speed_unchecked(law, headway, params.jam_spacing()))
}

#[inline]
pub(crate) fn micro_speed_unchecked<T: Scalar>(law: &SpeedLaw<T>, headway: T, jam_spacing: T) -> T {
    if headway <= jam_spacing {
        return T::zero();
    }
    law.speed_clamped(law.rho_max * jam_spacing / headway)
}

/// Placement weight `lambda(rho) = 1 - rho / rho_max`.
pub fn lambda_fn<T: Scalar>(rho: T, rho_max: T) -> Result<T> {
    if !(rho >= T::zero() && rho <= rho_max) {
        return Err(domain("density", rho, T::zero(), rho_max));
    }
    Ok(T::one() - rho / rho_max)
}

/// Fraction of mass moving to the target lane, `g(rho) = 1 - 2 rho / rho_max`,
/// declared on `[0, mu]`.
pub fn g_fn<T: Scalar>(rho: T, rho_max: T) -> Result<T> {
    let mu = rho_max * T::half();
    if !(rho >= T::zero() && rho <= mu) {
        return Err(domain("target density", rho, T::zero(), mu));
    }
    Ok(T::one() - T::two() * rho / rho_max)
}

/// `d g / d rho`.
pub fn g_derivative<T: Scalar>(rho_max: T) -> T {
    -T::two() / rho_max
}

#[inline]
fn denominator<T: Scalar>(rho_source: T, rho_target: T, rho_max: T) -> T {
    let lambda = T::one() - rho_source / rho_max;
    lambda + (T::one() - T::two() * lambda) * (rho_target / rho_max)
}

/// Amplification factor `A(rho_s, rho_t) = 1 / (lambda(rho_s) + (1 - 2 lambda(rho_s)) rho_t) - 1`
/// on `(0, rho_max] x [0, mu)`.
pub fn amplification<T: Scalar>(rho_source: T, rho_target: T, rho_max: T) -> Result<T> {
    if !(rho_source > T::zero() && rho_source <= rho_max) {
        return Err(domain("source density", rho_source, T::zero(), rho_max));
    }
    let mu = rho_max * T::half();
    if !(rho_target >= T::zero() && rho_target < mu) {
        return Err(domain("target density", rho_target, T::zero(), mu));
    }
    amplification_unchecked(rho_source, rho_target, rho_max)
}

/// [`amplification`] without the domain checks on the densities; still rejects a
/// non-positive denominator.
pub fn amplification_unchecked<T: Scalar>(rho_source: T, rho_target: T, rho_max: T) -> Result<T> {
    let d = denominator(rho_source, rho_target, rho_max);
    if !(d > T::zero()) {
        return Err(ModelError::NumericalDomain {
            denominator: d.as_f64(),
        });
    }
    Ok(T::one() / d - T::one())
}

/// Lane-change indicator: 1 iff the target is strictly faster and strictly below `mu`.
#[inline]
pub fn lc_indicator<T: Scalar>(v_target: T, v_source: T, rho_target: T, mu: T) -> bool {
    v_target > v_source && rho_target < mu
}

/// Lane-change probability `g(rho_t) * 1_lc(rho_s, rho_t)`; `g` is only evaluated
/// where the indicator is one.
pub fn lc_probability<T: Scalar>(
    rho_source: T,
    rho_target: T,
    source_law: &SpeedLaw<T>,
    target_law: &SpeedLaw<T>,
    params: &ModelParams<T>,
) -> T {
    let v_target = target_law.speed_clamped(rho_target);
    let v_source = source_law.speed_clamped(rho_source);
    if lc_indicator(v_target, v_source, rho_target, params.mu) {
        let rho_t = rho_target.max(T::zero());
        T::one() - T::two() * rho_t / params.rho_max
    } else {
        T::zero()
    }
}

#[inline]
fn fused_product<T: Scalar>(rho_source: T, rho_target: T, rho_max: T) -> T {
    // A * rho_t with 1 - denominator expanded, so it stays bounded as rho_t -> 0
    // and avoids cancellation for small densities.
    let rho_s = rho_source.clamp_to(T::zero(), rho_max);
    let (s, t) = (rho_s / rho_max, rho_target / rho_max);
    rho_target * (s + t - T::two() * s * t) / denominator(rho_s, rho_target, rho_max)
}

/// Mass rate `nu * pi * A(rho_s, rho_t) * rho_t` moved from the source lane to the
/// target lane. Exactly zero for an empty source or an empty target.
pub fn transfer_kernel<T: Scalar>(
    rho_source: T,
    rho_target: T,
    source_law: &SpeedLaw<T>,
    target_law: &SpeedLaw<T>,
    params: &ModelParams<T>,
) -> T {
    if rho_source <= T::zero() || rho_target <= T::zero() {
        return T::zero();
    }
    let pi = lc_probability(rho_source, rho_target, source_law, target_law, params);
    if pi == T::zero() {
        return T::zero();
    }
    params.nu * pi * fused_product(rho_source, rho_target, params.rho_max)
}

/// [`transfer_kernel`] with the target density in the `A * rho_t` product floored at
/// `params.empty_lane_seed`: a vehicle entering an empty lane raises its density to
/// one vehicle per road length, so the gain of an empty lane does not vanish.
/// The indicator and `g` still see the actual target density. Identical to
/// [`transfer_kernel`] when the seed is zero or `rho_t >= seed`.
pub fn seeded_transfer<T: Scalar>(
    rho_source: T,
    rho_target: T,
    source_law: &SpeedLaw<T>,
    target_law: &SpeedLaw<T>,
    params: &ModelParams<T>,
) -> T {
    let seed = params.empty_lane_seed;
    if seed <= T::zero() || rho_target >= seed {
        return transfer_kernel(rho_source, rho_target, source_law, target_law, params);
    }
    if rho_source <= T::zero() {
        return T::zero();
    }
    let pi = lc_probability(rho_source, rho_target, source_law, target_law, params);
    if pi == T::zero() {
        return T::zero();
    }
    params.nu * pi * fused_product(rho_source, seed, params.rho_max)
}

/// Largest mass that can move from source to target before the transfer switches
/// off: the source empties, the speeds equalize, or the target reaches `mu`.
/// Zero when no transfer is active.
pub fn transfer_capacity<T: Scalar>(
    rho_source: T,
    rho_target: T,
    source_law: &SpeedLaw<T>,
    target_law: &SpeedLaw<T>,
    params: &ModelParams<T>,
) -> T {
    let v_t = target_law.speed_clamped(rho_target);
    let v_s = source_law.speed_clamped(rho_source);
    if !lc_indicator(v_t, v_s, rho_target, params.mu) {
        return T::zero();
    }
    // Moving delta lowers v_t and raises v_s; both laws are linear in density.
    let speed_gap = match (source_law.kind, target_law.kind) {
        (SpeedLawKind::Linear, SpeedLawKind::Linear) => {
            let slope = target_law.vmax / target_law.rho_max + source_law.vmax / source_law.rho_max;
            (v_t - v_s) / slope
        }
    };
    rho_source
        .max(T::zero())
        .min(speed_gap)
        .min(params.mu - rho_target)
}
