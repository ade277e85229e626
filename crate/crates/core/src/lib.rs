//! First-order multi-lane traffic flow.
//!
//! * [`micro`]: follow-the-leader dynamics on a ring road with instantaneous lane
//!   changes driven by an incentive and a safety criterion.
//! * [`macroscopic`]: the derived system of balance laws, one per lane, solved by a
//!   first-order finite-volume scheme with Rusanov flux and a lane-change source.
//! * [`equilibria`]: classification and stability of constant two-lane states.
//! * [`kernel`]: the closed-form lane-change kernels shared by all of the above.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the `*64` aliases below
//! fix the scalar to `f64`.

pub mod equilibria;
pub mod error;
pub mod kernel;
pub mod macroscopic;
pub mod micro;
pub mod params;
pub mod scalar;

pub use error::{ModelError, Result};
pub use params::{ModelParams, SpeedLaw, SpeedLawKind};
pub use scalar::Scalar;

pub type ModelParams64 = ModelParams<f64>;
pub type SpeedLaw64 = SpeedLaw<f64>;
pub type MicroState64 = micro::MicroState<f64>;
pub type Grid64 = macroscopic::Grid<f64>;
pub type DensityField64 = macroscopic::DensityField<f64>;
pub type BoundaryCondition64 = macroscopic::BoundaryCondition<f64>;
pub type MacroModel64 = macroscopic::MacroModel<f64>;
pub type TwoLaneSystem64 = equilibria::TwoLaneSystem<f64>;
pub type EquilibriumClass64 = equilibria::EquilibriumClass<f64>;
pub type StabilityVerdict64 = equilibria::StabilityVerdict<f64>;
