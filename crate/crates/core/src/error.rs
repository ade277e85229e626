use thiserror::Error;

/// Errors raised by the model kernels and simulators.
///
/// Values are reported as `f64` regardless of the scalar type in use.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{what} = {value} outside admissible range [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("amplification denominator {denominator} is not positive")]
    NumericalDomain { denominator: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("lane {lane} is not in 1..={lane_count}")]
    LaneOutOfRange { lane: usize, lane_count: usize },

    #[error("lane {to} is not adjacent to lane {from}")]
    NotAdjacent { from: usize, to: usize },

    #[error("unknown vehicle id {0}")]
    UnknownVehicle(usize),

    #[error("invalid configuration: {0}")]
    Configuration(String),

    #[error("in-lane ordering violated in lane {lane} at t = {time}; integration step too large")]
    StepTooLarge { lane: usize, time: f64 },

    #[error("lane change safety violated: vehicle {vehicle} in lane {lane} has gap {gap}")]
    SafetyViolation { vehicle: usize, lane: usize, gap: f64 },

    #[error("vehicle count changed from {before} to {after}")]
    CountNotConserved { before: usize, after: usize },

    #[error("scheme failure: lane {lane}, cell {cell} has density {value} at t = {time}")]
    SchemeFailure {
        lane: usize,
        cell: usize,
        value: f64,
        time: f64,
    },

    #[error("{0}")]
    NotApplicable(String),

    #[error("state ({rho_1}, {rho_2}) is not an equilibrium")]
    NotEquilibrium { rho_1: f64, rho_2: f64 },
}

pub type Result<T> = std::result::Result<T, ModelError>;
