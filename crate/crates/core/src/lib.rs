//! Ordering-flexible multi-robot convoying of a moving target.
//!
//! Every robot solves a small quadratic program per control step. The
//! program tracks the robot's local estimate of the target velocity while
//! two families of control-barrier-function constraints shape the motion:
//! a slack-relaxed *target approaching* row pulls the robot in, and hard
//! *collision-free* rows (one per sensing neighbor, plus optional static
//! obstacles) push it away. The balance of the two produces a convoying
//! formation whose spatial ordering is not assigned in advance.
//!
//! Module map:
//!
//! * [`vector`] / [`scenario`]: vectors, robot/target/world state, scenario
//!   configuration and validation of the standing assumptions.
//! * [`subtasks`]: barrier values and gradients, class-K gains, neighbor sets,
//!   constraint-row assembly.
//! * [`qp`]: the per-robot active-set solver, a brute-force grid oracle,
//!   closed-form diagnostics and KKT residuals.
//! * [`estimator`]: the local target-velocity estimator.
//! * [`sim`]: deterministic time stepping, breakdown events, unicycle adapter.
//! * [`metrics`]: convoy error, ordering sequence, Lyapunov value,
//!   stationarity residual and the objective report.

pub mod error;
pub mod estimator;
pub mod metrics;
pub mod qp;
pub mod scenario;
pub mod sim;
pub mod subtasks;
pub mod vector;

pub use error::{ConvoyError, Result};
pub use scenario::{
    validate_scenario, EventKind, EventSpec, Obstacle, RobotState, RobotStatus, ScenarioConfig,
    TargetMotionSpec, TargetState, ValidationReport,
};
pub use vector::{inf_norm, VecN};

/// Distances below this are treated as singular (norm gradients undefined).
pub const EPS_SING: f64 = 1e-9;
