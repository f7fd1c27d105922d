//! Simulation and numerical certification of switched nonlinear
//! time-varying systems under constrained switching.
//!
//! Modes are 1-based throughout ([`ModeIndex`]). Randomized routines take an
//! explicit `u64` seed and are reproducible regardless of thread count.

pub mod error;
pub mod integrate;
pub mod io;
pub mod limiting;
pub mod lyapunov;
pub mod model;
pub mod rng;
pub mod signals;
pub mod stability;
pub mod systems;

pub use error::{Error, Result};
pub use integrate::{simulate, simulate_relaxed, simulate_with_covering, CoveringPolicy, IntegratorConfig};
pub use model::{
    active_index_set, admissible_control_set, nesting_radius, norm, signal_to_control, Covering, Drive, HalfSpace, ModeIndex,
    RelaxedControl, SimplexPoint, SwitchedSystem, SwitchingSignal, Trajectory,
};
