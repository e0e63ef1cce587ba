//! Collision-free, bracket-generating control-affine systems for `n` bodies
//! on the real line and on the circle.
//!
//! The crate builds explicit vector-field families `f_1, …, f_m` whose flows
//! keep every pair of adjacent bodies more than `ε` apart, certifies their
//! properties numerically (boundary tangency, closed-form multipliers, Lie
//! bracket formulas, full bracket rank), integrates the driftless dynamics
//! `ẋ = Σ u_ℓ f_ℓ(x)` and steers between any two separated configurations.
//!
//! Indexing follows the usual labeling of the construction: bodies, gaps
//! `ρ_j`, fields `f_ℓ` and rotation blocks `λ` are all 1-based in the public
//! API. Coordinate vectors are ordinary 0-based slices.

pub mod cli;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod plan;
pub mod sample;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use fields::{CaseTag, FieldFamily};
pub use geometry::{SeparationConfig, Space};
pub use plan::PlanResult;
pub use sim::{Control, ControlSchedule, Segment, Trajectory};
pub use verify::{RankReport, VerificationReport};
