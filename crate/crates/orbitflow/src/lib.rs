//! orbitflow: mean curvature flow of isometry-group orbits on compact
//! manifolds, reduced to an ODE on the ambient manifold, together with the
//! moment-map machinery that characterizes minimal Lagrangian orbits in the
//! Kaehler-Einstein setting.
//!
//! The crate is organized as a library with a small CLI on top:
//!
//! - [`numerics`]: small-matrix helpers, finite differences, seeded Monte
//!   Carlo means, and an adaptive embedded Runge-Kutta integrator that
//!   re-retracts onto the manifold and supports event detection.
//! - [`manifolds`]: built-in compact manifolds embedded in Euclidean space
//!   (spheres, products, complex/real projective spaces) with retraction,
//!   tangent projection, Kaehler structure and uniform sampling.
//! - [`actions`]: group actions as lists of Lie-algebra generators;
//!   fundamental fields, Gram matrices, orbit dimension and stratification,
//!   derived subalgebras, vanishing-direction analysis.
//! - [`flow`]: orbit volume from the Gram spectrum, mean curvature as the
//!   projected gradient of the log-volume, forward/backward flow with
//!   collapse/convergence detection, and flow diagnostics.
//! - [`kaehler`]: canonically normalized moment maps, isotropy/Lagrangian
//!   predicates, and verification of the flow/moment-map laws.
//! - [`scenarios`]: the built-in scenario registry.
//! - [`runner`]: batch execution, invariant-suite runner, trace/summary
//!   serialization, and the configuration surface used by the CLI.
//!
//! See the crate examples for runnable walk-throughs of each capability.

pub mod actions;
pub mod flow;
pub mod kaehler;
pub mod manifolds;
pub mod numerics;
pub mod runner;
pub mod scenarios;

pub use actions::{Action, Generator};
pub use flow::{FlowParams, FlowTrace, OrbitState};
pub use kaehler::{MomentMap, MomentValue};
pub use manifolds::{Manifold, ManifoldKind, Point};
pub use numerics::{StepControl, Terminal};
pub use scenarios::Scenario;





