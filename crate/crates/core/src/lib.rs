//! Wasserstein robustness verification for grid-image classifiers.
//!
//! Images are probability distributions on an `n × m` pixel grid. Fixing a
//! reference distribution `R`, every image `μ` can be written as `R + Aδ` for a
//! flow `δ` on the grid edges, and the 1-Wasserstein distance between two
//! images equals the smallest L1 norm of a flow between them. This crate uses
//! that change of variables to:
//!
//! * compute exact W1 distances and map images to flows ([`transport`]),
//! * rewrite a ReLU classifier so it reads flows instead of pixels ([`network`]),
//! * certify W1 balls by certifying L1 balls (optionally intersected with the
//!   feasible-flow polytope) in the flow domain ([`certify`]),
//! * attack classifiers with projected gradient descent in the flow domain ([`attack`]).
//!
//! The LP solver in [`linprog`] backs the exact W1 computation, the polytope
//! bounds and the attack projection.

pub mod attack;
pub mod certify;
pub mod commands;
pub mod data;
pub mod error;
pub mod grid;
pub mod linprog;
pub mod network;
pub mod tol;
pub mod transport;

pub use error::{Error, Result};
pub use grid::{apply_flow, flow_l1, is_feasible, Flow, FlowMatrix, GridImage, GridShape, RawGrid};
pub use linprog::{solve_lp, LinearProgram, LpSolution, LpStatus};
pub use transport::{delta_inverse, exact_w1, CouplingStrategy};
