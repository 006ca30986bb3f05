//! Linear evolution equations on time graphs.
//!
//! Each edge of a finite graph carries a time interval `(0, a_j)` and a
//! linear ODE `ψⱼ′ = Aⱼψⱼ + fⱼ`. The edges are coupled through their
//! endpoints by `ψ₋ − Bψ₊ = g`, which covers initial value problems,
//! periodic problems, phase shifts and arbitrary feedback loops in time.
//! [`solver::solve`] computes the solution from the monodromy
//! `1 − B e^{aA}` and exact exponential integration along each edge.

pub mod error;
pub mod graph;
pub mod matfun;
pub mod oracle;
pub mod problem;
pub mod solver;
pub mod variants;

pub use error::{Error, Result};
pub use graph::{classify_solvability, BlockPattern, Edge, EdgeId, SolvabilityClass, SolvabilityReport, TimeGraph};
pub use matfun::{CMatrix, CVector};
pub use problem::{EdgeForcing, EdgeOperator, Forcing, TimeGraphProblem, TransmissionOperator, Violation};
pub use solver::{solve, EdgeSolution, SolutionGrade, SolveReport};
