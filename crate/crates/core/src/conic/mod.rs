//! Conic feasibility problems for a fixed max-min level and their solution.

pub mod build;
pub mod lift;
pub mod problem;
pub mod solver;

pub use build::{build_perfect, build_phase_restricted, build_robust, build_screen, RobustInputs, Screen};
pub use lift::{lift_complex, lift_hermitian};
pub use problem::{AffineExpr, ConicProblem, Layout, Sense};
pub use solver::{solve_feasibility, SolveStatus, SolverResult};
