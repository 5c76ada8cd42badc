//! Poisson solver on uniform Cartesian meshes with irregular embedded
//! Dirichlet boundaries.
//!
//! Near-boundary stencils use either a linear or a quadratic
//! (Shortley–Weller) ghost-node extrapolation. The RHS can be taken exactly
//! from a manufactured solution, underestimated the way particle-in-cell
//! charge deposition underestimates it next to a wall, or re-calibrated by
//! the uniform-field ratio δ̄. The analysis layer measures truncation and
//! numerical error fields, convergence orders, and the explicit 1-D error
//! decomposition into boundary and interior contributions.
//!
//! See the crate examples for one runnable program per capability, and the
//! `embedded-poisson` binary for the batch experiment CLI.

pub mod analysis;
pub mod cases;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod grid;
pub mod quadrature;
pub mod rhs;
pub mod scheme;
pub mod solver;

pub use analysis::{
    boundary_error_sweep, decompose_1d, error_report, leading_coeff_contours, order_estimate,
    truncation_field, Decomposition1D, ErrorReport,
};
pub use cases::{case_1d, case_1d_with_bounds, case_2d, case_2d_uniform, case_3d, TestCase};
pub use error::{Error, Result};
pub use geometry::LevelSetGeometry;
pub use grid::{classify, theta_map, Mesh, NodeClassification};
pub use rhs::{
    build_rhs, delta_closed_1d, delta_integral_1d, delta_sampled, delta_sampled_at, eval_exact,
    sample_rhs, RhsField, RhsMode,
};
pub use scheme::{assemble, ghost_linear, ghost_quadratic, SchemeKind, SparseSystem};
pub use solver::{solve, Solution, SolveMethod, SolveOptions};
