//! Quasi-static elastoplastic composite bar used as the ground-truth solver.
//!
//! The bar is a chain of segments loaded in series (uniform axial force);
//! each segment holds four equal-area cubes loaded in parallel (equal strain).
//! Every cube follows a 1D multilinear isotropic-hardening law integrated by
//! radial return.

mod bar;
mod material;
mod solver;

pub use bar::{BarModel, DEFAULT_LAYOUT_SEED, QUADRANTS};
pub use material::{MaterialModel, PlasticState, ReturnMap, STEEL_ELASTIC_LIMIT};
pub use solver::{
    refinement_check, segment_response, simulate, simulate_from, solve_equilibrium_step, BarState,
    RefinementRow, SegmentResponse, SimulationResult, StepSolution, INNER_TOL, MAX_ITERATIONS, OUTER_TOL,
    TANGENT_MIN,
};
