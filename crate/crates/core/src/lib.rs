// NaN must fail parameter checks, hence `!(x > 0.0)`
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contour;
pub mod error;
pub mod fracint;
pub mod mittag_leffler;
pub mod operator;
pub mod operators;
pub mod problem;
pub mod rules;
pub mod solvers;
pub mod types;

pub use contour::{
    build_contour, propagator, propagator_apply, propagator_sum, ContourOptions, ContourShape, ContourSpec,
    PropagatorFamily, PropagatorRequest, QuadratureGrid, WeightedTerm,
};
pub use error::{Error, Result};
pub use fracint::{ClosureFunction, GradedRule, Polynomial, SampledFunction, TimeFunction, TimeGrid};
pub use num_complex::Complex64;
pub use operator::{
    apply_power, check_sector_bound, fractional_power_apply, EigenBasis, SectorReport,
    SectorialOperator,
};
pub use operators::{manufacture_data, Diagonal, Laplacian1D, Regularity};
pub use problem::ProblemData;
pub use solvers::{
    mild_residual, residual_grid, solve, solve_classic, solve_li, solve_ml_oracle, solve_new, CorrectionPolicy,
    Formula, PointDiagnostics, SolutionRecord, SolverConfig,
};
pub use types::{FractionalOrder, SpectralSector, StateVector};
