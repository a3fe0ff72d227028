//! Numerical laboratory for the extended Bogomolny equations on a truncated
//! half-space `[−L, L]² × [y_min, y_max]`.

pub mod algebra;
pub mod approx;
pub mod config;
pub mod continuation;
pub mod geometry;
pub mod io;
pub mod linsolve;
pub mod model_solver;
pub mod poly;
