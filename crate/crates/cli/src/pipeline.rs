//! Model solves feeding the approximate-solution construction.

use ebe_core::approx::{
    assemble_near_frame, build_far, build_near, framed_glued, glue, ApproxError, GluedMetric, NearMetric, Regions,
    TriplePQR,
};
use ebe_core::config::{Configuration, FramedMetric};
use ebe_core::continuation::{init_direct, init_state, ContinuationState, InitReport};
use ebe_core::geometry::Grid3;
use ebe_core::model_solver::{solve_model, BoundaryMode, IterationReport, ModelError};
use ebe_core::poly::CPoly;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("model solve for {which}: {source}")]
    Model { which: &'static str, source: ModelError },
    #[error(transparent)]
    Approx(#[from] ApproxError),
}

/// Knotted when P has a root inside the closed box.
pub fn mode_for(p: &CPoly, grid: &Grid3) -> BoundaryMode {
    let (l1, l2) = (grid.spec.l1, grid.spec.l2);
    if p.degree() > 0 && p.roots().iter().any(|r| r.re.abs() <= l1 && r.im.abs() <= l2) {
        BoundaryMode::Knotted
    } else {
        BoundaryMode::Knotless
    }
}

pub struct Approximate {
    pub regions: Regions,
    /// Far-frame model solution for P.
    pub u3: Vec<f64>,
    pub u3_report: IterationReport,
    /// Near-frame model solution for PQ², always in knotted mode.
    pub u3p: Vec<f64>,
    pub u3p_report: IterationReport,
    pub near: NearMetric,
    pub glued: GluedMetric,
    /// Near-frame assembly of Ψ*.
    pub psi: Configuration,
    /// Far-frame pair of Ψ*, the continuation start.
    pub framed: FramedMetric,
}

pub fn approximate(triple: &TriplePQR, grid: &Grid3) -> Result<Approximate, PipelineError> {
    let regions = Regions::for_triple(triple);
    let (u3, u3_report) = solve_model(&triple.p, grid, mode_for(&triple.p, grid))
        .map_err(|source| PipelineError::Model { which: "P", source })?;
    let (u3p, u3p_report) = solve_model(&triple.knotted_p(), grid, BoundaryMode::Knotted)
        .map_err(|source| PipelineError::Model { which: "PQ^2", source })?;
    let far = build_far(&u3, triple, grid, &regions)?;
    let near = build_near(triple, grid, &u3p)?;
    let glued = glue(grid, &far, &near, &regions)?;
    let psi = assemble_near_frame(grid, &glued, &near, triple)?;
    let framed = framed_glued(grid, &glued, &triple.p)?;
    Ok(Approximate { regions, u3, u3_report, u3p, u3p_report, near, glued, psi, framed })
}

/// Continuation start from Ψ*: the exact state at t = 1 when e^{s*/2} is
/// representable, otherwise s = 0 and Newton solves t = 1. None when V(Ψ*) fails.
pub fn continuation_start(framed: &FramedMetric) -> Option<(ContinuationState, InitReport, &'static str)> {
    let (state, _, init) = init_state(framed).ok()?;
    if init.identity_error <= 1e-8 * init.s_star_sup.max(1.0) {
        Some((state, init, "exact"))
    } else {
        Some((init_direct(framed), init, "direct"))
    }
}
