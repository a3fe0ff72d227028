//! The four scenarios. Each writes its artifacts into the output directory and
//! reports success or a scenario failure; config problems surface before any
//! heavy work starts.

use crate::config::{ConfigError, RunConfig};
use crate::pipeline::{approximate, continuation_start, mode_for, Approximate};
use crate::verify::{verify_suite, Hooks, VerifyOptions, ALL_CHECKS};
use ebe_core::approx::{bezout_check, residual_profile, ApproxError, TriplePQR};
use ebe_core::continuation::{run_schedule, ContinuationParams, InitReport, RunOutcome};
use ebe_core::geometry::{Grid3, GridSpec};
use ebe_core::io::{fmt_f64, write_csv, write_dump};
use ebe_core::model_solver::{
    asymptotics_fit, check_sub_super, model_residual, p_abs2, prepare_seed, solve_monotone, sub_profile,
    sub_super_seeds, BoundaryMode, Classification, ModelProblem,
};
use serde::Serialize;
use serde_json::json;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    Model,
    Approx,
    Continue,
    Verify,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Model => "model",
            Scenario::Approx => "approx",
            Scenario::Continue => "continue",
            Scenario::Verify => "verify",
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Scenario::Model => {
                &["scenario", "out", "box", "grid", "stretch", "P", "mode", "outer_tol", "inner_tol", "max_outer"]
            }
            Scenario::Approx => &["scenario", "out", "box", "grid", "stretch", "P", "Q", "R"],
            Scenario::Continue => &[
                "scenario",
                "out",
                "box",
                "grid",
                "stretch",
                "P",
                "Q",
                "R",
                "t_final",
                "step_tol",
                "max_steps",
                "y_bottom",
                "jacobian_free",
            ],
            Scenario::Verify => &[
                "scenario",
                "out",
                "seed",
                "checks",
                "levels",
                "algebra_samples",
                "oracle_instances",
                "bezout_pairs",
                "linearization_configs",
            ],
        }
    }
}

#[derive(Debug, PartialEq, Eq, Clone, Copy)]
pub enum Status {
    Success,
    /// The scenario ran and wrote its report, but did not meet its own goal.
    Failure,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Io(_) => 1,
        }
    }
}

fn cfg_err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { key: key.into(), message: message.into() }
}

fn validate_common(cfg: &RunConfig, scenario: Scenario) -> Result<(), ConfigError> {
    cfg.check_keys(scenario.keys())?;
    if let Some(s) = cfg.str_opt("scenario")? {
        if s != scenario.name() {
            return Err(cfg_err("scenario", format!("config is for \"{s}\", command is \"{}\"", scenario.name())));
        }
    }
    Ok(())
}

fn grid_from(cfg: &RunConfig) -> Result<Grid3, ConfigError> {
    let b = cfg.f64_array_req("box", 3)?;
    let n = cfg.usize_array("grid")?.ok_or_else(|| cfg_err("grid", "missing required key"))?;
    if n.len() != 3 {
        return Err(cfg_err("grid", format!("expected 3 entries, found {}", n.len())));
    }
    let stretch = cfg.f64_or("stretch", 0.0)?;
    let spec = GridSpec::cube([n[0], n[1], n[2]], b[0], b[1], b[2], stretch);
    Grid3::new(spec)
        .map_err(|e| cfg_err(if b[0] > 0.0 && b[1] > 0.0 && b[2] > b[1] { "grid" } else { "box" }, e.to_string()))
}

fn triple_from(cfg: &RunConfig) -> Result<TriplePQR, ConfigError> {
    let p = cfg.poly_req("P")?;
    let q = cfg.poly_req("Q")?;
    let r = cfg.poly_req("R")?;
    if !p.is_monic() {
        return Err(cfg_err("P", "must be monic"));
    }
    if !q.is_monic() {
        return Err(cfg_err("Q", "must be monic"));
    }
    TriplePQR::new(p, q, r).map_err(|e| match e {
        ApproxError::Poly(_) => cfg_err("R", format!("Q and R must be coprime: {e}")),
        other => cfg_err("R", other.to_string()),
    })
}

struct Out<'a>(&'a Path);

impl Out<'_> {
    fn file(&self, name: &str) -> std::io::Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.0.join(name))?))
    }

    fn json(&self, name: &str, value: &impl Serialize) -> std::io::Result<()> {
        let mut f = self.file(name)?;
        serde_json::to_writer_pretty(&mut f, value).map_err(std::io::Error::other)?;
        writeln!(f)?;
        f.flush()
    }

    fn csv(&self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> std::io::Result<()> {
        let mut f = self.file(name)?;
        write_csv(&mut f, header, rows)?;
        f.flush()
    }

    fn dump(&self, name: &str, grid: &Grid3, components: usize, data: &[f64]) -> std::io::Result<()> {
        let mut f = self.file(name)?;
        write_dump(&mut f, grid, components, data).map_err(std::io::Error::other)?;
        f.flush()
    }
}

fn grid_json(g: &Grid3) -> serde_json::Value {
    let s = &g.spec;
    json!({
        "n": [s.n1, s.n2, s.ny],
        "box": [s.l1, s.l2, s.y_min, s.y_max],
        "y_stretch": s.y_stretch,
    })
}

/// Runs one scenario from a parsed config. Config errors come back before any
/// file is written.
pub fn run_scenario(scenario: Scenario, cfg: &RunConfig, out: &Path, hooks: &Hooks) -> Result<Status, RunError> {
    validate_common(cfg, scenario)?;
    match scenario {
        Scenario::Model => run_model(cfg, out),
        Scenario::Approx => run_approx(cfg, out),
        Scenario::Continue => run_continue(cfg, out),
        Scenario::Verify => run_verify(cfg, out, hooks),
    }
}

fn run_model(cfg: &RunConfig, out: &Path) -> Result<Status, RunError> {
    let p = cfg.poly_req("P")?;
    if p.is_zero() {
        return Err(cfg_err("P", "must be nonzero").into());
    }
    let grid = grid_from(cfg)?;
    let mode = match cfg.choice_or("mode", &["knotless", "knotted", "auto"], "auto")?.as_str() {
        "knotless" => BoundaryMode::Knotless,
        "knotted" => BoundaryMode::Knotted,
        _ => mode_for(&p, &grid),
    };
    let outer_tol = cfg.f64_or("outer_tol", 1e-11)?;
    let inner_tol = cfg.f64_or("inner_tol", 1e-10)?;
    let max_outer = cfg.usize_or("max_outer", 60)?;
    if !(outer_tol > 0.0) {
        return Err(cfg_err("outer_tol", "must be positive").into());
    }
    if !(inner_tol > 0.0) {
        return Err(cfg_err("inner_tol", "must be positive").into());
    }
    let out = Out(out);

    let mut prob = match ModelProblem::new(p.clone(), grid.clone(), mode) {
        Ok(prob) => prob,
        Err(e) => {
            out.json("report.json", &json!({ "scenario": "model", "grid": grid_json(&grid), "error": e.to_string() }))?;
            return Ok(Status::Failure);
        }
    };
    prob.outer_tol = outer_tol;
    prob.inner_tol = inner_tol;
    prob.max_outer = max_outer;
    let seeds = sub_super_seeds(&p, &grid, mode, 1.0);
    let seed_sub = check_sub_super(&grid, &seeds.sub, &p).classification;
    let seed_super = check_sub_super(&grid, &seeds.sup, &p).classification;
    let seed = prepare_seed(&prob, &seeds.sub);
    let (u, iteration) = match solve_monotone(&prob, &seed) {
        Ok(r) => r,
        Err(e) => {
            out.json(
                "report.json",
                &json!({
                    "scenario": "model",
                    "grid": grid_json(&grid),
                    "mode": mode,
                    "seed_classification": { "sub": seed_sub, "super": seed_super },
                    "error": e.to_string(),
                }),
            )?;
            return Ok(Status::Failure);
        }
    };
    let pa2 = p_abs2(&p, &grid);
    let residual = model_residual(&grid, &u, &pa2);
    let ss = check_sub_super(&grid, &u, &p);
    let asym = asymptotics_fit(&grid, &u, &p);

    out.dump("u.ebef", &grid, 1, &u)?;
    out.dump("residual.ebef", &grid, 1, &residual)?;
    // y-profile on the central column
    let [n1, n2, ny] = grid.dims();
    let (ic, jc) = (n1 / 2, n2 / 2);
    let pz = p.eval(grid.z(ic, jc)).norm();
    let rows: Vec<Vec<f64>> = (0..ny)
        .map(|k| {
            let y = grid.y[k];
            let un = u[grid.idx(ic, jc, k)];
            vec![y, un, un - (y * pz).ln(), sub_profile(y, 1.0), un - (pz * y.sinh()).ln()]
        })
        .collect();
    out.csv("profile.csv", &["y", "u", "f", "f_sub", "u_minus_ln_abs_p_sinh_y"], &rows)?;
    let opt = |x: Option<f64>| x.unwrap_or(f64::NAN);
    out.csv(
        "rates.csv",
        &["top_decay_rate", "top_max_deviation", "bottom_min", "bottom_max"],
        &[vec![opt(asym.top_decay_rate), asym.top_max_deviation, asym.bottom_min, asym.bottom_max]],
    )?;
    let solved = ss.classification == Classification::Solution;
    out.json(
        "report.json",
        &json!({
            "scenario": "model",
            "grid": grid_json(&grid),
            "mode": mode,
            "seed_classification": { "sub": seed_sub, "super": seed_super },
            "iteration": iteration,
            "classification": ss.classification,
            "max_positive": ss.max_positive,
            "max_negative": ss.max_negative,
            "asymptotics": asym,
        }),
    )?;
    Ok(if solved { Status::Success } else { Status::Failure })
}

fn approx_inputs(cfg: &RunConfig) -> Result<(TriplePQR, Grid3), ConfigError> {
    let triple = triple_from(cfg)?;
    let grid = grid_from(cfg)?;
    Ok((triple, grid))
}

fn write_approx(out: &Out, grid: &Grid3, a: &Approximate, triple: &TriplePQR) -> std::io::Result<serde_json::Value> {
    let g = &a.glued;
    let metric: Vec<f64> = (0..grid.len()).flat_map(|n| [g.u[n], g.w[n].re, g.w[n].im, g.weight[n]]).collect();
    out.dump("metric.ebef", grid, 4, &metric)?;
    let flat = a.psi.to_flat();
    out.dump("configuration.ebef", grid, flat.len() / grid.len(), &flat)?;
    let prof = residual_profile(grid, &a.psi, g, &triple.p);
    let mut f = out.file("regions.csv")?;
    writeln!(f, "region,nodes,sup_first,sup_metric")?;
    for r in &prof.regions {
        writeln!(f, "{},{},{},{}", r.name, r.nodes, fmt_f64(r.sup_first), fmt_f64(r.sup_metric))?;
    }
    f.flush()?;
    let shells: Vec<Vec<f64>> = prof.far_shells.iter().map(|&(r, v)| vec![r, v]).collect();
    out.csv("far_shells.csv", &["rho", "max_metric_residual"], &shells)?;
    let fit = json!({
        "grid": grid_json(grid),
        "regions": a.regions,
        "profile": prof,
        "blend": g.blend,
        "near_det_error": a.near.det_error(),
        "bezout_residual": bezout_check(triple).unwrap_or(f64::NAN),
        "model_P": a.u3_report,
        "model_PQ2": a.u3p_report,
    });
    out.json("fit.json", &fit)?;
    Ok(fit)
}

fn run_approx(cfg: &RunConfig, out: &Path) -> Result<Status, RunError> {
    let (triple, grid) = approx_inputs(cfg)?;
    let out = Out(out);
    match approximate(&triple, &grid) {
        Ok(a) => {
            write_approx(&out, &grid, &a, &triple)?;
            Ok(Status::Success)
        }
        Err(e) => {
            out.json("fit.json", &json!({ "grid": grid_json(&grid), "error": e.to_string() }))?;
            Ok(Status::Failure)
        }
    }
}

#[derive(Serialize)]
struct DecayDocument<'a> {
    grid: serde_json::Value,
    start: &'static str,
    init: &'a InitReport,
    params: &'a ContinuationParams,
    outcome: &'a RunOutcome,
    v_ratio: f64,
}

fn run_continue(cfg: &RunConfig, out: &Path) -> Result<Status, RunError> {
    let (triple, grid) = approx_inputs(cfg)?;
    let t_final = cfg.f64_or("t_final", 1e-3)?;
    if !(t_final > 0.0 && t_final < 1.0) {
        return Err(cfg_err("t_final", "must lie in (0, 1)").into());
    }
    let step_tol_rel = cfg.f64_or("step_tol", 1e-3)?;
    if !(step_tol_rel > 0.0) {
        return Err(cfg_err("step_tol", "must be positive").into());
    }
    let max_steps = cfg.usize_or("max_steps", 25)?;
    let y_bottom = cfg.f64_or("y_bottom", 0.5)?;
    let jfnk = cfg.bool_or("jacobian_free", false)?;
    let out = Out(out);

    let a = match approximate(&triple, &grid) {
        Ok(a) => a,
        Err(e) => {
            out.json("decay.json", &json!({ "grid": grid_json(&grid), "error": e.to_string() }))?;
            return Ok(Status::Failure);
        }
    };
    let Some((mut state, init, start)) = continuation_start(&a.framed) else {
        out.json(
            "decay.json",
            &json!({ "grid": grid_json(&grid), "error": "moment map of the approximate solution failed" }),
        )?;
        return Ok(Status::Failure);
    };
    let v0 = init.s_star_sup;
    let mut params = ContinuationParams::geometric(t_final, step_tol_rel * v0);
    params.max_steps_per_t = max_steps;
    params.jacobian_free = jfnk;
    let outcome = run_schedule(&mut state, &params, v0, y_bottom);

    let rows: Vec<Vec<f64>> = state
        .history
        .iter()
        .map(|h| vec![h.t, h.residual, h.steps as f64, h.alpha, if h.accepted { 1.0 } else { 0.0 }])
        .collect();
    out.csv("history.csv", &["t", "residual", "steps", "alpha", "accepted"], &rows)?;
    let s: Vec<f64> = state.s.coords().into_iter().flatten().collect();
    out.dump("s.ebef", &grid, 3, &s)?;
    if let Ok(psi) = state.current().configuration() {
        let flat = psi.to_flat();
        out.dump("psi.ebef", &grid, flat.len() / grid.len(), &flat)?;
    }
    let doc = DecayDocument {
        grid: grid_json(&grid),
        start,
        init: &init,
        params: &params,
        outcome: &outcome,
        v_ratio: outcome.final_v / v0,
    };
    out.json("decay.json", &doc)?;
    Ok(if outcome.success { Status::Success } else { Status::Failure })
}

pub fn verify_options(cfg: &RunConfig) -> Result<VerifyOptions, ConfigError> {
    let d = VerifyOptions::default();
    let checks = match cfg.str_array("checks")? {
        Some(c) => {
            if let Some(bad) = c.iter().find(|c| !ALL_CHECKS.contains(&c.as_str())) {
                return Err(cfg_err("checks", format!("unknown check {bad}; known: {ALL_CHECKS:?}")));
            }
            c
        }
        None => d.checks,
    };
    let levels = cfg.usize_array("levels")?.unwrap_or(d.levels);
    if levels.len() < 2 || levels.iter().any(|&n| n < 7) || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(cfg_err("levels", "need at least two increasing node counts, each at least 7"));
    }
    Ok(VerifyOptions {
        seed: cfg.u64_or("seed", d.seed)?,
        checks,
        algebra_samples: cfg.usize_or("algebra_samples", d.algebra_samples)?,
        oracle_instances: cfg.usize_or("oracle_instances", d.oracle_instances)?,
        bezout_pairs: cfg.usize_or("bezout_pairs", d.bezout_pairs)?,
        linearization_configs: cfg.usize_or("linearization_configs", d.linearization_configs)?.max(1),
        levels,
    })
}

fn run_verify(cfg: &RunConfig, out: &Path, hooks: &Hooks) -> Result<Status, RunError> {
    let opts = verify_options(cfg)?;
    let rep = verify_suite(&opts, hooks);
    let out = Out(out);
    out.json("verdicts.json", &json!({ "options": opts, "report": rep }))?;
    if !rep.weitzenbock_table.is_empty() {
        let rows: Vec<Vec<f64>> =
            rep.weitzenbock_table.iter().map(|r| vec![r.n as f64, r.h, r.gap_doubled, r.gap_single]).collect();
        out.csv("weitzenbock.csv", &["n", "h", "gap_doubled_exponent", "gap_single_exponent"], &rows)?;
    }
    Ok(if rep.all_pass() { Status::Success } else { Status::Failure })
}
