//! Run orchestration for the numerical laboratory: config parsing, the four
//! scenarios, and the verification suite.

pub mod config;
pub mod pipeline;
pub mod scenario;
pub mod verify;

use config::RunConfig;
use scenario::{run_scenario, RunError, Scenario, Status};
use std::path::{Path, PathBuf};
use verify::Hooks;

/// Loads the config, resolves the output directory (`--out` wins over the
/// `out` key) and runs the scenario. Returns the process exit status:
/// 0 success, 1 scenario failure, 2 config error.
pub fn run(scenario: Scenario, config_path: &Path, out: Option<&Path>, hooks: &Hooks) -> i32 {
    match try_run(scenario, config_path, out, hooks) {
        Ok(Status::Success) => 0,
        Ok(Status::Failure) => {
            eprintln!("{}: scenario failed; see the report in the output directory", scenario.name());
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn try_run(scenario: Scenario, config_path: &Path, out: Option<&Path>, hooks: &Hooks) -> Result<Status, RunError> {
    let cfg = RunConfig::load(config_path)?;
    let dir: PathBuf = match out {
        Some(p) => p.to_path_buf(),
        None => cfg.str_opt("out")?.map(PathBuf::from).ok_or_else(|| config::ConfigError {
            key: "out".into(),
            message: "no --out given and no out key".into(),
        })?,
    };
    std::fs::create_dir_all(&dir)?;
    run_scenario(scenario, &cfg, &dir, hooks)
}
