use clap::{Parser, Subcommand};
use ebe_cli::scenario::Scenario;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "ebe", version, about = "Extended Bogomolny equations numerical laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Paths {
    /// Flat `key = value` run config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scalar model equation for a polynomial P.
    Model(Paths),
    /// Build the glued approximate solution for a triple (P, Q, R).
    Approx(Paths),
    /// Path-follow from the approximate solution toward a solution.
    Continue(Paths),
    /// Run the verification suite.
    Verify(Paths),
}

fn main() {
    let cli = Cli::parse();
    let (scenario, paths) = match cli.command {
        Command::Model(p) => (Scenario::Model, p),
        Command::Approx(p) => (Scenario::Approx, p),
        Command::Continue(p) => (Scenario::Continue, p),
        Command::Verify(p) => (Scenario::Verify, p),
    };
    let code = ebe_cli::run(scenario, &paths.config, paths.out.as_deref(), &Default::default());
    std::process::exit(code);
}
