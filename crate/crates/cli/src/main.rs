use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use finsler_completion::{Overrides, Scenario};

#[derive(Parser)]
#[command(name = "fincomp", version, about = "Distance fields, properness and completion of Finsler metrics on grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario pipeline and write artifacts.
    Run(Common),
    /// Evaluate the invariant suite for a scenario.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Output root; artifacts go to `<out>/<scenario name>/`.
    #[arg(long, env = "FINCOMP_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Override the grid spacing.
    #[arg(long)]
    h: Option<f64>,
    /// Override the stencil neighbour count.
    #[arg(long)]
    stencil: Option<usize>,
    /// Use the raw candidate instead of the mollified one.
    #[arg(long)]
    lipschitz_mode: bool,
    /// Seed for sampled checks.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> anyhow::Result<Scenario> {
        let mut s = Scenario::from_file(&self.scenario)
            .with_context(|| format!("loading {}", self.scenario.display()))?;
        s.apply(&Overrides {
            h: self.h,
            stencil: self.stencil,
            lipschitz_mode: self.lipschitz_mode,
            seed: self.seed,
        });
        s.validate()?;
        Ok(s)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run(c) => {
            let s = c.load()?;
            let out = finsler_completion::run(&s, &c.out)?;
            for st in &out.stages {
                println!("{:<12} {:<8} {}", st.stage, st.status, st.detail);
            }
            println!("artifacts: {} ({} files)", out.dir.display(), out.manifest.artifacts.len());
            Ok(out.ok)
        }
        Command::Verify(c) => {
            let s = c.load()?;
            let out = finsler_completion::verify(&s, &c.out)?;
            for i in &out.invariants {
                println!(
                    "{} {:<36} {:.3e} (tol {:.1e}) {}",
                    if i.passed { "PASS" } else { "FAIL" },
                    i.name,
                    i.value,
                    i.tolerance,
                    i.detail
                );
            }
            println!("{}: {}", s.name, if out.passed { "all invariants hold" } else { "invariant violated" });
            Ok(out.passed)
        }
    }
}
