use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hlconc::activations::ActivationKind;
use hlconc::cli::{self, exit_code, RunConfig, SweepAxis, EXIT_DIVERGED, EXIT_OTHER};
use hlconc::diagnostics;
use hlconc::error::Error;
use hlconc::marching::MarchMode;
use hlconc::pde::{ProblemKind, ProblemSpec};

#[derive(Parser)]
#[command(name = "hlconc", version, about = "Concatenated-network PINN solver with block time marching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train all time blocks from a TOML config and write the run directory.
    Run { config: PathBuf },
    /// Repeat a run over axis values, in both marching modes.
    Sweep {
        config: PathBuf,
        /// n_c, depth or activation.
        #[arg(long)]
        axis: String,
        /// Axis values, e.g. `1500 2000`, `2-90-90-1 2-90-90-10-1`, `tanh/tanh/sine`.
        #[arg(long, num_args = 0..)]
        values: Vec<String>,
    },
    /// Run the gradient, jet, embedding, residual and quadrature self-checks.
    Check,
    /// Print the midpoint-rule convergence slope on a smooth 2D integrand.
    QuadratureRate,
    /// Compare loss gradients with finite differences for every problem and mode.
    GradCheck,
}

fn report(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_code(err))
}

fn load(path: &PathBuf) -> Result<RunConfig, Error> {
    Ok(RunConfig::load(path)?)
}

fn grad_checks() -> bool {
    let mut ok = true;
    for kind in ProblemKind::ALL {
        let spec = ProblemSpec::for_kind(kind);
        for mode in [MarchMode::ExBtm, MarchMode::Btm] {
            let err = diagnostics::grad_check(&spec, mode, 7);
            let pass = err < 1e-5;
            ok &= pass;
            println!("{} grad {kind} {mode}: {err:.2e}", if pass { "PASS" } else { "FAIL" });
        }
    }
    ok
}

fn check() -> bool {
    let mut ok = grad_checks();
    let mut line = |name: String, value: f64, pass: bool| {
        ok &= pass;
        println!("{} {name}: {value:.2e}", if pass { "PASS" } else { "FAIL" });
    };
    for kind in ActivationKind::ALL {
        let e = diagnostics::jet_check(kind, 11);
        line(format!("jets {kind}"), e, e < 1e-6);
    }
    let e = (0..20).map(diagnostics::embedding_check).fold(0.0, f64::max);
    line("embeddings".into(), e, e <= 1e-12);
    for kind in ProblemKind::ALL {
        let e = diagnostics::manufactured_check(&ProblemSpec::for_kind(kind), 1000, 5);
        line(format!("manufactured {kind}"), e, e <= 1e-9);
    }
    let slope = diagnostics::quadrature_rate();
    line("quadrature slope".into(), slope, (slope + 1.0).abs() <= 0.15);
    ok
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let log = |s: &str| eprintln!("{s}");
    match cli.command {
        Command::Run { config } => {
            let result = load(&config).and_then(|c| cli::run(&c, log));
            match result {
                Ok(out) => {
                    println!("{}", out.out_dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => report(&e),
            }
        }
        Command::Sweep { config, axis, values } => {
            let result = load(&config).and_then(|c| {
                let axis: SweepAxis = axis.parse()?;
                cli::sweep(&c, axis, &values, log)
            });
            match result {
                Ok((dir, cells)) => {
                    println!("{}", dir.display());
                    let failed = cells.iter().filter(|c| c.outcome.is_err()).count();
                    if failed > 0 {
                        eprintln!("{failed} of {} cells failed", cells.len());
                        ExitCode::from(EXIT_DIVERGED)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => report(&e),
            }
        }
        Command::Check => {
            if check() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_OTHER)
            }
        }
        Command::QuadratureRate => {
            println!("{}", diagnostics::quadrature_rate());
            ExitCode::SUCCESS
        }
        Command::GradCheck => {
            if grad_checks() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_OTHER)
            }
        }
    }
}
