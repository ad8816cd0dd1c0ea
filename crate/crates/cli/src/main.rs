use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use robreg_cli::commands::{cmd_check, cmd_lemmas, cmd_sweep};
use robreg_cli::config::ExperimentConfig;
use robreg_cli::{exit_code, EXIT_BUDGET, EXIT_CRITERION, EXIT_INPUT, EXIT_OK};

#[derive(Parser)]
#[command(name = "robreg", version, about = "Robustness experiments for heavy-tailed Bayesian regression")]
struct Cli {
    /// Worker threads; also read from ROBREG_THREADS.
    #[arg(long, global = true, env = "ROBREG_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file; defaults reproduce the canonical problem.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set rho=1.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the full result as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check the theorem's hypotheses for the configured problem.
    Check {
        #[command(flatten)]
        common: Common,
    },
    /// Run the outlier-shift sweep and an outlier-free control.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma list or `lo..hi` decades.
        #[arg(long)]
        omega_ladder: Option<String>,
        /// `grid` or `mcmc`.
        #[arg(long)]
        method: Option<String>,
        /// Run even when a hypothesis check fails.
        #[arg(long)]
        force: bool,
    },
    /// Search for covering and product-bound certificates.
    Lemmas {
        #[command(flatten)]
        common: Common,
        /// Extra instance JSON file. Repeatable.
        #[arg(long)]
        instance: Vec<PathBuf>,
        /// Sampled points per check.
        #[arg(long)]
        budget: Option<usize>,
        /// Skip the built-in instance suite.
        #[arg(long)]
        no_builtin: bool,
    },
}

fn load(common: &Common, mut extra: Vec<(String, String)>) -> Result<ExperimentConfig, i32> {
    let mut overrides = Vec::new();
    for s in &common.set {
        match s.split_once('=') {
            Some((k, v)) => overrides.push((k.trim().to_string(), v.trim().to_string())),
            None => {
                eprintln!("error: --set expects KEY=VALUE, found {s:?}");
                return Err(EXIT_INPUT);
            }
        }
    }
    if let Some(seed) = common.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(out) = &common.out {
        overrides.push(("output".into(), out.display().to_string()));
    }
    overrides.append(&mut extra);
    let cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path, &overrides),
        None => ExperimentConfig::from_overrides(&overrides),
    };
    cfg.map_err(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    })
}

fn emit<T: serde::Serialize>(json: bool, value: &T, table: String) {
    if json {
        match serde_json::to_string_pretty(value) {
            Ok(s) => println!("{s}"),
            Err(e) => eprintln!("error: {e}"),
        }
    } else {
        print!("{table}");
    }
}

fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Check { common } => {
            let cfg = match load(&common, Vec::new()) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match cmd_check(&cfg) {
                Ok(report) => {
                    emit(common.json, &report, report.render());
                    if report.all_pass() {
                        EXIT_OK
                    } else {
                        EXIT_CRITERION
                    }
                }
                Err(e) => fail(&e),
            }
        }
        Command::Sweep {
            common,
            omega_ladder,
            method,
            force,
        } => {
            let mut extra = Vec::new();
            if let Some(l) = omega_ladder {
                extra.push(("omega_ladder".to_string(), l));
            }
            if let Some(m) = method {
                extra.push(("method".to_string(), m));
            }
            let cfg = match load(&common, extra) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let check = match cmd_check(&cfg) {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            if !check.all_pass() {
                eprint!("{}", check.render());
                if !force {
                    eprintln!("error: hypothesis check failed; rerun with --force to sweep anyway");
                    return EXIT_CRITERION;
                }
                eprintln!("warning: hypothesis check failed, continuing because of --force");
            }
            match cmd_sweep(&cfg) {
                Ok(outcome) => {
                    emit(common.json, &outcome, outcome.render());
                    let c = &outcome.criterion;
                    if !c.assessed || c.held {
                        EXIT_OK
                    } else {
                        EXIT_CRITERION
                    }
                }
                Err(e) => fail(&e),
            }
        }
        Command::Lemmas {
            common,
            instance,
            budget,
            no_builtin,
        } => {
            let mut extra = Vec::new();
            if !instance.is_empty() {
                let joined: Vec<String> = instance.iter().map(|p| p.display().to_string()).collect();
                extra.push(("instances".to_string(), joined.join(",")));
            }
            if let Some(b) = budget {
                extra.push(("budget".to_string(), b.to_string()));
            }
            if no_builtin {
                extra.push(("builtin_instances".to_string(), "false".to_string()));
            }
            let cfg = match load(&common, extra) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match cmd_lemmas(&cfg) {
                Ok(outcome) => {
                    emit(common.json, &outcome, outcome.render());
                    if outcome.inconclusive() > 0 {
                        EXIT_BUDGET
                    } else {
                        EXIT_OK
                    }
                }
                Err(e) => fail(&e),
            }
        }
    }
}

fn fail(e: &robreg_core::Error) -> i32 {
    eprintln!("error: {e}");
    exit_code(e)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_INPUT as u8);
        }
    }
    ExitCode::from(run(cli) as u8)
}
