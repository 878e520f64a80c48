use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hisparse_core::sim::{self, verify, ExperimentConfig, Preset, Scenario};

#[derive(Parser)]
#[command(name = "hisparse", version, about = "Hierarchical-sparsity channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo sweep from a JSON config; writes CSV and a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        /// Override the system dimensions (N, M, D).
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
    },
    /// Turn a sweep CSV into gnuplot data blocks and a script.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a property suite; exits 2 on any violation.
    Verify {
        #[arg(long, value_enum)]
        suite: SuiteArg,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Print a config template for a scenario.
    Template {
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
        #[arg(long, value_enum, default_value_t = PresetArg::Small)]
        preset: PresetArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Small,
    Paper,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Small => Preset::Small,
            PresetArg::Paper => Preset::Paper,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Hirip,
    Bounds,
    Operators,
}

impl From<SuiteArg> for verify::Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Hirip => verify::Suite::Hirip,
            SuiteArg::Bounds => verify::Suite::Bounds,
            SuiteArg::Operators => verify::Suite::Operators,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    SingleUserSweep,
    MultiuserSweep,
    SfVsFs,
    #[value(name = "mismatched-L")]
    MismatchedL,
    OmpCompare,
    OffgridSweep,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::SingleUserSweep => Scenario::SingleUserSweep,
            ScenarioArg::MultiuserSweep => Scenario::MultiuserSweep,
            ScenarioArg::SfVsFs => Scenario::SfVsFs,
            ScenarioArg::MismatchedL => Scenario::MismatchedL,
            ScenarioArg::OmpCompare => Scenario::OmpCompare,
            ScenarioArg::OffgridSweep => Scenario::OffgridSweep,
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> hisparse_core::Result<ExitCode> {
    match cli.command {
        Command::Run { config, out, threads, preset } => {
            let text = fs::read_to_string(&config)?;
            let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
            if let Some(p) = preset {
                let dropped = cfg.apply_preset(p.into());
                if !dropped.is_empty() {
                    eprintln!("warning: dropped Np values {dropped:?} above N={}", cfg.system.n);
                }
            }
            let art = sim::run_sweep(&cfg, out.as_deref(), threads)?;
            for r in &art.result.records {
                println!("{:>8} {:<24} {:.4e} ± {:.1e}", r.sweep_value, r.algorithm, r.mse_mean, r.mse_stderr);
            }
            if !art.result.failures.is_empty() {
                eprintln!("warning: {} estimator runs failed; see the manifest", art.result.failures.len());
            }
            println!("wrote {} and {}", art.csv_path.display(), art.manifest_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { csv, out } => {
            let p = sim::emit_plot_data(&csv, out.as_deref())?;
            for w in &p.warnings {
                eprintln!("warning: {w}");
            }
            println!("{} curves -> {} ({})", p.curves.len(), p.data_path.display(), p.script_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { suite, seed, json } => {
            let report = verify::run_suite(suite.into(), seed)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                for c in &report.checks {
                    let tag = if c.passed() { "PASS" } else { "FAIL" };
                    println!("{tag} {} ({} instances, {} violations; {})", c.name, c.instances, c.violations, c.detail);
                }
            }
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Template { scenario, preset } => {
            println!("{}", ExperimentConfig::template(scenario.into(), preset.into()).to_json()?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
