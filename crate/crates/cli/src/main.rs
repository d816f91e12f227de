use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use randesign::sketch::{RotationKind, SketchPlan};
use randesign_cli::config::ExperimentConfig;
use randesign_cli::experiment::{run_experiment, RunOptions};
use randesign_cli::{bounds, sketch_cmd, tails, GlobalOpts};

#[derive(Parser)]
#[command(name = "randesign", version, about = "Random-design regression bound experiments")]
struct Cli {
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trial count (overrides the config or scenario file).
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RotationArg {
    Hadamard,
    Orthogonal,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo coverage of a bound over an (n, delta) grid.
    Run {
        config: PathBuf,
        /// Also write Σ and trial-0 Σ̂ matrices as CSV.
        #[arg(long)]
        dump_matrices: bool,
    },
    /// Check tail inequalities against their reference samplers.
    VerifyTails {
        /// Scenario file; all built-in scenarios when omitted.
        scenarios: Option<PathBuf>,
    },
    /// Evaluate bound scenarios as JSON lines.
    Bounds { params: PathBuf },
    /// Rotate, subsample and solve a least squares problem.
    SketchSolve {
        /// Design matrix CSV (no header, rows = observations).
        #[arg(long)]
        a: PathBuf,
        /// Response CSV (one column or one row).
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 0.05)]
        delta_prime: f64,
        #[arg(long, value_enum, default_value = "hadamard")]
        rotation: RotationArg,
    },
}

fn emit(out: &Option<PathBuf>, file: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => {
            let path = dir.join(file);
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn real_main(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring worker threads")?;
    }
    let opts = GlobalOpts {
        seed: cli.seed,
        trials: cli.trials,
        out: cli.out.clone(),
    };
    match cli.command {
        Command::Run { config, dump_matrices } => {
            let cfg = ExperimentConfig::load(&config)?;
            let base = config.parent().map(PathBuf::from).unwrap_or_default();
            let model = cfg.model.load(&base)?;
            let (summary, paths) = run_experiment(&cfg, &model, &opts, &RunOptions { dump_matrices })?;
            for c in &summary.cells {
                println!(
                    "n={} delta={} {}: coverage {:.4} (level {:.2}), mean excess {:.4e}, bound {:.4e}",
                    c.coverage.n,
                    c.coverage.delta,
                    c.coverage.theorem,
                    c.coverage.coverage,
                    c.coverage.level,
                    c.coverage.mean_excess,
                    c.coverage.bound_total
                );
            }
            println!("wrote {} and {}", paths.trials_csv.display(), paths.summary_json.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyTails { scenarios } => {
            let runs = match &scenarios {
                Some(p) => tails::parse_runs(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
                None => tails::default_runs(),
            };
            let trials = cli.trials.map(|t| t as usize);
            let report = tails::verify_tails(&runs, cli.seed.unwrap_or(0), trials)?;
            for r in &report.rows {
                eprintln!(
                    "{} {} delta={}: rate {:.4} (se {:.4}, {} trials)",
                    if r.pass { "ok  " } else { "FAIL" },
                    r.lemma,
                    r.delta,
                    r.rate,
                    r.se,
                    r.trials
                );
            }
            emit(&cli.out, "tails.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
            Ok(if report.all_pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Bounds { params } => {
            let text = std::fs::read_to_string(&params).with_context(|| format!("reading {}", params.display()))?;
            let base = params.parent().map(PathBuf::from).unwrap_or_default();
            let records = bounds::evaluate_all(&bounds::scenario_values(&text)?, &base);
            let mut lines = String::new();
            for r in &records {
                lines.push_str(&serde_json::to_string(r)?);
                lines.push('\n');
            }
            emit(&cli.out, "bounds.jsonl", &lines)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::SketchSolve { a, b, n, delta, delta_prime, rotation } => {
            let a = sketch_cmd::read_matrix(&a)?;
            let b = sketch_cmd::read_vector(&b)?;
            let plan = SketchPlan::new(n, delta, delta_prime)?;
            let kind = match rotation {
                RotationArg::Hadamard => RotationKind::HadamardRademacher,
                RotationArg::Orthogonal => RotationKind::UniformOrthogonal,
            };
            let out = sketch_cmd::sketch_solve(&a, &b, &plan, kind, cli.seed.unwrap_or(0))?;
            emit(&cli.out, "sketch.json", &(serde_json::to_string_pretty(&out)? + "\n"))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
