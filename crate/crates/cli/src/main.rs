//! `ldr`: benchmark harness CLI for the label-distributionally-robust
//! loss family.
//!
//! Exit codes: 0 success, 1 validation failure, 2 configuration error.

use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ldr_core::bench::{run_bench, write_leaderboard_csv};
use ldr_core::calibration::run_battery;
use ldr_core::config::ExperimentConfig;
use ldr_core::error::Error;
use ldr_core::gradcheck::gradient_suite;
use ldr_core::synth::{run_synth, write_grid_csv, SynthProtocol};
use ldr_core::topk::omega_k_argmax;

#[derive(Parser)]
#[command(name = "ldr", version, about = "LDR loss family benchmark harness")]
struct Cli {
    /// Overrides the experiment seed everywhere.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trains the configured losses (single run or grid) with cross-validation.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Multi-loss x multi-noise benchmark; emits per-run CSVs and a leaderboard.
    Bench {
        #[arg(long)]
        config: PathBuf,
    },
    /// Runs every analytic-vs-finite-difference gradient suite.
    Gradcheck {
        /// Random instances per loss.
        #[arg(long, default_value_t = 200)]
        instances: usize,
    },
    /// Numerical calibration checks; emits a per-claim pass/fail CSV.
    Calibrate {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Smaller sample counts for a fast sanity pass.
        #[arg(long)]
        quick: bool,
    },
    /// Solves the capped-simplex inner maximization for a score vector
    /// read from stdin or --input (whitespace/comma separated).
    Project {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Synthetic probe experiment; emits decision grids and the probe
    /// temperature report.
    Synth {
        #[arg(long, default_value = "synth-out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err.downcast_ref::<Error>() {
                Some(Error::Config(_)) | Some(Error::Json(_)) | Some(Error::Parse { .. }) => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Train { config } | Command::Bench { config } => {
            let mut experiment = ExperimentConfig::from_path(&config)
                .map_err(|e| Error::config(format!("{}: {e}", config.display())))?;
            if let Some(seed) = cli.seed {
                experiment.seed = seed;
            }
            let out_dir = experiment
                .output_dir
                .clone()
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("runs"));
            let outcome = run_bench(&experiment, Some(&out_dir))?;
            for run in &outcome.runs {
                println!(
                    "{:<10} {:<14} lr={:<7} val-top1={:.4} test-top1={:.4} (+/- {:.4})",
                    run.loss_name,
                    run.noise_name,
                    run.selected_lr,
                    run.mean_val_top1,
                    run.mean_test_topk[0],
                    run.std_test_top1
                );
            }
            if !outcome.leaderboard.is_empty() {
                let path = out_dir.join(format!("{}_leaderboard.csv", outcome.dataset));
                write_leaderboard_csv(std::fs::File::create(&path)?, &outcome.leaderboard)?;
                println!("-- leaderboard (mean rank, smaller is better) --");
                for row in &outcome.leaderboard {
                    println!("{:<10} overall {:.3}", row.loss, row.overall);
                }
                println!("written to {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck { instances } => {
            let seed = cli.seed.unwrap_or(7);
            let results = gradient_suite(seed, instances)?;
            let mut all_ok = true;
            for r in &results {
                println!(
                    "{:<28} instances={:<4} max-rel-err={:.3e} {}",
                    r.name,
                    r.instances,
                    r.max_rel_err,
                    if r.passed { "ok" } else { "FAIL" }
                );
                all_ok &= r.passed;
            }
            Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Calibrate { out, quick } => {
            let seed = cli.seed.unwrap_or(17);
            let results = run_battery(seed, quick)?;
            let mut writer: Box<dyn std::io::Write> = match out {
                Some(path) => Box::new(std::fs::File::create(path)?),
                None => Box::new(std::io::stdout()),
            };
            writeln!(writer, "schema_version,claim,detail,passed,residual")?;
            let mut all_ok = true;
            for r in &results {
                writeln!(
                    writer,
                    "1,{},\"{}\",{},{}",
                    r.claim,
                    r.detail.replace('"', "'"),
                    r.passed,
                    r.residual
                )?;
                all_ok &= r.passed;
            }
            Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Project { k, lambda, input } => {
            let mut text = String::new();
            match input {
                Some(path) => {
                    std::fs::File::open(path)?.read_to_string(&mut text)?;
                }
                None => {
                    std::io::stdin().read_to_string(&mut text)?;
                }
            }
            let q: Vec<f64> = text
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| Error::config(format!("bad score vector: {e}")))?;
            if q.is_empty() {
                return Err(Error::config("empty score vector").into());
            }
            let sol = omega_k_argmax(&q, lambda, k)?;
            println!("split a = {}", sol.a);
            println!("objective = {:.12}", sol.objective);
            let joined: Vec<String> = sol.p.iter().map(|v| format!("{v:.12}")).collect();
            println!("p = [{}]", joined.join(", "));
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { out } => {
            let protocol = SynthProtocol {
                seed: cli.seed.unwrap_or(7),
                ..Default::default()
            };
            let outcome = run_synth(&protocol)?;
            std::fs::create_dir_all(&out)?;
            let bounds = (-2.0, 2.0, -2.0, 2.0);
            for (name, model) in [
                ("pretrained", &outcome.pretrained),
                ("ce_finetuned", &outcome.ce_finetuned),
                ("aldr_finetuned", &outcome.aldr_finetuned),
            ] {
                let path = out.join(format!("grid_{name}.csv"));
                write_grid_csv(std::fs::File::create(&path)?, model, bounds, 101)?;
                model.save_checkpoint(&out.join(format!("{name}.ckpt")))?;
            }
            let report = out.join("probe_lambdas.csv");
            std::fs::write(
                &report,
                format!(
                    "probe,x,y,label,final_lambda\nclean,{},{},{},{}\nmislabeled,{},{},{},{}\n",
                    protocol.clean_probe.0[0],
                    protocol.clean_probe.0[1],
                    protocol.clean_probe.1,
                    outcome.lambda_clean,
                    protocol.noisy_probe.0[0],
                    protocol.noisy_probe.0[1],
                    protocol.noisy_probe.1,
                    outcome.lambda_noisy,
                ),
            )?;
            println!(
                "final lambda: clean probe {:.4}, mislabeled probe {:.4} (outputs in {})",
                outcome.lambda_clean,
                outcome.lambda_noisy,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
