use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use warmup_lab::harness::verify::{run_verify, VerifyOptions};
use warmup_lab::harness::{
    diagnose, initial_gap, run_fstar_ablation, run_sweep, run_training, schedule_preview,
    write_ablation_csv, write_diagnosis_csv, write_preview_csv, write_sweep_csv, RunConfig,
};

#[derive(Parser)]
#[command(name = "warmup-lab", version, about = "Adaptive warm-up schedules and LMO optimizers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect a schedule without training.
    Schedule {
        #[command(subcommand)]
        command: ScheduleCommand,
    },
    /// Train once and write the per-step trace.
    Train(Io),
    /// Compare manual warm-up lengths against the adaptive schedule.
    Sweep {
        #[command(flatten)]
        io: Io,
        /// Comma-separated warm-up lengths.
        #[arg(long, value_delimiter = ',', required = true)]
        warmups: Vec<u64>,
    },
    /// Run the adaptive schedule for several target losses.
    AblateFstar {
        #[command(flatten)]
        io: Io,
        /// Comma-separated target losses.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Read `--values` as multiples of the initial gap.
        #[arg(long)]
        relative: bool,
    },
    /// Record smoothness ratios along a run and fit a quadratic in the gap.
    Diagnose(Io),
    /// Run the built-in checks.
    Verify {
        /// Write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Skip the tiny-MLP sweep and ablation.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Subcommand)]
enum ScheduleCommand {
    /// Feed the scheduler a synthetic gap trajectory.
    Preview(Io),
}

#[derive(Args)]
struct Io {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

impl Io {
    fn load(&self) -> Result<RunConfig> {
        let text = fs::read_to_string(&self.config)
            .with_context(|| format!("reading {}", self.config.display()))?;
        Ok(RunConfig::from_json(&text)?)
    }

    fn create(&self) -> Result<BufWriter<File>> {
        create(&self.out)
    }

    /// Path next to the CSV for a JSON summary.
    fn sidecar(&self) -> PathBuf {
        self.out.with_extension("json")
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Schedule {
            command: ScheduleCommand::Preview(io),
        } => {
            let rows = schedule_preview(&io.load()?)?;
            write_preview_csv(&rows, io.create()?)?;
            eprintln!("wrote {} rows to {}", rows.len(), io.out.display());
        }
        Command::Train(io) => {
            let trace = run_training(&io.load()?)?;
            trace.write_csv(io.create()?)?;
            write_json(&io.sidecar(), &trace.header)?;
            let h = &trace.header;
            eprintln!(
                "{}: {} steps, final loss {}, warmup_steps {}",
                h.outcome.label(),
                h.steps_completed,
                h.final_loss,
                h.warmup_steps
            );
        }
        Command::Sweep { io, warmups } => {
            let rows = run_sweep(&io.load()?, &warmups)?;
            write_sweep_csv(&rows, io.create()?)?;
            for r in &rows {
                eprintln!("{:?} warmup={} final_loss={} {}", r.schedule, r.warmup_steps, r.final_loss, r.status);
            }
        }
        Command::AblateFstar {
            io,
            values,
            relative,
        } => {
            let cfg = io.load()?;
            let values = if relative {
                let d0 = initial_gap(&cfg)?;
                values.iter().map(|v| v * d0).collect()
            } else {
                values
            };
            let rows = run_fstar_ablation(&cfg, &values)?;
            write_ablation_csv(&rows, io.create()?)?;
            for r in &rows {
                eprintln!("f_star={} final_loss={} {}", r.f_star, r.final_loss, r.status);
            }
        }
        Command::Diagnose(io) => {
            let d = diagnose(&io.load()?)?;
            write_diagnosis_csv(&d, io.create()?)?;
            match &d.fit {
                Ok(fit) => {
                    write_json(&io.sidecar(), fit)?;
                    eprintln!("K0={} K1={} K2={} over {} samples", fit.k0, fit.k1, fit.k2, fit.n_samples);
                }
                Err(e) => bail!("fit failed: {e}"),
            }
        }
        Command::Verify { json, quick } => {
            let report = run_verify(VerifyOptions { quick });
            for c in &report.checks {
                println!(
                    "{} {} measured={:e} tolerance={:e}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.measured,
                    c.tolerance
                );
            }
            if let Some(path) = json {
                write_json(&path, &report)?;
            }
            if !report.passed {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
