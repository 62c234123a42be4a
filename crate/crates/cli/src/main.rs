//! Command-line front end: simulate traces, run the pipeline, score runs
//! against ground truth and time the pipeline.
//!
//! Exit codes: 0 success, 2 input error, 3 no window produced a rate.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use csi_breath::io;
use csi_breath::metrics;
use csi_breath::pipeline::{self, PipelineConfig, WindowOutput};
use csi_breath::sim::{self, SceneSpec};
use csi_breath::trace::Report;

#[derive(Parser)]
#[command(name = "csi-breath", version, about = "Respiration sensing from WiFi CSI amplitudes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a CSI trace and its ground truth from a scene description.
    Simulate {
        /// Scene JSON; the built-in default scene when omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Duration in seconds.
        #[arg(long, default_value_t = 180.0)]
        duration: f64,
        /// Sample rate in Hz.
        #[arg(long, default_value_t = 100.0)]
        rate: f64,
        #[arg(long, default_value_t = 2000)]
        subcarriers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output trace CSV.
        #[arg(long)]
        out: PathBuf,
        /// Output ground-truth CSV.
        #[arg(long)]
        truth: PathBuf,
    },
    /// Run the sliding-window pipeline over a trace.
    Run {
        #[arg(long)]
        input: PathBuf,
        /// Pipeline configuration JSON; defaults for omitted fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the BNR floor of the hybrid selection threshold.
        #[arg(long)]
        bnr_floor: Option<f64>,
        /// Output waveform CSV (one block per window).
        #[arg(long)]
        out: PathBuf,
        /// Output report JSON.
        #[arg(long)]
        report: PathBuf,
        /// Write per-window subcarrier BNRs and selection to this CSV.
        #[arg(long, value_name = "PATH")]
        dump_bnr: Option<PathBuf>,
        /// Write per-window group membership and refinement scores to this CSV.
        #[arg(long, value_name = "PATH")]
        dump_groups: Option<PathBuf>,
    },
    /// Score a run against ground truth.
    Eval {
        #[arg(long)]
        waveform: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Configuration used for the run, for matching segmentation.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output metrics JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Time one full window on a simulated trace and print per-stage timings.
    Bench {
        #[arg(long, default_value_t = 2000)]
        subcarriers: usize,
        #[arg(long, default_value_t = 15.0)]
        window_s: f64,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
}

enum Failure {
    Input(String),
    NoOutput(String),
}

impl From<csi_breath::Error> for Failure {
    fn from(e: csi_breath::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Failure> {
    let cfg = match path {
        Some(p) => io::read_json(p)?,
        None => PipelineConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(
    scene: Option<&Path>,
    duration: f64,
    rate: f64,
    subcarriers: usize,
    seed: u64,
    out: &Path,
    truth_path: &Path,
) -> Result<(), Failure> {
    let scene: SceneSpec = match scene {
        Some(p) => io::read_json(p)?,
        None => SceneSpec::default(),
    };
    let (trace, truth) = sim::simulate_trace(&scene, duration, rate, subcarriers, seed)?;
    io::write_trace(&trace, out)?;
    io::write_truth(&truth, truth_path)?;
    Ok(())
}

fn dump_bnr(outputs: &[WindowOutput], path: &Path) -> Result<(), Failure> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "window_start_s,subcarrier,bnr,threshold,retained")?;
        for o in outputs {
            let Some(table) = &o.bnr else { continue };
            let start = o.report.window_start_s;
            let mut kept = vec![false; table.bnr.len()];
            table.retained.iter().for_each(|&k| kept[k] = true);
            for (k, b) in table.bnr.iter().enumerate() {
                writeln!(w, "{start},{k},{b},{},{}", table.threshold_used, u8::from(kept[k]))?;
            }
        }
        w.flush()
    };
    body().map_err(|e| io_err(path, e))
}

fn dump_groups(outputs: &[WindowOutput], path: &Path) -> Result<(), Failure> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "window_start_s,subcarrier,group,score")?;
        for o in outputs {
            let (Some(p), Some(table)) = (&o.partition, &o.bnr) else { continue };
            let start = o.report.window_start_s;
            // Scores are indexed like the retained list.
            for (i, k) in table.retained.iter().enumerate() {
                let group = if p.group1.contains(k) {
                    "1"
                } else if p.group2.contains(k) {
                    "2"
                } else {
                    "discarded"
                };
                writeln!(w, "{start},{k},{group},{}", p.scores[i])?;
            }
        }
        w.flush()
    };
    body().map_err(|e| io_err(path, e))
}

#[allow(clippy::too_many_arguments)]
fn run(
    input: &Path,
    config: Option<&Path>,
    bnr_floor: Option<f64>,
    out: &Path,
    report_path: &Path,
    bnr_path: Option<&Path>,
    groups_path: Option<&Path>,
) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(f) = bnr_floor {
        cfg.bnr_floor = f;
        cfg.validate()?;
    }
    let trace = io::read_trace(input)?;
    let outputs = pipeline::run_stream(&trace, &cfg)?;
    let waveforms: Vec<_> = outputs.iter().filter_map(|o| o.waveform.clone()).collect();
    let report = Report { windows: outputs.iter().map(|o| o.report.clone()).collect() };
    io::write_waveforms(&waveforms, out)?;
    io::write_report(&report, report_path)?;
    if let Some(p) = bnr_path {
        dump_bnr(&outputs, p)?;
    }
    if let Some(p) = groups_path {
        dump_groups(&outputs, p)?;
    }
    let with_rate = report.windows.iter().filter(|w| w.rr_bpm.is_some()).count();
    eprintln!(
        "{} windows, {} with a rate, {} degraded",
        report.windows.len(),
        with_rate,
        report.windows.iter().filter(|w| w.degraded).count()
    );
    if with_rate == 0 {
        return Err(Failure::NoOutput("no window produced a respiratory rate".into()));
    }
    Ok(())
}

fn eval(waveform: &Path, report: &Path, truth: &Path, config: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let waveforms = io::read_waveforms(waveform)?;
    let report = io::read_report(report)?;
    let truth = io::read_truth(truth)?;
    let evaluation = metrics::evaluate(&waveforms, &report, &truth, |n, fs| cfg.peak_params(n, fs))?;
    io::write_json(&evaluation, out)?;
    if evaluation.rr_mae_bpm.is_none() && evaluation.waveform_pcc.is_none() {
        return Err(Failure::NoOutput("nothing in the run could be scored".into()));
    }
    Ok(())
}

fn bench(subcarriers: usize, window_s: f64, repeats: usize) -> Result<(), Failure> {
    let report = pipeline::bench(&PipelineConfig::default(), subcarriers, window_s, repeats)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Input(e.to_string()))?;
    println!("{json}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { scene, duration, rate, subcarriers, seed, out, truth } => {
            simulate(scene.as_deref(), *duration, *rate, *subcarriers, *seed, out, truth)
        }
        Command::Run { input, config, bnr_floor, out, report, dump_bnr, dump_groups } => {
            run(input, config.as_deref(), *bnr_floor, out, report, dump_bnr.as_deref(), dump_groups.as_deref())
        }
        Command::Eval { waveform, report, truth, config, out } => eval(waveform, report, truth, config.as_deref(), out),
        Command::Bench { subcarriers, window_s, repeats } => bench(*subcarriers, *window_s, *repeats),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::NoOutput(msg)) => {
            eprintln!("no viable output: {msg}");
            ExitCode::from(3)
        }
    }
}
