use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mpsim::harness::{
    emit_plot, load_scenario, parse_trace_csv, run_scenario, run_sweep, write_sweep_csv, write_trace_csv,
    SummaryStats, SweepParam, SweepSpec,
};

#[derive(Parser)]
#[command(name = "mpsim", version, about = "Multipath TCP simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write trace.csv, summary.txt and cwnd.svg.
    Run {
        /// Scenario file, or the name of a bundled preset.
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Vary one link parameter and write sweep.csv.
    Sweep {
        scenario: PathBuf,
        /// capacity (Mbit/s), latency (ms) or loss (probability).
        #[arg(long)]
        param: SweepParam,
        /// 1-based link index.
        #[arg(long, default_value_t = 2)]
        link: usize,
        /// Comma-separated; defaults to the parameter's standard grid.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Option<Vec<f64>>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Render a trace CSV as an SVG window plot.
    Plot {
        trace: PathBuf,
        /// Defaults to the trace path with an .svg extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { scenario, out, seed } => run(&scenario, &out, seed),
        Command::Sweep {
            scenario,
            param,
            link,
            values,
            out,
        } => sweep(&scenario, param, link, values, &out),
        Command::Plot { trace, out } => plot(&trace, out),
    }
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run(scenario: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = load_scenario(scenario).with_context(|| format!("loading {}", scenario.display()))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    out_dir(out)?;
    let result = run_scenario(&cfg);
    write_trace_csv(&result.trace, out.join("trace.csv"))?;
    if !result.trace.is_empty() {
        emit_plot(&result.trace, out.join("cwnd.svg"))?;
    }
    let summary = render_summary(&result.stats);
    let path = out.join("summary.txt");
    fs::write(&path, &summary).with_context(|| format!("writing {}", path.display()))?;
    print!("{summary}");
    if !result.stats.integrity_ok() && result.stats.completed() {
        bail!("delivered stream does not match the sent stream");
    }
    Ok(())
}

fn render_summary(s: &SummaryStats) -> String {
    let mut out = String::new();
    let completion = s
        .completion_time
        .map(|t| format!("{t:.6} s"))
        .unwrap_or_else(|| "not completed".into());
    out += &format!("transfer_bytes       {}\n", s.transfer_size);
    out += &format!("completion_time      {completion}\n");
    out += &format!("goodput_bps          {:.1}\n", s.goodput);
    out += &format!("delivered_bytes      {}\n", s.delivered_bytes);
    for (i, sf) in s.subflows.iter().enumerate() {
        out += &format!(
            "subflow {}            bytes {} retx {} fast_retx {} rtos {} spurious {}\n",
            i + 1,
            sf.bytes,
            sf.retransmissions,
            sf.fast_retransmits,
            sf.rtos,
            sf.spurious_detections
        );
    }
    out += &format!(
        "spurious_retx        fast {} timeout {}\n",
        s.spurious_fast_retransmits, s.spurious_timeout_retransmits
    );
    out += &format!("integrity            {}\n", if s.integrity_ok() { "ok" } else { "MISMATCH" });
    out
}

fn sweep(scenario: &Path, param: SweepParam, link: usize, values: Option<Vec<f64>>, out: &Path) -> Result<()> {
    let base = load_scenario(scenario).with_context(|| format!("loading {}", scenario.display()))?;
    if link == 0 {
        bail!("--link is 1-based");
    }
    let spec = SweepSpec {
        parameter: param,
        link: link - 1,
        values: values.unwrap_or_else(|| param.default_grid()),
    };
    let rows = run_sweep(&base, &spec)?;
    out_dir(out)?;
    let path = out.join("sweep.csv");
    write_sweep_csv(&rows, &path)?;
    let failed: Vec<_> = rows
        .iter()
        .filter_map(|r| r.result.as_ref().err().map(|e| format!("{param} = {}: {e}", r.value)))
        .collect();
    for f in &failed {
        eprintln!("point failed: {f}");
    }
    println!("{} points written to {}", rows.len(), path.display());
    if !failed.is_empty() {
        bail!("{} of {} sweep points failed", failed.len(), rows.len());
    }
    Ok(())
}

fn plot(trace: &Path, out: Option<PathBuf>) -> Result<()> {
    let text = fs::read_to_string(trace).with_context(|| format!("reading {}", trace.display()))?;
    let records = parse_trace_csv(&text).with_context(|| format!("parsing {}", trace.display()))?;
    let out = out.unwrap_or_else(|| trace.with_extension("svg"));
    emit_plot(&records, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
