use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use idlewave::analysis::{default_chaining_window, detect_self_sync, detect_waves, idle_stats, SyncConfig, SyncReport};
use idlewave::network::Topology;
use idlewave::render::{render_heatmap, render_shifted_timelines, Format, RenderConfig};
use idlewave::trace::{ingest_csv, read_trace, write_trace};
use idlewave::{Cycles, Preset, Rank, SimConfig, Trace};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "idlewave", version, about = "Simulate, analyze and render idle waves in halo-exchange runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write its trace.
    Simulate(SimulateArgs),
    /// Compute idle statistics, wave fronts or synchronization from a trace.
    Analyze(AnalyzeArgs),
    /// Draw a trace as an image or text grid.
    Render(RenderArgs),
    /// Convert a measured CSV trace into the native format.
    Ingest(IngestArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the machine preset in the config.
    #[arg(long)]
    preset: Option<Preset>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnalysisKind {
    Stats,
    Waves,
    Sync,
}

#[derive(Args)]
struct AnalyzeArgs {
    kind: AnalysisKind,
    #[arg(long)]
    trace: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Idle periods shorter than this many cycles are ignored.
    #[arg(long, default_value_t = 1_000_000)]
    threshold: Cycles,
    /// Bin width in cycles for the synchronization series.
    #[arg(long)]
    time_bin: Option<Cycles>,
    /// Chaining window in cycles for wave detection.
    #[arg(long)]
    window: Option<Cycles>,
    /// Minimum number of periods the trace must span for a confident sync.
    #[arg(long)]
    min_periods: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RenderMode {
    Heatmap,
    Timelines,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("alignment").args(["shifts", "sync_report"]))]
struct RenderArgs {
    mode: RenderMode,
    #[arg(long)]
    trace: PathBuf,
    /// Output file; required unless the format is ascii.
    #[arg(long)]
    out: Option<PathBuf>,
    /// ppm, svg or ascii; inferred from the output extension when absent.
    #[arg(long)]
    format: Option<Format>,
    #[arg(long, default_value_t = 1_000_000)]
    threshold: Cycles,
    #[arg(long, default_value_t = 1_000_000)]
    time_bin: Cycles,
    #[arg(long, default_value_t = 800)]
    width: u32,
    #[arg(long, default_value_t = 512)]
    height: u32,
    /// Per-rank shifts as `rank:cycles,...` (timelines).
    #[arg(long, value_parser = parse_shifts)]
    shifts: Option<BTreeMap<Rank, Cycles>>,
    /// Output of `analyze sync` supplying the shifts (timelines).
    #[arg(long)]
    sync_report: Option<PathBuf>,
    /// Inclusive rank range `a-b` to draw (timelines).
    #[arg(long, value_parser = parse_range)]
    ranks: Option<(Rank, Rank)>,
    /// Annotates node and socket boundaries using this config's placement.
    #[arg(long, conflicts_with_all = ["preset", "cores_per_socket"])]
    config: Option<PathBuf>,
    /// Annotates boundaries using a machine preset.
    #[arg(long, conflicts_with = "cores_per_socket")]
    preset: Option<Preset>,
    /// Annotates boundaries using an explicit placement.
    #[arg(long, requires = "sockets_per_node")]
    cores_per_socket: Option<u32>,
    #[arg(long, requires = "cores_per_socket")]
    sockets_per_node: Option<u32>,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("clock").args(["clock_hz", "preset"]).required(true))]
struct IngestArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    clock_hz: Option<u64>,
    /// Takes the clock rate from a machine preset.
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    ranks: u32,
    #[arg(long)]
    out: PathBuf,
}

fn parse_shifts(s: &str) -> Result<BTreeMap<Rank, Cycles>, String> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|pair| {
            let (r, c) = pair
                .split_once(':')
                .ok_or_else(|| format!("expected rank:cycles, got {pair:?}"))?;
            let r = r.trim().parse().map_err(|_| format!("bad rank {r:?}"))?;
            let c = c.trim().parse().map_err(|_| format!("bad shift {c:?}"))?;
            Ok((r, c))
        })
        .collect()
}

fn parse_range(s: &str) -> Result<(Rank, Rank), String> {
    let (a, b) = s.split_once('-').unwrap_or((s, s));
    let a: Rank = a.trim().parse().map_err(|_| format!("bad rank {a:?}"))?;
    let b: Rank = b.trim().parse().map_err(|_| format!("bad rank {b:?}"))?;
    if a > b {
        return Err(format!("empty range {s:?}"));
    }
    Ok((a, b))
}

fn load_trace(path: &Path) -> Result<Trace> {
    Ok(read_trace(path)?)
}

/// Standard output or a freshly truncated file.
fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(io::BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn tagged(kind: &str, value: impl serde::Serialize) -> Result<Value> {
    let mut v = serde_json::to_value(value)?;
    if let Value::Object(map) = &mut v {
        map.insert("type".into(), json!(kind));
    }
    Ok(v)
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut cfg = SimConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(p) = args.preset {
        cfg.preset = Some(p);
    }
    let started = Instant::now();
    let trace = idlewave::simulate(&cfg)?;
    write_trace(&trace, &args.out)?;
    let topo = cfg.resolved().topology;
    println!(
        "ranks {} nodes {} cycles {} records {} wall {:.3}s -> {}",
        topo.ranks,
        topo.nodes(),
        cfg.app.cycles,
        trace.len(),
        started.elapsed().as_secs_f64(),
        args.out.display()
    );
    Ok(())
}

fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let trace = load_trace(&args.trace)?;
    let mut out = sink(args.out.as_deref())?;
    match args.kind {
        AnalysisKind::Stats => {
            for s in idle_stats(&trace) {
                writeln!(out, "{}", tagged("rank_stats", s)?)?;
            }
        }
        AnalysisKind::Waves => {
            let window = args.window.unwrap_or_else(|| default_chaining_window(&trace));
            for f in detect_waves(&trace, args.threshold, window) {
                writeln!(out, "{}", tagged("wave", f)?)?;
            }
        }
        AnalysisKind::Sync => {
            let mut cfg = SyncConfig {
                threshold: args.threshold,
                ..SyncConfig::default()
            };
            if let Some(b) = args.time_bin {
                cfg.bin = b;
            }
            if let Some(m) = args.min_periods {
                cfg.min_periods = m;
            }
            let rep = detect_self_sync(&trace, &cfg)?;
            writeln!(out, "{}", tagged("sync", &rep)?)?;
            out.flush()?;
            if rep.low_confidence {
                let spanned = trace.span() as f64 / rep.period.max(1) as f64;
                bail!(
                    "low confidence: trace spans {spanned:.1} periods of {} cycles, fewer than the required {}",
                    rep.period,
                    cfg.min_periods
                );
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn read_sync_report(path: &Path) -> Result<SyncReport> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    for line in BufReader::new(file).lines() {
        let line = line?;
        let v: Value = serde_json::from_str(&line).with_context(|| format!("{}: not JSON", path.display()))?;
        if v.get("type") == Some(&json!("sync")) {
            return Ok(serde_json::from_value(v)?);
        }
    }
    bail!("{}: no sync report found", path.display())
}

fn render(args: &RenderArgs) -> Result<()> {
    if matches!(args.mode, RenderMode::Timelines) && args.shifts.is_none() && args.sync_report.is_none() {
        Cli::command()
            .error(ErrorKind::MissingRequiredArgument, "timelines need --shifts or --sync-report")
            .exit();
    }
    let trace = load_trace(&args.trace)?;
    let format = match (args.format, &args.out) {
        (Some(f), _) => f,
        (None, Some(p)) => match p.extension().and_then(|e| e.to_str()) {
            Some("svg") => Format::Svg,
            Some("txt") => Format::Ascii,
            _ => Format::Ppm,
        },
        (None, None) => Format::Ascii,
    };
    if args.out.is_none() && format != Format::Ascii {
        bail!("--out is required for {format:?} output");
    }
    let cfg = RenderConfig {
        threshold: args.threshold,
        time_bin: args.time_bin,
        width: args.width,
        height: args.height,
        annotate_topology: false,
        output_format: format,
    };

    let bytes = match args.mode {
        RenderMode::Heatmap => {
            let topo = if let Some(path) = &args.config {
                Some(SimConfig::load(path)?.resolved().topology)
            } else if let Some(p) = args.preset {
                let (cps, spn, _) = p.machine();
                Some(Topology::new(trace.ranks(), cps, spn))
            } else {
                args.cores_per_socket
                    .zip(args.sockets_per_node)
                    .map(|(cps, spn)| Topology::new(trace.ranks(), cps, spn))
            };
            let cfg = RenderConfig {
                annotate_topology: topo.is_some(),
                ..cfg
            };
            render_heatmap(&trace, &cfg, topo.as_ref())?
        }
        RenderMode::Timelines => {
            let shifts = match (&args.shifts, &args.sync_report) {
                (Some(s), _) => s.clone(),
                (None, Some(p)) => read_sync_report(p)?.phases,
                (None, None) => unreachable!("checked above"),
            };
            let ranks: Vec<Rank> = match args.ranks {
                Some((a, b)) => (a..=b).collect(),
                None => shifts.keys().copied().collect(),
            };
            render_shifted_timelines(&trace, &ranks, &shifts, &cfg)?
        }
    };

    match &args.out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().lock().write_all(&bytes)?,
    }
    Ok(())
}

fn ingest(args: &IngestArgs) -> Result<()> {
    let clock_hz = match (args.clock_hz, args.preset) {
        (Some(hz), _) => hz,
        (None, Some(p)) => p.machine().2,
        (None, None) => unreachable!("clap requires one of them"),
    };
    let file = File::open(&args.csv).with_context(|| format!("opening {}", args.csv.display()))?;
    let trace = ingest_csv(file, clock_hz, args.ranks).with_context(|| format!("ingesting {}", args.csv.display()))?;
    write_trace(&trace, &args.out)?;
    println!("ingested {} records over {} ranks -> {}", trace.len(), trace.ranks(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
        Command::Render(a) => render(a),
        Command::Ingest(a) => ingest(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
