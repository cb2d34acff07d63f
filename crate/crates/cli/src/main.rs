//! `ndt`: command line front end for the digital twin workbench.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use ndt_core::harness::{
    control_cycle, experiment_links, export, read_dataset, read_rows_csv, run_phase1, run_phase2, split_by_seed,
    write_dataset, write_rows_csv, ExperimentConfig, GraphDefaults, OracleClassifier,
};
use ndt_core::mpnn::{accuracy, train, write_curve_csv, EdgeClassifier, ModelParams, TrainConfig};
use ndt_core::netsim::{
    apply_pbr, build_routing_tables, read_event_csv, run, write_event_csv, PbrRule, Scenario, SimConfig,
};
use ndt_core::telemetry::{window_metrics, write_metrics_csv, Window};
use ndt_core::topology::{
    assign_roles, generate, topology_stats, DegreeBounds, GraphModel, GraphParams, GraphSpec, Topology,
    DEFAULT_PATH_CEILING,
};
use ndt_core::traffic::{build_schedule, write_transfer_csv, TransferTask};

#[derive(Parser)]
#[command(name = "ndt", version, about = "Network digital twin workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a topology and write it as JSON.
    Gen {
        #[arg(long, value_parser = parse_model)]
        model: GraphModel,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Edge probability (er) or rewiring probability (ws).
        #[arg(long)]
        p: Option<f64>,
        /// Edges attached per new vertex (ba).
        #[arg(long)]
        m: Option<usize>,
        /// Ring neighbours (ws).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the file-transfer schedule on a topology under shortest paths.
    Simulate {
        #[arg(long)]
        topology: PathBuf,
        /// JSON array of transfer tasks; generated from `--seed` when absent.
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// JSON array of policy rules to install before the run.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        iterations: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-3)]
        tick: f64,
        #[arg(long, default_value_t = 0.0)]
        failure_prob: f64,
        /// Directory for events.csv, transfers.csv and metrics.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the edge classifier on a JSON-lines dataset.
    Train {
        /// Dataset file, or an experiment directory holding `dataset.jsonl`.
        #[arg(long, alias = "dataset")]
        data: PathBuf,
        /// Hold these seeds out for validation.
        #[arg(long, value_delimiter = ',')]
        holdout: Vec<u64>,
        /// TOML file with training hyperparameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Report classification accuracy of a model on a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, alias = "dataset")]
        data: PathBuf,
    },
    /// Run one control cycle over an event log and print the rules it installs.
    Reroute {
        #[arg(long)]
        topology: PathBuf,
        /// Event log CSV, or a simulate output directory holding `events.csv`.
        #[arg(long, alias = "events")]
        telemetry: PathBuf,
        /// Model file; without it the congestion column is thresholded directly.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Where to write the installed rules as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the two-phase experiment.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        phase: PhaseArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a baseline and an optimized run directory.
    Compare {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        optimized: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_model(s: &str) -> Result<GraphModel, String> {
    s.parse().map_err(|e: ndt_core::topology::TopologyError| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Gen { model, n, seed, p, m, k, out } => gen(model, n, seed, GraphParams { p, m, k }, &out),
        Command::Simulate { topology, schedule, rules, iterations, seed, tick, failure_prob, out } => {
            let sim = SimConfig { tick, failure_prob, seed, ..SimConfig::default() };
            simulate(&topology, schedule.as_deref(), rules.as_deref(), iterations, sim, &out)
        }
        Command::Train { data, holdout, config, out, curve, lr, epochs, seed } => {
            let mut hyper = match config {
                Some(p) => ExperimentConfig::load(&p)?.hyper,
                None => TrainConfig::default(),
            };
            hyper.lr = lr.unwrap_or(hyper.lr);
            hyper.epochs = epochs.unwrap_or(hyper.epochs);
            hyper.seed = seed.unwrap_or(hyper.seed);
            train_cmd(&dataset_path(&data), &holdout, &hyper, &out, curve.as_deref())
        }
        Command::Evaluate { model, data } => evaluate(&model, &dataset_path(&data)),
        Command::Reroute { topology, telemetry, model, out } => {
            reroute(&topology, &telemetry, model.as_deref(), out.as_deref())
        }
        Command::Experiment { config, phase, out } => experiment(config.as_deref(), phase, &out),
        Command::Compare { baseline, optimized, out } => compare_dirs(&baseline, &optimized, &out),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn load_topology(path: &Path) -> Result<Topology> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Topology::from_json(&text)?)
}

fn load_model(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ModelParams::from_json(&text)?)
}

fn gen(model: GraphModel, n: usize, seed: u64, overrides: GraphParams, out: &Path) -> Result<()> {
    let defaults = GraphDefaults::default().params(model);
    let params =
        GraphParams { p: overrides.p.or(defaults.p), m: overrides.m.or(defaults.m), k: overrides.k.or(defaults.k) };
    let spec = GraphSpec { model, n, params };
    let core = generate(&spec, DegreeBounds::default(), seed)?;
    let topology = assign_roles(&core, &experiment_links())?;
    let stats = topology_stats(&core, &topology.gateway_pairs(), DEFAULT_PATH_CEILING)?;
    fs::write(out, topology.to_json()).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "{model} n={n} seed={seed}: {} core edges, {} gateway paths, mean hop length {:.3}, {} vertices",
        stats.edge_count,
        stats.path_count,
        stats.avg_hop_length,
        topology.vertex_count()
    );
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(std::io::BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn simulate(
    topology: &Path,
    schedule: Option<&Path>,
    rules: Option<&Path>,
    iterations: u32,
    sim: SimConfig,
    out: &Path,
) -> Result<()> {
    let topology = load_topology(topology)?;
    let schedule: Vec<TransferTask> = match schedule {
        Some(p) => read_json(p)?,
        None => build_schedule(&topology, iterations, sim.seed)?,
    };
    let mut state = build_routing_tables(&topology)?;
    if let Some(p) = rules {
        let rules: Vec<PbrRule> = read_json(p)?;
        state = apply_pbr(&state, &rules)?;
    }
    let output = run(&Scenario { topology: &topology, schedule, config: sim }, &state)?;
    fs::create_dir_all(out)?;
    write_event_csv(&output.events, create(&out.join("events.csv"))?)?;
    write_transfer_csv(&output.records, create(&out.join("transfers.csv"))?)?;
    let metrics = window_metrics(&output.events, &topology, Window::new(0.0, output.end_t));
    write_metrics_csv(&metrics, create(&out.join("metrics.csv"))?)?;
    let t = output.totals;
    println!(
        "{} transfers, {} chunk records, end {:.3}s; bytes injected {} delivered {} queued {}",
        output.records.len(),
        output.events.len(),
        output.end_t,
        t.injected,
        t.delivered,
        t.queued
    );
    Ok(())
}

fn dataset_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join("dataset.jsonl")
    } else {
        data.to_path_buf()
    }
}

fn train_cmd(dataset: &Path, holdout: &[u64], cfg: &TrainConfig, out: &Path, curve: Option<&Path>) -> Result<()> {
    let (train_set, validation) = split_by_seed(read_dataset(dataset)?, holdout);
    info!("training on {} windows, validating on {}", train_set.len(), validation.len());
    let outcome = train(&train_set, &validation, cfg)?;
    fs::write(out, outcome.model.to_json()).with_context(|| format!("writing {}", out.display()))?;
    if let Some(path) = curve {
        write_curve_csv(&outcome.curve, create(path)?)?;
    }
    if let Some(last) = outcome.curve.last() {
        println!("final training loss {:.5} per edge", last.train);
    }
    if !validation.is_empty() {
        let (right, total) = accuracy(&outcome.model, &validation)?;
        println!("validation accuracy {right}/{total} = {:.4}", right as f64 / total.max(1) as f64);
    }
    Ok(())
}

fn evaluate(model: &Path, dataset: &Path) -> Result<()> {
    let model = load_model(model)?;
    let samples = read_dataset(dataset)?;
    let (right, total) = accuracy(&model, &samples)?;
    println!("accuracy {right}/{total} = {:.4}", right as f64 / total.max(1) as f64);
    Ok(())
}

fn reroute(topology: &Path, telemetry: &Path, model: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let topology = load_topology(topology)?;
    let events = if telemetry.is_dir() { telemetry.join("events.csv") } else { telemetry.to_path_buf() };
    let events = events.as_path();
    let log = read_event_csv(File::open(events).with_context(|| format!("opening {}", events.display()))?)?;
    let end = log.iter().map(|r| r.arrival_t).fold(0.0, f64::max);
    let metrics = window_metrics(&log, &topology, Window::new(0.0, end));
    let mut state = build_routing_tables(&topology)?;
    let loaded = model.map(load_model).transpose()?;
    let classifier: &dyn EdgeClassifier = match &loaded {
        Some(m) => m,
        None => &OracleClassifier,
    };
    let report = control_cycle(&topology, &mut state, classifier, &metrics, &log)?;
    println!(
        "vertices rerouted {}, rules installed {}, skipped {}, dropped {}",
        report.vertices_rerouted, report.installed, report.skipped, report.dropped
    );
    println!("{}", state.describe_rules());
    if let Some(path) = out {
        let rules: Vec<&PbrRule> = state.rules().collect();
        serde_json::to_writer_pretty(create(path)?, &rules).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn experiment(config: Option<&Path>, phase: PhaseArg, out: &Path) -> Result<()> {
    let cfg = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml())?;
    let model_path = out.join("model.json");
    let baseline_dir = out.join("baseline");
    let optimized_dir = out.join("optimized");

    if matches!(phase, PhaseArg::One | PhaseArg::Both) {
        let (train_set, _) = run_phase1(&cfg, cfg.training_seeds())?;
        write_dataset(&train_set, &out.join("dataset.jsonl"))?;
        let (_, baseline) = run_phase1(&cfg, &cfg.seeds)?;
        fs::create_dir_all(&baseline_dir)?;
        write_rows_csv(&baseline, &baseline_dir.join("rows.csv"))?;
        info!("phase 1: {} training windows, {} baseline rows", train_set.len(), baseline.rows.len());
        let outcome = train(&train_set, &[], &cfg.hyper)?;
        fs::write(&model_path, outcome.model.to_json())?;
        write_curve_csv(&outcome.curve, create(&out.join("curve.csv"))?)?;
    }
    if matches!(phase, PhaseArg::Two | PhaseArg::Both) {
        if !model_path.exists() {
            bail!("{} not found; run phase 1 first", model_path.display());
        }
        let model = load_model(&model_path)?;
        let optimized = run_phase2(&cfg, &cfg.seeds, &model)?;
        fs::create_dir_all(&optimized_dir)?;
        write_rows_csv(&optimized, &optimized_dir.join("rows.csv"))?;
        info!("phase 2: {} rows", optimized.rows.len());
    }
    if matches!(phase, PhaseArg::Both) {
        compare_dirs(&baseline_dir, &optimized_dir, &out.join("comparison"))?;
    }
    Ok(())
}

fn rows_path(dir: &Path) -> PathBuf {
    if dir.is_file() {
        dir.to_path_buf()
    } else {
        dir.join("rows.csv")
    }
}

fn compare_dirs(baseline: &Path, optimized: &Path, out: &Path) -> Result<()> {
    let b = read_rows_csv(&rows_path(baseline))?;
    let o = read_rows_csv(&rows_path(optimized))?;
    let summary = export(&b, &o, out)?;
    for (metric, d) in &summary.overall {
        let pct = d.pct_delta.map_or_else(|| "n/a".to_string(), |p| format!("{p:+.2}%"));
        println!("{:<20} {:>14.4} -> {:>14.4} ({pct})", metric.name(), d.baseline, d.optimized);
    }
    Ok(())
}
