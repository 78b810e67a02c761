mod config;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use toml::Table;

use dual_hawkes::estimate::{fit, FitConfig};
use dual_hawkes::experiment::{run_experiment, BaseModel, ExperimentKind, ExperimentSpec};
use dual_hawkes::io::{read_catalog, read_trace, write_catalog, write_trace};
use dual_hawkes::rank::{engagement_direction, rank_items, rank_items_softmax, set_utility};
use dual_hawkes::seed::{derive_seed, rng_from_seed, stream};
use dual_hawkes::simulate::{simulate_epochs, SimConfig};
use dual_hawkes::synth::{build_scenario, ScenarioConfig, ScenarioKind};
use dual_hawkes::{EpochTrace, ItemCatalog, ModelParams};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "dual-hawkes", version, about = "Dual-kernel Hawkes model of user returns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Layers {
    /// key = value file with [sections]
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. --set fit.max_steps=500
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario and simulate epoch traces.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        sessions: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        layers: Layers,
    },
    /// Fit model parameters to trace files.
    Fit {
        /// Trace files, or directories containing *.jsonl traces
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long)]
        catalog: PathBuf,
        /// Ground-truth parameters (JSON) to report relative errors against
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optimizer initialization seed
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        layers: Layers,
    },
    /// Run one of the synthetic experiments and write its CSV.
    Experiment {
        /// error-vs-samples, error-vs-beta-gap, utility-vs-dissimilarity or utility-vs-inventory
        name: Option<String>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        sessions: Option<usize>,
        #[command(flatten)]
        layers: Layers,
    },
    /// Rank catalog items for a fitted or true user.
    Rank {
        #[arg(long)]
        catalog: PathBuf,
        /// Parameters JSON, either bare or a fit report
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_enum, default_value_t = Direction::Utility)]
        by: Direction,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        /// Sample from a softmax at this temperature instead of taking the top k
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// True parameters for scoring the selection's utility
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    /// Estimated utility embedding u2
    Utility,
    /// u1 + u2
    Engagement,
}

enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome<T> = std::result::Result<T, Failure>;

trait Classify<T> {
    fn invalid(self) -> Outcome<T>;
    fn runtime(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for std::result::Result<T, E> {
    fn invalid(self) -> Outcome<T> {
        self.map_err(|e| Failure::Invalid(e.into()))
    }
    fn runtime(self) -> Outcome<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Simulate {
            out,
            epochs,
            sessions,
            seed,
            layers,
        } => cmd_simulate(&out, epochs, sessions, seed, &layers),
        Command::Fit {
            traces,
            catalog,
            truth,
            out,
            seed,
            layers,
        } => cmd_fit(&traces, &catalog, truth.as_deref(), out.as_deref(), seed, &layers),
        Command::Experiment {
            name,
            out,
            paper_scale,
            seed,
            epochs,
            sessions,
            layers,
        } => cmd_experiment(name.as_deref(), &out, paper_scale, seed, epochs, sessions, &layers),
        Command::Rank {
            catalog,
            params,
            by,
            top_k,
            temperature,
            seed,
            truth,
            out,
        } => cmd_rank(&catalog, &params, by, top_k, temperature, seed, truth.as_deref(), out.as_deref()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Outcome<()> {
    let Ok(raw) = std::env::var("HAWKES_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow!("HAWKES_THREADS must be a positive integer, got {raw:?}"))
        .invalid()?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().runtime()
}

fn patches(layers: &Layers) -> anyhow::Result<Vec<Table>> {
    let mut out = Vec::new();
    if let Some(path) = &layers.config {
        out.push(config::read_table(path)?);
    }
    for s in &layers.set {
        out.push(config::parse_assignment(s)?);
    }
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn load_catalog(path: &Path) -> anyhow::Result<ItemCatalog> {
    let file = File::open(path).with_context(|| format!("opening catalog {}", path.display()))?;
    read_catalog(BufReader::new(file)).with_context(|| format!("reading catalog {}", path.display()))
}

/// Parameters stored either bare or as the `params` field of a fit report.
fn load_params(path: &Path) -> anyhow::Result<ModelParams> {
    let value: serde_json::Value = read_json(path)?;
    let inner = value.get("params").cloned().unwrap_or(value);
    let params: ModelParams = serde_json::from_value(inner).with_context(|| format!("parsing {}", path.display()))?;
    params.validate().with_context(|| format!("invalid parameters in {}", path.display()))?;
    Ok(params)
}

#[derive(Debug, Serialize, Deserialize)]
struct SimulateSpec {
    epochs: usize,
    seed: u64,
    model: BaseModel,
    scenario: ScenarioKind,
    sessions: SimConfig,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self {
            epochs: 4,
            seed: 0,
            model: BaseModel::default(),
            scenario: ScenarioKind::Orthonormal,
            sessions: SimConfig::default(),
        }
    }
}

fn cmd_simulate(out: &Path, epochs: Option<usize>, sessions: Option<usize>, seed: Option<u64>, layers: &Layers) -> Outcome<()> {
    let mut spec: SimulateSpec = patches(layers).and_then(|p| config::layered(&SimulateSpec::default(), &p)).invalid()?;
    if let Some(n) = epochs {
        spec.epochs = n;
    }
    if let Some(n) = sessions {
        spec.sessions.sessions_per_epoch = n;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.sessions.rng_seed = derive_seed(spec.seed, stream::SIMULATION, 0);
    spec.sessions.validate().invalid()?;
    if spec.epochs == 0 {
        return Err(Failure::Invalid(anyhow!("epochs must be >= 1")));
    }

    let scenario_config = ScenarioConfig::new(
        spec.model.d,
        spec.model.m,
        spec.scenario,
        derive_seed(spec.seed, stream::SCENARIO, 0),
    );
    let scenario = build_scenario(&scenario_config).invalid()?;
    let truth = ModelParams::new(
        spec.model.mu,
        spec.model.beta1,
        spec.model.beta2,
        scenario.u1.clone(),
        scenario.u2.clone(),
    )
    .invalid()?;
    let traces = simulate_epochs(&truth, &scenario.catalog, &spec.sessions, spec.epochs).runtime()?;

    (|| -> anyhow::Result<()> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let mut files = Vec::new();
        for (i, trace) in traces.iter().enumerate() {
            let name = format!("epoch_{i:04}.jsonl");
            let path = out.join(&name);
            let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
            write_trace(&mut w, trace, i as u64, spec.sessions.epoch_seed(i as u64))?;
            w.flush()?;
            files.push(name);
        }
        let mut w = BufWriter::new(File::create(out.join("catalog.txt"))?);
        write_catalog(&mut w, &scenario.catalog)?;
        w.flush()?;
        write_json(&out.join("truth.json"), &truth)?;
        let epoch_seeds: Vec<u64> = (0..spec.epochs as u64).map(|i| spec.sessions.epoch_seed(i)).collect();
        write_json(
            &out.join("manifest.json"),
            &json!({
                "command": "simulate",
                "version": VERSION,
                "spec": spec,
                "scenario": scenario_config,
                "epoch_seeds": epoch_seeds,
                "files": {"traces": files, "catalog": "catalog.txt", "truth": "truth.json"},
            }),
        )?;
        Ok(())
    })()
    .runtime()?;
    println!("wrote {} epochs to {}", traces.len(), out.display());
    Ok(())
}

fn collect_trace_paths(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            if found.is_empty() {
                bail!("no *.jsonl traces in {}", input.display());
            }
            paths.extend(found);
        } else {
            paths.push(input.clone());
        }
    }
    Ok(paths)
}

fn load_traces(inputs: &[PathBuf]) -> anyhow::Result<Vec<EpochTrace>> {
    collect_trace_paths(inputs)?
        .iter()
        .map(|p| {
            let file = File::open(p).with_context(|| format!("opening trace {}", p.display()))?;
            let (_, trace) = read_trace(BufReader::new(file)).with_context(|| format!("reading trace {}", p.display()))?;
            Ok(trace)
        })
        .collect()
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct FitSpec {
    fit: FitConfig,
}

fn cmd_fit(
    traces: &[PathBuf],
    catalog: &Path,
    truth: Option<&Path>,
    out: Option<&Path>,
    seed: Option<u64>,
    layers: &Layers,
) -> Outcome<()> {
    let mut spec: FitSpec = patches(layers).and_then(|p| config::layered(&FitSpec::default(), &p)).invalid()?;
    if let Some(s) = seed {
        spec.fit.init_seed = s;
    }
    spec.fit.validate().invalid()?;
    let catalog = load_catalog(catalog).invalid()?;
    let traces = load_traces(traces).invalid()?;
    for t in &traces {
        t.check_items(&catalog).invalid()?;
    }
    let truth = truth.map(load_params).transpose().invalid()?;
    let mut report = fit(&traces, &catalog, &spec.fit).runtime()?;
    if let Some(truth) = &truth {
        report = report.with_truth(truth).invalid()?;
    }
    match out {
        Some(path) => write_json(path, &report).runtime()?,
        None => println!("{}", serde_json::to_string_pretty(&report).runtime()?),
    }
    Ok(())
}

fn cmd_experiment(
    name: Option<&str>,
    out: &Path,
    paper_scale: bool,
    seed: Option<u64>,
    epochs: Option<usize>,
    sessions: Option<usize>,
    layers: &Layers,
) -> Outcome<()> {
    let patches = patches(layers).invalid()?;
    let from_file = patches.iter().rev().find_map(|t| t.get("kind").and_then(|v| v.as_str()));
    let name = name
        .or(from_file)
        .ok_or_else(|| anyhow!("no experiment given; valid names: {}", ExperimentKind::valid_names()))
        .invalid()?;
    let kind: ExperimentKind = name.parse().invalid()?;
    let preset = if paper_scale {
        ExperimentSpec::paper_scale(kind)
    } else {
        ExperimentSpec::desk(kind)
    };
    let mut spec = config::layered(&preset, &patches).invalid()?;
    spec.kind = kind;
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(n) = epochs {
        spec.epochs = n;
    }
    if let Some(n) = sessions {
        spec.sessions_per_epoch = n;
    }
    spec.validate().invalid()?;

    let result = run_experiment(&spec).runtime()?;
    (|| -> anyhow::Result<()> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let csv_path = out.join(kind.csv_file_name());
        fs::write(&csv_path, result.to_csv()).with_context(|| format!("writing {}", csv_path.display()))?;
        write_json(
            &out.join(format!("{}.manifest.json", kind.name())),
            &json!({
                "command": "experiment",
                "version": VERSION,
                "csv": kind.csv_file_name(),
                "aggregation": {
                    "errors": "median over replicates",
                    "utility_std": "sample standard deviation (n - 1) over replicates",
                },
                "spec": spec,
                "replicates": result.outcomes,
            }),
        )?;
        println!("wrote {}", csv_path.display());
        Ok(())
    })()
    .runtime()
}

#[allow(clippy::too_many_arguments)]
fn cmd_rank(
    catalog: &Path,
    params: &Path,
    by: Direction,
    top_k: usize,
    temperature: Option<f64>,
    seed: u64,
    truth: Option<&Path>,
    out: Option<&Path>,
) -> Outcome<()> {
    let catalog = load_catalog(catalog).invalid()?;
    let params = load_params(params).invalid()?;
    let truth = truth.map(load_params).transpose().invalid()?;
    let direction = match by {
        Direction::Utility => params.u2.clone(),
        Direction::Engagement => engagement_direction(&params.u1, &params.u2),
    };
    let ranking = match temperature {
        Some(t) => rank_items_softmax(&catalog, &direction, top_k, t, &mut rng_from_seed(seed)),
        None => rank_items(&catalog, &direction, top_k),
    }
    .invalid()?;
    let utility = truth
        .map(|t| set_utility(&ranking.indices, &catalog, &t.u2))
        .transpose()
        .invalid()?;
    let report = json!({
        "indices": ranking.indices,
        "scores": ranking.scores,
        "utility": utility,
    });
    match out {
        Some(path) => write_json(path, &report).runtime()?,
        None => println!("{}", serde_json::to_string_pretty(&report).runtime()?),
    }
    Ok(())
}
