use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use jsgnn::graph::{
    diffused_features, generate_combined, generate_lattice, generate_tree, load_edge_list,
    load_features_csv, load_labels_csv, noisy_class_features, shortest_paths, write_edge_list,
    write_features_csv, write_labels_csv, WeightedGraph,
};
use jsgnn::hyperbolicity::{
    delta_one_exact, delta_one_sampled, graph_delta_inf, local_profile_with, EmpiricalDistribution,
    Histogram, HyperbolicityMode, ProfileCache, ProfileOptions, DEFAULT_BIN_WIDTH,
    DEFAULT_EXACT_LIMIT, DEFAULT_SAMPLES,
};
use jsgnn::objectives::ComparisonMode;
use jsgnn::train::{
    ablate, analyze_hyperbolicities, average_first_layers, compare_modes, train_outcome, RunReport,
    Task, TrainConfig, VariantSummary,
};
use jsgnn::Error;

#[derive(Debug, Parser)]
#[command(
    name = "jsgnn",
    version,
    about = "Local hyperbolicity profiles and joint-space graph attention training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-node local hyperbolicity of a graph.
    Analyze(AnalyzeArgs),
    /// Write a synthetic graph as an edge list.
    Generate(GenerateArgs),
    /// Train for node classification.
    TrainNc(TrainArgs),
    /// Train for link prediction.
    TrainLp(TrainArgs),
    /// Full objective against the variants without NU, W2 or both.
    Ablate(ExperimentArgs),
    /// Distribution, pairwise and mean alignment side by side.
    CompareModes(ExperimentArgs),
    /// Hyperbolicity diagnostics of a saved run report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct GraphArgs {
    /// Edge list: `u v [w]` per line, `#` comments.
    #[arg(long)]
    graph: PathBuf,
    /// Read the third column as edge weights.
    #[arg(long)]
    weighted: bool,
    /// CSV with header `node_id,f0,...`.
    #[arg(long)]
    features: Option<PathBuf>,
    /// CSV with header `node_id,label`.
    #[arg(long)]
    labels: Option<PathBuf>,
}

impl GraphArgs {
    fn load(&self) -> anyhow::Result<WeightedGraph> {
        let mut g = load_edge_list(&self.graph, self.weighted)
            .with_context(|| format!("reading {}", self.graph.display()))?;
        let n = g.num_nodes();
        if let Some(path) = &self.features {
            let x = load_features_csv(path, n)
                .with_context(|| format!("reading {}", path.display()))?;
            g = g.with_features(x)?;
        }
        if let Some(path) = &self.labels {
            let y =
                load_labels_csv(path, n).with_context(|| format!("reading {}", path.display()))?;
            g = g.with_labels(y)?;
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Inf,
    One,
}

impl From<ModeArg> for HyperbolicityMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Inf => HyperbolicityMode::Inf,
            ModeArg::One => HyperbolicityMode::One,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ComparisonArg {
    Distribution,
    Pairwise,
    Mean,
}

impl From<ComparisonArg> for ComparisonMode {
    fn from(m: ComparisonArg) -> Self {
        match m {
            ComparisonArg::Distribution => ComparisonMode::Distribution,
            ComparisonArg::Pairwise => ComparisonMode::Pairwise,
            ComparisonArg::Mean => ComparisonMode::Mean,
        }
    }
}

#[derive(Debug, Args)]
struct Output {
    /// JSON output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional CSV for plotting.
    #[arg(long)]
    csv: Option<PathBuf>,
}

impl Output {
    fn emit(&self, value: &Value) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        match &self.out {
            Some(path) => write(path, &text),
            None => {
                println!("{text}");
                Ok(())
            }
        }
    }

    fn emit_csv(&self, text: &str) -> anyhow::Result<()> {
        match &self.csv {
            Some(path) => write(path, text),
            None => Ok(()),
        }
    }
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Hop radius of the local neighborhoods.
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, value_enum, default_value = "inf")]
    mode: ModeArg,
    #[arg(long, default_value_t = DEFAULT_EXACT_LIMIT)]
    exact_limit: usize,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
    bin_width: f64,
    /// Reuse profiles stored under this directory.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

fn histogram_json(h: &Histogram) -> Value {
    Value::Array(
        h.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| json!({"left": h.edges[i], "right": h.edges[i + 1], "count": c}))
            .collect(),
    )
}

fn analyze(a: &AnalyzeArgs) -> anyhow::Result<()> {
    let g = a.graph.load()?;
    let mode = HyperbolicityMode::from(a.mode);
    let opts = ProfileOptions {
        exact_limit: a.exact_limit,
        samples: a.samples,
        seed: a.seed,
    };
    let profile = match &a.cache_dir {
        Some(dir) => ProfileCache::new(dir).get_or_compute(&g, a.k, mode, &opts)?,
        None => local_profile_with(&g, a.k, mode, &opts)?,
    };
    let global = if g.is_connected() {
        Some(match mode {
            HyperbolicityMode::Inf => graph_delta_inf(&g)?,
            HyperbolicityMode::One => {
                let d = shortest_paths(&g);
                if d.len() <= a.exact_limit {
                    delta_one_exact(&d, a.exact_limit)?
                } else {
                    delta_one_sampled(&d, a.samples, a.seed)?.estimate
                }
            }
        })
    } else {
        None
    };
    let dist = profile.to_distribution()?;
    let hist = dist.histogram(a.bin_width)?;
    a.output.emit(&json!({
        "nodes": g.num_nodes(),
        "edges": g.num_edges(),
        "k": a.k,
        "mode": mode.to_string(),
        "global_delta": global,
        "mean_local_delta": dist.mean(),
        "max_local_delta": profile.max(),
        "per_node": profile.per_node,
        "histogram": histogram_json(&hist),
    }))?;
    let mut csv = String::from("node,delta\n");
    for (v, d) in profile.per_node.iter().enumerate() {
        csv.push_str(&format!("{v},{d}\n"));
    }
    a.output.emit_csv(&csv)
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Family {
    Lattice,
    Tree,
    /// Lattice glued to a tree by one edge, with planted labels (0 lattice, 1 tree).
    Combined,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(value_enum)]
    family: Family,
    #[arg(long, default_value_t = 5)]
    rows: usize,
    #[arg(long, default_value_t = 5)]
    cols: usize,
    #[arg(long, default_value_t = 2)]
    branching: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    /// Edge-list output.
    #[arg(long)]
    out: PathBuf,
    /// Planted labels (combined only).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Feature CSV: noisy class indicators for `combined`, features diffused
    /// along a BFS tree otherwise.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    feature_dim: usize,
    /// Indicator noise, or per-hop diffusion step.
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn generate(a: &GenerateArgs) -> anyhow::Result<()> {
    let lattice = || generate_lattice(a.rows, a.cols);
    let tree = || generate_tree(a.branching, a.depth);
    let (g, labels) = match a.family {
        Family::Lattice => (lattice()?, None),
        Family::Tree => (tree()?, None),
        Family::Combined => {
            let l = lattice()?;
            let split = l.num_nodes();
            let g = generate_combined(&l, &tree()?, (0, 0))?;
            let labels: Vec<usize> = (0..g.num_nodes())
                .map(|v| usize::from(v >= split))
                .collect();
            (g, Some(labels))
        }
    };
    write_edge_list(&g, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(path) = &a.labels {
        let Some(y) = &labels else {
            bail!(Error::Config(
                "labels are only planted in the combined graph".into()
            ));
        };
        write_labels_csv(y, path)?;
    }
    if let Some(path) = &a.features {
        let x = match &labels {
            Some(y) => noisy_class_features(y, a.feature_dim, a.noise, a.seed)?,
            None => diffused_features(&g, a.feature_dim, a.noise, a.seed)?,
        };
        write_features_csv(&x, path)?;
    }
    println!(
        "{}",
        json!({"nodes": g.num_nodes(), "edges": g.num_edges(), "out": a.out})
    );
    Ok(())
}

#[derive(Debug, Args)]
struct Overrides {
    /// TrainConfig JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    omega_nu: Option<f64>,
    #[arg(long)]
    omega_was: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Geometric hyperbolicity used for alignment.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    comparison: Option<ComparisonArg>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Directory of the on-disk profile cache.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

impl Overrides {
    fn config(&self, task: Task) -> anyhow::Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                TrainConfig::load(path).with_context(|| format!("reading {}", path.display()))?
            }
            None => TrainConfig::for_task(task),
        };
        cfg.task = task;
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            )*};
        }
        set!(lr, omega_nu, omega_was, k, seed, layers, hidden, dropout, max_epochs, patience);
        if let Some(m) = self.mode {
            cfg.hyperbolicity = m.into();
        }
        if let Some(m) = self.comparison {
            cfg.comparison_mode = m.into();
        }
        if self.cache_dir.is_some() {
            cfg.cache_dir = self.cache_dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    overrides: Overrides,
    #[command(flatten)]
    output: Output,
    /// Per-node β and normalized δ as CSV.
    #[arg(long)]
    beta_csv: Option<PathBuf>,
    /// Restored parameters as JSON.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

fn run_train(a: &TrainArgs, task: Task) -> anyhow::Result<()> {
    let g = a.graph.load()?;
    let cfg = a.overrides.config(task)?;
    let outcome = train_outcome(&g, &cfg)?;
    if let Some(path) = &a.checkpoint {
        outcome.params.save(path)?;
    }
    if let Some(path) = &a.beta_csv {
        write(path, &outcome.report.beta_csv())?;
    }
    a.output.emit(&serde_json::to_value(&outcome.report)?)?;
    a.output.emit_csv(&outcome.report.trace_csv())?;
    eprintln!(
        "{} {}: best val {:.4} at epoch {}, test {:.4}, {} epochs",
        task,
        outcome.report.metric,
        outcome.report.best_val_metric,
        outcome.report.epoch_of_best,
        outcome.report.test_metric,
        outcome.report.epochs_run
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    Nc,
    Lp,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long, value_enum, default_value = "nc")]
    task: TaskArg,
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    overrides: Overrides,
    /// Runs use seeds `0..seeds`.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[command(flatten)]
    output: Output,
}

fn run_variants(
    a: &ExperimentArgs,
    run: fn(&WeightedGraph, &TrainConfig, &[u64]) -> jsgnn::Result<Vec<VariantSummary>>,
) -> anyhow::Result<()> {
    let task = match a.task {
        TaskArg::Nc => Task::Nc,
        TaskArg::Lp => Task::Lp,
    };
    let g = a.graph.load()?;
    let cfg = a.overrides.config(task)?;
    let seeds: Vec<u64> = (0..a.seeds).collect();
    let variants = run(&g, &cfg, &seeds)?;
    let table: Vec<Value> = variants
        .iter()
        .map(|v| {
            json!({
                "variant": v.name,
                "mean": v.summary.mean,
                "std": v.summary.std,
                "test_metrics": v.summary.test_metrics,
                "w2_nu_unif_mean": v.summary.w2_nu_unif_mean,
                "w2_nu_mu_mean": v.summary.w2_nu_mu_mean,
            })
        })
        .collect();
    a.output
        .emit(&json!({"config": cfg, "seeds": seeds, "variants": table}))?;
    let mut csv = String::from("variant,mean,std,w2_nu_unif_mean,w2_nu_mu_mean\n");
    for v in &variants {
        let s = &v.summary;
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            v.name, s.mean, s.std, s.w2_nu_unif_mean, s.w2_nu_mu_mean
        ));
    }
    for v in &variants {
        eprintln!(
            "{:<12} {:.4} ± {:.4}",
            v.name, v.summary.mean, v.summary.std
        );
    }
    a.output.emit_csv(&csv)
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// RunReport JSON written by a training command.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    bin_width: f64,
    #[command(flatten)]
    output: Output,
}

fn report(a: &ReportArgs) -> anyhow::Result<()> {
    let r =
        RunReport::load(&a.report).with_context(|| format!("reading {}", a.report.display()))?;
    let (w2_unif, w2_mu) = analyze_hyperbolicities(&r, &r.mu)?;
    let nu = average_first_layers(&r.beta_samples)?;
    let nu_dist = EmpiricalDistribution::new(nu.clone())?;
    let mu_dist = EmpiricalDistribution::new(r.mu.clone())?;
    a.output.emit(&json!({
        "w2_nu_unif": w2_unif,
        "w2_nu_mu": w2_mu,
        "layers": r.beta_samples.len(),
        "nu_mean": nu_dist.mean(),
        "mu_mean": mu_dist.mean(),
        "nu_histogram": histogram_json(&nu_dist.histogram(a.bin_width)?),
        "mu_histogram": histogram_json(&mu_dist.histogram(a.bin_width)?),
    }))?;
    let mut csv = String::from("node,nu,mu\n");
    for (v, (b, m)) in nu.iter().zip(&r.mu).enumerate() {
        csv.push_str(&format!("{v},{b},{m}\n"));
    }
    a.output.emit_csv(&csv)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Divergence { .. }) => 3,
        Some(e) if e.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Generate(a) => generate(a),
        Command::TrainNc(a) => run_train(a, Task::Nc),
        Command::TrainLp(a) => run_train(a, Task::Lp),
        Command::Ablate(a) => run_variants(a, ablate),
        Command::CompareModes(a) => run_variants(a, compare_modes),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("jsgnn: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
