//! Training, evaluation and experiment drivers.
//!
//! [`train`] fits the network on one graph under a [`TrainConfig`]: it
//! computes the normalized local hyperbolicity profile once, runs full-batch
//! Adam with patience-based early stopping on the validation metric, restores
//! the best checkpoint and returns a [`RunReport`].

mod experiments;
mod metrics;
mod optim;

pub use experiments::{
    ablate, analyze_hyperbolicities, apply_point, average_first_layers, compare_modes,
    repeat_seeds, run_grid, Grid, GridResult, GridRow, SeedSummary, VariantSummary,
};
pub use metrics::{
    accuracy, argmax_rows, evaluate_lp, evaluate_nc, f1_score, roc_auc, F1Average, NcMetric,
};
pub use optim::{Adam, EarlyStopping, StopDecision};

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{sample_non_edges, split_edges, split_nodes, SplitSpec, WeightedGraph};
use crate::hyperbolicity::{
    local_profile_with, HyperbolicityMode, ProfileCache, ProfileOptions, DEFAULT_EXACT_LIMIT,
    DEFAULT_SAMPLES,
};
use crate::layers::{
    AttentionEdges, BoundParams, Dropout, ModelConfig, ModelOutput, ParamStore, CURVATURE,
};
use crate::objectives::{
    cross_entropy_nc, edge_probabilities, lp_loss, normalize_delta, overall_loss, ComparisonMode,
    FermiDirac, LossWeights,
};

/// Smallest curvature the optimizer may reach.
const MIN_CURVATURE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Node classification.
    #[default]
    Nc,
    /// Link prediction.
    Lp,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Nc => "nc",
            Task::Lp => "lp",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nc" => Ok(Self::Nc),
            "lp" => Ok(Self::Lp),
            other => Err(Error::Config(format!(
                "unknown task `{other}` (expected nc or lp)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Nc => Self {
                train: 0.6,
                val: 0.2,
                test: 0.2,
            },
            Task::Lp => Self {
                train: 0.85,
                val: 0.05,
                test: 0.10,
            },
        }
    }

    pub fn as_tuple(&self) -> (f64, f64, f64) {
        (self.train, self.val, self.test)
    }
}

/// Everything that defines one training run. Missing JSON fields take the
/// defaults of [`TrainConfig::default`]; unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub task: Task,
    pub layers: usize,
    pub hidden: usize,
    pub q_dim: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub omega_nu: f64,
    pub omega_was: f64,
    /// Wasserstein order.
    pub p: f64,
    /// Hop radius of the local neighborhoods.
    pub k: usize,
    pub hyperbolicity: HyperbolicityMode,
    pub exact_limit: usize,
    pub samples: usize,
    pub curvature: f64,
    pub train_curvature: bool,
    pub leaky_slope: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Defaults to the task's standard fractions.
    pub split: Option<SplitFractions>,
    /// Seed of the data split; `seed` when absent.
    pub split_seed: Option<u64>,
    pub comparison_mode: ComparisonMode,
    pub fermi_r: f64,
    pub fermi_t: f64,
    pub metric: NcMetric,
    pub f1_average: F1Average,
    /// Directory of the on-disk profile cache.
    pub cache_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: Task::Nc,
            layers: 2,
            hidden: crate::layers::DEFAULT_HIDDEN,
            q_dim: 16,
            lr: 0.01,
            weight_decay: 0.0,
            dropout: 0.0,
            omega_nu: LossWeights::default().omega_nu,
            omega_was: LossWeights::default().omega_was,
            p: 2.0,
            k: 2,
            hyperbolicity: HyperbolicityMode::Inf,
            exact_limit: DEFAULT_EXACT_LIMIT,
            samples: DEFAULT_SAMPLES,
            curvature: 1.0,
            train_curvature: false,
            leaky_slope: crate::layers::DEFAULT_LEAKY_SLOPE,
            patience: 100,
            max_epochs: 1000,
            seed: 0,
            split: None,
            split_seed: None,
            comparison_mode: ComparisonMode::Distribution,
            fermi_r: 2.0,
            fermi_t: 1.0,
            metric: NcMetric::Accuracy,
            f1_average: F1Average::Micro,
            cache_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn for_task(task: Task) -> Self {
        Self {
            task,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("q_dim", self.q_dim),
            ("k", self.k),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be nonnegative".into()));
        }
        self.loss_weights().validate()?;
        self.fermi().validate()?;
        self.model_config(1, None).validate()?;
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            omega_nu: self.omega_nu,
            omega_was: self.omega_was,
            p: self.p,
        }
    }

    pub fn fermi(&self) -> FermiDirac {
        FermiDirac {
            r: self.fermi_r,
            t: self.fermi_t,
        }
    }

    pub fn fractions(&self) -> SplitFractions {
        self.split
            .unwrap_or_else(|| SplitFractions::for_task(self.task))
    }

    pub fn profile_options(&self) -> ProfileOptions {
        ProfileOptions {
            exact_limit: self.exact_limit,
            samples: self.samples,
            seed: self.seed,
        }
    }

    pub fn model_config(&self, in_dim: usize, out_dim: Option<usize>) -> ModelConfig {
        ModelConfig {
            in_dim,
            hidden: self.hidden,
            layers: self.layers,
            q_dim: self.q_dim,
            out_dim,
            leaky_slope: self.leaky_slope,
            curvature: self.curvature,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: Task,
    /// `accuracy`, `f1` or `roc_auc`.
    pub metric: String,
    pub best_val_metric: f64,
    /// Evaluated on the restored checkpoint.
    pub test_metric: f64,
    /// Epoch whose parameters were restored (1-based).
    pub epoch_of_best: usize,
    pub epochs_run: usize,
    /// Training loss per epoch, before that epoch's update.
    pub loss_trace: Vec<f64>,
    pub val_trace: Vec<f64>,
    /// `β_ℝ` per layer at the restored checkpoint.
    pub beta_samples: Vec<Vec<f64>>,
    /// Normalized geometric hyperbolicity per node.
    pub mu: Vec<f64>,
    pub w2_nu_unif: f64,
    pub w2_nu_mu: f64,
    pub split: SplitSpec,
    pub config: TrainConfig,
    pub wall_time: f64,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// `epoch,loss,val_metric` rows.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("epoch,loss,val_metric\n");
        for (i, (l, v)) in self.loss_trace.iter().zip(&self.val_trace).enumerate() {
            out.push_str(&format!("{},{l},{v}\n", i + 1));
        }
        out
    }

    /// `node,layer0,layer1,...,mu` rows.
    pub fn beta_csv(&self) -> String {
        let mut out = String::from("node");
        for l in 0..self.beta_samples.len() {
            out.push_str(&format!(",layer{l}"));
        }
        out.push_str(",mu\n");
        for v in 0..self.mu.len() {
            out.push_str(&v.to_string());
            for layer in &self.beta_samples {
                out.push_str(&format!(",{}", layer[v]));
            }
            out.push_str(&format!(",{}\n", self.mu[v]));
        }
        out
    }
}

/// A report together with the restored parameters.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: RunReport,
    pub params: ParamStore,
}

enum TaskData {
    Nc {
        labels: Vec<usize>,
    },
    Lp {
        graph: WeightedGraph,
        train: Vec<(usize, usize)>,
        val: Vec<(usize, usize)>,
        test: Vec<(usize, usize)>,
    },
}

/// Data, split and model shape derived from a graph and a config.
struct Setup {
    features: Mat,
    edges: AttentionEdges,
    message_graph: WeightedGraph,
    split: SplitSpec,
    model: ModelConfig,
    data: TaskData,
}

fn setup(g: &WeightedGraph, cfg: &TrainConfig, split: Option<SplitSpec>) -> Result<Setup> {
    cfg.validate()?;
    let split_seed = cfg.split_seed.unwrap_or(cfg.seed);
    match cfg.task {
        Task::Nc => {
            let features = g
                .features()
                .ok_or_else(|| Error::Validation("node classification needs features".into()))?
                .clone();
            let labels = g
                .labels()
                .ok_or_else(|| Error::Validation("node classification needs labels".into()))?
                .to_vec();
            let classes = g.num_classes().unwrap_or(0);
            if classes < 2 {
                return Err(Error::Validation(
                    "labels must span at least two classes".into(),
                ));
            }
            let split = match split {
                Some(s) => s,
                None => split_nodes(g, cfg.fractions().as_tuple(), split_seed)?,
            };
            Ok(Setup {
                model: cfg.model_config(features.ncols(), Some(classes)),
                features,
                edges: AttentionEdges::from_graph(g),
                message_graph: g.clone(),
                split,
                data: TaskData::Nc { labels },
            })
        }
        Task::Lp => {
            let split = match split {
                Some(s) => s,
                None => split_edges(g, cfg.fractions().as_tuple(), split_seed)?,
            };
            let pairs = |idx: &[usize]| -> Vec<(usize, usize)> {
                idx.iter()
                    .map(|&i| (g.edges()[i].u, g.edges()[i].v))
                    .collect()
            };
            let message_graph = g.with_edge_subset(&split.train)?;
            let features = match g.features() {
                Some(f) => f.clone(),
                None => Mat::eye(g.num_nodes()),
            };
            Ok(Setup {
                model: cfg.model_config(features.ncols(), None),
                features,
                edges: AttentionEdges::from_graph(&message_graph),
                data: TaskData::Lp {
                    graph: g.clone(),
                    train: pairs(&split.train),
                    val: pairs(&split.val),
                    test: pairs(&split.test),
                },
                message_graph,
                split,
            })
        }
    }
}

fn profile_mu(g: &WeightedGraph, cfg: &TrainConfig) -> Result<Vec<f64>> {
    let opts = cfg.profile_options();
    let profile = match &cfg.cache_dir {
        Some(dir) => ProfileCache::new(dir).get_or_compute(g, cfg.k, cfg.hyperbolicity, &opts)?,
        None => local_profile_with(g, cfg.k, cfg.hyperbolicity, &opts)?,
    };
    normalize_delta(&profile)
}

/// Validation/test scores of one evaluation-mode pass.
struct Evaluation {
    val_metric: f64,
    val_loss: f64,
    test_metric: f64,
    betas: Vec<Vec<f64>>,
}

impl Setup {
    fn forward(
        &self,
        t: &Tape,
        params: &ParamStore,
        drop: &mut Dropout,
    ) -> Result<(BoundParams, ModelOutput)> {
        let bound = params.bind(t);
        let x = t.leaf(self.features.clone());
        let out = self.model.forward(t, &bound, x, &self.edges, drop)?;
        Ok((bound, out))
    }

    fn metric_name(&self, cfg: &TrainConfig) -> String {
        match self.data {
            TaskData::Nc { .. } => cfg.metric.to_string(),
            TaskData::Lp { .. } => "roc_auc".into(),
        }
    }

    fn task_loss(
        &self,
        t: &Tape,
        out: &ModelOutput,
        negatives: &[(usize, usize)],
        cfg: &TrainConfig,
    ) -> Result<Var> {
        match &self.data {
            TaskData::Nc { labels } => {
                let logits = out.logits.expect("classification stack has a head");
                cross_entropy_nc(t, logits, labels, &self.split.train)
            }
            TaskData::Lp { train, .. } => lp_loss(t, out.z, train, negatives, &cfg.fermi()),
        }
    }

    fn evaluate(&self, params: &ParamStore, cfg: &TrainConfig) -> Result<Evaluation> {
        let t = Tape::new();
        let (_, out) = self.forward(&t, params, &mut Dropout::eval())?;
        let betas = out.beta_record(&t);
        match &self.data {
            TaskData::Nc { labels } => {
                let logits_var = out.logits.expect("classification stack has a head");
                let logits = t.value(logits_var);
                let score =
                    |mask: &[usize]| evaluate_nc(&logits, labels, mask, cfg.metric, cfg.f1_average);
                let val_loss = t.scalar(cross_entropy_nc(&t, logits_var, labels, &self.split.val)?);
                Ok(Evaluation {
                    val_metric: score(&self.split.val)?,
                    val_loss,
                    test_metric: score(&self.split.test)?,
                    betas,
                })
            }
            TaskData::Lp { val, test, .. } => {
                let z = t.value(out.z);
                let fd = cfg.fermi();
                let auc = |pos: &[(usize, usize)], neg: &[(usize, usize)]| {
                    let mut scores = edge_probabilities(&z, pos, &fd);
                    scores.extend(edge_probabilities(&z, neg, &fd));
                    let truth: Vec<bool> = (0..scores.len()).map(|i| i < pos.len()).collect();
                    evaluate_lp(&scores, &truth)
                };
                let val_loss = t.scalar(lp_loss(&t, out.z, val, &self.split.val_negatives, &fd)?);
                Ok(Evaluation {
                    val_metric: auc(val, &self.split.val_negatives)?,
                    val_loss,
                    test_metric: auc(test, &self.split.test_negatives)?,
                    betas,
                })
            }
        }
    }
}

fn epoch_seed(seed: u64, epoch: usize, salt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((epoch as u64) << 20)
        .wrapping_add(salt)
}

/// Trains under `cfg` and returns the report.
pub fn train(g: &WeightedGraph, cfg: &TrainConfig) -> Result<RunReport> {
    Ok(train_outcome(g, cfg)?.report)
}

/// Trains under `cfg` and returns the report with the restored parameters.
pub fn train_outcome(g: &WeightedGraph, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_split(g, cfg, None)
}

/// As [`train_outcome`], reusing a stored split instead of drawing one.
pub fn train_with_split(
    g: &WeightedGraph,
    cfg: &TrainConfig,
    split: Option<SplitSpec>,
) -> Result<TrainOutcome> {
    let started = Instant::now();
    let s = setup(g, cfg, split)?;
    let mu = profile_mu(&s.message_graph, cfg)?;
    let mut params = s.model.init(cfg.seed)?;
    let mut best = params.clone();
    let mut adam = Adam::new(cfg.lr, cfg.weight_decay);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let weights = cfg.loss_weights();
    let mut loss_trace = Vec::new();
    let mut val_trace = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let t = Tape::new();
        let mut dropout = Dropout::train(cfg.dropout, epoch_seed(cfg.seed, epoch, 1));
        let (bound, out) = s.forward(&t, &params, &mut dropout)?;
        let negatives = match &s.data {
            TaskData::Lp { graph, train, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, epoch, 2));
                sample_non_edges(graph, train.len(), &mut rng)?
            }
            TaskData::Nc { .. } => Vec::new(),
        };
        let task = s.task_loss(&t, &out, &negatives, cfg)?;
        let loss = overall_loss(&t, task, &out.layers, &mu, &weights, cfg.comparison_mode)?;
        let value = t.scalar(loss.total);
        if !value.is_finite() {
            return Err(Error::Divergence { epoch, loss: value });
        }
        loss_trace.push(value);

        let grads = t.backward(loss.total)?;
        let mut step: IndexMap<String, Mat> = IndexMap::new();
        for (name, var) in bound.iter() {
            if name == CURVATURE && !cfg.train_curvature {
                continue;
            }
            if let Some(g) = grads.get(var) {
                step.insert(name.to_string(), g.clone());
            }
        }
        drop(t);
        adam.step(&mut params, &step);
        if let Some(c) = params.get_mut(CURVATURE) {
            c.mapv_inplace(|x| x.max(MIN_CURVATURE));
        }
        if !params.is_finite() {
            return Err(Error::Divergence { epoch, loss: value });
        }

        let eval = s.evaluate(&params, cfg)?;
        val_trace.push(eval.val_metric);
        let decision = stopper.update(epoch, eval.val_metric, eval.val_loss);
        if decision.checkpoint {
            best.clone_from(&params);
        }
        if decision.stop {
            break;
        }
    }

    let eval = s.evaluate(&best, cfg)?;
    let (w2_nu_unif, w2_nu_mu) = experiments::diagnostics(&eval.betas, &mu)?;
    let report = RunReport {
        task: cfg.task,
        metric: s.metric_name(cfg),
        best_val_metric: eval.val_metric,
        test_metric: eval.test_metric,
        epoch_of_best: stopper.checkpoint_epoch(),
        epochs_run: loss_trace.len(),
        loss_trace,
        val_trace,
        beta_samples: eval.betas,
        mu,
        w2_nu_unif,
        w2_nu_mu,
        split: s.split,
        config: cfg.clone(),
        wall_time: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        report,
        params: best,
    })
}

/// Validation and test metric of stored parameters on the report's split.
pub fn evaluate_checkpoint(
    g: &WeightedGraph,
    cfg: &TrainConfig,
    params: &ParamStore,
    split: &SplitSpec,
) -> Result<(f64, f64)> {
    let s = setup(g, cfg, Some(split.clone()))?;
    let eval = s.evaluate(params, cfg)?;
    Ok((eval.val_metric, eval.test_metric))
}
