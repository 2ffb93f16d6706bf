use indexmap::IndexMap;

use crate::autodiff::Mat;
use crate::layers::ParamStore;

/// Adaptive moment estimation. Weight decay, when set, is added to the
/// gradient as an L2 term.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: i32,
    m: IndexMap<String, Mat>,
    v: IndexMap<String, Mat>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: IndexMap::new(),
            v: IndexMap::new(),
        }
    }

    /// Updates every parameter that has an entry in `grads`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &IndexMap<String, Mat>) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for (name, w) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let m = self
                .m
                .entry(name.to_string())
                .or_insert_with(|| Mat::zeros(w.dim()));
            let v = self
                .v
                .entry(name.to_string())
                .or_insert_with(|| Mat::zeros(w.dim()));
            ndarray::Zip::from(w)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|w, m, v, &g| {
                    let g = g + self.weight_decay * *w;
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    *w -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
                });
        }
    }
}

/// What the stopping rule concluded after one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    /// The validation metric strictly improved.
    pub improved: bool,
    /// This epoch's parameters should replace the stored checkpoint.
    pub checkpoint: bool,
    pub stop: bool,
}

/// Patience-based early stopping on a validation metric to maximize.
///
/// The patience clock restarts only when the metric strictly improves.
/// Among epochs tied at the best metric, the checkpoint follows the lowest
/// validation loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best_metric: f64,
    best_loss: f64,
    last_improvement: usize,
    checkpoint_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_metric: f64::NEG_INFINITY,
            best_loss: f64::INFINITY,
            last_improvement: 0,
            checkpoint_epoch: 0,
        }
    }

    pub fn update(&mut self, epoch: usize, metric: f64, loss: f64) -> StopDecision {
        let improved = metric > self.best_metric;
        let checkpoint = improved || (metric == self.best_metric && loss < self.best_loss);
        if improved {
            self.best_metric = metric;
            self.last_improvement = epoch;
        }
        if checkpoint {
            self.best_loss = loss;
            self.checkpoint_epoch = epoch;
        }
        StopDecision {
            improved,
            checkpoint,
            stop: epoch >= self.last_improvement + self.patience,
        }
    }

    pub fn best_metric(&self) -> f64 {
        self.best_metric
    }

    pub fn last_improvement(&self) -> usize {
        self.last_improvement
    }

    pub fn checkpoint_epoch(&self) -> usize {
        self.checkpoint_epoch
    }
}
