use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::objectives::{uniform_reference, wasserstein_1d, ComparisonMode};

use super::{train, RunReport, TrainConfig};

/// Parameter lattice: config field name to the values it takes.
pub type Grid = IndexMap<String, Vec<Value>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub point: IndexMap<String, Value>,
    pub best_val_metric: f64,
    pub test_metric: f64,
    pub epoch_of_best: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    /// Index into `table` of the selected point.
    pub best_index: usize,
    pub best: RunReport,
    pub table: Vec<GridRow>,
}

fn grid_points(grid: &Grid) -> Result<Vec<IndexMap<String, Value>>> {
    if grid.is_empty() || grid.values().any(Vec::is_empty) {
        return Err(Error::Empty("grid has no points".into()));
    }
    let mut points = vec![IndexMap::new()];
    for (name, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(name.clone(), v.clone());
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

/// `base` with the fields of `point` overwritten.
pub fn apply_point(base: &TrainConfig, point: &IndexMap<String, Value>) -> Result<TrainConfig> {
    let mut json = serde_json::to_value(base)?;
    let obj = json
        .as_object_mut()
        .expect("config serializes to an object");
    for (k, v) in point {
        obj.insert(k.clone(), v.clone());
    }
    let cfg: TrainConfig =
        serde_json::from_value(json).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Trains every point of the lattice in parallel and keeps the one with the
/// highest validation metric; ties go to the earlier point.
pub fn run_grid(g: &WeightedGraph, base: &TrainConfig, grid: &Grid) -> Result<GridResult> {
    let points = grid_points(grid)?;
    let configs = points
        .iter()
        .map(|p| apply_point(base, p))
        .collect::<Result<Vec<_>>>()?;
    let reports = configs
        .par_iter()
        .map(|cfg| train(g, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut best_index = 0;
    for (i, r) in reports.iter().enumerate() {
        if r.best_val_metric > reports[best_index].best_val_metric {
            best_index = i;
        }
    }
    let table = points
        .into_iter()
        .zip(&reports)
        .map(|(point, r)| GridRow {
            point,
            best_val_metric: r.best_val_metric,
            test_metric: r.test_metric,
            epoch_of_best: r.epoch_of_best,
        })
        .collect();
    Ok(GridResult {
        best_index,
        best: reports.into_iter().nth(best_index).expect("index in range"),
        table,
    })
}

/// Test metric and diagnostics over repeated seeds. Standard deviations are
/// population deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seeds: Vec<u64>,
    pub test_metrics: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub w2_nu_unif_mean: f64,
    pub w2_nu_mu_mean: f64,
    pub reports: Vec<RunReport>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs `cfg` once per seed in parallel. Each run's split follows its own
/// seed unless `cfg.split_seed` pins it.
pub fn repeat_seeds(g: &WeightedGraph, cfg: &TrainConfig, seeds: &[u64]) -> Result<SeedSummary> {
    if seeds.is_empty() {
        return Err(Error::Empty("no seeds".into()));
    }
    let reports = seeds
        .par_iter()
        .map(|&seed| {
            train(
                g,
                &TrainConfig {
                    seed,
                    ..cfg.clone()
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let test_metrics: Vec<f64> = reports.iter().map(|r| r.test_metric).collect();
    let (mean, std) = mean_std(&test_metrics);
    let avg = |f: fn(&RunReport) -> f64| reports.iter().map(f).sum::<f64>() / reports.len() as f64;
    Ok(SeedSummary {
        seeds: seeds.to_vec(),
        mean,
        std,
        w2_nu_unif_mean: avg(|r| r.w2_nu_unif),
        w2_nu_mu_mean: avg(|r| r.w2_nu_mu),
        test_metrics,
        reports,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub name: String,
    pub summary: SeedSummary,
}

/// The full objective and the three variants with loss terms switched off.
pub fn ablate(g: &WeightedGraph, cfg: &TrainConfig, seeds: &[u64]) -> Result<Vec<VariantSummary>> {
    let variants = [
        ("full", cfg.omega_nu, cfg.omega_was),
        ("w/o NU", 0.0, cfg.omega_was),
        ("w/o W2", cfg.omega_nu, 0.0),
        ("w/o NU & W2", 0.0, 0.0),
    ];
    variants
        .into_iter()
        .map(|(name, omega_nu, omega_was)| {
            let v = TrainConfig {
                omega_nu,
                omega_was,
                ..cfg.clone()
            };
            Ok(VariantSummary {
                name: name.into(),
                summary: repeat_seeds(g, &v, seeds)?,
            })
        })
        .collect()
}

/// One summary per comparison mode.
pub fn compare_modes(
    g: &WeightedGraph,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<VariantSummary>> {
    ComparisonMode::ALL
        .into_iter()
        .map(|mode| {
            let v = TrainConfig {
                comparison_mode: mode,
                ..cfg.clone()
            };
            Ok(VariantSummary {
                name: mode.to_string(),
                summary: repeat_seeds(g, &v, seeds)?,
            })
        })
        .collect()
}

/// Per-node mean of `β_ℝ` over the first two layers, or over all layers of a
/// one-layer record.
pub fn average_first_layers(betas: &[Vec<f64>]) -> Result<Vec<f64>> {
    let used = &betas[..betas.len().min(2)];
    let Some(first) = used.first() else {
        return Err(Error::Empty("no β record".into()));
    };
    if used.iter().any(|l| l.len() != first.len()) {
        return Err(Error::Shape("β layers differ in length".into()));
    }
    Ok((0..first.len())
        .map(|v| used.iter().map(|l| l[v]).sum::<f64>() / used.len() as f64)
        .collect())
}

pub(super) fn diagnostics(betas: &[Vec<f64>], mu: &[f64]) -> Result<(f64, f64)> {
    let nu = average_first_layers(betas)?;
    let unif = uniform_reference(nu.len());
    Ok((
        wasserstein_1d(&nu, &unif, 2.0)?,
        wasserstein_1d(&nu, mu, 2.0)?,
    ))
}

/// `(W₂(ν, Unif), W₂(ν, μ))` for the report's `β` record and the normalized
/// geometric hyperbolicities `mu`.
pub fn analyze_hyperbolicities(report: &RunReport, mu: &[f64]) -> Result<(f64, f64)> {
    diagnostics(&report.beta_samples, mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn grid_is_a_cartesian_product() {
        let mut grid = Grid::new();
        grid.insert("lr".into(), vec![json!(0.1), json!(0.01)]);
        grid.insert("layers".into(), vec![json!(1), json!(2), json!(3)]);
        let pts = grid_points(&grid).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1]["layers"], json!(2));
        assert!(grid_points(&Grid::new()).is_err());
        let cfg = apply_point(&TrainConfig::default(), &pts[5]).unwrap();
        assert_eq!((cfg.lr, cfg.layers), (0.01, 3));
        let mut bad = IndexMap::new();
        bad.insert("no_such_field".to_string(), json!(1));
        assert!(apply_point(&TrainConfig::default(), &bad).is_err());
    }

    #[test]
    fn averaging_rules() {
        let b = vec![vec![0.0, 1.0], vec![1.0, 1.0], vec![5.0, 5.0]];
        assert_eq!(average_first_layers(&b).unwrap(), vec![0.5, 1.0]);
        assert_eq!(average_first_layers(&b[..1]).unwrap(), vec![0.0, 1.0]);
        assert!(average_first_layers(&[]).is_err());
        let (_, w_mu) = diagnostics(&[vec![0.2, 0.9, 0.0]], &[0.9, 0.0, 0.2]).unwrap();
        assert_eq!(w_mu, 0.0);
    }

    #[test]
    fn constant_half_against_uniform() {
        // midpoints (i + 1/2)/m against 1/2
        let m = 10;
        let expected = ((0..m)
            .map(|i| ((i as f64 + 0.5) / m as f64 - 0.5).powi(2))
            .sum::<f64>()
            / m as f64)
            .sqrt();
        let (w, _) = diagnostics(&[vec![0.5; m]], &[0.0; 10]).unwrap();
        assert!((w - expected).abs() < 1e-15);
        assert!(w < 0.3);
    }

    #[test]
    fn population_std() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }
}
