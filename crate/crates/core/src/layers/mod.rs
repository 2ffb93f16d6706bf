//! The two-branch attention network.
//!
//! Each layer runs a Euclidean attention block ([`gat_forward`]) and a
//! hyperbolic one ([`hgat_forward`]) side by side, then fuses them per node
//! ([`fusion_forward`]). Layer `ℓ + 1` takes the fused embedding `z` directly
//! on the Euclidean side and `exp_o(z)` on the hyperbolic side; the first
//! layer does the same with the input features.
//!
//! Parameters live in a [`ParamStore`] of named matrices and are bound to a
//! fresh [`Tape`] for every forward pass.

mod fusion;
mod gat;
mod gradcheck;
mod hgat;
pub mod hyp;

pub use fusion::{fusion_forward, FusionParams, LayerVars};
pub use gat::{gat_forward, AttentionEdges, AttentionOutput, GatParams};
pub use gradcheck::{finite_diff_check, GradCheck};
pub use hgat::{hgat_forward, HgatOutput, HgatParams};

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;

/// Hidden width used when none is configured.
pub const DEFAULT_HIDDEN: usize = 16;
/// Negative slope of the attention LeakyReLU.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

/// Name of the shared curvature parameter.
pub const CURVATURE: &str = "curvature";

/// Inverted dropout; a no-op when built with [`Dropout::eval`].
#[derive(Debug, Clone)]
pub struct Dropout {
    p: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn eval() -> Self {
        Self { p: 0.0, rng: None }
    }

    pub fn train(p: f64, seed: u64) -> Self {
        Self {
            p,
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn apply(&mut self, t: &Tape, x: Var) -> Result<Var> {
        let Some(rng) = self.rng.as_mut().filter(|_| self.p > 0.0) else {
            return Ok(x);
        };
        let keep = 1.0 / (1.0 - self.p);
        let p = self.p;
        let mask = Mat::from_shape_fn(
            t.shape(x),
            |_| {
                if rng.random::<f64>() < p {
                    0.0
                } else {
                    keep
                }
            },
        );
        t.mul(x, t.leaf(mask))
    }
}

/// Shape of a network stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub q_dim: usize,
    /// Width of a linear read-out on the final `z`, if any.
    pub out_dim: Option<usize>,
    pub leaky_slope: f64,
    /// Initial curvature.
    pub curvature: f64,
}

impl ModelConfig {
    pub fn new(in_dim: usize, hidden: usize, layers: usize, q_dim: usize) -> Self {
        Self {
            in_dim,
            hidden,
            layers,
            q_dim,
            out_dim: None,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            curvature: 1.0,
        }
    }

    pub fn with_head(mut self, out_dim: usize) -> Self {
        self.out_dim = Some(out_dim);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("the stack needs at least one layer".into()));
        }
        if self.in_dim == 0 || self.hidden == 0 || self.q_dim == 0 || self.out_dim == Some(0) {
            return Err(Error::Config("all widths must be positive".into()));
        }
        if !(self.curvature > 0.0) || !self.curvature.is_finite() {
            return Err(Error::Config(format!(
                "curvature must be positive, got {}",
                self.curvature
            )));
        }
        if !(self.leaky_slope >= 0.0) {
            return Err(Error::Config("leaky slope must be nonnegative".into()));
        }
        Ok(())
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.in_dim
        } else {
            self.hidden
        }
    }

    /// Glorot-uniform weights and zero biases, deterministic in `seed`.
    pub fn init(&self, seed: u64) -> Result<ParamStore> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            Mat::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
        };
        let h = self.hidden;
        let mut store = ParamStore::default();
        for l in 0..self.layers {
            let inp = self.layer_input(l);
            store.insert(format!("layer{l}.gat.W"), glorot(h, inp));
            store.insert(format!("layer{l}.gat.a"), glorot(1, 2 * h));
            store.insert(format!("layer{l}.hgat.W"), glorot(h, inp));
            store.insert(format!("layer{l}.hgat.b"), Mat::zeros((1, h)));
            store.insert(format!("layer{l}.hgat.a"), glorot(1, 2 * h));
            store.insert(format!("layer{l}.fusion.M"), glorot(self.q_dim, h));
            store.insert(format!("layer{l}.fusion.b"), Mat::zeros((1, self.q_dim)));
            store.insert(format!("layer{l}.fusion.q"), glorot(1, self.q_dim));
        }
        if let Some(out) = self.out_dim {
            store.insert("head.W".into(), glorot(out, h));
            store.insert("head.b".into(), Mat::zeros((1, out)));
        }
        store.insert(CURVATURE.into(), Mat::from_elem((1, 1), self.curvature));
        Ok(store)
    }

    /// Runs the stack on `x` (`n × in_dim`).
    pub fn forward(
        &self,
        t: &Tape,
        params: &BoundParams,
        x: Var,
        edges: &AttentionEdges,
        drop: &mut Dropout,
    ) -> Result<ModelOutput> {
        self.validate()?;
        if t.shape(x) != (edges.num_nodes(), self.in_dim) {
            return Err(Error::Shape(format!(
                "features {:?}, expected ({}, {})",
                t.shape(x),
                edges.num_nodes(),
                self.in_dim
            )));
        }
        let c = params.get(CURVATURE)?;
        let mut h = x;
        let mut layers = Vec::with_capacity(self.layers);
        for l in 0..self.layers {
            let input = drop.apply(t, h)?;
            let ball = hyp::exp0(t, input, c)?;
            let gat = GatParams {
                w: params.get(&format!("layer{l}.gat.W"))?,
                a: params.get(&format!("layer{l}.gat.a"))?,
                leaky_slope: self.leaky_slope,
            };
            let hgat = HgatParams {
                w: params.get(&format!("layer{l}.hgat.W"))?,
                b: params.get(&format!("layer{l}.hgat.b"))?,
                a: params.get(&format!("layer{l}.hgat.a"))?,
                c,
                leaky_slope: self.leaky_slope,
            };
            let fusion = FusionParams {
                m: params.get(&format!("layer{l}.fusion.M"))?,
                b: params.get(&format!("layer{l}.fusion.b"))?,
                q: params.get(&format!("layer{l}.fusion.q"))?,
            };
            let e = gat_forward(t, input, edges, &gat, drop)?;
            let d = hgat_forward(t, ball, edges, &hgat, drop)?;
            let fused = fusion_forward(t, e.out, d.ball, c, &fusion)?;
            h = fused.z;
            layers.push(fused);
        }
        let logits = match self.out_dim {
            Some(_) => {
                let w = params.get("head.W")?;
                let b = params.get("head.b")?;
                Some(t.add(t.matmul(h, t.transpose(w))?, b)?)
            }
            None => None,
        };
        Ok(ModelOutput {
            z: h,
            logits,
            layers,
        })
    }
}

/// Everything one forward pass leaves on the tape.
#[derive(Debug, Clone)]
pub struct ModelOutput {
    /// Final fused embedding.
    pub z: Var,
    /// Read-out of `z` when the stack has a head.
    pub logits: Option<Var>,
    pub layers: Vec<LayerVars>,
}

impl ModelOutput {
    /// Per-layer `β_ℝ` values.
    pub fn beta_record(&self, t: &Tape) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .map(|l| t.value(l.beta_r).column(0).to_vec())
            .collect()
    }
}

/// Plain values of a fused layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput {
    pub z: Mat,
    pub beta_r: Vec<f64>,
    pub beta_d: Vec<f64>,
}

/// Evaluation-mode forward on `g` returning the final layer and the `β_ℝ`
/// record of every layer.
pub fn jsgnn_forward(
    features: &Mat,
    g: &WeightedGraph,
    cfg: &ModelConfig,
    params: &ParamStore,
) -> Result<(LayerOutput, Vec<Vec<f64>>)> {
    let t = Tape::new();
    let bound = params.bind(&t);
    let x = t.leaf(features.clone());
    let edges = AttentionEdges::from_graph(g);
    let out = cfg.forward(&t, &bound, x, &edges, &mut Dropout::eval())?;
    let last = out.layers.last().expect("validated non-empty");
    let layer = LayerOutput {
        z: t.value(last.z),
        beta_r: t.value(last.beta_r).column(0).to_vec(),
        beta_d: t.value(last.beta_d).column(0).to_vec(),
    };
    Ok((layer, out.beta_record(&t)))
}

/// Named parameter matrices in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: IndexMap<String, Mat>,
}

/// Tape handles for every entry of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: IndexMap<String, Var>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

#[derive(Serialize, Deserialize)]
struct StoredMatrix {
    shape: [usize; 2],
    values: Vec<f64>,
}

impl ParamStore {
    pub fn insert(&mut self, name: String, value: Mat) {
        self.params.insert(name, value);
    }

    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Mat> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Mat)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalars.
    pub fn num_values(&self) -> usize {
        self.params.values().map(|m| m.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params
            .values()
            .all(|m| m.iter().all(|x| x.is_finite()))
    }

    /// Places every parameter on `t` as a leaf.
    pub fn bind(&self, t: &Tape) -> BoundParams {
        BoundParams {
            vars: self
                .params
                .iter()
                .map(|(k, m)| (k.clone(), t.leaf(m.clone())))
                .collect(),
        }
    }

    /// `{"name": {"shape": [r, c], "values": [...]}}` with row-major values.
    pub fn to_json(&self) -> Result<String> {
        let map: IndexMap<&str, StoredMatrix> = self
            .params
            .iter()
            .map(|(k, m)| {
                (
                    k.as_str(),
                    StoredMatrix {
                        shape: [m.nrows(), m.ncols()],
                        values: m.iter().copied().collect(),
                    },
                )
            })
            .collect();
        Ok(serde_json::to_string(&map)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: IndexMap<String, StoredMatrix> = serde_json::from_str(text)?;
        let mut store = Self::default();
        for (name, m) in map {
            let value = Mat::from_shape_vec((m.shape[0], m.shape[1]), m.values).map_err(|_| {
                Error::Validation(format!("parameter `{name}` does not match its shape"))
            })?;
            store.insert(name, value);
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_lattice;

    fn six_nodes() -> WeightedGraph {
        WeightedGraph::unweighted(6, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5)]).unwrap()
    }

    fn features(n: usize, d: usize) -> Mat {
        Mat::from_shape_fn((n, d), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.2 - 0.4)
    }

    #[test]
    fn one_layer_equals_block_composition() {
        let g = six_nodes();
        let cfg = ModelConfig::new(3, 4, 1, 5);
        let params = cfg.init(3).unwrap();
        let x0 = features(6, 3);
        let (out, betas) = jsgnn_forward(&x0, &g, &cfg, &params).unwrap();

        let t = Tape::new();
        let b = params.bind(&t);
        let edges = AttentionEdges::from_graph(&g);
        let c = b.get(CURVATURE).unwrap();
        let x = t.leaf(x0);
        let gat = GatParams {
            w: b.get("layer0.gat.W").unwrap(),
            a: b.get("layer0.gat.a").unwrap(),
            leaky_slope: 0.2,
        };
        let hgat = HgatParams {
            w: b.get("layer0.hgat.W").unwrap(),
            b: b.get("layer0.hgat.b").unwrap(),
            a: b.get("layer0.hgat.a").unwrap(),
            c,
            leaky_slope: 0.2,
        };
        let fusion = FusionParams {
            m: b.get("layer0.fusion.M").unwrap(),
            b: b.get("layer0.fusion.b").unwrap(),
            q: b.get("layer0.fusion.q").unwrap(),
        };
        let mut drop = Dropout::eval();
        let e = gat_forward(&t, x, &edges, &gat, &mut drop).unwrap();
        let d = hgat_forward(&t, hyp::exp0(&t, x, c).unwrap(), &edges, &hgat, &mut drop).unwrap();
        let f = fusion_forward(&t, e.out, d.ball, c, &fusion).unwrap();
        assert_eq!(t.value(f.z), out.z);
        assert_eq!(betas.len(), 1);
        assert_eq!(betas[0], out.beta_r);
    }

    #[test]
    fn output_shapes_for_depths() {
        let g = six_nodes();
        for layers in 1..=3 {
            let cfg = ModelConfig::new(3, 4, layers, 2).with_head(3);
            let params = cfg.init(0).unwrap();
            let (out, betas) = jsgnn_forward(&features(6, 3), &g, &cfg, &params).unwrap();
            assert_eq!(out.z.dim(), (6, 4));
            assert_eq!(betas.len(), layers);
            for v in 0..6 {
                assert!((out.beta_r[v] + out.beta_d[v] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn seeded_forward_is_deterministic() {
        let g = six_nodes();
        let cfg = ModelConfig::new(3, 4, 2, 4);
        let a = jsgnn_forward(&features(6, 3), &g, &cfg, &cfg.init(11).unwrap()).unwrap();
        let b = jsgnn_forward(&features(6, 3), &g, &cfg, &cfg.init(11).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = jsgnn_forward(&features(6, 3), &g, &cfg, &cfg.init(12).unwrap()).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(ModelConfig::new(3, 4, 0, 2).init(0).is_err());
        assert!(ModelConfig::new(3, 0, 1, 2).init(0).is_err());
        let mut cfg = ModelConfig::new(3, 4, 1, 2);
        cfg.curvature = 0.0;
        assert!(cfg.init(0).is_err());
        let cfg = ModelConfig::new(3, 4, 1, 2);
        let params = cfg.init(0).unwrap();
        let g = generate_lattice(2, 3).unwrap();
        assert!(jsgnn_forward(&features(6, 2), &g, &cfg, &params).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = ModelConfig::new(3, 4, 2, 2).with_head(2);
        let params = cfg.init(5).unwrap();
        let text = params.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["layer0.gat.W"]["shape"], serde_json::json!([4, 3]));
        assert_eq!(ParamStore::from_json(&text).unwrap(), params);
        let names: Vec<&str> = params.iter().map(|(k, _)| k).collect();
        let back = ParamStore::from_json(&text).unwrap();
        assert_eq!(names, back.iter().map(|(k, _)| k).collect::<Vec<_>>());
        assert!(ParamStore::from_json(r#"{"x":{"shape":[2,2],"values":[1.0]}}"#).is_err());
    }

    #[test]
    fn dropout_scales_kept_entries() {
        let t = Tape::new();
        let x = t.leaf(Mat::ones((50, 20)));
        let y = t.value(Dropout::train(0.5, 1).apply(&t, x).unwrap());
        assert!(y.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = y.iter().filter(|&&v| v > 0.0).count();
        assert!((350..650).contains(&kept));
        let z = Dropout::eval().apply(&t, x).unwrap();
        assert_eq!(z, x);
    }

    #[test]
    fn ball_values_stay_valid_under_large_inputs() {
        let g = six_nodes();
        let cfg = ModelConfig::new(3, 4, 2, 2);
        let mut params = cfg.init(2).unwrap();
        for (_, m) in params.iter_mut() {
            m.mapv_inplace(|v| v * 30.0);
        }
        params.get_mut(CURVATURE).unwrap()[[0, 0]] = 1.0;
        let (out, _) = jsgnn_forward(&(features(6, 3) * 50.0), &g, &cfg, &params).unwrap();
        assert!(out.z.iter().all(|v| v.is_finite()));
    }
}
