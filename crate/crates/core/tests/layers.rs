use jsgnn::autodiff::Tape;
use jsgnn::graph::{generate_tree, WeightedGraph};
use jsgnn::layers::{gat_forward, AttentionEdges, Dropout, GatParams, ModelConfig};
use ndarray::{arr2, Array2};

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[test]
fn attention_layer_by_hand() {
    let g = WeightedGraph::unweighted(3, &[(0, 1), (1, 2)]).unwrap();
    let h = arr2(&[[1.0, 0.0], [0.5, -1.0], [-0.3, 2.0]]);
    let w = arr2(&[[0.4, -0.2], [0.1, 0.9]]);
    let a = arr2(&[[0.3, -0.5, 0.8, 0.2]]);
    let slope = 0.2;

    let u = h.dot(&w.t());
    let neighbors = [vec![0, 1], vec![1, 0, 2], vec![2, 1]];
    let mut expect = Array2::<f64>::zeros((3, 2));
    for v in 0..3 {
        let e: Vec<f64> = neighbors[v]
            .iter()
            .map(|&j| {
                let s = a[[0, 0]] * u[[v, 0]]
                    + a[[0, 1]] * u[[v, 1]]
                    + a[[0, 2]] * u[[j, 0]]
                    + a[[0, 3]] * u[[j, 1]];
                if s > 0.0 {
                    s
                } else {
                    slope * s
                }
            })
            .collect();
        let z: f64 = e.iter().map(|x| x.exp()).sum();
        for (k, &j) in neighbors[v].iter().enumerate() {
            for c in 0..2 {
                expect[[v, c]] += e[k].exp() / z * u[[j, c]];
            }
        }
    }
    expect.mapv_inplace(elu);

    let t = Tape::new();
    let edges = AttentionEdges::from_graph(&g);
    let p = GatParams {
        w: t.leaf(w),
        a: t.leaf(a),
        leaky_slope: slope,
    };
    let out = gat_forward(&t, t.leaf(h), &edges, &p, &mut Dropout::eval()).unwrap();
    let got = t.value(out.out);
    for (x, y) in got.iter().zip(expect.iter()) {
        assert!((x - y).abs() < 1e-14, "{got} vs {expect}");
    }
    let alpha = t.value(out.alpha);
    let mut per_target = [0.0; 3];
    for (k, &v) in edges.target.iter().enumerate() {
        per_target[v] += alpha[[k, 0]];
    }
    assert!(per_target.iter().all(|s| (s - 1.0).abs() < 1e-14));
}

#[test]
fn model_weights_form_a_simplex() {
    let g = generate_tree(2, 3).unwrap();
    let n = g.num_nodes();
    let x = Array2::from_shape_fn((n, 3), |(i, j)| ((i * 3 + j) as f64).sin());
    let cfg = ModelConfig::new(3, 5, 3, 4).with_head(2);
    let params = cfg.init(11).unwrap();
    let t = Tape::new();
    let out = cfg
        .forward(
            &t,
            &params.bind(&t),
            t.leaf(x.clone()),
            &AttentionEdges::from_graph(&g),
            &mut Dropout::eval(),
        )
        .unwrap();
    assert_eq!(out.layers.len(), 3);
    assert_eq!(t.shape(out.logits.unwrap()), (n, 2));
    for l in &out.layers {
        let (r, d) = (t.value(l.beta_r), t.value(l.beta_d));
        for (a, b) in r.iter().zip(d.iter()) {
            assert!((0.0..=1.0).contains(a));
            assert!((a + b - 1.0).abs() < 1e-12);
        }
    }
    assert_eq!(out.beta_record(&t).len(), 3);

    // eval-mode dropout leaves the forward pass unchanged
    let t2 = Tape::new();
    let again = cfg
        .forward(
            &t2,
            &params.bind(&t2),
            t2.leaf(x),
            &AttentionEdges::from_graph(&g),
            &mut Dropout::eval(),
        )
        .unwrap();
    assert_eq!(t.value(out.z), t2.value(again.z));
}

#[test]
fn invalid_shapes_are_rejected() {
    let g = generate_tree(2, 2).unwrap();
    let cfg = ModelConfig::new(3, 4, 2, 4);
    let params = cfg.init(0).unwrap();
    let t = Tape::new();
    let wrong = t.leaf(Array2::zeros((g.num_nodes(), 2)));
    assert!(cfg
        .forward(
            &t,
            &params.bind(&t),
            wrong,
            &AttentionEdges::from_graph(&g),
            &mut Dropout::eval()
        )
        .is_err());
    assert!(ModelConfig::new(3, 4, 0, 4).validate().is_err());
}
