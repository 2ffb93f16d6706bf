use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::{Edge, WeightedGraph};
use crate::error::{Error, Result};

/// Parsed edge list plus the original token of each node when remapping.
#[derive(Debug, Clone)]
pub struct EdgeList {
    pub graph: WeightedGraph,
    /// `original_ids[i]` is the token that was mapped to node `i`.
    pub original_ids: Option<Vec<String>>,
}

/// Reads a whitespace-separated `u v [w]` edge list.
///
/// Lines starting with `#` and blank lines are skipped. Node ids must be
/// dense non-negative integers; the node count is the largest id plus one.
/// When `weighted` is false every edge gets weight 1 and any third column is
/// ignored; when true the third column is required.
pub fn load_edge_list(path: impl AsRef<Path>, weighted: bool) -> Result<WeightedGraph> {
    let text = fs::read_to_string(path)?;
    Ok(parse_edge_list(&text, weighted, false)?.graph)
}

/// Parses edge-list text. With `remap`, arbitrary tokens are assigned dense
/// ids in order of first appearance.
pub fn parse_edge_list(text: &str, weighted: bool, remap: bool) -> Result<EdgeList> {
    let mut edges = Vec::new();
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut max_id: Option<usize> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 2 || tokens.len() > 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected `u v [w]`, got {} fields", tokens.len()),
            });
        }
        let mut node = |tok: &str| -> Result<usize> {
            if remap {
                let next = ids.len();
                let id = *ids.entry(tok.to_string()).or_insert_with(|| {
                    order.push(tok.to_string());
                    next
                });
                Ok(id)
            } else {
                tok.parse::<usize>().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("invalid node id `{tok}`"),
                })
            }
        };
        let u = node(tokens[0])?;
        let v = node(tokens[1])?;
        let w = if weighted {
            let tok = tokens.get(2).ok_or_else(|| Error::Parse {
                line: lineno,
                msg: "missing weight column".into(),
            })?;
            tok.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid weight `{tok}`"),
            })?
        } else {
            1.0
        };
        if u == v {
            return Err(Error::Validation(format!(
                "line {lineno}: self-loop at node {u}"
            )));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::Validation(format!(
                "line {lineno}: non-positive weight {w}"
            )));
        }
        max_id = Some(max_id.map_or(u.max(v), |m: usize| m.max(u).max(v)));
        edges.push(Edge { u, v, w });
    }

    let num_nodes = if remap {
        order.len()
    } else {
        max_id.map_or(0, |m| m + 1)
    };
    let graph = WeightedGraph::new(num_nodes, edges)?;
    Ok(EdgeList {
        graph,
        original_ids: remap.then_some(order),
    })
}

/// Writes `u v w` lines; weights are omitted when all are 1.
pub fn write_edge_list(g: &WeightedGraph, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    let unit = g.edges().iter().all(|e| e.w == 1.0);
    writeln!(out, "# {} nodes, {} edges", g.num_nodes(), g.num_edges())?;
    for e in g.edges() {
        if unit {
            writeln!(out, "{} {}", e.u, e.v)?;
        } else {
            writeln!(out, "{} {} {}", e.u, e.v, e.w)?;
        }
    }
    Ok(())
}

/// Reads a `node_id,f0,..,fk` CSV into a `[num_nodes × (k+1)]` matrix.
pub fn load_features_csv(path: impl AsRef<Path>, num_nodes: usize) -> Result<Array2<f64>> {
    let mut reader = csv::Reader::from_path(path)?;
    let dim = reader.headers()?.len().saturating_sub(1);
    if dim == 0 {
        return Err(Error::Validation(
            "feature CSV has no feature columns".into(),
        ));
    }
    let mut out = Array2::<f64>::zeros((num_nodes, dim));
    let mut seen = vec![false; num_nodes];
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let node = parse_node(&record, line, num_nodes)?;
        if std::mem::replace(&mut seen[node], true) {
            return Err(Error::Parse {
                line,
                msg: format!("node {node} listed twice"),
            });
        }
        if record.len() != dim + 1 {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} columns, got {}", dim + 1, record.len()),
            });
        }
        for j in 0..dim {
            let tok = record[j + 1].trim();
            out[[node, j]] = tok.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid feature value `{tok}`"),
            })?;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Validation(format!("no features for node {missing}")));
    }
    Ok(out)
}

/// Reads a `node_id,label` CSV.
pub fn load_labels_csv(path: impl AsRef<Path>, num_nodes: usize) -> Result<Vec<usize>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut labels = vec![usize::MAX; num_nodes];
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let node = parse_node(&record, line, num_nodes)?;
        let tok = record.get(1).map(str::trim).ok_or_else(|| Error::Parse {
            line,
            msg: "missing label column".into(),
        })?;
        labels[node] = tok.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("invalid label `{tok}`"),
        })?;
    }
    if let Some(missing) = labels.iter().position(|&l| l == usize::MAX) {
        return Err(Error::Validation(format!("no label for node {missing}")));
    }
    Ok(labels)
}

fn parse_node(record: &csv::StringRecord, line: usize, num_nodes: usize) -> Result<usize> {
    let tok = record.get(0).map(str::trim).unwrap_or("");
    let node: usize = tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid node id `{tok}`"),
    })?;
    if node >= num_nodes {
        return Err(Error::Parse {
            line,
            msg: format!("node {node} outside 0..{num_nodes}"),
        });
    }
    Ok(node)
}

pub fn write_features_csv(features: &Array2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["node_id".to_string()];
    header.extend((0..features.ncols()).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for (i, row) in features.rows().into_iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_labels_csv(labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node_id", "label"])?;
    for (i, l) in labels.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
