//! Feeder topology and the symmetric-normalized adjacency used by the
//! graph-convolution layers.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Undirected feeder graph over transformer districts.
///
/// Edges are stored deduplicated with the smaller index first; self-loops
/// are not stored (they are introduced during normalization).
#[derive(Clone, Debug, PartialEq)]
pub struct FeederGraph {
    pub n_nodes: usize,
    pub edges: BTreeSet<(usize, usize)>,
    pub node_labels: Option<Vec<String>>,
}

impl FeederGraph {
    pub fn new(n_nodes: usize) -> Self {
        FeederGraph {
            n_nodes,
            edges: BTreeSet::new(),
            node_labels: None,
        }
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        if i >= self.n_nodes || j >= self.n_nodes {
            return Err(Error::Range(format!(
                "edge ({i}, {j}) references a node >= {}",
                self.n_nodes
            )));
        }
        if i != j {
            self.edges.insert((i.min(j), i.max(j)));
        }
        Ok(())
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Degree without the self-loop.
    pub fn degree(&self, i: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| a == i || b == i)
            .count()
    }
}

/// Dense Ã = D̂^{-1/2} (A + I) D̂^{-1/2}, row-major N×N.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    pub n: usize,
    pub matrix: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n + j]
    }
}

/// Parse an edge-list document.
///
/// Format: first non-comment line `n=<N>`, then `<i> <j>` pairs of
/// zero-based node indices; `#` starts a comment line. Duplicate and
/// reversed edges collapse to one undirected edge.
pub fn parse_topology(text: &str) -> Result<FeederGraph> {
    let mut graph: Option<FeederGraph> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match &mut graph {
            None => {
                let n = line
                    .strip_prefix("n=")
                    .and_then(|s| s.trim().parse::<usize>().ok())
                    .ok_or_else(|| Error::Parse {
                        line: line_no,
                        msg: format!("expected header `n=<N>`, got `{line}`"),
                    })?;
                if n == 0 {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: "node count must be positive".into(),
                    });
                }
                graph = Some(FeederGraph::new(n));
            }
            Some(g) => {
                let mut parts = line.split_whitespace();
                let (i, j) = match (parts.next(), parts.next(), parts.next()) {
                    (Some(a), Some(b), None) => {
                        let parse = |s: &str| {
                            s.parse::<usize>().map_err(|_| Error::Parse {
                                line: line_no,
                                msg: format!("`{s}` is not a node index"),
                            })
                        };
                        (parse(a)?, parse(b)?)
                    }
                    _ => {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("expected `<i> <j>`, got `{line}`"),
                        })
                    }
                };
                g.add_edge(i, j)?;
            }
        }
    }
    graph.ok_or_else(|| Error::Parse {
        line: 1,
        msg: "empty topology document".into(),
    })
}

/// Serialize a graph back to the edge-list format accepted by
/// [`parse_topology`].
pub fn format_topology(g: &FeederGraph) -> String {
    let mut out = format!("n={}\n", g.n_nodes);
    for &(i, j) in &g.edges {
        out.push_str(&format!("{i} {j}\n"));
    }
    out
}

/// Ã = D̂^{-1/2} (A + I) D̂^{-1/2} with D̂ the degree diagonal of A + I.
///
/// Isolated nodes are fine: the self-loop gives them degree 1.
pub fn normalize_adjacency(g: &FeederGraph) -> NormalizedAdjacency {
    let n = g.n_nodes;
    let mut a_hat = vec![0.0; n * n];
    for i in 0..n {
        a_hat[i * n + i] = 1.0;
    }
    for &(i, j) in &g.edges {
        a_hat[i * n + j] = 1.0;
        a_hat[j * n + i] = 1.0;
    }
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = a_hat[i * n..(i + 1) * n].iter().sum();
            1.0 / d.sqrt()
        })
        .collect();
    let mut matrix = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            matrix[i * n + j] = inv_sqrt_deg[i] * a_hat[i * n + j] * inv_sqrt_deg[j];
        }
    }
    NormalizedAdjacency { n, matrix }
}
