use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::is_special_token;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextRankConfig {
    pub damping: f64,
    pub window: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for TextRankConfig {
    fn default() -> Self {
        Self {
            damping: 0.85,
            window: 4,
            max_iters: 10,
            tol: 1e-6,
        }
    }
}

impl TextRankConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::config(format!("damping {} outside (0, 1)", self.damping)));
        }
        if self.window < 2 {
            return Err(Error::config(format!("window {} must be at least 2", self.window)));
        }
        if self.max_iters == 0 || !(self.tol > 0.0) {
            return Err(Error::config("max_iters and tol must be positive"));
        }
        Ok(())
    }
}

/// Undirected, unweighted co-occurrence graph over the distinct content
/// tokens of one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoocGraph {
    nodes: Vec<String>,
    adjacency: Vec<Vec<usize>>,
}

impl CoocGraph {
    /// Builds a graph directly from an edge list over `n` unnamed nodes.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::data(format!("edge ({a}, {b}) outside {n} nodes")));
            }
            if a == b {
                continue;
            }
            if !adjacency[a].contains(&b) {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        adjacency.iter_mut().for_each(|adj| adj.sort_unstable());
        Ok(Self {
            nodes: (0..n).map(|i| i.to_string()).collect(),
            adjacency,
        })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn node_index(&self, token: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == token)
    }
}

/// Links every pair of distinct content tokens whose occurrences lie fewer
/// than `window` positions apart. Special markers are dropped first.
pub fn build_graph(tokens: &[String], window: usize) -> Result<CoocGraph> {
    if window < 2 {
        return Err(Error::config(format!("window {window} must be at least 2")));
    }
    let mut nodes: Vec<String> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut seq = Vec::with_capacity(tokens.len());
    for t in tokens.iter().filter(|t| !is_special_token(t)) {
        let id = *index.entry(t.as_str()).or_insert_with(|| {
            nodes.push(t.clone());
            nodes.len() - 1
        });
        seq.push(id);
    }
    if nodes.is_empty() {
        return Err(Error::data("no graph nodes"));
    }
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for (i, &a) in seq.iter().enumerate() {
        for &b in seq.iter().skip(i + 1).take(window - 1) {
            if a != b && !adjacency[a].contains(&b) {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
    }
    adjacency.iter_mut().for_each(|adj| adj.sort_unstable());
    Ok(CoocGraph { nodes, adjacency })
}

/// Synchronous TextRank iteration from an all-ones start.
///
/// Stops after `max_iters` sweeps or once the largest per-node change drops
/// below `tol`. Isolated nodes settle at `1 - damping`.
pub fn textrank(graph: &CoocGraph, cfg: &TextRankConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = graph.nodes.len();
    if n == 0 {
        return Err(Error::data("no graph nodes"));
    }
    let d = cfg.damping;
    let mut scores = vec![1.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..cfg.max_iters {
        let mut delta = 0.0f64;
        for (i, slot) in next.iter_mut().enumerate() {
            let inflow: f64 = graph.adjacency[i]
                .iter()
                .map(|&j| scores[j] / graph.adjacency[j].len() as f64)
                .sum();
            *slot = (1.0 - d) + d * inflow;
            delta = delta.max((*slot - scores[i]).abs());
        }
        std::mem::swap(&mut scores, &mut next);
        if delta < cfg.tol {
            break;
        }
    }
    Ok(scores)
}

/// Largest violation of the TextRank fixed-point equation at `scores`.
pub fn textrank_residual(graph: &CoocGraph, damping: f64, scores: &[f64]) -> f64 {
    (0..graph.nodes.len())
        .map(|i| {
            let inflow: f64 = graph.adjacency[i]
                .iter()
                .map(|&j| scores[j] / graph.adjacency[j].len() as f64)
                .sum();
            (scores[i] - ((1.0 - damping) + damping * inflow)).abs()
        })
        .fold(0.0, f64::max)
}
