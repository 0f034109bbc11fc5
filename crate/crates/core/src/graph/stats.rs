use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::KnowledgeGraph;
use crate::error::{Error, Result};

const PERCENTILES: [f64; 5] = [25.0, 50.0, 75.0, 90.0, 99.0];

/// Structural profile of a (pre-augmentation) graph.
///
/// Degrees follow the undirected convention: each triple adds one to the
/// degree of its head and one to its tail, so `mean_degree = 2E / V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub node_type_count: usize,
    pub edge_type_count: usize,
    pub mean_degree: f64,
    pub max_degree: usize,
    /// `(percentile, degree)` pairs, nearest-rank.
    pub degree_percentiles: Vec<(f64, usize)>,
    /// Sample skewness (Fisher-Pearson) of the degree distribution.
    pub degree_skew: f64,
}

pub fn graph_stats(graph: &KnowledgeGraph) -> Result<GraphStats> {
    if graph.num_entities() == 0 || graph.num_triples() == 0 {
        return Err(Error::EmptyGraph);
    }
    if graph.is_augmented() {
        return Err(Error::InvalidInput(
            "statistics are defined on the graph before inverse augmentation".into(),
        ));
    }
    let mut degree = vec![0usize; graph.num_entities()];
    let mut relations = BTreeSet::new();
    for t in graph.triples() {
        degree[t.head.index()] += 1;
        degree[t.tail.index()] += 1;
        relations.insert(t.relation);
    }
    let n = degree.len() as f64;
    let mean = 2.0 * graph.num_triples() as f64 / n;
    let (m2, m3) = degree.iter().fold((0.0, 0.0), |(m2, m3), &d| {
        let x = d as f64 - mean;
        (m2 + x * x, m3 + x * x * x)
    });
    let (m2, m3) = (m2 / n, m3 / n);
    let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };

    let mut sorted = degree.clone();
    sorted.sort_unstable();
    let degree_percentiles = PERCENTILES
        .iter()
        .map(|&p| (p, nearest_rank(&sorted, p)))
        .collect();

    Ok(GraphStats {
        node_count: graph.num_entities(),
        edge_count: graph.num_triples(),
        node_type_count: graph.num_types(),
        edge_type_count: relations.len(),
        mean_degree: mean,
        max_degree: *sorted.last().unwrap_or(&0),
        degree_percentiles,
        degree_skew: skew,
    })
}

fn nearest_rank(sorted: &[usize], p: f64) -> usize {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl fmt::Display for GraphStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "node_count\t{}", self.node_count)?;
        writeln!(f, "edge_count\t{}", self.edge_count)?;
        writeln!(f, "node_type_count\t{}", self.node_type_count)?;
        writeln!(f, "edge_type_count\t{}", self.edge_type_count)?;
        writeln!(f, "mean_degree\t{:.2}", self.mean_degree)?;
        writeln!(f, "max_degree\t{}", self.max_degree)?;
        for (p, d) in &self.degree_percentiles {
            writeln!(f, "degree_p{p}\t{d}")?;
        }
        writeln!(f, "degree_skew\t{:.4}", self.degree_skew)
    }
}
