//! Text renderings of reports. Numbers are printed with Rust's shortest
//! round-trip formatting wherever the JSON form carries the same value.

use std::fmt::Write as _;

use kgpath::eval::{AggregateMetrics, RankMetrics};
use kgpath::graph::{GraphStats, LoadReport};
use serde::{Deserialize, Serialize};

use crate::config::ModelKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSize {
    pub fold: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSplit {
    pub relation: String,
    pub target_type: String,
    pub triples: usize,
    pub folds: Vec<FoldSize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub graph: GraphStats,
    pub load: Option<LoadReport>,
    /// Absent when the default target relation is not in the graph.
    pub target: Option<TargetSplit>,
}

impl StatsReport {
    pub fn to_text(&self) -> String {
        let g = &self.graph;
        let mut out = String::new();
        let mut row = |k: &str, v: String| {
            let _ = writeln!(out, "{k:<20}{v}");
        };
        row("nodes", g.node_count.to_string());
        row("edges", g.edge_count.to_string());
        row("node types", g.node_type_count.to_string());
        row("edge types", g.edge_type_count.to_string());
        row("mean degree", g.mean_degree.to_string());
        row("max degree", g.max_degree.to_string());
        for (p, d) in &g.degree_percentiles {
            row(&format!("degree p{p}"), d.to_string());
        }
        row("degree skew", g.degree_skew.to_string());
        if let Some(load) = &self.load {
            row("lines read", load.lines_read.to_string());
            row("duplicates dropped", load.duplicates_dropped.to_string());
        }
        if let Some(t) = &self.target {
            let _ = writeln!(out, "\n{} -> {}: {} triples", t.relation, t.target_type, t.triples);
            let _ = writeln!(out, "{:<6}{:>8}{:>8}{:>8}", "fold", "train", "valid", "test");
            for f in &t.folds {
                let _ = writeln!(out, "{:<6}{:>8}{:>8}{:>8}", f.fold, f.train, f.valid, f.test);
            }
        }
        out
    }
}

/// Aggregate of a k-fold run; the content of the top-level `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub model: ModelKind,
    pub relation: String,
    pub folds: usize,
    pub test_queries: usize,
    pub unpruned: AggregateMetrics,
    pub pruned: AggregateMetrics,
}

fn metric_table(out: &mut String, title: &str, agg: &AggregateMetrics) {
    let _ = writeln!(out, "{title}");
    let _ = write!(out, "{:<6}", "fold");
    for name in RankMetrics::NAMES {
        let _ = write!(out, "{name:>12}");
    }
    out.push('\n');
    for (i, m) in agg.per_fold.iter().enumerate() {
        let _ = write!(out, "{i:<6}");
        for v in m.values() {
            let _ = write!(out, "{v:>12.4}");
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<6}", "mean");
    for s in agg.summaries() {
        let _ = write!(out, "{:>12}", s.to_string());
    }
    out.push('\n');
}

impl RunMetrics {
    /// Pre-pruning and pruned tables, one row per fold plus mean ± standard error.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} on ({}, ?), {} folds, {} test queries, filtered\n\n",
            self.model.name(),
            self.relation,
            self.folds,
            self.test_queries
        );
        metric_table(&mut out, "pre-pruning", &self.unpruned);
        out.push('\n');
        metric_table(&mut out, "pruned", &self.pruned);
        out
    }
}

/// One fold's metrics as a two-row table.
pub fn fold_metrics_text(unpruned: &RankMetrics, pruned: &RankMetrics) -> String {
    let mut out = format!("{:<12}", "");
    for name in RankMetrics::NAMES {
        let _ = write!(out, "{name:>10}");
    }
    out.push('\n');
    for (label, m) in [("pre-pruning", unpruned), ("pruned", pruned)] {
        let _ = write!(out, "{label:<12}");
        for v in m.values() {
            let _ = write!(out, "{v:>10.4}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use kgpath::eval::aggregate_folds;

    fn metrics(mrr: f64) -> RankMetrics {
        RankMetrics {
            hits1: mrr / 2.0,
            hits3: mrr,
            hits10: 1.0,
            mrr,
            queries: 10,
        }
    }

    #[test]
    fn run_tables() {
        let agg = aggregate_folds(&[metrics(0.4), metrics(0.5)]).unwrap();
        let m = RunMetrics {
            model: ModelKind::Minerva,
            relation: "treats".into(),
            folds: 2,
            test_queries: 20,
            unpruned: agg.clone(),
            pruned: agg,
        };
        let text = m.to_text();
        assert!(text.contains("pre-pruning\n"));
        assert!(text.contains("\npruned\n"));
        assert!(text.contains(".450±.050"));
        assert_eq!(text.matches("mean").count(), 2);
    }

    #[test]
    fn stats_text_keeps_full_precision() {
        let g = GraphStats {
            node_count: 3,
            edge_count: 2,
            node_type_count: 1,
            edge_type_count: 1,
            mean_degree: 4.0 / 3.0,
            max_degree: 2,
            degree_percentiles: vec![(50.0, 1)],
            degree_skew: 0.7071067811865475,
        };
        let r = StatsReport { graph: g, load: None, target: None };
        let text = r.to_text();
        assert!(text.contains(&(4.0f64 / 3.0).to_string()));
        assert!(text.contains("0.7071067811865475"));
    }
}
