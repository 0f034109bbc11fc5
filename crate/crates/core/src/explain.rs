//! Witness paths as explanations, and metapath frequency tables.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::beam::PredictionList;
use crate::error::{Error, Result};
use crate::graph::{Action, KnowledgeGraph, RelationId};
use crate::metapath::Metapath;
use crate::walk::Rollout;

/// Type/relation pattern of a walk, `NO_OP` steps removed. An all-`NO_OP`
/// walk gives the bare head type.
pub fn abstract_path(path: &Rollout, graph: &KnowledgeGraph) -> Metapath {
    let mut types = vec![graph.entity_type(path.head)];
    let mut relations = Vec::new();
    for step in path.hops() {
        relations.push(step.relation);
        types.push(graph.entity_type(step.entity));
    }
    Metapath::abstracted(types, relations)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetapathStat {
    pub metapath: Metapath,
    /// `Compound →binds Gene →associates Disease`
    pub pattern: String,
    pub count: usize,
    pub percent: f64,
}

/// Groups paths by their abstracted metapath. Most frequent first, ties by
/// rendered pattern; percentages are of all paths, before truncation.
pub fn metapath_frequencies(paths: &[Rollout], graph: &KnowledgeGraph, top_k: usize) -> Vec<MetapathStat> {
    let mut counts: HashMap<Metapath, usize> = HashMap::new();
    for p in paths {
        *counts.entry(abstract_path(p, graph)).or_default() += 1;
    }
    let total = paths.len() as f64;
    let mut stats: Vec<MetapathStat> = counts
        .into_iter()
        .map(|(metapath, count)| MetapathStat {
            pattern: metapath.render(graph),
            metapath,
            count,
            percent: 100.0 * count as f64 / total,
        })
        .collect();
    stats.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.pattern.cmp(&b.pattern)));
    stats.truncate(top_k);
    stats
}

/// Aligned text table, one metapath per line.
pub fn format_frequency_table(stats: &[MetapathStat]) -> String {
    let width = stats.iter().map(|s| s.pattern.chars().count()).max().unwrap_or(0);
    let mut out = String::new();
    for s in stats {
        let pad = width - s.pattern.chars().count();
        let _ = writeln!(out, "{}{}  {:5.1}%  {}", s.pattern, " ".repeat(pad), s.percent, s.count);
    }
    out
}

/// `head -rel-> e1 -rel-> e2` with entity names; `NO_OP` steps omitted.
pub fn render_path(path: &Rollout, graph: &KnowledgeGraph) -> String {
    let mut out = graph.entity_name(path.head).to_owned();
    for step in path.hops() {
        let _ = write!(
            out,
            " -{}-> {}",
            graph.relation_name(step.relation),
            graph.entity_name(step.entity)
        );
    }
    out
}

/// Same as [`render_path`] but with display labels.
pub fn render_path_labels(path: &Rollout, graph: &KnowledgeGraph) -> String {
    let mut out = graph.entity_label(path.head).to_owned();
    for step in path.hops() {
        let _ = write!(
            out,
            " -{}-> {}",
            graph.relation_name(step.relation),
            graph.entity_label(step.entity)
        );
    }
    out
}

/// Inverse of [`render_path`]; the result has no `NO_OP` steps.
pub fn parse_path(text: &str, query_relation: RelationId, graph: &KnowledgeGraph) -> Result<Rollout> {
    let segments: Vec<&str> = text.split("-> ").collect();
    let mut steps = Vec::with_capacity(segments.len().saturating_sub(1));
    let mut head = None;
    let mut relation: Option<RelationId> = None;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        let (entity, next_rel) = if last {
            (*seg, None)
        } else {
            let (e, r) = seg
                .rsplit_once(" -")
                .ok_or_else(|| Error::InvalidInput(format!("malformed path segment `{seg}`")))?;
            (e, Some(graph.require_relation(r)?))
        };
        let e = graph.require_entity(entity)?;
        match relation {
            None => head = Some(e),
            Some(r) => steps.push(Action::new(r, e)),
        }
        relation = next_rel;
    }
    let head = head.ok_or_else(|| Error::InvalidInput("empty path".into()))?;
    Ok(Rollout::new(head, query_relation, steps, 0.0))
}

/// One line of an explanation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub head: String,
    pub relation: String,
    pub candidate: String,
    pub score: f64,
    pub path: String,
    pub path_labels: String,
    pub metapath: String,
}

/// Explanation records for every entry that carries a witness, in list order.
pub fn explanations(predictions: &PredictionList, graph: &KnowledgeGraph) -> Vec<Explanation> {
    predictions
        .entries
        .iter()
        .filter_map(|e| {
            let w = e.witness.as_ref()?;
            Some(Explanation {
                head: graph.entity_name(predictions.head).to_owned(),
                relation: graph.relation_name(predictions.relation).to_owned(),
                candidate: graph.entity_name(e.entity).to_owned(),
                score: e.score,
                path: render_path(w, graph),
                path_labels: render_path_labels(w, graph),
                metapath: abstract_path(w, graph).render(graph),
            })
        })
        .collect()
}

/// Writes [`explanations`] of every list as JSON lines.
pub fn export_explanations(predictions: &[PredictionList], graph: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for list in predictions {
        for record in explanations(list, graph) {
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::PredictionEntry;

    fn bio() -> KnowledgeGraph {
        let mut b = KnowledgeGraph::builder();
        b.add_entity("Ibuprofen", "Compound").unwrap();
        b.add_entity("COX1", "Gene").unwrap();
        b.add_entity("Headache", "Disease").unwrap();
        b.add_entity("Migraine", "Disease").unwrap();
        b.add_triple("Ibuprofen", "treats", "Headache").unwrap();
        b.add_triple("Ibuprofen", "binds", "COX1").unwrap();
        b.add_triple("COX1", "associates", "Headache").unwrap();
        b.add_triple("COX1", "associates", "Migraine").unwrap();
        b.build().augment_inverses().unwrap()
    }

    fn rollout(g: &KnowledgeGraph, steps: &[(&str, &str)]) -> Rollout {
        let head = g.entity("Ibuprofen").unwrap();
        let mut at = head;
        let steps = steps
            .iter()
            .map(|(r, e)| {
                if *r == "-" {
                    Action::no_op(at)
                } else {
                    at = g.entity(e).unwrap();
                    Action::new(g.relation(r).unwrap(), at)
                }
            })
            .collect();
        Rollout::new(head, g.relation("treats").unwrap(), steps, -0.5)
    }

    #[test]
    fn abstraction() {
        let g = bio();
        let one = abstract_path(&rollout(&g, &[("treats", "Headache")]), &g);
        assert_eq!(one.render(&g), "Compound →treats Disease");
        let stay = abstract_path(&rollout(&g, &[("-", ""), ("-", "")]), &g);
        assert_eq!(stay.hops(), 0);
        assert_eq!(stay.render(&g), "Compound");
        let inv = abstract_path(
            &rollout(&g, &[("treats", "Headache"), ("associates__inv", "COX1"), ("associates", "Migraine")]),
            &g,
        );
        assert_eq!(inv.render(&g), "Compound →treats Disease →associates⁻¹ Gene →associates Disease");
    }

    #[test]
    fn frequencies() {
        let g = bio();
        let a = rollout(&g, &[("binds", "COX1"), ("associates", "Headache")]);
        let b = rollout(&g, &[("treats", "Headache")]);
        let stats = metapath_frequencies(&[a.clone(), a.clone(), b.clone()], &g, 10);
        assert_eq!(stats.len(), 2);
        assert_eq!(stats[0].count, 2);
        assert!((stats[0].percent - 66.666).abs() < 0.01);
        assert!((stats[1].percent - 33.333).abs() < 0.01);
        let single = metapath_frequencies(&[b.clone(), b], &g, 10);
        assert_eq!(single[0].percent, 100.0);
        let table = format_frequency_table(&stats);
        assert!(table.starts_with("Compound →binds Gene →associates Disease   66.7%"));
    }

    #[test]
    fn ties_ordered_by_pattern() {
        let g = bio();
        let a = rollout(&g, &[("treats", "Headache")]);
        let b = rollout(&g, &[("binds", "COX1")]);
        let stats = metapath_frequencies(&[a, b], &g, 10);
        assert!(stats[0].pattern < stats[1].pattern);
    }

    #[test]
    fn path_round_trip() {
        let g = bio();
        let r = rollout(&g, &[("binds", "COX1"), ("associates", "Migraine")]);
        let text = render_path(&r, &g);
        assert_eq!(text, "Ibuprofen -binds-> COX1 -associates-> Migraine");
        let back = parse_path(&text, r.relation, &g).unwrap();
        assert_eq!(back.steps, r.steps);
        assert_eq!(back.head, r.head);

        let with_stay = rollout(&g, &[("binds", "COX1"), ("-", ""), ("associates", "Migraine")]);
        assert_eq!(render_path(&with_stay, &g), text);
        assert!(parse_path("Ibuprofen -nope-> COX1", r.relation, &g).is_err());
    }

    #[test]
    fn export_writes_one_line_per_witness() {
        let g = bio();
        let w = rollout(&g, &[("binds", "COX1"), ("associates", "Migraine")]);
        let list = PredictionList {
            head: w.head,
            relation: w.relation,
            entries: vec![PredictionEntry { entity: w.terminal(), score: -0.5, witness: Some(w) }],
            pruned_to: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("explain.jsonl");
        export_explanations(std::slice::from_ref(&list), &g, &file).unwrap();
        let text = std::fs::read_to_string(&file).unwrap();
        assert_eq!(text.lines().count(), 1);
        let rec: Explanation = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(rec.candidate, "Migraine");
        assert_eq!(rec.metapath, "Compound →binds Gene →associates Disease");
        assert!(export_explanations(&[list], &g, dir.path().join("missing/x.jsonl")).is_err());
    }
}
