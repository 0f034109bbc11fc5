//! Tab-separated triple and entity-type files.
//!
//! Triples: `head<TAB>relation<TAB>tail`. Types: `entity<TAB>type`, or the
//! three-column `id<TAB>name<TAB>kind` node table (the middle column becomes
//! the display label). Blank lines and `#` comments are skipped, as is the
//! header row of a Hetionet-style edge or node export.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::KnowledgeGraph;
use crate::error::{Error, Result};

const TRIPLE_HEADERS: &[&str] = &["source\tmetaedge\ttarget", "head\trelation\ttail"];
const TYPE_HEADERS: &[&str] = &["id\tname\tkind", "entity\ttype"];

/// Summary of what a load did besides building the graph.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub lines_read: usize,
    pub triples_loaded: usize,
    pub duplicates_dropped: usize,
    pub entities_typed: usize,
}

pub struct TypeRow {
    pub entity: String,
    pub label: Option<String>,
    pub ty: String,
}

fn content_lines<'a>(
    text: &'a str,
    headers: &'a [&'a str],
) -> impl Iterator<Item = (usize, &'a str)> + 'a {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .filter(move |(n, l)| !(*n == 1 && headers.contains(l)))
}

/// Parses triple lines into owned name triples, reporting the first bad line.
pub fn parse_triples(text: &str, path: &Path) -> Result<Vec<(String, String, String)>> {
    content_lines(text, TRIPLE_HEADERS)
        .map(|(n, line)| {
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                [h, r, t] if !h.is_empty() && !r.is_empty() && !t.is_empty() => {
                    Ok((h.to_string(), r.to_string(), t.to_string()))
                }
                _ => Err(Error::Parse {
                    path: path.to_owned(),
                    line: n,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                }),
            }
        })
        .collect()
}

pub fn parse_types(text: &str, path: &Path) -> Result<Vec<TypeRow>> {
    content_lines(text, TYPE_HEADERS)
        .map(|(n, line)| {
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                [e, ty] if !e.is_empty() && !ty.is_empty() => Ok(TypeRow {
                    entity: e.to_string(),
                    label: None,
                    ty: ty.to_string(),
                }),
                [e, label, ty] if !e.is_empty() && !ty.is_empty() => Ok(TypeRow {
                    entity: e.to_string(),
                    label: Some(label.to_string()),
                    ty: ty.to_string(),
                }),
                _ => Err(Error::Parse {
                    path: path.to_owned(),
                    line: n,
                    message: format!(
                        "expected 2 or 3 tab-separated fields, found {}",
                        fields.len()
                    ),
                }),
            }
        })
        .collect()
}

/// Loads and validates a graph. No inverse augmentation is applied.
pub fn load_graph(
    triples_path: impl AsRef<Path>,
    types_path: impl AsRef<Path>,
) -> Result<(KnowledgeGraph, LoadReport)> {
    let triples_path = triples_path.as_ref();
    let types_path = types_path.as_ref();
    let triples_text = fs::read_to_string(triples_path)?;
    let types_text = fs::read_to_string(types_path)?;

    let rows = parse_types(&types_text, types_path)?;
    let triples = parse_triples(&triples_text, triples_path)?;

    let mut builder = KnowledgeGraph::builder();
    for row in &rows {
        let id = builder.add_entity(&row.entity, &row.ty)?;
        if let Some(label) = &row.label {
            builder.set_label(id, label);
        }
    }
    let entities_typed = builder.num_entities();

    let mut missing = BTreeSet::new();
    for (h, _, t) in &triples {
        for e in [h, t] {
            if builder.entities.get(e).is_none() {
                missing.insert(e.clone());
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingTypes {
            count: missing.len(),
            entities: missing.into_iter().collect(),
        });
    }
    for (h, r, t) in &triples {
        builder.add_triple(h, r, t)?;
    }
    let graph = builder.build();
    let report = LoadReport {
        lines_read: triples.len(),
        triples_loaded: graph.num_triples(),
        duplicates_dropped: triples.len() - graph.num_triples(),
        entities_typed,
    };
    Ok((graph, report))
}

/// Writes the graph's triples in the loader's format.
pub fn write_triples(graph: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for t in graph.triples() {
        writeln!(
            out,
            "{}\t{}\t{}",
            graph.entity_name(t.head),
            graph.relation_name(t.relation),
            graph.entity_name(t.tail)
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_types(graph: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for e in graph.entity_ids() {
        writeln!(
            out,
            "{}\t{}",
            graph.entity_name(e),
            graph.type_name(graph.entity_type(e))
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn write(dir: &TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn loads_single_triple() {
        let dir = TempDir::new().unwrap();
        let t = write(&dir, "t.tsv", "Ibuprofen\ttreats\tHeadache\n");
        let ty = write(&dir, "ty.tsv", "Ibuprofen\tCompound\nHeadache\tDisease\n");
        let (g, report) = load_graph(&t, &ty).unwrap();
        assert_eq!(g.num_entities(), 2);
        assert_eq!(g.num_relations(), 2); // NO_OP + treats
        assert_eq!(g.num_triples(), 1);
        assert_eq!(report.duplicates_dropped, 0);
    }

    #[test]
    fn duplicate_lines_collapse() {
        let dir = TempDir::new().unwrap();
        let t = write(&dir, "t.tsv", "A\tr\tB\nA\tr\tB\n");
        let ty = write(&dir, "ty.tsv", "A\tX\nB\tX\n");
        let (g, report) = load_graph(&t, &ty).unwrap();
        assert_eq!(g.num_triples(), 1);
        assert_eq!(report.duplicates_dropped, 1);
    }

    #[test]
    fn empty_triples_file_is_fine() {
        let dir = TempDir::new().unwrap();
        let t = write(&dir, "t.tsv", "");
        let ty = write(&dir, "ty.tsv", "A\tX\n");
        let (g, _) = load_graph(&t, &ty).unwrap();
        assert_eq!(g.num_triples(), 0);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = TempDir::new().unwrap();
        let t = write(&dir, "t.tsv", "# comment\nA\tr\tB\nA\tr\n");
        let ty = write(&dir, "ty.tsv", "A\tX\nB\tX\n");
        match load_graph(&t, &ty) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_types_are_listed() {
        let dir = TempDir::new().unwrap();
        let t = write(&dir, "t.tsv", "A\tr\tB\nC\tr\tA\n");
        let ty = write(&dir, "ty.tsv", "A\tX\n");
        match load_graph(&t, &ty) {
            Err(Error::MissingTypes { count, entities }) => {
                assert_eq!(count, 2);
                assert_eq!(entities, vec!["B".to_string(), "C".to_string()]);
            }
            other => panic!("expected missing types, got {other:?}"),
        }
    }

    #[test]
    fn hetionet_headers_and_labels() {
        let dir = TempDir::new().unwrap();
        let t = write(
            &dir,
            "edges.sif",
            "source\tmetaedge\ttarget\nCompound::DB1\tCtD\tDisease::DOID:1\n",
        );
        let ty = write(
            &dir,
            "nodes.tsv",
            "id\tname\tkind\nCompound::DB1\tAspirin\tCompound\nDisease::DOID:1\tpain\tDisease\n",
        );
        let (g, _) = load_graph(&t, &ty).unwrap();
        assert_eq!(g.num_triples(), 1);
        let c = g.entity("Compound::DB1").unwrap();
        assert_eq!(g.entity_label(c), "Aspirin");
    }

    #[test]
    fn write_then_load_is_identity() {
        let dir = TempDir::new().unwrap();
        let t = write(&dir, "t.tsv", "B\tr\tA\nA\ts\tB\n");
        let ty = write(&dir, "ty.tsv", "A\tX\nB\tY\n");
        let (g, _) = load_graph(&t, &ty).unwrap();
        let t2 = dir.path().join("t2.tsv");
        let ty2 = dir.path().join("ty2.tsv");
        write_triples(&g, &t2).unwrap();
        write_types(&g, &ty2).unwrap();
        let (g2, _) = load_graph(&t2, &ty2).unwrap();
        assert_eq!(g, g2);
    }
}
