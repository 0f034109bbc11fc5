//! Type-level path patterns.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, RelationId, TypeId, INVERSE_SUFFIX};
use crate::walk::Rollout;

/// Alternating `type, relation, type, ..., type` pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Metapath {
    pub name: String,
    types: Vec<TypeId>,
    relations: Vec<RelationId>,
}

impl Metapath {
    /// A rule pattern: at least one relation, no `NO_OP`.
    pub fn new(name: impl Into<String>, types: Vec<TypeId>, relations: Vec<RelationId>) -> Result<Self> {
        if relations.is_empty() {
            return Err(Error::InvalidMetapath("needs at least one relation".into()));
        }
        if types.len() != relations.len() + 1 {
            return Err(Error::InvalidMetapath(format!(
                "{} types do not alternate with {} relations",
                types.len(),
                relations.len()
            )));
        }
        if relations.iter().any(|r| r.is_no_op()) {
            return Err(Error::InvalidMetapath("NO_OP is not a pattern relation".into()));
        }
        Ok(Self {
            name: name.into(),
            types,
            relations,
        })
    }

    /// Pattern as produced by abstracting a walk; may be a bare head type.
    pub(crate) fn abstracted(types: Vec<TypeId>, relations: Vec<RelationId>) -> Self {
        debug_assert_eq!(types.len(), relations.len() + 1);
        Self {
            name: String::new(),
            types,
            relations,
        }
    }

    pub fn types(&self) -> &[TypeId] {
        &self.types
    }

    pub fn relations(&self) -> &[RelationId] {
        &self.relations
    }

    pub fn hops(&self) -> usize {
        self.relations.len()
    }

    /// Whether the walk, with its `NO_OP` steps deleted, has exactly this
    /// type/relation sequence.
    pub fn matches(&self, path: &Rollout, graph: &KnowledgeGraph) -> bool {
        if graph.entity_type(path.head) != self.types[0] {
            return false;
        }
        let mut hop = 0;
        for step in path.steps.iter().filter(|s| !s.is_no_op()) {
            if hop >= self.relations.len()
                || step.relation != self.relations[hop]
                || graph.entity_type(step.entity) != self.types[hop + 1]
            {
                return false;
            }
            hop += 1;
        }
        hop == self.relations.len()
    }

    /// `Compound →binds Gene →associates⁻¹ Disease`
    pub fn render(&self, graph: &KnowledgeGraph) -> String {
        let mut out = graph.type_name(self.types[0]).to_owned();
        for (r, t) in self.relations.iter().zip(&self.types[1..]) {
            let name = graph.relation_name(*r);
            let shown = match name.strip_suffix(INVERSE_SUFFIX) {
                Some(base) => format!("{base}⁻¹"),
                None => name.to_owned(),
            };
            let _ = write!(out, " →{shown} {}", graph.type_name(*t));
        }
        out
    }

    /// Tab-separated file form.
    pub fn to_tokens(&self, graph: &KnowledgeGraph) -> String {
        let mut out = graph.type_name(self.types[0]).to_owned();
        for (r, t) in self.relations.iter().zip(&self.types[1..]) {
            let _ = write!(out, "\t{}\t{}", graph.relation_name(*r), graph.type_name(*t));
        }
        out
    }

    /// Parses one `Type<TAB>relation<TAB>Type...` line.
    pub fn parse(line: &str, graph: &KnowledgeGraph) -> Result<Self> {
        let tokens: Vec<&str> = line.split('\t').map(str::trim).collect();
        if tokens.len() < 3 || tokens.len() % 2 == 0 {
            return Err(Error::InvalidMetapath(format!(
                "`{line}` is not an odd-length type/relation alternation"
            )));
        }
        let mut types = Vec::new();
        let mut relations = Vec::new();
        for (i, tok) in tokens.iter().enumerate() {
            if i % 2 == 0 {
                types.push(graph.require_type(tok)?);
            } else {
                relations.push(graph.require_relation(tok)?);
            }
        }
        Metapath::new(tokens.join(" "), types, relations)
    }
}

/// Parses a metapath file: one pattern per line, `#` comments allowed.
pub fn parse_metapaths(text: &str, graph: &KnowledgeGraph) -> Result<Vec<Metapath>> {
    text.lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| Metapath::parse(l, graph))
        .collect()
}

pub fn load_metapaths(path: impl AsRef<Path>, graph: &KnowledgeGraph) -> Result<Vec<Metapath>> {
    parse_metapaths(&std::fs::read_to_string(path)?, graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Action;

    fn bio() -> KnowledgeGraph {
        let mut b = KnowledgeGraph::builder();
        b.add_entity("aspirin", "Compound").unwrap();
        b.add_entity("PTGS1", "Gene").unwrap();
        b.add_entity("pain", "Disease").unwrap();
        b.add_triple("aspirin", "binds", "PTGS1").unwrap();
        b.add_triple("PTGS1", "associates", "pain").unwrap();
        b.build().augment_inverses().unwrap()
    }

    fn walk(g: &KnowledgeGraph, steps: &[(&str, &str)]) -> Rollout {
        let head = g.entity("aspirin").unwrap();
        let mut current = head;
        let steps = steps
            .iter()
            .map(|(r, e)| {
                if *r == "-" {
                    Action::no_op(current)
                } else {
                    current = g.entity(e).unwrap();
                    Action::new(g.relation(r).unwrap(), current)
                }
            })
            .collect();
        Rollout::new(head, g.relation("binds").unwrap(), steps, 0.0)
    }

    #[test]
    fn rule_matches() {
        let g = bio();
        let mp = Metapath::parse("Compound\tbinds\tGene\tassociates\tDisease", &g).unwrap();
        assert!(mp.matches(&walk(&g, &[("binds", "PTGS1"), ("associates", "pain")]), &g));
        assert!(mp.matches(
            &walk(&g, &[("binds", "PTGS1"), ("-", ""), ("associates", "pain")]),
            &g
        ));
        assert!(!mp.matches(&walk(&g, &[("-", ""), ("-", "")]), &g));
        assert!(!mp.matches(&walk(&g, &[("binds", "PTGS1")]), &g));
        assert!(!mp.matches(
            &walk(
                &g,
                &[("binds", "PTGS1"), ("binds__inv", "aspirin"), ("binds", "PTGS1")]
            ),
            &g
        ));
        assert_eq!(mp.render(&g), "Compound →binds Gene →associates Disease");
    }

    #[test]
    fn inverse_tokens_render_with_superscript() {
        let g = bio();
        let mp = Metapath::parse("Disease\tassociates__inv\tGene", &g).unwrap();
        assert_eq!(mp.render(&g), "Disease →associates⁻¹ Gene");
        assert_eq!(mp.to_tokens(&g), "Disease\tassociates__inv\tGene");
    }

    #[test]
    fn invalid_patterns() {
        let g = bio();
        assert!(Metapath::parse("Compound", &g).is_err());
        assert!(Metapath::parse("Compound\tbinds", &g).is_err());
        assert!(Metapath::parse("Compound\tnope\tGene", &g).is_err());
        assert!(Metapath::parse("Compound\t__no_op__\tCompound", &g).is_err());
    }

    #[test]
    fn file_with_comments() {
        let g = bio();
        let mps = parse_metapaths(
            "# rules\nCompound\tbinds\tGene\tassociates\tDisease\n\n",
            &g,
        )
        .unwrap();
        assert_eq!(mps.len(), 1);
        assert_eq!(mps[0].hops(), 2);
    }
}
