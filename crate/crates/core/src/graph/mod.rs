//! Typed multi-relational triple store.
//!
//! A [`KnowledgeGraph`] is immutable once built. Entities carry exactly one
//! type, relations are registered up front (relation id 0 is always the
//! reserved `NO_OP` self-loop), and outgoing edges are kept in a CSR index
//! sorted by `(relation, tail)` so every traversal is deterministic.

mod io;
mod split;
mod stats;

use std::collections::HashMap;
use std::fmt;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_graph, parse_triples, parse_types, write_triples, write_types, LoadReport};
pub use split::{split_folds, DatasetSplit, SplitOptions};
pub use stats::{graph_stats, GraphStats};

/// Name of the reserved stay-in-place relation.
pub const NO_OP_NAME: &str = "__no_op__";
/// Suffix appended to a relation name to form its inverse.
pub const INVERSE_SUFFIX: &str = "__inv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeId(pub u32);

impl EntityId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    /// The reserved self-loop relation.
    pub const NO_OP: RelationId = RelationId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn is_no_op(self) -> bool {
        self == Self::NO_OP
    }
}

impl TypeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// One outgoing move of a walker: follow `relation` to `entity`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Action {
    pub relation: RelationId,
    pub entity: EntityId,
}

impl Action {
    pub fn new(relation: RelationId, entity: EntityId) -> Self {
        Self { relation, entity }
    }

    pub fn no_op(at: EntityId) -> Self {
        Self::new(RelationId::NO_OP, at)
    }

    pub fn is_no_op(&self) -> bool {
        self.relation.is_no_op()
    }
}

/// Interning table from names to dense ids.
#[derive(Debug, Clone, Default, PartialEq)]
struct Names {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Names {
    fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    fn intern(&mut self, name: &str) -> u32 {
        if let Some(id) = self.index.get(name) {
            return *id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    fn len(&self) -> usize {
        self.names.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    entities: Names,
    /// Human-readable names; equal to the identifier unless the types file supplies one.
    labels: Vec<String>,
    entity_types: Vec<TypeId>,
    types: Names,
    relations: Names,
    /// `inverse[r]` is the inverse of `r` once the graph is augmented.
    inverse: Vec<Option<RelationId>>,
    /// Sorted, duplicate-free.
    triples: Vec<Triple>,
    /// CSR offsets into `edges`, one slot per entity plus one.
    offsets: Vec<usize>,
    edges: Vec<Action>,
    augmented: bool,
}

impl KnowledgeGraph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::default()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    /// Number of registered relations, including `NO_OP`.
    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triples.binary_search(triple).is_ok()
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entities.len() as u32).map(EntityId)
    }

    /// Relations that appear in the data, i.e. everything except `NO_OP`.
    pub fn data_relation_ids(&self) -> impl Iterator<Item = RelationId> + '_ {
        (1..self.relations.len() as u32).map(RelationId)
    }

    pub fn entity(&self, name: &str) -> Option<EntityId> {
        self.entities.get(name).map(EntityId)
    }

    pub fn relation(&self, name: &str) -> Option<RelationId> {
        self.relations.get(name).map(RelationId)
    }

    pub fn type_id(&self, name: &str) -> Option<TypeId> {
        self.types.get(name).map(TypeId)
    }

    pub fn require_entity(&self, name: &str) -> Result<EntityId> {
        self.entity(name)
            .ok_or_else(|| Error::UnknownEntity(name.to_owned()))
    }

    pub fn require_relation(&self, name: &str) -> Result<RelationId> {
        self.relation(name)
            .ok_or_else(|| Error::UnknownRelation(name.to_owned()))
    }

    pub fn require_type(&self, name: &str) -> Result<TypeId> {
        self.type_id(name)
            .ok_or_else(|| Error::UnknownType(name.to_owned()))
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entities.names[id.index()]
    }

    pub fn entity_label(&self, id: EntityId) -> &str {
        &self.labels[id.index()]
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        &self.relations.names[id.index()]
    }

    pub fn type_name(&self, id: TypeId) -> &str {
        &self.types.names[id.index()]
    }

    pub fn entity_type(&self, id: EntityId) -> TypeId {
        self.entity_types[id.index()]
    }

    pub fn has_entity(&self, id: EntityId) -> bool {
        id.index() < self.entities.len()
    }

    /// Entities of the given type, in id order.
    pub fn entities_of_type(&self, ty: TypeId) -> impl Iterator<Item = EntityId> + '_ {
        self.entity_ids().filter(move |e| self.entity_type(*e) == ty)
    }

    pub fn count_of_type(&self, ty: TypeId) -> usize {
        self.entity_types.iter().filter(|t| **t == ty).count()
    }

    /// Inverse relation of `r`, available after [`augment_inverses`](Self::augment_inverses).
    pub fn inverse_of(&self, r: RelationId) -> Option<RelationId> {
        self.inverse.get(r.index()).copied().flatten()
    }

    /// Whether `r` is a generated inverse relation.
    pub fn is_inverse(&self, r: RelationId) -> bool {
        self.augmented && self.relation_name(r).ends_with(INVERSE_SUFFIX)
    }

    /// Outgoing edges of `e`, sorted by `(relation, tail)`, without `NO_OP`.
    pub fn neighbors(&self, e: EntityId) -> &[Action] {
        &self.edges[self.offsets[e.index()]..self.offsets[e.index() + 1]]
    }

    pub fn out_degree(&self, e: EntityId) -> usize {
        self.offsets[e.index() + 1] - self.offsets[e.index()]
    }

    /// Whether the move `action` from `from` is legal in this graph.
    pub fn has_edge(&self, from: EntityId, action: Action) -> bool {
        action.is_no_op() && action.entity == from
            || self.neighbors(from).binary_search(&action).is_ok()
    }

    /// Legal actions from `e`: `NO_OP` first, then outgoing edges.
    ///
    /// When the out-degree exceeds `max_out - 1` the edges are subsampled
    /// uniformly with an rng derived from `seed` and `e`, keeping their
    /// sorted order, so repeated calls return the same list.
    pub fn out_actions(&self, e: EntityId, max_out: usize, seed: u64) -> Result<Vec<Action>> {
        if !self.has_entity(e) {
            return Err(Error::UnknownEntity(format!("#{}", e.0)));
        }
        if max_out == 0 {
            return Err(Error::InvalidInput("max_out must be at least 1".into()));
        }
        let edges = self.neighbors(e);
        let budget = max_out - 1;
        let mut actions = Vec::with_capacity(edges.len().min(budget) + 1);
        actions.push(Action::no_op(e));
        if edges.len() <= budget {
            actions.extend_from_slice(edges);
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(subsample_seed(seed, e));
            let mut picked = index::sample(&mut rng, edges.len(), budget).into_vec();
            picked.sort_unstable();
            actions.extend(picked.into_iter().map(|i| edges[i]));
        }
        Ok(actions)
    }

    /// Adds `(t, r__inv, h)` for every `(h, r, t)` and registers one inverse
    /// relation per data relation.
    pub fn augment_inverses(&self) -> Result<KnowledgeGraph> {
        if self.augmented {
            return Err(Error::AlreadyAugmented);
        }
        let mut relations = self.relations.clone();
        let raw: Vec<RelationId> = self.data_relation_ids().collect();
        for r in &raw {
            let name = self.relation_name(*r);
            if name.ends_with(INVERSE_SUFFIX) {
                return Err(Error::InverseCollision(name.to_owned()));
            }
        }
        let mut inverse = vec![None; raw.len() * 2 + 1];
        for r in &raw {
            let inv_name = format!("{}{}", self.relation_name(*r), INVERSE_SUFFIX);
            if relations.get(&inv_name).is_some() {
                return Err(Error::InverseCollision(inv_name));
            }
            let inv = RelationId(relations.intern(&inv_name));
            inverse[r.index()] = Some(inv);
            inverse[inv.index()] = Some(*r);
        }
        let mut triples = Vec::with_capacity(self.triples.len() * 2);
        for t in &self.triples {
            triples.push(*t);
            let inv = inverse[t.relation.index()].expect("every data relation has an inverse");
            triples.push(Triple::new(t.tail, inv, t.head));
        }
        Ok(Self::assemble(
            self.entities.clone(),
            self.labels.clone(),
            self.entity_types.clone(),
            self.types.clone(),
            relations,
            inverse,
            triples,
            true,
        ))
    }

    /// A graph over the same entity, type and relation registry holding
    /// only `triples`. Relation ids stay stable, which lets models trained
    /// on one fold share parameter shapes with every other fold.
    pub fn with_triples(&self, triples: impl IntoIterator<Item = Triple>) -> KnowledgeGraph {
        let triples: Vec<Triple> = triples.into_iter().collect();
        let mut inverse = self.inverse.clone();
        inverse.resize(self.relations.len(), None);
        Self::assemble(
            self.entities.clone(),
            self.labels.clone(),
            self.entity_types.clone(),
            self.types.clone(),
            self.relations.clone(),
            inverse,
            triples,
            self.augmented,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        entities: Names,
        labels: Vec<String>,
        entity_types: Vec<TypeId>,
        types: Names,
        relations: Names,
        mut inverse: Vec<Option<RelationId>>,
        mut triples: Vec<Triple>,
        augmented: bool,
    ) -> Self {
        triples.sort_unstable();
        triples.dedup();
        inverse.resize(relations.len(), None);

        let n = entities.len();
        let mut offsets = vec![0usize; n + 1];
        for t in &triples {
            offsets[t.head.index() + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        // Triples are sorted by (head, relation, tail), so a linear pass
        // already yields each adjacency list in (relation, tail) order.
        let edges = triples
            .iter()
            .map(|t| Action::new(t.relation, t.tail))
            .collect();

        Self {
            entities,
            labels,
            entity_types,
            types,
            relations,
            inverse,
            triples,
            offsets,
            edges,
            augmented,
        }
    }
}

fn subsample_seed(seed: u64, e: EntityId) -> u64 {
    seed ^ (e.0 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl fmt::Display for KnowledgeGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "KnowledgeGraph({} entities, {} types, {} relations, {} triples{})",
            self.num_entities(),
            self.num_types(),
            self.num_relations() - 1,
            self.num_triples(),
            if self.augmented { ", augmented" } else { "" }
        )
    }
}

/// Incremental, name-based graph construction.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    entities: Names,
    labels: Vec<String>,
    entity_types: Vec<TypeId>,
    types: Names,
    relation_names: Vec<String>,
    relation_index: HashMap<String, usize>,
    triples: Vec<(u32, usize, u32)>,
}

impl GraphBuilder {
    /// Registers `name` with type `ty`. Re-registering with the same type is a no-op.
    pub fn add_entity(&mut self, name: &str, ty: &str) -> Result<EntityId> {
        let ty = TypeId(self.types.intern(ty));
        if let Some(id) = self.entities.get(name) {
            if self.entity_types[id as usize] != ty {
                return Err(Error::ConflictingType(name.to_owned()));
            }
            return Ok(EntityId(id));
        }
        let id = self.entities.intern(name);
        self.entity_types.push(ty);
        self.labels.push(name.to_owned());
        Ok(EntityId(id))
    }

    /// Sets the display label of a registered entity.
    pub fn set_label(&mut self, id: EntityId, label: &str) {
        self.labels[id.index()] = label.to_owned();
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn add_relation(&mut self, name: &str) -> Result<()> {
        if name == NO_OP_NAME {
            return Err(Error::ReservedRelation(name.to_owned()));
        }
        if !self.relation_index.contains_key(name) {
            self.relation_index
                .insert(name.to_owned(), self.relation_names.len());
            self.relation_names.push(name.to_owned());
        }
        Ok(())
    }

    /// Adds a triple between already-registered entities.
    pub fn add_triple(&mut self, head: &str, relation: &str, tail: &str) -> Result<()> {
        let h = self
            .entities
            .get(head)
            .ok_or_else(|| Error::UnknownEntity(head.to_owned()))?;
        let t = self
            .entities
            .get(tail)
            .ok_or_else(|| Error::UnknownEntity(tail.to_owned()))?;
        self.add_relation(relation)?;
        let r = self.relation_index[relation];
        self.triples.push((h, r, t));
        Ok(())
    }

    /// Relations get ids in name order (after `NO_OP` at id 0), so the id
    /// assignment does not depend on input line order.
    pub fn build(self) -> KnowledgeGraph {
        let mut order: Vec<usize> = (0..self.relation_names.len()).collect();
        order.sort_by(|a, b| self.relation_names[*a].cmp(&self.relation_names[*b]));
        let mut relations = Names::default();
        relations.intern(NO_OP_NAME);
        let mut remap = vec![RelationId(0); self.relation_names.len()];
        for i in order {
            remap[i] = RelationId(relations.intern(&self.relation_names[i]));
        }
        let triples = self
            .triples
            .into_iter()
            .map(|(h, r, t)| Triple::new(EntityId(h), remap[r], EntityId(t)))
            .collect();
        KnowledgeGraph::assemble(
            self.entities,
            self.labels,
            self.entity_types,
            self.types,
            relations,
            Vec::new(),
            triples,
            false,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(triples: &[(&str, &str, &str)]) -> KnowledgeGraph {
        let mut b = KnowledgeGraph::builder();
        for (h, r, t) in triples {
            b.add_entity(h, "Node").unwrap();
            b.add_entity(t, "Node").unwrap();
            b.add_relation(r).unwrap();
        }
        for (h, r, t) in triples {
            b.add_triple(h, r, t).unwrap();
        }
        b.build()
    }

    #[test]
    fn single_inverse_is_added() {
        let g = graph(&[("A", "r", "B")]).augment_inverses().unwrap();
        let a = g.entity("A").unwrap();
        let b = g.entity("B").unwrap();
        let r = g.relation("r").unwrap();
        let inv = g.relation("r__inv").unwrap();
        assert_eq!(g.num_triples(), 2);
        assert!(g.contains(&Triple::new(a, r, b)));
        assert!(g.contains(&Triple::new(b, inv, a)));
        assert_eq!(g.inverse_of(inv), Some(r));
    }

    #[test]
    fn doubling_and_symmetric_pairs() {
        let g = graph(&[("A", "r", "B"), ("B", "s", "C"), ("C", "r", "A")]);
        assert_eq!(g.augment_inverses().unwrap().num_triples(), 6);
        let g = graph(&[("A", "r", "B"), ("B", "r", "A")]);
        let aug = g.augment_inverses().unwrap();
        assert_eq!(aug.num_triples(), 4);
        assert_eq!(aug.num_relations(), 1 + 2);
    }

    #[test]
    fn inverse_name_collision_is_rejected() {
        let g = graph(&[("A", "r__inv", "B")]);
        assert!(matches!(
            g.augment_inverses(),
            Err(Error::InverseCollision(_))
        ));
        let g = graph(&[("A", "r", "B")]).augment_inverses().unwrap();
        assert!(matches!(g.augment_inverses(), Err(Error::AlreadyAugmented)));
    }

    #[test]
    fn no_op_name_is_reserved() {
        let mut b = KnowledgeGraph::builder();
        assert!(b.add_relation(NO_OP_NAME).is_err());
    }

    #[test]
    fn isolated_entity_only_has_no_op() {
        let mut b = KnowledgeGraph::builder();
        b.add_entity("lonely", "Node").unwrap();
        let g = b.build();
        let e = g.entity("lonely").unwrap();
        assert_eq!(g.out_actions(e, 10, 0).unwrap(), vec![Action::no_op(e)]);
    }

    #[test]
    fn out_actions_below_cap_keep_order() {
        let g = graph(&[("E", "r2", "Y"), ("E", "r1", "X")]);
        let e = g.entity("E").unwrap();
        let acts = g.out_actions(e, 10, 0).unwrap();
        let names: Vec<_> = acts
            .iter()
            .map(|a| (g.relation_name(a.relation), g.entity_name(a.entity)))
            .collect();
        assert_eq!(names, vec![("__no_op__", "E"), ("r1", "X"), ("r2", "Y")]);
    }

    #[test]
    fn out_actions_cap_is_seeded() {
        let mut b = KnowledgeGraph::builder();
        b.add_entity("hub", "Node").unwrap();
        for i in 0..500 {
            b.add_entity(&format!("n{i}"), "Node").unwrap();
        }
        for i in 0..500 {
            b.add_triple("hub", "r", &format!("n{i}")).unwrap();
        }
        let g = b.build();
        let hub = g.entity("hub").unwrap();
        let first = g.out_actions(hub, 200, 7).unwrap();
        let second = g.out_actions(hub, 200, 7).unwrap();
        assert_eq!(first.len(), 200);
        assert_eq!(first, second);
        assert!(first[0].is_no_op());
        assert!(first[1..].windows(2).all(|w| w[0] < w[1]));
        assert_ne!(first, g.out_actions(hub, 200, 8).unwrap());
    }

    #[test]
    fn out_actions_unknown_entity() {
        let g = graph(&[("A", "r", "B")]);
        assert!(g.out_actions(EntityId(99), 5, 0).is_err());
    }

    #[test]
    fn conflicting_types_are_rejected() {
        let mut b = KnowledgeGraph::builder();
        b.add_entity("x", "A").unwrap();
        assert!(b.add_entity("x", "A").is_ok());
        assert!(matches!(
            b.add_entity("x", "B"),
            Err(Error::ConflictingType(_))
        ));
    }
}
