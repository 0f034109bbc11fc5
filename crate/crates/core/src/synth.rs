//! Seeded synthetic graphs.
//!
//! The planted graph hides one rule, `Compound →binds Gene →associates
//! Disease ⇒ treats`, among a fixed menu of distractor relations.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{write_triples, write_types, EntityId, KnowledgeGraph, Triple};
use crate::metapath::Metapath;

pub const TREATS: &str = "treats";
pub const RULE_LINE: &str = "Compound\tbinds\tGene\tassociates\tDisease";
/// Distractor relations with their head and tail types.
pub const DISTRACTORS: [(&str, &str, &str); 5] = [
    ("resembles", "Compound", "Compound"),
    ("interacts", "Gene", "Gene"),
    ("palliates", "Compound", "Disease"),
    ("participates", "Gene", "Pathway"),
    ("localizes", "Disease", "Anatomy"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedSpec {
    pub n_compounds: usize,
    pub n_genes: usize,
    pub n_diseases: usize,
    pub n_pathways: usize,
    pub n_anatomies: usize,
    pub bind_probability: f64,
    pub associate_probability: f64,
    /// Edge probability of each distractor relation.
    pub distractor_probability: f64,
    /// Per-relation replacements for `distractor_probability`.
    pub distractor_overrides: BTreeMap<String, f64>,
    /// Fraction of treats edges replaced by spurious ones.
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            n_compounds: 100,
            n_genes: 50,
            n_diseases: 40,
            n_pathways: 30,
            n_anatomies: 30,
            bind_probability: 0.04,
            associate_probability: 0.04,
            distractor_probability: 0.2,
            distractor_overrides: BTreeMap::from([("participates".into(), 0.02), ("localizes".into(), 0.05)]),
            noise: 0.1,
            seed: 0,
        }
    }
}

impl PlantedSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_compounds < 2 || self.n_genes < 1 || self.n_diseases < 2 {
            return Err(Error::InvalidConfig(
                "planted graph needs at least 2 compounds, 1 gene and 2 diseases".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::InvalidConfig("noise must lie in [0, 1)".into()));
        }
        for (rel, _) in &self.distractor_overrides {
            if !DISTRACTORS.iter().any(|d| d.0 == rel) {
                return Err(Error::InvalidConfig(format!("unknown distractor relation `{rel}`")));
            }
        }
        let fixed = [self.bind_probability, self.associate_probability, self.distractor_probability];
        for p in fixed.into_iter().chain(self.distractor_overrides.values().copied()) {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PlantedGraph {
    pub graph: KnowledgeGraph,
    /// Treats triples present in the graph, after noise.
    pub treats: Vec<Triple>,
    /// Treats triples implied by the rule.
    pub rule_treats: Vec<Triple>,
    pub rule: Metapath,
}

impl PlantedGraph {
    /// Writes `triples.tsv`, `types.tsv` and `metapaths.tsv` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        write_triples(&self.graph, dir.join("triples.tsv"))?;
        write_types(&self.graph, dir.join("types.tsv"))?;
        std::fs::write(dir.join("metapaths.tsv"), format!("{RULE_LINE}\n"))?;
        Ok(())
    }
}

pub fn generate_planted(spec: &PlantedSpec) -> Result<PlantedGraph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let names = |prefix: &str, n: usize| (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>();
    let compounds = names("C", spec.n_compounds);
    let genes = names("G", spec.n_genes);
    let diseases = names("D", spec.n_diseases);
    let pathways = names("P", spec.n_pathways);
    let anatomies = names("A", spec.n_anatomies);
    let by_type = |ty: &str| -> &[String] {
        match ty {
            "Compound" => &compounds,
            "Gene" => &genes,
            "Disease" => &diseases,
            "Pathway" => &pathways,
            _ => &anatomies,
        }
    };

    let mut edges: Vec<(String, &str, String)> = Vec::new();
    let mut sample = |heads: &[String], rel: &'static str, tails: &[String], p: f64, rng: &mut ChaCha8Rng| {
        let mut out = Vec::new();
        for (i, h) in heads.iter().enumerate() {
            for (j, t) in tails.iter().enumerate() {
                if std::ptr::eq(heads, tails) && i == j {
                    continue;
                }
                if rng.gen_bool(p) {
                    out.push((i, j));
                    edges.push((h.clone(), rel, t.clone()));
                }
            }
        }
        out
    };
    let binds = sample(&compounds, "binds", &genes, spec.bind_probability, &mut rng);
    let assoc = sample(&genes, "associates", &diseases, spec.associate_probability, &mut rng);
    for (rel, h, t) in DISTRACTORS {
        let p = spec.distractor_overrides.get(rel).copied().unwrap_or(spec.distractor_probability);
        sample(by_type(h), rel, by_type(t), p, &mut rng);
    }

    let mut gene_diseases = vec![Vec::new(); spec.n_genes];
    for (g, d) in &assoc {
        gene_diseases[*g].push(*d);
    }
    let mut closure: Vec<(usize, usize)> = binds
        .iter()
        .flat_map(|(c, g)| gene_diseases[*g].iter().map(move |d| (*c, *d)))
        .collect();
    closure.sort_unstable();
    closure.dedup();
    if closure.is_empty() {
        return Err(Error::InvalidConfig("planted spec yields no treats triples".into()));
    }

    let mut treats = closure.clone();
    let k = (spec.noise * closure.len() as f64).round() as usize;
    if k > 0 {
        treats.shuffle(&mut rng);
        treats.truncate(closure.len() - k);
        let taken: HashSet<(usize, usize)> = closure.iter().copied().collect();
        let free: Vec<(usize, usize)> = (0..spec.n_compounds)
            .flat_map(|c| (0..spec.n_diseases).map(move |d| (c, d)))
            .filter(|p| !taken.contains(p))
            .collect();
        treats.extend(free.choose_multiple(&mut rng, k.min(free.len())).copied());
        treats.sort_unstable();
    }

    let mut b = KnowledgeGraph::builder();
    for ty in ["Compound", "Gene", "Disease", "Pathway", "Anatomy"] {
        for name in by_type(ty) {
            b.add_entity(name, ty)?;
        }
    }
    for (h, r, t) in &edges {
        b.add_triple(h, r, t)?;
    }
    for (c, d) in &treats {
        b.add_triple(&compounds[*c], TREATS, &diseases[*d])?;
    }
    let graph = b.build();
    let triple = |(c, d): &(usize, usize)| -> Result<Triple> {
        Ok(Triple::new(
            graph.require_entity(&compounds[*c])?,
            graph.require_relation(TREATS)?,
            graph.require_entity(&diseases[*d])?,
        ))
    };
    let treats = treats.iter().map(triple).collect::<Result<Vec<_>>>()?;
    let rule_treats = closure.iter().map(triple).collect::<Result<Vec<_>>>()?;
    let rule = Metapath::parse(RULE_LINE, &graph)?;
    Ok(PlantedGraph {
        graph,
        treats,
        rule_treats,
        rule,
    })
}

/// Uniformly random distinct triples over `e0..`, `r0..`, types `T0..`.
pub fn generate_random(
    n_entities: usize,
    n_relations: usize,
    n_triples: usize,
    n_types: usize,
    seed: u64,
) -> Result<KnowledgeGraph> {
    let capacity = n_entities
        .checked_mul(n_entities)
        .and_then(|x| x.checked_mul(n_relations))
        .ok_or_else(|| Error::InvalidConfig("graph size overflows".into()))?;
    if n_triples > capacity {
        return Err(Error::InvalidConfig(format!(
            "{n_triples} triples requested but only {capacity} are possible"
        )));
    }
    if n_entities > 0 && n_types == 0 {
        return Err(Error::InvalidConfig("entities need at least one type".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = KnowledgeGraph::builder();
    for i in 0..n_entities {
        b.add_entity(&format!("e{i}"), &format!("T{}", rng.gen_range(0..n_types)))?;
    }
    for r in 0..n_relations {
        b.add_relation(&format!("r{r}"))?;
    }
    let encode = |h: usize, r: usize, t: usize| (h * n_relations + r) * n_entities + t;
    let chosen: Vec<usize> = if n_triples * 2 > capacity {
        rand::seq::index::sample(&mut rng, capacity, n_triples).into_vec()
    } else {
        let mut seen = HashSet::with_capacity(n_triples);
        let mut out = Vec::with_capacity(n_triples);
        while out.len() < n_triples {
            let code = encode(
                rng.gen_range(0..n_entities),
                rng.gen_range(0..n_relations),
                rng.gen_range(0..n_entities),
            );
            if seen.insert(code) {
                out.push(code);
            }
        }
        out
    };
    for code in chosen {
        let t = code % n_entities;
        let r = (code / n_entities) % n_relations;
        let h = code / (n_entities * n_relations);
        b.add_triple(&format!("e{h}"), &format!("r{r}"), &format!("e{t}"))?;
    }
    Ok(b.build())
}

/// Entity ids of `graph` named `prefix0..`, in index order.
pub fn named(graph: &KnowledgeGraph, prefix: &str, n: usize) -> Vec<EntityId> {
    (0..n)
        .filter_map(|i| graph.entity(&format!("{prefix}{i}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_closure() {
        let spec = PlantedSpec {
            n_compounds: 2,
            n_genes: 1,
            n_diseases: 2,
            n_pathways: 1,
            n_anatomies: 1,
            bind_probability: 1.0,
            associate_probability: 1.0,
            distractor_probability: 0.0,
            distractor_overrides: BTreeMap::new(),
            noise: 0.0,
            seed: 3,
        };
        let p = generate_planted(&spec).unwrap();
        assert_eq!(p.treats.len(), 4);
        assert_eq!(p.rule_treats, p.treats);
    }

    #[test]
    fn no_positives_is_an_error() {
        let spec = PlantedSpec { bind_probability: 0.0, ..Default::default() };
        assert!(generate_planted(&spec).is_err());
    }

    #[test]
    fn noise_swaps_the_same_count() {
        let p = generate_planted(&PlantedSpec::default()).unwrap();
        assert_eq!(p.treats.len(), p.rule_treats.len());
        let rule: HashSet<_> = p.rule_treats.iter().collect();
        let spurious = p.treats.iter().filter(|t| !rule.contains(t)).count();
        let expected = (0.1 * p.rule_treats.len() as f64).round() as usize;
        assert_eq!(spurious, expected);
    }

    #[test]
    fn deterministic() {
        let spec = PlantedSpec { seed: 11, ..Default::default() };
        let a = generate_planted(&spec).unwrap();
        let b = generate_planted(&spec).unwrap();
        assert_eq!(a.graph.triples(), b.graph.triples());
        assert_eq!(a.treats, b.treats);
    }

    #[test]
    fn random_graph_counts() {
        let g = generate_random(10, 3, 0, 2, 1).unwrap();
        assert_eq!(g.num_triples(), 0);
        let g = generate_random(10, 3, 57, 2, 1).unwrap();
        assert_eq!(g.num_triples(), 57);
        let dense = generate_random(4, 2, 30, 1, 1).unwrap();
        assert_eq!(dense.num_triples(), 30);
        assert!(generate_random(3, 1, 10, 1, 0).is_err());
    }
}
