use std::time::Instant;

use kgpath::eval::{compute_metrics, filtered_rank, FilterSet};
use kgpath::graph::{EntityId, KnowledgeGraph, RelationId};
use kgpath::kge::{train_kge, KgeKind, KgeParams, KgeTrainConfig};
use kgpath::synth::generate_random;

fn memorize(graph: &KnowledgeGraph, kind: KgeKind) -> f64 {
    let cfg = KgeTrainConfig { dim: 32, max_steps: 2_000, batch_size: 10, seed: 1, ..Default::default() };
    let (params, log) = train_kge(graph, &cfg, kind).unwrap();
    assert!(params.is_finite());
    assert!(log.last().unwrap().loss < log[0].loss);
    let filter = FilterSet::new(graph.triples());
    let ranks: Vec<usize> = graph
        .triples()
        .iter()
        .map(|t| filtered_rank(&params.rank_tails(t.head, t.relation), t.tail, &filter, graph).unwrap())
        .collect();
    compute_metrics(&ranks).unwrap().mrr
}

#[test]
fn transe_memorizes_ten_triples() {
    let start = Instant::now();
    for seed in 0..3 {
        let g = generate_random(12, 2, 10, 1, seed).unwrap();
        assert_eq!(g.num_triples(), 10);
        let mrr = memorize(&g, KgeKind::TransE);
        assert!(mrr >= 0.95, "seed {seed}: mrr {mrr}");
    }
    assert!(start.elapsed().as_secs() < 120);
}

#[test]
fn distmult_fits_a_symmetric_relation() {
    let mut b = KnowledgeGraph::builder();
    for i in 0..8 {
        b.add_entity(&format!("e{i}"), "T").unwrap();
    }
    for (h, t) in [(0, 1), (1, 0), (2, 3), (3, 2), (4, 5), (5, 4)] {
        b.add_triple(&format!("e{h}"), "sym", &format!("e{t}")).unwrap();
    }
    let g = b.build();
    assert!(memorize(&g, KgeKind::DistMult) >= 0.9);
}

#[test]
fn distmult_tail_and_head_rankings_coincide_after_training() {
    let g = generate_random(15, 3, 40, 1, 4).unwrap();
    let cfg = KgeTrainConfig { dim: 16, max_steps: 300, seed: 2, ..Default::default() };
    let (p, _) = train_kge(&g, &cfg, KgeKind::DistMult).unwrap();
    for h in 0..15 {
        for r in 0..g.num_relations() as u32 {
            let (h, r) = (EntityId(h), RelationId(r));
            let tails: Vec<_> = p.rank_tails(h, r).entries.iter().map(|e| (e.entity, e.score)).collect();
            assert_eq!(tails, p.rank_heads(r, h));
        }
    }
}

#[test]
fn rank_tails_matches_a_naive_scan() {
    let p = KgeParams::init(KgeKind::TransE, 20, 3, 8, 9);
    let (h, r) = (EntityId(4), RelationId(2));
    let list = p.rank_tails(h, r);
    let mut naive: Vec<(EntityId, f64)> = (0..20).map(|t| (EntityId(t), p.score(h, r, EntityId(t)))).collect();
    naive.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let got: Vec<(EntityId, f64)> = list.entries.iter().map(|e| (e.entity, e.score)).collect();
    assert_eq!(got, naive);
}

#[test]
fn transe_keeps_entities_on_the_unit_sphere() {
    let g = generate_random(10, 2, 25, 1, 8).unwrap();
    let cfg = KgeTrainConfig { dim: 8, max_steps: 200, seed: 3, ..Default::default() };
    let (p, _) = train_kge(&g, &cfg, KgeKind::TransE).unwrap();
    for row in 0..10 {
        let n: f64 = p.entity.row(row).iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-9);
    }
}

#[test]
fn kge_training_is_seeded() {
    let g = generate_random(10, 2, 25, 1, 8).unwrap();
    let cfg = KgeTrainConfig { dim: 8, max_steps: 100, seed: 3, ..Default::default() };
    let a = train_kge(&g, &cfg, KgeKind::DistMult).unwrap();
    let b = train_kge(&g, &cfg, KgeKind::DistMult).unwrap();
    assert_eq!(a, b);
}
