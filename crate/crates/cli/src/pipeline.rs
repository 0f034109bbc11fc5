//! Dataset loading and the per-fold train / predict / rank steps.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use kgpath::beam::{PredictionEntry, PredictionList};
use kgpath::checkpoint::Checkpoint;
use kgpath::eval::{compute_metrics, prune_by_type, rank_predictions, FoldRanks, RankMetrics};
use kgpath::experiment::{predict, prepare_folds, Fold, InferenceOptions, Predictor};
use kgpath::explain::{explanations, parse_path, render_path, Explanation};
use kgpath::graph::{load_graph, EntityId, KnowledgeGraph, LoadReport, RelationId, SplitOptions, TypeId};
use kgpath::kge::{sample_learning_rates, train_kge, KgeKind, KgeParams, KgeTrainConfig};
use kgpath::metapath::{parse_metapaths, Metapath};
use kgpath::policy::PolicyParams;
use kgpath::synth::{generate_planted, RULE_LINE};
use kgpath::train::{grid_search, minerva_grid, polo_grid, train, TrainConfig};
use kgpath::walk::Rollout;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ModelKind, RunConfig};
use crate::{CliError, CliResult};

/// Learning-rate range sampled when searching embedding models.
const KGE_LR_RANGE: (f64, f64) = (0.001, 0.2);

/// An input file and the SHA-256 of its bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

pub struct Dataset {
    pub graph: KnowledgeGraph,
    pub report: Option<LoadReport>,
    pub inputs: Vec<InputFile>,
    metapath_text: Option<String>,
}

fn read_input(role: &str, path: &Path, flag: &str) -> CliResult<(Vec<u8>, InputFile)> {
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "{role} file `{}` does not exist; pass an existing file with {flag}",
            path.display()
        )));
    }
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(path.to_owned(), e))?;
    let input = InputFile {
        role: role.to_owned(),
        path: path.to_owned(),
        sha256: hex(&Sha256::digest(&bytes)),
    };
    Ok((bytes, input))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Loads the configured files, or generates the planted graph.
pub fn load_dataset(cfg: &RunConfig) -> CliResult<Dataset> {
    let mut inputs = Vec::new();
    let metapath_text = match &cfg.metapaths {
        Some(p) => {
            let (bytes, input) = read_input("metapaths", p, "--metapaths")?;
            inputs.push(input);
            Some(String::from_utf8(bytes).map_err(|_| CliError::Config(format!("{} is not UTF-8", p.display())))?)
        }
        None => None,
    };
    match (&cfg.triples, &cfg.types) {
        (Some(triples), Some(types)) => {
            inputs.push(read_input("triples", triples, "--triples")?.1);
            inputs.push(read_input("types", types, "--types")?.1);
            let (graph, report) = load_graph(triples, types)?;
            Ok(Dataset {
                graph,
                report: Some(report),
                inputs,
                metapath_text,
            })
        }
        (None, None) => {
            let spec = cfg.planted.clone().unwrap_or_default();
            let planted = generate_planted(&spec)?;
            Ok(Dataset {
                graph: planted.graph,
                report: None,
                inputs,
                metapath_text: metapath_text.or_else(|| Some(format!("{RULE_LINE}\n"))),
            })
        }
        (Some(_), None) => Err(CliError::Config(
            "no entity types file; pass --types <file> (tab-separated entity, [label,] type)".into(),
        )),
        (None, Some(_)) => Err(CliError::Config("a types file was given without --triples".into())),
    }
}

impl Dataset {
    pub fn target(&self, cfg: &RunConfig) -> CliResult<(RelationId, TypeId)> {
        let name = cfg.target_relation();
        let relation = self.graph.relation(name).ok_or_else(|| {
            let known: Vec<&str> = self.graph.data_relation_ids().map(|r| self.graph.relation_name(r)).collect();
            CliError::Config(format!(
                "target relation `{name}` is not in the graph; set target_relation to one of: {}",
                known.join(", ")
            ))
        })?;
        let ty = cfg.target_type();
        let target_type = self.graph.type_id(ty).ok_or_else(|| {
            let known: Vec<&str> = (0..self.graph.num_types() as u32).map(|t| self.graph.type_name(TypeId(t))).collect();
            CliError::Config(format!(
                "target type `{ty}` is not in the graph; set target_type to one of: {}",
                known.join(", ")
            ))
        })?;
        Ok((relation, target_type))
    }

    pub fn folds(&self, cfg: &RunConfig) -> CliResult<Vec<Fold>> {
        let (relation, target_type) = self.target(cfg)?;
        let options = SplitOptions {
            folds: cfg.folds,
            train_ratio: cfg.train_ratio,
            seed: cfg.seed,
        };
        Ok(prepare_folds(&self.graph, relation, target_type, options, cfg.filter_scope)?)
    }

    /// The metapath file parsed against `graph`; empty without one.
    pub fn metapaths(&self, graph: &KnowledgeGraph) -> CliResult<Vec<Metapath>> {
        match &self.metapath_text {
            Some(text) => Ok(parse_metapaths(text, graph)?),
            None => Ok(Vec::new()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Policy(PolicyParams),
    Kge(KgeParams),
}

impl Model {
    pub fn predictor(&self, kind: ModelKind) -> CliResult<Predictor<'_>> {
        let mismatch = |held: &str| {
            CliError::Config(format!(
                "checkpoint holds a {held} model but the config selects `{}`",
                kind.name()
            ))
        };
        match (kind, self) {
            (ModelKind::Minerva | ModelKind::Polo, Model::Policy(p)) => Ok(Predictor::Policy(p)),
            (ModelKind::Transe | ModelKind::Distmult, Model::Kge(p)) if p.kind == kge_kind(kind) => Ok(Predictor::Embedding(p)),
            (ModelKind::EmbeddingGuided, Model::Kge(p)) if p.kind == KgeKind::TransE => Ok(Predictor::Guided(p)),
            (_, Model::Policy(_)) => Err(mismatch("policy")),
            (_, Model::Kge(p)) => Err(mismatch(p.kind.name())),
        }
    }

    pub fn checkpoint(&self, record: serde_json::Value) -> Checkpoint {
        match self {
            Model::Policy(p) => Checkpoint::Policy(p.clone(), record),
            Model::Kge(p) => Checkpoint::Kge(p.clone(), record),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Self {
        match c {
            Checkpoint::Policy(p, _) => Model::Policy(p),
            Checkpoint::Kge(p, _) => Model::Kge(p),
        }
    }
}

/// Embedding kind behind a model; the guided walk uses TransE.
pub fn kge_kind(kind: ModelKind) -> KgeKind {
    match kind {
        ModelKind::Distmult => KgeKind::DistMult,
        _ => KgeKind::TransE,
    }
}

pub fn fold_train_config(cfg: &RunConfig, fold: usize) -> TrainConfig {
    TrainConfig {
        seed: cfg.fold_seed(fold),
        ..cfg.train.clone()
    }
}

pub fn fold_kge_config(cfg: &RunConfig, fold: usize) -> KgeTrainConfig {
    KgeTrainConfig {
        seed: cfg.fold_seed(fold),
        ..cfg.kge.clone()
    }
}

pub fn inference_options(cfg: &RunConfig, fold: usize) -> InferenceOptions {
    InferenceOptions {
        beam_width: cfg.inference.beam_width,
        max_steps: cfg.train.max_steps,
        max_out: cfg.train.max_out,
        seed: cfg.fold_seed(fold),
    }
}

pub struct TrainedFold {
    pub model: Model,
    /// One JSON object per line.
    pub log: String,
    /// Share of training rollouts that matched a metapath (walkers only).
    pub metapath_frequency: Option<f64>,
}

fn jsonl<T: Serialize>(rows: &[T]) -> CliResult<String> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn train_fold(cfg: &RunConfig, fold: &Fold, metapaths: &[Metapath]) -> CliResult<TrainedFold> {
    let i = fold.index();
    if cfg.model.is_walker() {
        let tc = fold_train_config(cfg, i);
        let outcome = train(&fold.graph, &fold.split.train, metapaths, &tc)?;
        Ok(TrainedFold {
            log: jsonl(&outcome.log)?,
            metapath_frequency: Some(outcome.metapath_frequency()),
            model: Model::Policy(outcome.params),
        })
    } else {
        let kc = fold_kge_config(cfg, i);
        let (params, log) = train_kge(&fold.graph, &kc, kge_kind(cfg.model))?;
        Ok(TrainedFold {
            log: jsonl(&log)?,
            metapath_frequency: None,
            model: Model::Kge(params),
        })
    }
}

/// Test metrics of one fold; the content of `folds/<i>/metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub seed: u64,
    pub train_triples: usize,
    pub valid_triples: usize,
    pub test_triples: usize,
    pub unpruned: RankMetrics,
    pub pruned: RankMetrics,
    pub ranks: FoldRanks,
}

pub struct EvaluatedFold {
    pub report: FoldReport,
    /// One list per distinct `(head, relation)` test query, in first-seen order.
    pub lists: Vec<PredictionList>,
    /// Explanations of the top pruned predictions.
    pub explanations: Vec<Explanation>,
    /// Their witness paths.
    pub witnesses: Vec<Rollout>,
}

/// Ranks the fold's test triples against `lists`, keyed by query.
/// Queries without a list rank every candidate as a failed walk.
pub fn rank_fold(cfg: &RunConfig, fold: &Fold, lists: Vec<PredictionList>, explain_top_k: usize) -> CliResult<EvaluatedFold> {
    let test = &fold.split.test;
    let by_query: BTreeMap<(EntityId, RelationId), usize> =
        lists.iter().enumerate().map(|(i, l)| ((l.head, l.relation), i)).collect();
    let empty = |h, r| PredictionList {
        head: h,
        relation: r,
        entries: Vec::new(),
        pruned_to: None,
    };
    let per_triple: Vec<PredictionList> = test
        .iter()
        .map(|t| match by_query.get(&(t.head, t.relation)) {
            Some(&i) => lists[i].clone(),
            None => empty(t.head, t.relation),
        })
        .collect();
    let answers: Vec<EntityId> = test.iter().map(|t| t.tail).collect();
    let ranks = rank_predictions(&per_triple, &answers, fold.target_type, &fold.filter, &fold.graph)?;

    let mut explained = Vec::new();
    let mut witnesses = Vec::new();
    for list in &lists {
        let mut pruned = prune_by_type(list, fold.target_type, &fold.graph);
        pruned.entries.truncate(explain_top_k);
        witnesses.extend(pruned.entries.iter().filter_map(|e| e.witness.clone()));
        explained.extend(explanations(&pruned, &fold.graph));
    }
    let report = FoldReport {
        fold: fold.index(),
        seed: cfg.fold_seed(fold.index()),
        train_triples: fold.split.train.len(),
        valid_triples: fold.split.valid.len(),
        test_triples: test.len(),
        unpruned: compute_metrics(&ranks.unpruned)?,
        pruned: compute_metrics(&ranks.pruned)?,
        ranks,
    };
    Ok(EvaluatedFold {
        report,
        lists,
        explanations: explained,
        witnesses,
    })
}

/// Predicts every distinct test query of `fold` with `model` and ranks it.
pub fn evaluate_fold(cfg: &RunConfig, fold: &Fold, model: &Model) -> CliResult<EvaluatedFold> {
    let mut seen = HashSet::new();
    let queries: Vec<_> = fold
        .queries(&fold.split.test)
        .into_iter()
        .filter(|q| seen.insert((q.head, q.relation)))
        .collect();
    let options = inference_options(cfg, fold.index());
    let lists = predict(model.predictor(cfg.model)?, &fold.graph, &queries, &options)?;
    rank_fold(cfg, fold, lists, cfg.inference.explain_top_k)
}

/// Validation pruned MRR of `model` on `fold`, the search objective.
pub fn validation_mrr(cfg: &RunConfig, fold: &Fold, model: &Model) -> CliResult<f64> {
    let queries = fold.queries(&fold.split.valid);
    let options = inference_options(cfg, fold.index());
    let lists = predict(model.predictor(cfg.model)?, &fold.graph, &queries, &options)?;
    let answers: Vec<EntityId> = fold.split.valid.iter().map(|t| t.tail).collect();
    let ranks = rank_predictions(&lists, &answers, fold.target_type, &fold.filter, &fold.graph)?;
    Ok(compute_metrics(&ranks.pruned)?.mrr)
}

pub const PREDICTIONS_HEADER: &str = "head\trelation\trank\tcandidate\tscore\tpath";

/// Prediction dump: one row per candidate, lists in order.
pub fn format_predictions(lists: &[PredictionList], graph: &KnowledgeGraph) -> String {
    let mut out = String::new();
    out.push_str(PREDICTIONS_HEADER);
    out.push('\n');
    for list in lists {
        let head = graph.entity_name(list.head);
        let relation = graph.relation_name(list.relation);
        for (i, e) in list.entries.iter().enumerate() {
            let path = e.witness.as_ref().map(|w| render_path(w, graph)).unwrap_or_default();
            let _ = writeln!(
                out,
                "{head}\t{relation}\t{}\t{}\t{}\t{path}",
                i + 1,
                graph.entity_name(e.entity),
                e.score
            );
        }
    }
    out
}

/// Reads a prediction dump back into lists, witnesses included.
pub fn parse_predictions(text: &str, graph: &KnowledgeGraph, path: &Path) -> CliResult<Vec<PredictionList>> {
    let bad = |line: usize, m: String| CliError::Config(format!("{}:{line}: {m}", path.display()));
    let mut lists: BTreeMap<(EntityId, RelationId), PredictionList> = BTreeMap::new();
    let mut order = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let n = n + 1;
        if line.is_empty() || (n == 1 && line == PREDICTIONS_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [head, relation, _rank, candidate, score, witness] = fields[..] else {
            return Err(bad(n, format!("expected 6 tab-separated fields, found {}", fields.len())));
        };
        let h = graph.require_entity(head).map_err(|e| bad(n, e.to_string()))?;
        let r = graph.require_relation(relation).map_err(|e| bad(n, e.to_string()))?;
        let entity = graph.require_entity(candidate).map_err(|e| bad(n, e.to_string()))?;
        let score: f64 = score.parse().map_err(|_| bad(n, format!("bad score `{score}`")))?;
        let witness = if witness.is_empty() {
            None
        } else {
            let w = parse_path(witness, r, graph).map_err(|e| bad(n, e.to_string()))?;
            if w.head != h || w.terminal() != entity {
                return Err(bad(n, "path does not run from the head to the candidate".into()));
            }
            Some(w)
        };
        let list = lists.entry((h, r)).or_insert_with(|| {
            order.push((h, r));
            PredictionList {
                head: h,
                relation: r,
                entries: Vec::new(),
                pruned_to: None,
            }
        });
        list.entries.push(PredictionEntry { entity, score, witness });
    }
    order
        .into_iter()
        .map(|k| {
            let mut list = lists.remove(&k).expect("every key was recorded");
            list.check_unique()?;
            list.sort();
            Ok(list)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRow {
    pub config: serde_json::Value,
    pub validation_mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub model: ModelKind,
    pub rows: Vec<SearchRow>,
    pub best: serde_json::Value,
}

/// Grid (walkers) or sampled learning rates (embeddings) scored by fold 0's
/// validation pruned MRR. Returns `cfg` with the winner applied.
pub fn search(cfg: &RunConfig, dataset: &Dataset, mut progress: impl FnMut(&str)) -> CliResult<(RunConfig, SearchResult)> {
    let folds = dataset.folds(cfg)?;
    let fold = &folds[0];
    let metapaths = dataset.metapaths(&fold.graph)?;
    let mut best_cfg = cfg.clone();
    let rows;
    if cfg.model.is_walker() {
        let grid = match cfg.model {
            ModelKind::Polo => polo_grid(&cfg.train),
            _ => minerva_grid(&cfg.train),
        };
        let (best, entries) = grid_search(&grid, |c| {
            let trial = RunConfig {
                train: c.clone(),
                ..cfg.clone()
            };
            let trained = train_fold(&trial, fold, &metapaths).map_err(to_core)?;
            let mrr = validation_mrr(&trial, fold, &trained.model).map_err(to_core)?;
            progress(&format!(
                "d={} h={} lr={} lambda={} beta={}: valid MRR {mrr:.4}",
                c.embedding_dim, c.hidden_dim, c.learning_rate, c.lambda, c.beta
            ));
            Ok(mrr)
        })?;
        rows = entries
            .into_iter()
            .map(|e| {
                Ok(SearchRow {
                    config: serde_json::to_value(&e.config)?,
                    validation_mrr: e.score,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        best_cfg.train = best;
    } else {
        let rates = sample_learning_rates(cfg.kge_search_draws, KGE_LR_RANGE.0, KGE_LR_RANGE.1, cfg.seed);
        let mut scored = Vec::new();
        for lr in rates {
            let trial = RunConfig {
                kge: KgeTrainConfig {
                    learning_rate: lr,
                    ..cfg.kge.clone()
                },
                ..cfg.clone()
            };
            let trained = train_fold(&trial, fold, &metapaths)?;
            let mrr = validation_mrr(&trial, fold, &trained.model)?;
            progress(&format!("lr={lr:.6}: valid MRR {mrr:.4}"));
            scored.push((trial.kge, mrr));
        }
        let best = scored
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.learning_rate.total_cmp(&a.0.learning_rate)))
            .map(|(c, _)| c.clone())
            .ok_or_else(|| CliError::Config("kge_search_draws must be at least 1".into()))?;
        rows = scored
            .into_iter()
            .map(|(c, mrr)| {
                Ok(SearchRow {
                    config: serde_json::to_value(&c)?,
                    validation_mrr: mrr,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        best_cfg.kge = best;
    }
    best_cfg.search = false;
    let best = if cfg.model.is_walker() {
        serde_json::to_value(&best_cfg.train)?
    } else {
        serde_json::to_value(&best_cfg.kge)?
    };
    Ok((
        best_cfg,
        SearchResult {
            model: cfg.model,
            rows,
            best,
        },
    ))
}

fn to_core(e: CliError) -> kgpath::Error {
    match e {
        CliError::Core(e) => e,
        other => kgpath::Error::InvalidInput(other.to_string()),
    }
}
