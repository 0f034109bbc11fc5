//! Subcommands. Each returns its report; printing is left to the binary.
//!
//! Output layout of a run directory:
//!
//! ```text
//! manifest.json  metrics.json  metrics.txt  metapaths.txt  metapaths.json
//! search.json                      (when searching)
//! folds/<i>/checkpoint.bin  train_log.jsonl  predictions.tsv
//!           metrics.json  explanations.jsonl
//! ```

use std::path::{Path, PathBuf};

use kgpath::checkpoint::{load_checkpoint, save_checkpoint};
use kgpath::eval::aggregate_folds;
use kgpath::experiment::Fold;
use kgpath::explain::{format_frequency_table, metapath_frequencies, MetapathStat};
use kgpath::graph::graph_stats;
use kgpath::synth::{generate_planted, PlantedSpec};
use kgpath::walk::Rollout;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::pipeline::{
    evaluate_fold, fold_kge_config, fold_train_config, format_predictions, load_dataset, parse_predictions, rank_fold,
    search, train_fold, Dataset, EvaluatedFold, FoldReport, InputFile, Model, SearchResult,
};
use crate::report::{FoldSize, RunMetrics, StatsReport, TargetSplit};
use crate::{create_dir, write_file, CliError, CliResult};

/// Progress messages; called from worker threads.
pub type Progress<'a> = &'a (dyn Fn(&str) + Sync);

pub const INCOMPLETE: &str = "INCOMPLETE";

pub fn fold_dir(out: &Path, fold: usize) -> PathBuf {
    out.join("folds").join(fold.to_string())
}

pub fn cmd_stats(cfg: &RunConfig) -> CliResult<StatsReport> {
    cfg.validate()?;
    let dataset = load_dataset(cfg)?;
    let graph = graph_stats(&dataset.graph)?;
    let explicit = cfg.target_relation.is_some() || cfg.target_type.is_some();
    let target = match dataset.target(cfg) {
        Ok(_) => {
            let folds = dataset.folds(cfg)?;
            Some(TargetSplit {
                relation: cfg.target_relation().to_owned(),
                target_type: cfg.target_type().to_owned(),
                triples: folds[0].split.all_target().count(),
                folds: folds
                    .iter()
                    .map(|f| FoldSize {
                        fold: f.index(),
                        train: f.split.train.len(),
                        valid: f.split.valid.len(),
                        test: f.split.test.len(),
                    })
                    .collect(),
            })
        }
        Err(e) if explicit => return Err(e),
        Err(_) => None,
    };
    Ok(StatsReport {
        graph,
        load: dataset.report,
        target,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateReport {
    pub out: PathBuf,
    pub entities: usize,
    pub triples: usize,
    pub treats: usize,
    pub rule_treats: usize,
}

/// Writes a planted graph as `triples.tsv`, `types.tsv` and `metapaths.tsv`.
pub fn cmd_generate(spec: &PlantedSpec, out: &Path) -> CliResult<GenerateReport> {
    let planted = generate_planted(spec)?;
    planted.write_to(out)?;
    Ok(GenerateReport {
        out: out.to_owned(),
        entities: planted.graph.num_entities(),
        triples: planted.graph.num_triples(),
        treats: planted.treats.len(),
        rule_treats: planted.rule_treats.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub fold: usize,
    pub seed: u64,
    pub checkpoint: PathBuf,
    pub metapath_frequency: Option<f64>,
}

fn checkpoint_record(cfg: &RunConfig, fold: usize) -> CliResult<serde_json::Value> {
    let model_config = if cfg.model.is_walker() {
        serde_json::to_value(fold_train_config(cfg, fold))?
    } else {
        serde_json::to_value(fold_kge_config(cfg, fold))?
    };
    Ok(json!({
        "model": cfg.model,
        "fold": fold,
        "seed": cfg.fold_seed(fold),
        "config_hash": reproducible(cfg).hash(),
        "train": model_config,
    }))
}

fn train_and_save(cfg: &RunConfig, dataset: &Dataset, fold: &Fold, out: &Path) -> CliResult<(Model, TrainReport)> {
    let dir = fold_dir(out, fold.index());
    create_dir(&dir)?;
    let metapaths = dataset.metapaths(&fold.graph)?;
    let trained = train_fold(cfg, fold, &metapaths)?;
    let checkpoint = dir.join("checkpoint.bin");
    save_checkpoint(&checkpoint, &trained.model.checkpoint(checkpoint_record(cfg, fold.index())?))?;
    write_file(&dir.join("train_log.jsonl"), &trained.log)?;
    let report = TrainReport {
        fold: fold.index(),
        seed: cfg.fold_seed(fold.index()),
        checkpoint,
        metapath_frequency: trained.metapath_frequency,
    };
    Ok((trained.model, report))
}

/// Trains every fold (or just `only`) and saves checkpoints and logs.
pub fn cmd_train(cfg: &RunConfig, only: Option<usize>, progress: Progress<'_>) -> CliResult<Vec<TrainReport>> {
    cfg.validate()?;
    let out = cfg.out_dir()?;
    let dataset = load_dataset(cfg)?;
    let folds = selected(dataset.folds(cfg)?, only)?;
    folds
        .par_iter()
        .map(|fold| {
            progress(&format!("fold {}: training {}", fold.index(), cfg.model.name()));
            train_and_save(cfg, &dataset, fold, out).map(|(_, r)| r)
        })
        .collect()
}

fn selected(folds: Vec<Fold>, only: Option<usize>) -> CliResult<Vec<Fold>> {
    match only {
        None => Ok(folds),
        Some(i) if i < folds.len() => Ok(folds.into_iter().filter(|f| f.index() == i).collect()),
        Some(i) => Err(CliError::Config(format!("fold {i} out of range for {} folds", folds.len()))),
    }
}

fn write_fold_outputs(fold: &Fold, evaluated: &EvaluatedFold, out: &Path) -> CliResult<()> {
    let dir = fold_dir(out, fold.index());
    create_dir(&dir)?;
    write_file(&dir.join("predictions.tsv"), format_predictions(&evaluated.lists, &fold.graph))?;
    write_file(&dir.join("metrics.json"), to_json(&evaluated.report)?)?;
    let mut lines = String::new();
    for e in &evaluated.explanations {
        lines.push_str(&serde_json::to_string(e)?);
        lines.push('\n');
    }
    write_file(&dir.join("explanations.jsonl"), lines)
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// The config as recorded for reproduction: output location dropped.
fn reproducible(cfg: &RunConfig) -> RunConfig {
    RunConfig {
        out: None,
        ..cfg.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kgpath_version: String,
    pub config_hash: String,
    pub split_seed: u64,
    pub fold_seeds: Vec<u64>,
    pub inputs: Vec<InputFile>,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub metrics: RunMetrics,
    pub folds: Vec<FoldReport>,
    pub metapaths: Vec<MetapathStat>,
    /// Per fold, when the model was trained in this call.
    pub training: Vec<TrainReport>,
}

fn finish(cfg: &RunConfig, dataset: &Dataset, folds: &[Fold], evaluated: Vec<EvaluatedFold>, out: &Path) -> CliResult<RunSummary> {
    let reports: Vec<FoldReport> = evaluated.iter().map(|e| e.report.clone()).collect();
    let unpruned = aggregate_folds(&reports.iter().map(|r| r.unpruned).collect::<Vec<_>>())?;
    let pruned = aggregate_folds(&reports.iter().map(|r| r.pruned).collect::<Vec<_>>())?;
    let metrics = RunMetrics {
        model: cfg.model,
        relation: cfg.target_relation().to_owned(),
        folds: reports.len(),
        test_queries: reports.iter().map(|r| r.test_triples).sum(),
        unpruned,
        pruned,
    };
    write_file(&out.join("metrics.json"), to_json(&metrics)?)?;
    write_file(&out.join("metrics.txt"), metrics.to_text())?;

    // fold graphs share one id registry, so witnesses pool across folds
    let witnesses: Vec<Rollout> = evaluated.into_iter().flat_map(|e| e.witnesses).collect();
    let metapaths = metapath_frequencies(&witnesses, &folds[0].graph, usize::MAX);
    let table = format!(
        "metapaths of the top {} pruned predictions per test query, {} paths\n{}",
        cfg.inference.explain_top_k,
        witnesses.len(),
        format_frequency_table(&metapaths)
    );
    write_file(&out.join("metapaths.txt"), table)?;
    write_file(&out.join("metapaths.json"), to_json(&metapaths)?)?;

    let recorded = reproducible(cfg);
    let manifest = Manifest {
        kgpath_version: kgpath::VERSION.to_owned(),
        config_hash: recorded.hash(),
        split_seed: cfg.seed,
        fold_seeds: folds.iter().map(|f| cfg.fold_seed(f.index())).collect(),
        inputs: dataset.inputs.clone(),
        config: recorded,
    };
    write_file(&out.join("manifest.json"), to_json(&manifest)?)?;
    Ok(RunSummary {
        metrics,
        folds: reports,
        metapaths,
        training: Vec::new(),
    })
}

/// Where `cmd_eval` gets its predictions.
#[derive(Debug, Clone)]
pub enum EvalSource {
    /// `folds/<i>/checkpoint.bin` under the output directory, every fold.
    Checkpoints,
    /// A prediction dump for one fold's test queries.
    Predictions { path: PathBuf, fold: usize },
}

#[derive(Debug, Clone)]
pub enum EvalReport {
    Run(RunSummary),
    Fold(FoldReport),
}

pub fn cmd_eval(cfg: &RunConfig, source: &EvalSource, progress: Progress<'_>) -> CliResult<EvalReport> {
    cfg.validate()?;
    let dataset = load_dataset(cfg)?;
    let folds = dataset.folds(cfg)?;
    match source {
        EvalSource::Predictions { path, fold } => {
            let fold = &selected(folds, Some(*fold))?[0];
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.clone(), e))?;
            let lists = parse_predictions(&text, &fold.graph, path)?;
            Ok(EvalReport::Fold(rank_fold(cfg, fold, lists, 0)?.report))
        }
        EvalSource::Checkpoints => {
            let out = cfg.out_dir()?;
            let evaluated = folds
                .par_iter()
                .map(|fold| {
                    let path = fold_dir(out, fold.index()).join("checkpoint.bin");
                    if !path.is_file() {
                        return Err(CliError::Config(format!(
                            "missing checkpoint {}; run `kgpath train` first",
                            path.display()
                        )));
                    }
                    progress(&format!("fold {}: evaluating {}", fold.index(), path.display()));
                    let model = Model::from_checkpoint(load_checkpoint(&path)?);
                    let evaluated = evaluate_fold(cfg, fold, &model)?;
                    write_fold_outputs(fold, &evaluated, out)?;
                    Ok(evaluated)
                })
                .collect::<CliResult<Vec<_>>>()?;
            Ok(EvalReport::Run(finish(cfg, &dataset, &folds, evaluated, out)?))
        }
    }
}

/// Optional search, then k-fold train, predict, rank and explain.
/// `INCOMPLETE` marks the output directory until everything is written.
pub fn cmd_run(cfg: &RunConfig, progress: Progress<'_>) -> CliResult<RunSummary> {
    cfg.validate()?;
    let out = cfg.out_dir()?.to_owned();
    let dataset = load_dataset(cfg)?;
    dataset.target(cfg)?;
    create_dir(&out)?;
    let marker = out.join(INCOMPLETE);
    write_file(&marker, "run in progress or failed; outputs here are partial\n")?;

    let cfg = if cfg.search {
        let (best, result) = search(cfg, &dataset, |m| progress(&format!("search: {m}")))?;
        write_file(&out.join("search.json"), to_json(&result)?)?;
        best
    } else {
        cfg.clone()
    };
    let folds = dataset.folds(&cfg)?;
    let done = folds
        .par_iter()
        .map(|fold| {
            progress(&format!("fold {}: training {}", fold.index(), cfg.model.name()));
            let (model, training) = train_and_save(&cfg, &dataset, fold, &out)?;
            progress(&format!("fold {}: evaluating", fold.index()));
            let evaluated = evaluate_fold(&cfg, fold, &model)?;
            write_fold_outputs(fold, &evaluated, &out)?;
            Ok((evaluated, training))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let (evaluated, training): (Vec<_>, Vec<_>) = done.into_iter().unzip();
    let mut summary = finish(&cfg, &dataset, &folds, evaluated, &out)?;
    summary.training = training;
    std::fs::remove_file(&marker).map_err(|e| CliError::Io(marker, e))?;
    Ok(summary)
}

/// Hyperparameter search alone; writes `search.json` when an output
/// directory is configured.
pub fn cmd_search(cfg: &RunConfig, progress: Progress<'_>) -> CliResult<SearchResult> {
    cfg.validate()?;
    let dataset = load_dataset(cfg)?;
    let (_, result) = search(cfg, &dataset, |m| progress(m))?;
    if let Some(out) = &cfg.out {
        create_dir(out)?;
        write_file(&out.join("search.json"), to_json(&result)?)?;
    }
    Ok(result)
}
