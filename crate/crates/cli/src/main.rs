use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kgpath::synth::PlantedSpec;
use kgpath_cli::commands::{EvalReport, INCOMPLETE};
use kgpath_cli::report::fold_metrics_text;
use kgpath_cli::{cmd_eval, cmd_generate, cmd_run, cmd_search, cmd_stats, cmd_train, CliError, CliResult, EvalSource};
use kgpath_cli::{ModelKind, Overrides, RunConfig};

/// Explainable multi-hop link prediction on typed knowledge graphs.
///
/// Set KGPATH_THREADS to fix the worker thread count; results do not depend on it.
#[derive(Parser)]
#[command(name = "kgpath", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Graph profile and fold sizes of the target relation.
    Stats(Common),
    /// Train every fold and save checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        /// Train only this fold.
        #[arg(long)]
        fold: Option<usize>,
    },
    /// Evaluate saved checkpoints, or rank a prediction dump.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Prediction dump (head, relation, rank, candidate, score, path) to rank.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Fold whose test triples the dump answers.
        #[arg(long, default_value_t = 0)]
        fold: usize,
    },
    /// Search (if enabled), train, evaluate and explain every fold.
    Run(Common),
    /// Hyperparameter search on fold 0's validation split.
    Search(Common),
    /// Write a planted-rule graph (triples, types, metapaths).
    Generate {
        /// TOML config whose [planted] section is used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Generator seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Triples file: head, relation, tail (tab-separated).
    #[arg(long)]
    triples: Option<PathBuf>,
    /// Entity types file: entity, [label,] type (tab-separated).
    #[arg(long)]
    types: Option<PathBuf>,
    /// Metapath rules, one per line.
    #[arg(long)]
    metapaths: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Relation to predict, overriding the task default.
    #[arg(long)]
    target_relation: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

impl Common {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            triples: self.triples.clone(),
            types: self.types.clone(),
            metapaths: self.metapaths.clone(),
            model: self.model,
            seed: self.seed,
            folds: self.folds,
            out: self.out.clone(),
        });
        if let Some(r) = &self.target_relation {
            cfg.target_relation = Some(r.clone());
        }
        Ok(cfg)
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn progress(message: &str) {
    eprintln!("{message}");
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("KGPATH_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("KGPATH_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Stats(common) => {
            let report = cmd_stats(&common.resolve()?)?;
            match common.format {
                Format::Text => print!("{}", report.to_text()),
                Format::Json => print_json(&report)?,
            }
        }
        Command::Train { common, fold } => {
            let reports = cmd_train(&common.resolve()?, fold, &progress)?;
            match common.format {
                Format::Text => {
                    for r in &reports {
                        println!("fold {} seed {}: {}", r.fold, r.seed, r.checkpoint.display());
                    }
                }
                Format::Json => print_json(&reports)?,
            }
        }
        Command::Eval { common, predictions, fold } => {
            let source = match predictions {
                Some(path) => EvalSource::Predictions { path, fold },
                None => EvalSource::Checkpoints,
            };
            match (cmd_eval(&common.resolve()?, &source, &progress)?, common.format) {
                (EvalReport::Run(s), Format::Text) => print!("{}", s.metrics.to_text()),
                (EvalReport::Run(s), Format::Json) => print_json(&s.metrics)?,
                (EvalReport::Fold(r), Format::Text) => print!("{}", fold_metrics_text(&r.unpruned, &r.pruned)),
                (EvalReport::Fold(r), Format::Json) => print_json(&r)?,
            }
        }
        Command::Run(common) => {
            let cfg = common.resolve()?;
            let summary = cmd_run(&cfg, &progress).map_err(|e| flag_partial(e, cfg.out.as_deref()))?;
            match common.format {
                Format::Text => print!("{}", summary.metrics.to_text()),
                Format::Json => print_json(&summary.metrics)?,
            }
        }
        Command::Search(common) => {
            let result = cmd_search(&common.resolve()?, &progress)?;
            match common.format {
                Format::Text => {
                    for row in &result.rows {
                        println!("{:.4}\t{}", row.validation_mrr, row.config);
                    }
                    println!("best\t{}", result.best);
                }
                Format::Json => print_json(&result)?,
            }
        }
        Command::Generate { config, seed, out } => {
            let mut spec = match &config {
                Some(p) => RunConfig::load(p)?.planted.unwrap_or_default(),
                None => PlantedSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let r = cmd_generate(&spec, &out)?;
            println!(
                "{}: {} entities, {} triples, {} treats ({} implied by the rule)",
                r.out.display(),
                r.entities,
                r.triples,
                r.treats,
                r.rule_treats
            );
        }
    }
    Ok(())
}

fn flag_partial(e: CliError, out: Option<&Path>) -> CliError {
    match out {
        Some(dir) if dir.join(INCOMPLETE).exists() => {
            CliError::Config(format!("{e}\n(outputs in {} are partial)", dir.display()))
        }
        _ => e,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
