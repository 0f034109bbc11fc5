//! Run configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use kgpath::experiment::FilterScope;
use kgpath::kge::KgeTrainConfig;
use kgpath::synth::PlantedSpec;
use kgpath::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Minerva,
    Polo,
    Transe,
    Distmult,
    EmbeddingGuided,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Minerva => "minerva",
            ModelKind::Polo => "polo",
            ModelKind::Transe => "transe",
            ModelKind::Distmult => "distmult",
            ModelKind::EmbeddingGuided => "embedding_guided",
        }
    }

    pub fn is_walker(self) -> bool {
        matches!(self, ModelKind::Minerva | ModelKind::Polo)
    }
}

/// Which link to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// `(Compound, treats, ?)`
    #[default]
    TreatsRepurposing,
    /// `(Compound, binds, ?)`
    BindsTarget,
}

impl Task {
    fn defaults(self) -> (&'static str, &'static str) {
        match self {
            Task::TreatsRepurposing => ("treats", "Disease"),
            Task::BindsTarget => ("binds", "Gene"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub beam_width: usize,
    /// Explained predictions per query, after type pruning.
    pub explain_top_k: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            beam_width: 100,
            explain_top_k: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub triples: Option<PathBuf>,
    pub types: Option<PathBuf>,
    pub metapaths: Option<PathBuf>,
    /// Generate the graph instead of loading it (when `triples` is unset).
    pub planted: Option<PlantedSpec>,
    pub task: Task,
    pub target_relation: Option<String>,
    pub target_type: Option<String>,
    pub model: ModelKind,
    pub seed: u64,
    pub folds: usize,
    pub train_ratio: f64,
    pub filter_scope: FilterScope,
    pub out: Option<PathBuf>,
    /// Grid search on fold 0 before the k-fold run.
    pub search: bool,
    /// Log-uniform learning-rate draws for embedding searches.
    pub kge_search_draws: usize,
    pub train: TrainConfig,
    pub kge: KgeTrainConfig,
    pub inference: InferenceConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            triples: None,
            types: None,
            metapaths: None,
            planted: None,
            task: Task::default(),
            target_relation: None,
            target_type: None,
            model: ModelKind::default(),
            seed: 0,
            folds: 5,
            train_ratio: 0.8,
            filter_scope: FilterScope::All,
            out: None,
            search: false,
            kge_search_draws: 8,
            train: TrainConfig::default(),
            kge: KgeTrainConfig::default(),
            inference: InferenceConfig::default(),
        }
    }
}

/// Values given on the command line; each replaces the config file's.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub triples: Option<PathBuf>,
    pub types: Option<PathBuf>,
    pub metapaths: Option<PathBuf>,
    pub model: Option<ModelKind>,
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a TOML file, or for `.json` a config or run manifest.
    /// Relative paths inside resolve against the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_owned(), e))?;
        let parsed = if path.extension().is_some_and(|x| x == "json") {
            serde_json::from_str::<serde_json::Value>(&text)
                .and_then(|v| {
                    // a run manifest carries the config under `config`
                    let v = match v {
                        serde_json::Value::Object(mut m) if m.contains_key("config_hash") => {
                            m.remove("config").unwrap_or_default()
                        }
                        other => other,
                    };
                    serde_json::from_value(v)
                })
                .map_err(|e| CliError::Config(e.to_string()))
        } else {
            Self::from_toml(&text)
        };
        let mut cfg = parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.triples, &mut cfg.types, &mut cfg.metapaths, &mut cfg.out] {
            if let Some(x) = p.as_mut() {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(x) = &o.triples {
            self.triples = Some(x.clone());
        }
        if let Some(x) = &o.types {
            self.types = Some(x.clone());
        }
        if let Some(x) = &o.metapaths {
            self.metapaths = Some(x.clone());
        }
        if let Some(x) = o.model {
            self.model = x;
        }
        if let Some(x) = o.seed {
            self.seed = x;
        }
        if let Some(x) = o.folds {
            self.folds = x;
        }
        if let Some(x) = &o.out {
            self.out = Some(x.clone());
        }
    }

    pub fn target_relation(&self) -> &str {
        self.target_relation.as_deref().unwrap_or(self.task.defaults().0)
    }

    pub fn target_type(&self) -> &str {
        self.target_type.as_deref().unwrap_or(self.task.defaults().1)
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Config("no output directory; pass --out or set `out`".into()))
    }

    /// Checks that do not need the graph.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        match (&self.triples, &self.types, &self.planted) {
            (Some(_), None, _) => return bad("a triples file needs an entity types file (--types)".into()),
            (None, Some(_), _) => return bad("a types file was given without a triples file (--triples)".into()),
            (None, None, None) => return bad("no graph: pass --triples and --types, or add a [planted] section".into()),
            _ => {}
        }
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.inference.beam_width == 0 {
            return bad("inference.beam_width must be at least 1".into());
        }
        match self.model {
            ModelKind::Polo => {
                if self.metapaths.is_none() && self.planted.is_none() {
                    return bad("model `polo` needs a metapath file (--metapaths)".into());
                }
                if !(self.train.lambda > 0.0) {
                    return bad("model `polo` needs train.lambda > 0".into());
                }
            }
            ModelKind::Minerva if self.train.lambda != 0.0 => {
                return bad(format!(
                    "model `minerva` trains with lambda = 0 (got {}); use model `polo` for metapath rewards",
                    self.train.lambda
                ));
            }
            _ => {}
        }
        self.train.validate()?;
        self.kge.validate()?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Seed of fold `i`'s model.
    pub fn fold_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_add(i as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file() {
        let cfg = RunConfig::from_toml("triples = 't.tsv'\ntypes = 'y.tsv'\nmodel = 'transe'\n").unwrap();
        assert_eq!(cfg.model, ModelKind::Transe);
        assert_eq!(cfg.target_relation(), "treats");
        assert_eq!(cfg.target_type(), "Disease");
        cfg.validate().unwrap();
    }

    #[test]
    fn task_defaults_and_overrides() {
        let cfg = RunConfig::from_toml("task = 'binds-target'\n").unwrap();
        assert_eq!((cfg.target_relation(), cfg.target_type()), ("binds", "Gene"));
        let cfg = RunConfig::from_toml("target_relation = 'CtD'\n").unwrap();
        assert_eq!(cfg.target_relation(), "CtD");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("modle = 'polo'\n").is_err());
        assert!(RunConfig::from_toml("[train]\nlamda = 0.1\n").is_err());
    }

    #[test]
    fn polo_needs_metapaths() {
        let mut cfg = RunConfig::from_toml("triples = 't'\ntypes = 'y'\nmodel = 'polo'\n[train]\nlambda = 0.1\n").unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config(m)) if m.contains("metapath")));
        cfg.metapaths = Some("m.tsv".into());
        cfg.validate().unwrap();
    }

    #[test]
    fn missing_types_rejected() {
        let cfg = RunConfig::from_toml("triples = 't'\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn minerva_rejects_lambda() {
        let cfg = RunConfig::from_toml("triples = 't'\ntypes = 'y'\n[train]\nlambda = 1.0\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "triples = 'data/t.tsv'\ntypes = '/abs/y.tsv'\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.triples.unwrap(), dir.path().join("data/t.tsv"));
        assert_eq!(cfg.types.unwrap(), PathBuf::from("/abs/y.tsv"));
    }
}
