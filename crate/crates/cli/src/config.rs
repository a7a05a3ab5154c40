use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hazardtm::classifier::{SelectionSettings, SweepGrid};
use hazardtm::corpus::HazardConfig;
use hazardtm::dedup::{DEFAULT_NUM_HASHES, DEFAULT_ROWS_PER_BAND, DEFAULT_SHINGLE_SIZE, DEFAULT_THRESHOLD};
use hazardtm::features::{FeatureConfig, KeywordMatch};
use hazardtm::topicmodel::{LdaConfig, ModelConfig, ModelKind, NmfConfig};
use serde::{Deserialize, Serialize};

/// Input files of one hazard. Relative paths are resolved against the
/// directory of the pipeline config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HazardPaths {
    /// JSON-lines file of raw documents.
    pub corpus: PathBuf,
    /// TOML with keywords, intruders, agency markers and filter rules.
    pub keywords: PathBuf,
    #[serde(default)]
    pub gold: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupParams {
    pub shingle_size: usize,
    pub num_hashes: usize,
    pub rows_per_band: usize,
    pub threshold: f64,
}

impl Default for DedupParams {
    fn default() -> Self {
        DedupParams {
            shingle_size: DEFAULT_SHINGLE_SIZE,
            num_hashes: DEFAULT_NUM_HASHES,
            rows_per_band: DEFAULT_ROWS_PER_BAND,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// The single model fitted by `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub kind: ModelKind,
    pub num_topics: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams { kind: ModelKind::Lda, num_topics: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputParams {
    /// Terms per topic in top-term tables.
    pub top_terms: usize,
    /// Store every model fitted during the sweep, not only the selected ones.
    pub keep_all_sweep_models: bool,
}

impl Default for OutputParams {
    fn default() -> Self {
        OutputParams { top_terms: 20, keep_all_sweep_models: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed for every stochastic stage; overrides seeds in `[lda]`, `[nmf]`.
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// One word per line; the built-in German list when absent.
    #[serde(default)]
    pub stopwords: Option<PathBuf>,
    pub hazards: BTreeMap<String, HazardPaths>,
    #[serde(default)]
    pub dedup: DedupParams,
    #[serde(default = "default_features")]
    pub features: FeatureConfig,
    #[serde(default)]
    pub train: TrainParams,
    #[serde(default)]
    pub lda: LdaConfig,
    #[serde(default)]
    pub nmf: NmfConfig,
    #[serde(default)]
    pub sweep: SweepGrid,
    #[serde(default)]
    pub selection: SelectionSettings,
    #[serde(default)]
    pub output: OutputParams,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

fn default_features() -> FeatureConfig {
    FeatureConfig { min_doc_freq: 50, allowed_pos: Default::default(), keyword_match: KeywordMatch::Exact }
}

/// A parsed config, its raw bytes and the directory paths are relative to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub raw: String,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: PipelineConfig =
            toml::from_str(&raw).with_context(|| format!("parsing config {}", path.display()))?;
        config.lda.seed = config.seed;
        config.nmf.seed = config.seed;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = LoadedConfig { config, raw, base_dir };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Checks parameters that do not depend on the subcommand.
    fn validate(&self) -> Result<()> {
        let c = &self.config;
        if c.hazards.is_empty() {
            bail!("config lists no hazards");
        }
        for name in c.hazards.keys() {
            if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
                bail!("hazard name {name:?} is not usable as a directory name");
            }
        }
        let d = &c.dedup;
        if d.shingle_size == 0 || d.num_hashes == 0 || d.rows_per_band == 0 {
            bail!("dedup: shingle_size, num_hashes and rows_per_band must be positive");
        }
        if d.num_hashes % d.rows_per_band != 0 {
            bail!("dedup: num_hashes {} is not a multiple of rows_per_band {}", d.num_hashes, d.rows_per_band);
        }
        if !(d.threshold > 0.0 && d.threshold <= 1.0) {
            bail!("dedup: threshold {} outside (0, 1]", d.threshold);
        }
        if c.features.min_doc_freq == 0 {
            bail!("features: min_doc_freq must be at least 1");
        }
        if c.train.num_topics == 0 {
            bail!("train: num_topics must be at least 1");
        }
        c.lda.validate().context("lda")?;
        c.nmf.validate().context("nmf")?;
        c.sweep.validate().context("sweep")?;
        if !(0.0..=1.0).contains(&c.selection.recall_floor) {
            bail!("selection: recall_floor {} outside [0, 1]", c.selection.recall_floor);
        }
        Ok(())
    }

    pub fn hazard(&self, name: &str) -> Result<&HazardPaths> {
        self.config.hazards.get(name).with_context(|| {
            let known: Vec<&str> = self.config.hazards.keys().map(String::as_str).collect();
            format!("hazard {name:?} not in config (known: {})", known.join(", "))
        })
    }

    pub fn hazard_config(&self, name: &str) -> Result<HazardConfig> {
        let path = self.resolve(&self.hazard(name)?.keywords);
        let cfg = HazardConfig::load(&path).with_context(|| format!("loading {}", path.display()))?;
        if cfg.hazard != name {
            log::warn!("{} declares hazard {:?}, used for {name:?}", path.display(), cfg.hazard);
        }
        Ok(cfg)
    }

    pub fn model_config(&self, kind: ModelKind, num_topics: usize) -> ModelConfig {
        match kind {
            ModelKind::Lda => ModelConfig::Lda(LdaConfig { num_topics, ..self.config.lda.clone() }),
            ModelKind::Nmf => ModelConfig::Nmf(NmfConfig { num_topics, ..self.config.nmf.clone() }),
        }
    }
}
