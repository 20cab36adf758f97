//! TOML run configuration. Every field has a default; relative paths resolve
//! against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::Category;
use crate::data::{builtin, load_stimuli, RegionAtlas, SentenceStimulus};
use crate::error::{Error, Result};
use crate::eval::SubsetScope;
use crate::ridge::{LambdaGrid, LambdaSelection};
use crate::sensitivity::VariedPos;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide. Not part of the config hash.
    pub threads: usize,
    /// Output root. Not part of the config hash.
    pub out: PathBuf,
    pub paths: Paths,
    pub prep: PrepConfig,
    pub eval: EvalConfig,
    pub sensitivity: SensitivityConfig,
    pub augment: AugmentConfig,
    pub simulate: SimulateConfig,
    pub corpus: CorpusConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 0,
            out: PathBuf::from("out"),
            paths: Paths::default(),
            prep: PrepConfig::default(),
            eval: EvalConfig::default(),
            sensitivity: SensitivityConfig::default(),
            augment: AugmentConfig::default(),
            simulate: SimulateConfig::default(),
            corpus: CorpusConfig::default(),
        }
    }
}

/// Input locations. Unset stage inputs default to the matching output of an
/// earlier stage under `out`. `stimuli`, `generated` and `atlas` also accept
/// `builtin:<name>`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub epochs: Option<String>,
    pub responses: Option<String>,
    pub responses_rep1: Option<String>,
    pub atlas: Option<String>,
    pub stimuli: Option<String>,
    pub generated: Option<String>,
    pub features: Option<String>,
    pub glove: Option<String>,
    pub synthetic: Option<String>,
    pub triples: Option<String>,
    pub verbs: Option<String>,
    pub entities: Option<String>,
    pub tagged: Option<String>,
    pub inflections: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepConfig {
    pub window_ms: f64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self { window_ms: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    pub lambdas: Vec<f64>,
    pub lambda_selection: LambdaSelection,
    pub subsets: Vec<String>,
    pub regions: Vec<String>,
    pub subset_scope: SubsetScope,
    pub exclude_same_word: bool,
    pub pair_cap: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 5,
            lambdas: LambdaGrid::default().values().to_vec(),
            lambda_selection: LambdaSelection::default(),
            subsets: vec!["all".into()],
            regions: vec!["all".into()],
            subset_scope: SubsetScope::default(),
            exclude_same_word: false,
            pair_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    pub k: usize,
    #[serde(rename = "type")]
    pub varied: Option<VariedPos>,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self { k: 5, varied: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub category: Category,
    pub k: usize,
    pub n_perm: usize,
    pub synthetic_weight: f64,
    /// Encoder feature matrix; `layer = "best"` picks the layer with the
    /// highest macro accuracy.
    pub encoder_model: Option<String>,
    pub encoder_layer: Option<String>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            category: Category::Noun,
            k: 4,
            n_perm: 400,
            synthetic_weight: 1.0,
            encoder_model: None,
            encoder_layer: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub stimuli: String,
    pub generated: String,
    pub sensors: usize,
    pub windows: usize,
    pub lexicon_dim: usize,
    pub noise_sigma: f64,
    pub repetitions: u32,
    pub sample_rate: f64,
    pub samples_per_window: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            stimuli: "builtin:passact2".into(),
            generated: "builtin:passact2-generated".into(),
            sensors: 6,
            windows: 5,
            lexicon_dim: 8,
            noise_sigma: 1.0,
            repetitions: 10,
            sample_rate: 500.0,
            samples_per_window: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub freq_threshold: u64,
    pub prefix: String,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            freq_threshold: 6,
            prefix: "ssc".into(),
        }
    }
}

/// A parsed configuration bound to the directory it was read from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base: PathBuf,
    pub hash: String,
}

impl Loaded {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, base)
    }

    pub fn from_str(text: &str, base: PathBuf) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| {
            let field = e.span().map_or("<file>".to_string(), |s| {
                text[..s.start].lines().count().max(1).to_string()
            });
            Error::config(format!("line {field}"), e.message().to_string())
        })?;
        config.validate()?;
        let hash = config.hash();
        Ok(Self { config, base, hash })
    }

    pub fn out(&self) -> PathBuf {
        self.base.join(&self.config.out)
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.out().join(stage)
    }

    /// Configured path for `field`, or the fallback under `out`. Must exist.
    pub fn input(&self, field: &str, value: &Option<String>, fallback: Option<&str>) -> Result<PathBuf> {
        let path = match (value, fallback) {
            (Some(v), _) => self.base.join(v),
            (None, Some(f)) => self.out().join(f),
            (None, None) => {
                return Err(Error::config(format!("paths.{field}"), "is required for this command"));
            }
        };
        if !path.exists() {
            return Err(Error::config(
                format!("paths.{field}"),
                format!("{} does not exist", path.display()),
            ));
        }
        Ok(path)
    }

    pub fn stimuli(&self, field: &str, value: &Option<String>, fallback: &str) -> Result<Vec<SentenceStimulus>> {
        if let Some(name) = value.as_deref().and_then(|v| v.strip_prefix("builtin:")) {
            return builtin_stimuli(name)
                .ok_or_else(|| Error::config(format!("paths.{field}"), format!("unknown builtin list `{name}`")));
        }
        load_stimuli(&self.input(field, value, Some(fallback))?)
    }

    pub fn atlas(&self, sensors: usize) -> Result<RegionAtlas> {
        let atlas = match self.config.paths.atlas.as_deref() {
            Some("builtin:example-306") => RegionAtlas::example_306(),
            Some("builtin:synthetic") => RegionAtlas::synthetic(sensors),
            Some(v) if v.starts_with("builtin:") => {
                return Err(Error::config("paths.atlas", format!("unknown builtin atlas `{v}`")));
            }
            _ => RegionAtlas::load(&self.input("atlas", &self.config.paths.atlas, None)?)?,
        };
        if atlas.sensors() != sensors {
            return Err(Error::config(
                "paths.atlas",
                format!("atlas covers {} sensors but responses have {sensors}", atlas.sensors()),
            ));
        }
        Ok(atlas)
    }
}

pub fn builtin_stimuli(name: &str) -> Option<Vec<SentenceStimulus>> {
    match name {
        "passact2" => Some(builtin::passact2()),
        "passact2-generated" => Some(builtin::passact2_generated()),
        "krns2" => Some(builtin::krns2()),
        _ => None,
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        if self.eval.k < 2 {
            return Err(Error::config("eval.k", "must be at least 2"));
        }
        if self.sensitivity.k < 2 {
            return Err(Error::config("sensitivity.k", "must be at least 2"));
        }
        if self.augment.k < 2 {
            return Err(Error::config("augment.k", "must be at least 2"));
        }
        LambdaGrid::new(self.eval.lambdas.clone()).map_err(|e| Error::config("eval.lambdas", e.to_string()))?;
        for s in &self.eval.subsets {
            s.parse::<crate::eval::Subset>()
                .map_err(|e| Error::config("eval.subsets", e.to_string()))?;
        }
        for r in &self.eval.regions {
            r.parse::<crate::data::RegionSelector>()
                .map_err(|e| Error::config("eval.regions", e.to_string()))?;
        }
        if !(self.prep.window_ms > 0.0) {
            return Err(Error::config("prep.window_ms", "must be positive"));
        }
        if !(self.augment.synthetic_weight > 0.0 && self.augment.synthetic_weight.is_finite()) {
            return Err(Error::config("augment.synthetic_weight", "must be positive"));
        }
        let s = &self.simulate;
        if s.sensors == 0 || s.windows == 0 || s.lexicon_dim == 0 || s.samples_per_window == 0 {
            return Err(Error::config("simulate", "dimensions must be positive"));
        }
        if s.repetitions == 0 {
            return Err(Error::config("simulate.repetitions", "must be at least 1"));
        }
        if !(s.noise_sigma >= 0.0 && s.noise_sigma.is_finite()) {
            return Err(Error::config("simulate.noise_sigma", "must be >= 0"));
        }
        if !(s.sample_rate > 0.0) {
            return Err(Error::config("simulate.sample_rate", "must be positive"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, with `threads` and `out` cleared.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.threads = 0;
        c.out = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
