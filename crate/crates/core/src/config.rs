//! TOML experiment configuration, its validation, and stage digests.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::attacks::ensemble::EnsembleConfig;
use crate::attacks::lira::VarianceMode;
use crate::attacks::rmia::{self, RmiaConfig};
use crate::dts::DtsArch;
use crate::error::{Error, Result};
use crate::forecast::ForecasterConfig;
use crate::seed::digest_hex;
use crate::series::{SplitSizes, SyntheticPopulationConfig};
use crate::shadow::AttackMode;
use crate::signals::{Embedder, FlattenEmbedder, SignalId, SignalOptions, SignalSet, SummaryEmbedder};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SyntheticPopulationConfig),
    Csv { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Windowing {
    pub lookback: usize,
    pub horizon: usize,
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub aux: usize,
    /// Use scale 1 for a variable whose training IQR is zero instead of
    /// failing.
    #[serde(default)]
    pub unit_scale_fallback: bool,
}

impl SplitConfig {
    pub fn sizes(&self) -> SplitSizes {
        SplitSizes {
            train: self.train,
            val: self.val,
            test: self.test,
            aux: self.aux,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowConfig {
    pub count: usize,
    pub modes: Vec<AttackMode>,
    pub offline_fraction: f64,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        ShadowConfig {
            count: 64,
            modes: vec![AttackMode::Online, AttackMode::Offline],
            offline_fraction: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Summary,
    Flatten,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub set: SignalSet,
    pub trend_degree: usize,
    pub embedder: EmbedderKind,
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig {
            set: SignalSet::all(),
            trend_degree: 1,
            embedder: EmbedderKind::Summary,
        }
    }
}

impl SignalConfig {
    pub fn options(&self) -> SignalOptions {
        let embedder: Arc<dyn Embedder> = match self.embedder {
            EmbedderKind::Summary => Arc::new(SummaryEmbedder),
            EmbedderKind::Flatten => Arc::new(FlattenEmbedder),
        };
        SignalOptions {
            trend_degree: self.trend_degree,
            embedder,
        }
    }
}

fn both_modes() -> Vec<AttackMode> {
    vec![AttackMode::Online, AttackMode::Offline]
}

fn multi_signals() -> SignalSet {
    SignalSet::new([
        SignalId::Mse,
        SignalId::Mae,
        SignalId::Rsmape,
        SignalId::Trend,
        SignalId::Seasonality,
        SignalId::Embedding,
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiraSpec {
    pub signals: SignalSet,
    pub modes: Vec<AttackMode>,
    pub variance: VarianceMode,
}

impl Default for LiraSpec {
    fn default() -> Self {
        LiraSpec {
            signals: multi_signals(),
            modes: both_modes(),
            variance: VarianceMode::PerExample,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmiaSpec {
    pub signal: SignalId,
    pub modes: Vec<AttackMode>,
    pub gamma: f64,
    pub alpha: f64,
    pub population_size: usize,
}

impl Default for RmiaSpec {
    fn default() -> Self {
        let d = RmiaConfig::default();
        RmiaSpec {
            signal: SignalId::Mse,
            modes: both_modes(),
            gamma: d.gamma,
            alpha: d.alpha,
            population_size: d.population_size,
        }
    }
}

impl RmiaSpec {
    pub fn config(&self, mode: AttackMode) -> RmiaConfig {
        RmiaConfig {
            gamma: self.gamma,
            alpha: self.alpha,
            mode,
            population_size: self.population_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSpec {
    pub signals: SignalSet,
    pub executions: usize,
    pub repetitions: usize,
    pub subset_size: usize,
    pub combinations: usize,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        let d = EnsembleConfig::default();
        EnsembleSpec {
            signals: multi_signals(),
            executions: d.executions,
            repetitions: d.repetitions,
            subset_size: d.subset_size,
            combinations: d.combinations,
        }
    }
}

impl EnsembleSpec {
    pub fn config(&self) -> EnsembleConfig {
        EnsembleConfig {
            executions: self.executions,
            repetitions: self.repetitions,
            subset_size: self.subset_size,
            combinations: self.combinations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtsSpec {
    pub modes: Vec<AttackMode>,
    /// Fraction of source records each shadow contributes.
    pub fraction: f64,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub validation_fraction: f64,
}

impl Default for DtsSpec {
    fn default() -> Self {
        let a = DtsArch::default();
        DtsSpec {
            modes: both_modes(),
            fraction: 0.1,
            hidden: a.hidden,
            learning_rate: a.learning_rate,
            max_epochs: a.max_epochs,
            patience: a.patience,
            batch_size: a.batch_size,
            validation_fraction: a.validation_fraction,
        }
    }
}

impl DtsSpec {
    pub fn arch(&self) -> DtsArch {
        DtsArch {
            hidden: self.hidden.clone(),
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            patience: self.patience,
            batch_size: self.batch_size,
            validation_fraction: self.validation_fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AttackSpec {
    Lira(LiraSpec),
    Rmia(RmiaSpec),
    Ensemble(EnsembleSpec),
    Dts(DtsSpec),
}

impl AttackSpec {
    /// Report name before the mode suffix.
    pub fn name(&self) -> String {
        match self {
            AttackSpec::Lira(s) => match s.signals.ids() {
                [one] => format!("lira-{one}"),
                _ => "lira-multi".to_string(),
            },
            AttackSpec::Rmia(s) => format!("rmia-{}", s.signal),
            AttackSpec::Ensemble(_) => "ensemble-simplified".to_string(),
            AttackSpec::Dts(_) => "dts".to_string(),
        }
    }

    /// Modes the attack runs in; `None` for attacks that use no shadows.
    pub fn modes(&self) -> Vec<Option<AttackMode>> {
        match self {
            AttackSpec::Lira(s) => s.modes.iter().copied().map(Some).collect(),
            AttackSpec::Rmia(s) => s.modes.iter().copied().map(Some).collect(),
            AttackSpec::Ensemble(_) => vec![None],
            AttackSpec::Dts(s) => s.modes.iter().copied().map(Some).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    pub samples_per_class: usize,
    /// Records per user in the user game; all when absent.
    pub user_records: Option<usize>,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            samples_per_class: 200,
            user_records: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub data: DataSource,
    pub windowing: Windowing,
    pub split: SplitConfig,
    #[serde(default)]
    pub forecaster: ForecasterConfig,
    #[serde(default)]
    pub shadows: ShadowConfig,
    #[serde(default)]
    pub signals: SignalConfig,
    pub attacks: Vec<AttackSpec>,
    #[serde(default)]
    pub game: GameConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn check_modes(name: &str, modes: &[AttackMode], shadows: &ShadowConfig) -> Result<()> {
    if modes.is_empty() {
        return Err(Error::Config(format!("attack {name} lists no modes")));
    }
    for m in modes {
        if !shadows.modes.contains(m) {
            return Err(Error::Config(format!("attack {name} runs {m} but no {m} shadows are planned")));
        }
    }
    Ok(())
}

fn check_signals(name: &str, wanted: &SignalSet, computed: &SignalSet) -> Result<()> {
    if wanted.is_empty() {
        return Err(Error::Config(format!("attack {name} lists no signals")));
    }
    if !computed.contains_all(wanted) {
        return Err(Error::Config(format!(
            "attack {name} uses signals outside the configured set"
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative CSV paths are taken from the config file's directory.
        if let (DataSource::Csv { path: p }, Some(dir)) = (&mut cfg.data, path.parent()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks everything that can be checked without data. Seeds may be
    /// empty here; the run checks them after command-line additions.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        match &self.data {
            DataSource::Synthetic(s) => {
                s.validate().map_err(|e| Error::Config(e.to_string()))?;
                if self.split.sizes().total() > s.users {
                    return Err(Error::Config(format!(
                        "split needs {} users, population has {}",
                        self.split.sizes().total(),
                        s.users
                    )));
                }
            }
            DataSource::Csv { .. } => {}
        }
        let w = &self.windowing;
        if w.lookback == 0 || w.horizon == 0 || w.stride == 0 {
            return Err(Error::Config("lookback, horizon and stride must be at least 1".into()));
        }
        if self.split.train == 0 || self.split.test == 0 {
            return Err(Error::Config("split needs train and test users".into()));
        }
        if self.forecaster.early_stopping && self.split.val == 0 {
            return Err(Error::Config("early stopping needs validation users".into()));
        }
        self.forecaster
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let sh = &self.shadows;
        if sh.count < 2 {
            return Err(Error::Config("at least 2 shadow models are required".into()));
        }
        if sh.modes.is_empty() {
            return Err(Error::Config("no shadow modes configured".into()));
        }
        if !(sh.offline_fraction > 0.0 && sh.offline_fraction <= 1.0) {
            return Err(Error::Config("offline_fraction must lie in (0, 1]".into()));
        }
        if sh.modes.contains(&AttackMode::Offline) && self.split.aux == 0 {
            return Err(Error::Config("offline shadows need auxiliary users".into()));
        }
        if self.signals.set.is_empty() {
            return Err(Error::Config("signal set is empty".into()));
        }
        if self.signals.set.ids().contains(&SignalId::Trend) && w.horizon <= self.signals.trend_degree {
            return Err(Error::Config(format!(
                "trend degree {} needs a horizon above it, got {}",
                self.signals.trend_degree, w.horizon
            )));
        }
        if self.attacks.is_empty() {
            return Err(Error::Config("no attacks configured".into()));
        }
        for a in &self.attacks {
            let name = a.name();
            match a {
                AttackSpec::Lira(s) => {
                    check_signals(&name, &s.signals, &self.signals.set)?;
                    check_modes(&name, &s.modes, sh)?;
                }
                AttackSpec::Rmia(s) => {
                    rmia::check_signal(s.signal)?;
                    check_signals(&name, &SignalSet::new([s.signal]), &self.signals.set)?;
                    check_modes(&name, &s.modes, sh)?;
                    s.config(AttackMode::Online).validate()?;
                    if self.split.aux == 0 {
                        return Err(Error::Config("rmia draws its population from auxiliary users".into()));
                    }
                }
                AttackSpec::Ensemble(s) => {
                    check_signals(&name, &s.signals, &self.signals.set)?;
                    s.config().validate()?;
                }
                AttackSpec::Dts(s) => {
                    check_modes(&name, &s.modes, sh)?;
                    if !(s.fraction > 0.0 && s.fraction <= 1.0) {
                        return Err(Error::Config("dts fraction must lie in (0, 1]".into()));
                    }
                    s.arch().validate()?;
                }
            }
        }
        if self.game.samples_per_class == 0 || self.game.user_records == Some(0) {
            return Err(Error::Config("game sample counts must be at least 1".into()));
        }
        Ok(())
    }

    /// Digest of everything that shapes results, leaving out seeds and the
    /// output location.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.seeds.clear();
        c.output_dir = PathBuf::new();
        digest_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }

    /// Digest of the inputs a trained target depends on.
    pub fn target_digest(&self) -> String {
        let key = (&self.data, &self.windowing, &self.split, &self.forecaster);
        digest_hex(serde_json::to_string(&key).expect("config serializes").as_bytes())
    }

    /// Digest of the inputs a shadow ensemble depends on.
    pub fn shadow_digest(&self, mode: AttackMode) -> String {
        let key = (self.target_digest(), self.shadows.count, mode, self.shadows.offline_fraction);
        digest_hex(serde_json::to_string(&key).expect("config serializes").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
schema_version = 1
seeds = [1]

[data]
source = "synthetic"
users = 12
length = 300

[windowing]
lookback = 20
horizon = 5
stride = 2

[split]
train = 3
val = 2
test = 3
aux = 4

[shadows]
count = 4

[[attacks]]
kind = "lira"

[[attacks]]
kind = "rmia"
signal = "mae"
"#;

    #[test]
    fn parses_and_fills_defaults() {
        let c = ExperimentConfig::from_toml(SMALL).unwrap();
        assert_eq!(c.forecaster, ForecasterConfig::default());
        assert_eq!(c.windowing.stride, 2);
        assert_eq!(c.attacks.len(), 2);
        assert_eq!(c.attacks[0].name(), "lira-multi");
        assert_eq!(c.attacks[1].name(), "rmia-mae");
        match &c.data {
            DataSource::Synthetic(s) => assert_eq!((s.users, s.length), (12, 300)),
            _ => unreachable!(),
        }
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let cases = [
            SMALL.replace("kind = \"lira\"", "kind = \"lira2\""),
            SMALL.replace("signal = \"mae\"", "signal = \"rsmape\""),
            SMALL.replace("schema_version = 1", "schema_version = 2"),
            SMALL.replace("aux = 4", "aux = 40"),
            SMALL.replace("count = 4", "count = 4\nmodes = [\"online\"]\nextra = 1"),
            SMALL.replace("count = 4", "count = 1"),
            SMALL.replace("stride = 2", "stride = 0"),
            SMALL.replace("[shadows]\ncount = 4", "[shadows]\ncount = 4\nmodes = [\"online\"]"),
            SMALL.replace("[shadows]", "[signals]\nset = [\"mse\"]\n\n[shadows]"),
            SMALL.replace("horizon = 5", "horizon = 1"),
            SMALL.replace("val = 2", "val = 0"),
            SMALL.replace("signal = \"mae\"", "signal = \"mae\"\ngamma = 0.0"),
        ];
        for (i, text) in cases.iter().enumerate() {
            assert!(
                matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))),
                "case {i} accepted"
            );
        }
    }

    #[test]
    fn digest_ignores_seeds_and_output() {
        let a = ExperimentConfig::from_toml(SMALL).unwrap();
        let mut b = a.clone();
        b.seeds = vec![7, 8];
        b.output_dir = "elsewhere".into();
        assert_eq!(a.digest(), b.digest());
        b.shadows.count = 5;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.target_digest(), b.target_digest());
        assert_ne!(a.shadow_digest(AttackMode::Online), b.shadow_digest(AttackMode::Online));
    }
}
