//! Experiment configuration: one strict JSON file drives every CLI run.
//!
//! Unknown keys are rejected so typos fail before any computation. Every
//! run echoes the resolved config next to its outputs for provenance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::Optimizer;
use crate::error::{Error, Result};
use crate::game::{AdversarialGame, DetectorStrategy, GameSpec, GeneratorStrategy};
use crate::oracle::embed::{Embedder, ExternalEmbedder, HashedBagEmbedder};
use crate::oracle::{LabelingMode, Oracle, OracleThresholds};
use crate::regularization::{DetectorRegWeighting, RegularizationConfig};
use crate::rl::PPOConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game: Option<GameBlock>,
    #[serde(default)]
    pub regularization: RegBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub optimizer: OptimizerBlock,
    #[serde(default)]
    pub ppo: PPOConfig,
    #[serde(default)]
    pub oracle: OracleBlock,
    /// Corpus path for curriculum runs (JSONL of gold steps).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// Alternation rounds for train/curriculum runs.
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_rounds() -> usize {
    100
}

impl ExperimentConfig {
    /// Strict parse; also checks that referenced files exist, resolving
    /// relative paths against the config file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("config {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidArgument(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_str_strict(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) -> Result<()> {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
            // Canonical absolute paths make the echoed config re-runnable
            // from any working directory.
            if let Ok(canon) = p.canonicalize() {
                *p = canon;
            }
        };
        if let Some(f) = self.game.as_mut().and_then(|g| g.file.as_mut()) {
            resolve(f);
            if !f.exists() {
                return Err(Error::Io(format!("game file {} does not exist", f.display())));
            }
        }
        if let EmbedderSpec::File { file } = &mut self.oracle.embedder {
            resolve(file);
            if !file.exists() {
                return Err(Error::Io(format!(
                    "embedding file {} does not exist",
                    file.display()
                )));
            }
        }
        if let Some(c) = self.corpus.as_mut() {
            resolve(c);
            if !c.exists() {
                return Err(Error::Io(format!("corpus {} does not exist", c.display())));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(game) = &self.game {
            game.validate()?;
        }
        self.oracle.thresholds.validate()?;
        self.ppo.validate()?;
        self.optimizer.validate()?;
        self.solver.validate()?;
        Ok(())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Game source: exactly one of a definition file, the built-in random
/// generator, or the unregularized bilinear toy.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated: Option<GameSpec>,
    #[serde(default)]
    pub bilinear_toy: bool,
}

pub enum LoadedGame {
    Game {
        game: AdversarialGame,
        warning: Option<String>,
    },
    BilinearToy,
}

impl GameBlock {
    fn validate(&self) -> Result<()> {
        let sources =
            usize::from(self.file.is_some()) + usize::from(self.generated.is_some()) + usize::from(self.bilinear_toy);
        if sources != 1 {
            return Err(Error::InvalidArgument(
                "game block must specify exactly one of file, generated, bilinear_toy".into(),
            ));
        }
        Ok(())
    }

    pub fn load(&self) -> Result<LoadedGame> {
        if self.bilinear_toy {
            return Ok(LoadedGame::BilinearToy);
        }
        if let Some(path) = &self.file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Io(format!("game file {}: {e}", path.display())))?;
            let (game, warning) = AdversarialGame::from_json(&text)?;
            return Ok(LoadedGame::Game { game, warning });
        }
        if let Some(spec) = &self.generated {
            return Ok(LoadedGame::Game {
                game: AdversarialGame::generate(spec)?,
                warning: None,
            });
        }
        Err(Error::InvalidArgument("empty game block".into()))
    }
}

/// Reference policy spec: the string "uniform" or explicit rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeneratorRefSpec {
    Named(String),
    Rows(Vec<Vec<f64>>),
}

impl Default for GeneratorRefSpec {
    fn default() -> Self {
        GeneratorRefSpec::Named("uniform".into())
    }
}

/// Detector reference: a single probability applied everywhere or
/// explicit rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DetectorRefSpec {
    Value(f64),
    Rows(Vec<Vec<f64>>),
}

impl Default for DetectorRefSpec {
    fn default() -> Self {
        DetectorRefSpec::Value(0.5)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegBlock {
    pub tau: f64,
    pub c_h: f64,
    pub generator_reference: GeneratorRefSpec,
    pub detector_reference: DetectorRefSpec,
    pub detector_weighting: DetectorRegWeighting,
    /// Best-response damping for the fixed-point solver (1 = pure BR).
    pub damping: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector_tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector_c_h: Option<f64>,
}

impl Default for RegBlock {
    fn default() -> Self {
        RegBlock {
            tau: 0.01,
            c_h: 0.01,
            generator_reference: GeneratorRefSpec::default(),
            detector_reference: DetectorRefSpec::default(),
            detector_weighting: DetectorRegWeighting::default(),
            damping: 1.0,
            detector_tau: None,
            detector_c_h: None,
        }
    }
}

impl RegBlock {
    pub fn build(&self, game: &AdversarialGame) -> Result<RegularizationConfig> {
        let generator_reference = match &self.generator_reference {
            GeneratorRefSpec::Named(n) if n == "uniform" => GeneratorStrategy::uniform(game),
            GeneratorRefSpec::Named(other) => {
                return Err(Error::InvalidArgument(format!(
                    "unknown generator reference '{other}' (expected \"uniform\" or rows)"
                )))
            }
            GeneratorRefSpec::Rows(rows) => GeneratorStrategy::new(rows.clone())?,
        };
        let detector_reference = match &self.detector_reference {
            DetectorRefSpec::Value(q) => DetectorStrategy::constant(game, *q)?,
            DetectorRefSpec::Rows(rows) => DetectorStrategy::new(rows.clone())?,
        };
        let mut reg =
            RegularizationConfig::new(self.tau, self.c_h, generator_reference, detector_reference)?;
        reg.detector_weighting = self.detector_weighting;
        reg.detector_tau = self.detector_tau;
        reg.detector_c_h = self.detector_c_h;
        reg.validate_for(game)?;
        Ok(reg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        SolverBlock {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

impl SolverBlock {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter < 1 {
            return Err(Error::InvalidArgument("solver tol/max_iter invalid".into()));
        }
        Ok(())
    }
}

/// Step size: the literal "auto" resolves to min(eta_cap, mu/L^2) from
/// the probes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSpec {
    Named(String),
    Value(f64),
}

impl Default for EtaSpec {
    fn default() -> Self {
        EtaSpec::Named("auto".into())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerBlock {
    pub name: Optimizer,
    pub eta: EtaSpec,
    pub t: usize,
    pub burn_in: usize,
    pub eta_cap: f64,
    pub probe_samples: usize,
    pub p_floor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_tol: Option<f64>,
    pub record_iterates: bool,
    /// Residual threshold deciding the report's `converged` flag.
    pub residual_tol: f64,
}

impl Default for OptimizerBlock {
    fn default() -> Self {
        OptimizerBlock {
            name: Optimizer::Ogda,
            eta: EtaSpec::default(),
            t: 5000,
            burn_in: 50,
            eta_cap: 0.1,
            probe_samples: 200,
            p_floor: 1e-3,
            stop_tol: None,
            record_iterates: false,
            residual_tol: 1e-8,
        }
    }
}

impl OptimizerBlock {
    fn validate(&self) -> Result<()> {
        if self.t < 1 {
            return Err(Error::InvalidArgument("optimizer t must be >= 1".into()));
        }
        if let EtaSpec::Named(n) = &self.eta {
            if n != "auto" {
                return Err(Error::InvalidArgument(format!(
                    "eta must be a number or \"auto\", got '{n}'"
                )));
            }
        }
        if let EtaSpec::Value(v) = &self.eta {
            if !(v > &0.0) {
                return Err(Error::InvalidArgument("eta must be > 0".into()));
            }
        }
        if !(self.p_floor > 0.0 && self.p_floor < 0.5) {
            return Err(Error::InvalidArgument("p_floor must be in (0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Oracle embedder spec: the default hashed bag or an external file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EmbedderSpec {
    Named(String),
    File { file: PathBuf },
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::Named("hashed-bag".into())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleBlock {
    pub thresholds: OracleThresholds,
    pub mode: LabelingMode,
    pub embedder: EmbedderSpec,
}

impl OracleBlock {
    pub fn build(&self) -> Result<Oracle> {
        let embedder: Box<dyn Embedder> = match &self.embedder {
            EmbedderSpec::Named(n) if n == "hashed-bag" => {
                Box::new(HashedBagEmbedder::default())
            }
            EmbedderSpec::Named(other) => {
                return Err(Error::InvalidArgument(format!(
                    "unknown embedder '{other}' (expected \"hashed-bag\" or {{\"file\": path}})"
                )))
            }
            EmbedderSpec::File { file } => Box::new(ExternalEmbedder::from_json_file(file)?),
        };
        Oracle::new(self.thresholds, embedder, self.mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_parsing_rejects_unknown_keys() {
        let bad = r#"{"game": {"generated": {"contexts": 1, "actions_per_context": 4, "seed": 0}}, "regularizaton": {}}"#;
        assert!(ExperimentConfig::from_str_strict(bad).is_err());
        let bad_nested = r#"{"game": {"generated": {"contexts": 1, "actions_per_context": 4, "seed": 0}}, "regularization": {"tua": 0.5}}"#;
        assert!(ExperimentConfig::from_str_strict(bad_nested).is_err());
    }

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let cfg = ExperimentConfig::from_str_strict(
            r#"{"game": {"generated": {"contexts": 1, "actions_per_context": 4, "seed": 0}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.regularization.tau, 0.01);
        assert_eq!(cfg.regularization.c_h, 0.01);
        assert_eq!(cfg.ppo.clip, 0.2);
        assert_eq!(cfg.ppo.gamma, 0.99);
        assert_eq!(cfg.ppo.lambda_gae, 0.95);
        assert_eq!(cfg.ppo.mini_epochs, 2);
        assert_eq!(cfg.ppo.steps_per_player, 5);
    }

    #[test]
    fn game_block_requires_exactly_one_source() {
        let none = r#"{"game": {}}"#;
        assert!(ExperimentConfig::from_str_strict(none).is_err());
        let both = r#"{"game": {"bilinear_toy": true, "generated": {"contexts": 1, "actions_per_context": 2, "seed": 0}}}"#;
        assert!(ExperimentConfig::from_str_strict(both).is_err());
    }

    #[test]
    fn config_roundtrip_is_stable() {
        let cfg = ExperimentConfig::from_str_strict(
            r#"{"game": {"generated": {"contexts": 2, "actions_per_context": 3, "seed": 7}},
                "regularization": {"tau": 0.5, "c_h": 0.1},
                "optimizer": {"name": "ogda", "eta": "auto", "t": 1000},
                "seed": 42}"#,
        )
        .unwrap();
        let json = cfg.to_json_pretty();
        let cfg2 = ExperimentConfig::from_str_strict(&json).unwrap();
        assert_eq!(json, cfg2.to_json_pretty());
    }
}
