//! Configuration files and flag overrides.
//!
//! Precedence is flags, then the TOML file, then built-in defaults.

use std::path::Path;

use prefixopt::eval::{EvalConfig, EvalMode};
use prefixopt::qfunc::ModelConfig;
use prefixopt::train::{SAConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable overriding the external evaluator command.
pub const EVALUATOR_ENV: &str = "PREFIXOPT_EVALUATOR";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub eval: EvalConfig,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub anneal: SAConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Applies the evaluator command from the environment, if set.
pub fn apply_evaluator_env(eval: &mut EvalConfig) {
    if let Ok(cmd) = std::env::var(EVALUATOR_ENV) {
        let parts: Vec<String> = cmd.split_whitespace().map(String::from).collect();
        if !parts.is_empty() {
            eval.command = parts;
        }
    }
}

pub fn parse_mode(s: &str) -> Result<EvalMode, String> {
    match s {
        "analytical" => Ok(EvalMode::Analytical),
        "external" => Ok(EvalMode::External),
        _ => Err(format!("unknown mode `{s}` (expected analytical or external)")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_sections() {
        let cfg: FileConfig = toml::from_str(
            r#"
            [eval]
            mode = "external"
            delay_targets = [0.3, 0.5]
            command = ["synth", "--fast"]

            [train]
            n = 6
            total_steps = 500
            w = { w_area = 0.25, w_delay = 0.75 }

            [model]
            kind = "tabular"
            alpha = 0.2
            "#,
        )
        .unwrap();
        assert_eq!(cfg.eval.mode, EvalMode::External);
        assert_eq!(cfg.train.n, 6);
        assert_eq!(cfg.train.gamma, 0.75);
        assert_eq!(cfg.model, ModelConfig::Tabular { alpha: 0.2 });
        assert_eq!(cfg.anneal, SAConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<FileConfig>("[train]\nbogus = 1\n").is_err());
        assert!(toml::from_str::<FileConfig>("[nope]\n").is_err());
    }
}
