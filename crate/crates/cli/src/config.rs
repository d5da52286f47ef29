//! Line-oriented `key = value` configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a default, and
//! overrides given on the command line are applied after the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use textstrat_core::eval::{SweepAxis, TextSource};
use textstrat_core::features::PsiMask;
use textstrat_core::model::SignMode;
use textstrat_core::search::{SearchConfig, Variant};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: cannot parse `{value}` as {expected}")]
    Type {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("cannot read config {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("override `{0}` is not of the form key=value")]
    Override(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub search: SearchConfig,
    /// Empty paths mean the bundled files.
    pub manual_path: Option<PathBuf>,
    pub distractors_path: Option<PathBuf>,
    pub vocabulary_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub seed: u64,
    pub seeds: Vec<u64>,
    /// Arm names for `matrix`: variant names plus the ablation arms.
    pub variants: Vec<String>,
    pub text_source: TextSource,
    pub sweep_axis: SweepAxis,
    /// Empty means the axis defaults.
    pub sweep_values: Vec<f64>,
    pub record_seconds: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            search: SearchConfig::default(),
            manual_path: None,
            distractors_path: None,
            vocabulary_path: None,
            out_dir: PathBuf::from("out"),
            workers: 1,
            seed: 1,
            seeds: (1..=10).collect(),
            variants: vec!["full".into(), "game_only_linear".into()],
            text_source: TextSource::Manual,
            sweep_axis: SweepAxis::TextFraction,
            sweep_values: Vec::new(),
            record_seconds: false,
        }
    }
}

/// (key, meaning) for every accepted key, in `--help` and manifest order.
pub const KEYS: &[(&str, &str)] = &[
    ("width", "map width in tiles"),
    ("height", "map height in tiles"),
    ("turn_limit", "simulator turn limit"),
    ("land_fraction", "fraction of land tiles"),
    ("rollouts_per_step", "roll-outs per actual game step"),
    ("rollout_depth", "simulated steps per roll-out"),
    ("epsilon", "exploration rate inside roll-outs"),
    ("game_steps", "actual game steps per game"),
    ("alpha_w", "learning rate of the output weights"),
    ("alpha_u", "learning rate of the relevance weights"),
    ("alpha_v", "learning rate of the labeling weights"),
    ("sign_mode", "update sign: descent or paper_literal"),
    ("variant", "model variant for play and report"),
    ("text_cutoff_step", "step after which text is ignored, or none"),
    ("psi_mask", "labeling templates: all, no_dependency_info, no_dependency_label, no_parent_pos, no_parent_word"),
    ("seed_vocabulary", "use the seed vocabulary features"),
    ("manual_path", "manual corpus file, empty for bundled"),
    ("distractors_path", "distractor corpus file, empty for bundled"),
    ("vocabulary_path", "seed vocabulary file, empty for bundled"),
    ("out_dir", "output directory"),
    ("workers", "parallel workers for matrix and sweep"),
    ("seed", "game seed for play and report"),
    ("seeds", "seed list for matrix and sweep, e.g. 1..10 or 1,4,9"),
    ("variants", "comma-separated arms for matrix"),
    ("text_source", "manual or relevance_eval"),
    ("sweep_axis", "text_fraction, rollout_budget or text_cutoff"),
    ("sweep_values", "comma-separated sweep values, empty for the axis defaults"),
    ("record_seconds", "write wall-clock seconds to runs.csv (breaks byte-identical reruns)"),
];

fn bad(key: &str, value: &str, expected: &'static str) -> ConfigError {
    ConfigError::Type {
        key: key.into(),
        value: value.into(),
        expected,
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str, expected: &'static str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| bad(key, v, expected))
}

fn boolean(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(key, v, "a boolean")),
    }
}

fn path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

/// `a..b` (inclusive) or a comma list.
pub fn parse_seeds(key: &str, v: &str) -> Result<Vec<u64>, ConfigError> {
    if let Some((a, b)) = v.split_once("..") {
        let a: u64 = num(key, a.trim(), "a seed range")?;
        let b: u64 = num(key, b.trim(), "a seed range")?;
        if a > b {
            return Err(bad(key, v, "a seed range"));
        }
        return Ok((a..=b).collect());
    }
    let seeds: Vec<u64> = v
        .split(',')
        .map(|s| num(key, s.trim(), "a seed list"))
        .collect::<Result<_, _>>()?;
    Ok(seeds)
}

fn list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

pub fn psi_mask_name(m: PsiMask) -> &'static str {
    PSI_MASKS
        .iter()
        .find(|(_, x)| *x == m)
        .map_or("custom", |(n, _)| n)
}

const PSI_MASKS: [(&str, PsiMask); 5] = [
    ("all", PsiMask::ALL),
    ("no_dependency_info", PsiMask::NO_DEPENDENCY_INFO),
    ("no_dependency_label", PsiMask::NO_DEPENDENCY_LABEL),
    ("no_parent_pos", PsiMask::NO_PARENT_POS),
    ("no_parent_word", PsiMask::NO_PARENT_WORD),
];

fn fmt_list<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn fmt_seeds(seeds: &[u64]) -> String {
    let contiguous = seeds.windows(2).all(|w| w[1] == w[0] + 1);
    match (seeds.first(), seeds.last()) {
        (Some(a), Some(b)) if contiguous && seeds.len() > 1 => format!("{a}..{b}"),
        _ => fmt_list(seeds),
    }
}

fn fmt_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl Config {
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let s = &mut self.search;
        match key {
            "width" => s.game.width = num(key, v, "an integer")?,
            "height" => s.game.height = num(key, v, "an integer")?,
            "turn_limit" => s.game.turn_limit = num(key, v, "an integer")?,
            "land_fraction" => s.game.land_fraction = num(key, v, "a real")?,
            "rollouts_per_step" => s.rollouts_per_step = num(key, v, "an integer")?,
            "rollout_depth" => s.rollout_depth = num(key, v, "an integer")?,
            "epsilon" => s.epsilon = num(key, v, "a real")?,
            "game_steps" => s.game_steps = num(key, v, "an integer")?,
            "alpha_w" => s.alpha.alpha_w = num(key, v, "a real")?,
            "alpha_u" => s.alpha.alpha_u = num(key, v, "a real")?,
            "alpha_v" => s.alpha.alpha_v = num(key, v, "a real")?,
            "sign_mode" => {
                s.alpha.sign_mode = match v {
                    "descent" => SignMode::Descent,
                    "paper_literal" => SignMode::PaperLiteral,
                    _ => return Err(bad(key, v, "descent or paper_literal")),
                }
            }
            "variant" => {
                s.variant = Variant::from_name(v).ok_or_else(|| bad(key, v, "a variant name"))?
            }
            "text_cutoff_step" => {
                s.text_cutoff_step = match v {
                    "none" | "" => None,
                    _ => Some(num(key, v, "an integer or none")?),
                }
            }
            "psi_mask" => {
                s.psi_mask = PSI_MASKS
                    .iter()
                    .find(|(n, _)| *n == v)
                    .map(|(_, m)| *m)
                    .ok_or_else(|| bad(key, v, "a template mask name"))?
            }
            "seed_vocabulary" => s.seed_vocabulary = boolean(key, v)?,
            "manual_path" => self.manual_path = path(v),
            "distractors_path" => self.distractors_path = path(v),
            "vocabulary_path" => self.vocabulary_path = path(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "workers" => self.workers = num(key, v, "an integer")?,
            "seed" => self.seed = num(key, v, "an integer")?,
            "seeds" => self.seeds = parse_seeds(key, v)?,
            "variants" => self.variants = list(v),
            "text_source" => {
                self.text_source = match v {
                    "manual" => TextSource::Manual,
                    "relevance_eval" => TextSource::RelevanceEval,
                    _ => return Err(bad(key, v, "manual or relevance_eval")),
                }
            }
            "sweep_axis" => {
                self.sweep_axis =
                    SweepAxis::from_name(v).ok_or_else(|| bad(key, v, "a sweep axis"))?
            }
            "sweep_values" => {
                self.sweep_values = list(v)
                    .iter()
                    .map(|x| num(key, x, "a list of reals"))
                    .collect::<Result<_, _>>()?
            }
            "record_seconds" => self.record_seconds = boolean(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.search;
        Some(match key {
            "width" => s.game.width.to_string(),
            "height" => s.game.height.to_string(),
            "turn_limit" => s.game.turn_limit.to_string(),
            "land_fraction" => s.game.land_fraction.to_string(),
            "rollouts_per_step" => s.rollouts_per_step.to_string(),
            "rollout_depth" => s.rollout_depth.to_string(),
            "epsilon" => s.epsilon.to_string(),
            "game_steps" => s.game_steps.to_string(),
            "alpha_w" => s.alpha.alpha_w.to_string(),
            "alpha_u" => s.alpha.alpha_u.to_string(),
            "alpha_v" => s.alpha.alpha_v.to_string(),
            "sign_mode" => match s.alpha.sign_mode {
                SignMode::Descent => "descent".into(),
                SignMode::PaperLiteral => "paper_literal".into(),
            },
            "variant" => s.variant.name().into(),
            "text_cutoff_step" => s
                .text_cutoff_step
                .map_or_else(|| "none".into(), |c| c.to_string()),
            "psi_mask" => psi_mask_name(s.psi_mask).into(),
            "seed_vocabulary" => s.seed_vocabulary.to_string(),
            "manual_path" => fmt_path(&self.manual_path),
            "distractors_path" => fmt_path(&self.distractors_path),
            "vocabulary_path" => fmt_path(&self.vocabulary_path),
            "out_dir" => self.out_dir.display().to_string(),
            "workers" => self.workers.to_string(),
            "seed" => self.seed.to_string(),
            "seeds" => fmt_seeds(&self.seeds),
            "variants" => self.variants.join(","),
            "text_source" => match self.text_source {
                TextSource::RelevanceEval => "relevance_eval".into(),
                _ => "manual".into(),
            },
            "sweep_axis" => self.sweep_axis.name().into(),
            "sweep_values" => fmt_list(&self.sweep_values),
            "record_seconds" => self.record_seconds.to_string(),
            _ => return None,
        })
    }

    /// Every key in file format; parsing the result gives back this config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, _) in KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k).unwrap_or_default());
        }
        out
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                path: origin.into(),
                line: n + 1,
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }
}

/// Defaults, then the file at `path` if any, then `overrides` (`key=value`) in order.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<Config, ConfigError> {
    let mut cfg = Config::default();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Io {
            path: p.display().to_string(),
            msg: e.to_string(),
        })?;
        cfg.apply_text(&text, &p.display().to_string())?;
    }
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| ConfigError::Override(o.clone()))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

/// The key list with defaults, for `--help`.
pub fn keys_help() -> String {
    let d = Config::default();
    let mut out = String::from("Config keys (`key = value` in the config file, or --set key=value / --key value):\n");
    for (k, doc) in KEYS {
        let _ = writeln!(out, "  {k:<18} {doc} [default: {}]", d.get(k).unwrap_or_default());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_round_trips() {
        let d = Config::default();
        let mut c = Config::default();
        c.apply_text(&d.to_text(), "x").unwrap();
        assert_eq!(c, d);
        for (k, _) in KEYS {
            assert!(d.get(k).is_some(), "{k}");
        }
    }

    #[test]
    fn defaults_use_the_fixed_rate() {
        let c = Config::default();
        assert_eq!(c.search.alpha.alpha_w, 1e-4);
        assert_eq!(c.search.alpha.alpha_u, 1e-4);
        assert_eq!(c.search.alpha.alpha_v, 1e-4);
    }

    #[test]
    fn seeds_forms() {
        assert_eq!(parse_seeds("s", "1..3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("s", "4,9").unwrap(), vec![4, 9]);
        assert!(parse_seeds("s", "3..1").is_err());
        assert_eq!(fmt_seeds(&[1, 2, 3]), "1..3");
        assert_eq!(fmt_seeds(&[4, 9]), "4,9");
    }

    #[test]
    fn syntax_error_names_line() {
        let mut c = Config::default();
        assert_eq!(
            c.apply_text("# ok\nepsilon 0.3", "f"),
            Err(ConfigError::Syntax {
                path: "f".into(),
                line: 2
            })
        );
    }
}
