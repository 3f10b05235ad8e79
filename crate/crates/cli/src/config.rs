//! Flat `key=value` run configuration: model, training and I/O keys in one
//! namespace. Later sources override earlier ones; unknown keys are errors.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mrfe_core::data::{synthetic_label_names, LabelMapping};
use mrfe_core::model::config::parse_value;
use mrfe_core::train::TrainConfig;
use mrfe_core::ModelConfig;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim() {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(CliError::Usage(format!("precision must be f32 or f64, got `{other}`"))),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

/// I/O and harness keys and their defaults, in listing order.
pub const RUN_KEYS: &[(&str, &str)] = &[
    ("data", ""),
    ("text_column", "text"),
    ("label_column", "label"),
    ("labels", "auto"),
    ("embeddings", ""),
    ("paraphrases", ""),
    ("lexicon", ""),
    ("model", ""),
    ("out", "runs"),
    ("precision", "f32"),
    ("synthetic_n", "1000"),
    ("runs", "100"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Input CSV; the built-in synthetic corpus when unset.
    pub data: Option<PathBuf>,
    pub text_column: String,
    pub label_column: String,
    /// `auto`, a preset (`twitter`, `yelp`, `amazon`, ...) or comma-separated names.
    pub labels: String,
    /// Contextual embedding file; switches the model to contextual input.
    pub embeddings: Option<PathBuf>,
    pub paraphrases: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    /// Saved model directory for `evaluate` and `bench`.
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    pub precision: Precision,
    /// Samples per class of the synthetic corpus.
    pub synthetic_n: usize,
    /// Timed predictions for `bench`.
    pub runs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::with_model(ModelConfig::default())
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    let v = v.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Defaults with `model` as the model section.
    pub fn with_model(model: ModelConfig) -> Self {
        let mut cfg = RunConfig {
            model,
            train: TrainConfig::default(),
            data: None,
            text_column: String::new(),
            label_column: String::new(),
            labels: String::new(),
            embeddings: None,
            paraphrases: None,
            lexicon: None,
            checkpoint: None,
            out: PathBuf::new(),
            precision: Precision::F32,
            synthetic_n: 0,
            runs: 0,
        };
        for (k, v) in RUN_KEYS {
            cfg.set(k, v).expect("run key defaults parse");
        }
        cfg
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if self.model.set(key, value)? || self.train.set(key, value)? {
            return Ok(());
        }
        let v = value.trim();
        match key {
            "data" => self.data = opt_path(v),
            "text_column" => self.text_column = v.to_string(),
            "label_column" => self.label_column = v.to_string(),
            "labels" => self.labels = v.to_string(),
            "embeddings" => self.embeddings = opt_path(v),
            "paraphrases" => self.paraphrases = opt_path(v),
            "lexicon" => self.lexicon = opt_path(v),
            "model" => self.checkpoint = opt_path(v),
            "out" => self.out = PathBuf::from(v),
            "precision" => self.precision = v.parse()?,
            "synthetic_n" => self.synthetic_n = parse_value(key, v)?,
            "runs" => self.runs = parse_value(key, v)?,
            _ => return Err(CliError::Usage(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected key=value, got `{line}`", i + 1)))?;
            self.set(k.trim(), v).map_err(|e| CliError::Usage(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = self
            .model
            .to_pairs()
            .into_iter()
            .chain(self.train.to_pairs())
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let run = [
            ("data", show(&self.data)),
            ("text_column", self.text_column.clone()),
            ("label_column", self.label_column.clone()),
            ("labels", self.labels.clone()),
            ("embeddings", show(&self.embeddings)),
            ("paraphrases", show(&self.paraphrases)),
            ("lexicon", show(&self.lexicon)),
            ("model", show(&self.checkpoint)),
            ("out", self.out.display().to_string()),
            ("precision", self.precision.to_string()),
            ("synthetic_n", self.synthetic_n.to_string()),
            ("runs", self.runs.to_string()),
        ];
        out.extend(run.into_iter().map(|(k, v)| (k.to_string(), v)));
        out
    }

    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.train.validate()?;
        if self.runs == 0 || self.synthetic_n == 0 {
            return Err(CliError::Usage("runs and synthetic_n must be positive".into()));
        }
        Ok(())
    }

    pub fn label_mapping(&self) -> LabelMapping {
        match self.labels.as_str() {
            "auto" => LabelMapping::Names(synthetic_label_names(self.model.classes)),
            s => LabelMapping::preset(s)
                .unwrap_or_else(|| LabelMapping::Names(s.split(',').map(|n| n.trim().to_string()).collect())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_round_trips() {
        let cfg = RunConfig::default();
        let mut back = RunConfig::with_model(ModelConfig {
            d: 3,
            ..ModelConfig::default()
        });
        back.runs = 1;
        back.apply_text(&cfg.to_text(), "t").unwrap();
        assert_eq!(back, cfg);
        let keys: Vec<String> = cfg.pairs().into_iter().map(|(k, _)| k).collect();
        for (k, _) in RUN_KEYS {
            assert!(keys.iter().any(|x| x == k), "{k}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut cfg = RunConfig::default();
        let e = cfg.apply_text("epochs=3\nwidth=9\n", "f").unwrap_err();
        assert!(e.to_string().contains("f:2"), "{e}");
        assert!(cfg.apply_text("just words", "f").is_err());
        assert!(cfg.set("precision", "f16").is_err());
    }

    #[test]
    fn label_mappings() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.label_mapping().label_names(), ["negative", "positive"]);
        cfg.set("labels", "yelp").unwrap();
        assert_eq!(cfg.label_mapping(), LabelMapping::Stars5);
        cfg.set("labels", "bad, good").unwrap();
        assert_eq!(cfg.label_mapping().label_names(), ["bad", "good"]);
    }
}
