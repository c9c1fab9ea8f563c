//! Model and training settings: preset, then `key = value` file, then flags.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use stylehan::experiments::ExperimentSettings;
use stylehan::model::{Mode, ModelConfig};
use stylehan::trainer::TrainConfig;

/// A problem with how the program was invoked; exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, Args)]
pub struct SettingsArgs {
    /// Hyperparameter preset: ccat, blogs, desk or tiny.
    #[arg(long, default_value = "desk")]
    pub preset: String,
    /// Flat `key = value` file applied over the preset; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    /// 2 for the squared L2 penalty, 1 for the plain norm.
    #[arg(long)]
    pub l2_power: Option<u8>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub vocab_limit: Option<usize>,
    #[arg(long)]
    pub sentences_per_doc: Option<usize>,
    #[arg(long)]
    pub words_per_sentence: Option<usize>,
    /// Pretrained word vectors, one `word v1 … vd` per line.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Keep the word table fixed during training.
    #[arg(long)]
    pub freeze_embeddings: bool,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: stylehan::Error| e.to_string())
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("bad value {value:?} for {key}"))
}

/// Applies one config-file entry.
pub fn apply_key(model: &mut ModelConfig, train: &mut TrainConfig, key: &str, value: &str) -> Result<(), String> {
    match key {
        "mode" => model.mode = parse_mode(value)?,
        "sentences_per_doc" => model.sentences_per_doc = parse(key, value)?,
        "words_per_sentence" => model.words_per_sentence = parse(key, value)?,
        "d_w" => model.d_w = parse(key, value)?,
        "d_p" => model.d_p = parse(key, value)?,
        "receptive_fields" => {
            model.receptive_fields = value
                .split(',')
                .map(|v| parse(key, v.trim()))
                .collect::<Result<_, _>>()?
        }
        "filters_per_size" => model.filters_per_size = parse(key, value)?,
        "lstm_hidden" => model.lstm_hidden = parse(key, value)?,
        "attention_dim" => model.attention_dim = parse(key, value)?,
        "lexical_trainable" => model.lexical_trainable = parse(key, value)?,
        "batch_size" => train.batch_size = parse(key, value)?,
        "epochs" => train.epochs = parse(key, value)?,
        "learning_rate" => train.learning_rate = parse(key, value)?,
        "beta1" => train.beta1 = parse(key, value)?,
        "beta2" => train.beta2 = parse(key, value)?,
        "epsilon" => train.epsilon = parse(key, value)?,
        "l2" => train.l2 = parse(key, value)?,
        "l2_power" => train.l2_power = parse(key, value)?,
        "seed" => train.seed = parse(key, value)?,
        "runs" => train.runs = parse(key, value)?,
        "val_fraction" => train.val_fraction = parse(key, value)?,
        "vocab_limit" => train.vocab_limit = parse(key, value)?,
        other => return Err(format!("unknown key {other:?}")),
    }
    Ok(())
}

/// Parses a config file; `#` starts a comment.
pub fn apply_file(model: &mut ModelConfig, train: &mut TrainConfig, text: &str, source: &Path) -> anyhow::Result<()> {
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{}:{}: expected `key = value`", source.display(), i + 1)))?;
        apply_key(model, train, key.trim(), value.trim())
            .map_err(|e| usage(format!("{}:{}: {e}", source.display(), i + 1)))?;
    }
    Ok(())
}

impl SettingsArgs {
    pub fn resolve(&self) -> anyhow::Result<ExperimentSettings> {
        let mut model = ModelConfig::preset(&self.preset).map_err(|e| usage(e.to_string()))?;
        let mut train = TrainConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
            apply_file(&mut model, &mut train, &text, path)?;
        }
        if let Some(m) = self.mode {
            model.mode = m;
        }
        set(&mut train.seed, self.seed);
        set(&mut train.runs, self.runs);
        set(&mut train.epochs, self.epochs);
        set(&mut train.batch_size, self.batch_size);
        set(&mut train.learning_rate, self.learning_rate);
        set(&mut train.l2, self.l2);
        set(&mut train.l2_power, self.l2_power);
        set(&mut train.val_fraction, self.val_fraction);
        set(&mut train.vocab_limit, self.vocab_limit);
        set(&mut model.sentences_per_doc, self.sentences_per_doc);
        set(&mut model.words_per_sentence, self.words_per_sentence);
        if self.freeze_embeddings {
            model.lexical_trainable = false;
        }
        train.validate().map_err(|e| usage(e.to_string()))?;
        Ok(ExperimentSettings {
            model,
            train,
            embeddings: self.embeddings.clone(),
        })
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_entries_override_the_preset() {
        let mut model = ModelConfig::desk();
        let mut train = TrainConfig::default();
        let text = "# comment\nepochs = 7\nreceptive_fields = 2, 3\nmode = lexical  # trailing\n\n";
        apply_file(&mut model, &mut train, text, Path::new("c.txt")).unwrap();
        assert_eq!(train.epochs, 7);
        assert_eq!(model.receptive_fields, vec![2, 3]);
        assert_eq!(model.mode, Mode::Lexical);
    }

    #[test]
    fn unknown_key_names_the_line() {
        let mut model = ModelConfig::desk();
        let mut train = TrainConfig::default();
        let err = apply_file(&mut model, &mut train, "epochs = 1\nfoo = 2\n", Path::new("c.txt")).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
        assert!(err.to_string().starts_with("c.txt:2:"), "{err}");
    }

    #[test]
    fn bad_value_is_a_usage_error() {
        let mut model = ModelConfig::desk();
        let mut train = TrainConfig::default();
        let err = apply_file(&mut model, &mut train, "epochs = many\n", Path::new("c")).unwrap_err();
        assert!(err.to_string().contains("bad value"), "{err}");
    }
}
