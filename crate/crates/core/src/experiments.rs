//! The repeated-split run protocol and the experiments built on it:
//! mode ablation and hyperparameter sweeps.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::embeddings::load_pretrained;
use crate::error::{Error, Result};
use crate::model::{predict, Mode, ModelConfig, ModelParams};
use crate::textpipe::{TensorizedDocument, Vocabulary};
use crate::trainer::{evaluate, split_data, train, EvalReport, Split, TrainConfig, TrainHistory};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    /// Model hyperparameters; the class count is taken from the data.
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Pretrained word vectors for the lexical table.
    pub embeddings: Option<PathBuf>,
}

/// How peaked a channel's sentence attention is over a set of documents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionSummary {
    pub channel: String,
    /// Mean over documents of the largest sentence weight.
    pub mean_max_weight: f64,
    /// Mean over documents of the attention entropy in nats.
    pub mean_entropy: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub split: Split,
    pub vocabulary: Vocabulary,
    pub params: ModelParams<f32>,
    pub history: TrainHistory,
    pub validation: EvalReport,
    pub test: Option<EvalReport>,
    pub attention: Vec<AttentionSummary>,
}

impl RunOutcome {
    /// Test accuracy when a test set was given, validation accuracy otherwise.
    pub fn accuracy(&self) -> f64 {
        self.test.as_ref().unwrap_or(&self.validation).accuracy
    }
}

pub fn attention_summary(params: &ModelParams<f32>, docs: &[TensorizedDocument]) -> Result<Vec<AttentionSummary>> {
    let preds = docs
        .par_iter()
        .map(|d| predict(params, d))
        .collect::<Result<Vec<_>>>()?;
    let channels: Vec<_> = params.layout().channels.iter().map(|c| c.channel).collect();
    Ok(channels
        .iter()
        .enumerate()
        .map(|(ci, ch)| {
            let (mut max_sum, mut ent_sum) = (0.0, 0.0);
            for p in &preds {
                let a = &p.alphas[ci].1;
                max_sum += a.iter().fold(0.0f64, |m, &x| m.max(f64::from(x)));
                ent_sum -= a
                    .iter()
                    .filter(|&&x| x > 0.0)
                    .map(|&x| f64::from(x) * f64::from(x).ln())
                    .sum::<f64>();
            }
            let n = preds.len().max(1) as f64;
            AttentionSummary {
                channel: ch.name().to_string(),
                mean_max_weight: max_sum / n,
                mean_entropy: ent_sum / n,
            }
        })
        .collect())
}

/// One run: seeded split, vocabulary from the training part, tensorization,
/// seeded initialization, training and evaluation. Every random choice is
/// drawn from `seed`.
pub fn run_once(data: &Dataset, settings: &ExperimentSettings, seed: u64, test: Option<&Dataset>) -> Result<RunOutcome> {
    let train_cfg = TrainConfig {
        seed,
        ..settings.train.clone()
    };
    train_cfg.validate()?;
    let cfg = settings.model.clone().with_classes(data.num_classes());
    cfg.validate()?;
    if data.num_classes() < 2 {
        return Err(Error::Data("need documents from at least 2 authors".into()));
    }
    let split = split_data(&data.labels(), train_cfg.val_fraction, seed)?;
    let vocabulary = data.vocabulary(&split.train, train_cfg.vocab_limit);
    let train_docs = data.tensorize(&split.train, &vocabulary, &cfg)?;
    let val_docs = data.tensorize(&split.validation, &vocabulary, &cfg)?;
    let table = match (&settings.embeddings, cfg.mode.uses_words()) {
        (Some(path), true) => Some(load_pretrained(path, &vocabulary, cfg.d_w, seed)?.table),
        _ => None,
    };
    let params = ModelParams::init(&cfg, vocabulary.len(), seed, table)?;
    let (params, history) = train(params, &train_docs, &val_docs, &train_cfg)?;
    let validation = evaluate(&params, &val_docs)?;
    let test = match test {
        Some(t) => {
            if t.authors != data.authors {
                return Err(Error::Data("test set authors differ from the training authors".into()));
            }
            Some(evaluate(&params, &t.tensorize_all(&vocabulary, &cfg)?)?)
        }
        None => None,
    };
    let attention = attention_summary(&params, &val_docs)?;
    Ok(RunOutcome {
        seed,
        split,
        vocabulary,
        params,
        history,
        validation,
        test,
        attention,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub accuracy: f64,
    pub validation_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub validation_size: usize,
    pub attention: Vec<AttentionSummary>,
}

impl From<&RunOutcome> for RunSummary {
    fn from(r: &RunOutcome) -> Self {
        Self {
            seed: r.seed,
            accuracy: r.accuracy(),
            validation_accuracy: r.validation.accuracy,
            test_accuracy: r.test.as_ref().map(|t| t.accuracy),
            final_train_loss: r.history.epochs.last().map(|e| e.train_loss),
            validation_size: r.split.validation.len(),
            attention: r.attention.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolReport {
    pub mode: Mode,
    pub mean: f64,
    /// Population standard deviation over runs.
    pub std: f64,
    pub median: f64,
    pub runs: Vec<RunSummary>,
    pub seconds: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Middle value, or the mean of the two middle values.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Runs [`run_once`] with seeds `seed..seed+runs`, concurrently, and
/// summarizes the accuracies in seed order.
pub fn run_protocol(data: &Dataset, settings: &ExperimentSettings, test: Option<&Dataset>) -> Result<ProtocolReport> {
    settings.train.validate()?;
    let start = Instant::now();
    let base = settings.train.seed;
    let runs: Vec<RunSummary> = (0..settings.train.runs as u64)
        .into_par_iter()
        .map(|k| run_once(data, settings, base.wrapping_add(k), test).map(|r| RunSummary::from(&r)))
        .collect::<Result<_>>()?;
    let accs: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
    Ok(ProtocolReport {
        mode: settings.model.mode,
        mean: mean(&accs),
        std: population_std(&accs),
        median: median(&accs),
        runs,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub modes: Vec<ProtocolReport>,
    pub seconds: f64,
}

impl AblationReport {
    pub fn get(&self, mode: Mode) -> Option<&ProtocolReport> {
        self.modes.iter().find(|m| m.mode == mode)
    }
}

/// The run protocol for syntactic, lexical, style and combined-embed modes
/// with the same seeds, hence the same splits.
pub fn ablate(data: &Dataset, settings: &ExperimentSettings, test: Option<&Dataset>) -> Result<AblationReport> {
    let start = Instant::now();
    let modes = Mode::ALL
        .iter()
        .map(|&mode| {
            let s = ExperimentSettings {
                model: settings.model.clone().with_mode(mode),
                ..settings.clone()
            };
            log::info!("ablation: {mode}");
            run_protocol(data, &s, test)
        })
        .collect::<Result<_>>()?;
    Ok(AblationReport {
        modes,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    WordsPerSentence,
    SentencesPerDoc,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::WordsPerSentence => "words-per-sentence",
            SweepParam::SentencesPerDoc => "sentences-per-doc",
        }
    }

    fn apply(self, cfg: &ModelConfig, value: usize) -> ModelConfig {
        let mut c = cfg.clone();
        match self {
            SweepParam::WordsPerSentence => c.words_per_sentence = value,
            SweepParam::SentencesPerDoc => c.sentences_per_doc = value,
        }
        c
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "words-per-sentence" => Ok(SweepParam::WordsPerSentence),
            "sentences-per-doc" => Ok(SweepParam::SentencesPerDoc),
            other => Err(Error::Config(format!(
                "unknown sweep parameter {other:?} (expected words-per-sentence or sentences-per-doc)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: usize,
    /// Median accuracy of the run protocol at this value.
    pub accuracy: f64,
    pub report: ProtocolReport,
}

/// One run protocol per value with everything else fixed.
pub fn sweep(
    data: &Dataset,
    settings: &ExperimentSettings,
    param: SweepParam,
    values: &[usize],
    test: Option<&Dataset>,
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() || values.contains(&0) {
        return Err(Error::Config("sweep values must be positive integers".into()));
    }
    values
        .iter()
        .map(|&value| {
            let s = ExperimentSettings {
                model: param.apply(&settings.model, value),
                ..settings.clone()
            };
            log::info!("sweep: {} = {value}", param.as_str());
            let report = run_protocol(data, &s, test)?;
            Ok(SweepPoint {
                value,
                accuracy: report.median,
                report,
            })
        })
        .collect()
}

/// `value,accuracy` with one row per point.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("value,accuracy\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p.value, p.accuracy);
    }
    out
}

/// Number of adjacent pairs where the later value is lower.
pub fn inversions(xs: &[f64]) -> usize {
    xs.windows(2).filter(|w| w[1] < w[0]).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_corpus, SynthOptions, SynthSpec};

    #[test]
    fn statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(population_std(&[0.7]), 0.0);
        assert!((population_std(&[1.0, 3.0]) - 1.0).abs() < 1e-12);
        assert_eq!(inversions(&[0.5, 0.6, 0.55, 0.9]), 1);
    }

    fn small() -> (Dataset, ExperimentSettings) {
        let spec = SynthSpec::generate(&SynthOptions {
            authors: 2,
            docs_per_author: 6,
            sentences_per_doc: (2, 4),
            ..SynthOptions::default()
        })
        .unwrap();
        let data = Dataset::from_synth(&generate_corpus(&spec).unwrap());
        let settings = ExperimentSettings {
            model: ModelConfig::tiny().with_mode(Mode::Syntactic),
            train: TrainConfig {
                epochs: 2,
                batch_size: 4,
                runs: 1,
                seed: 3,
                val_fraction: 0.25,
                ..TrainConfig::default()
            },
            embeddings: None,
        };
        (data, settings)
    }

    #[test]
    fn single_run_protocol_has_zero_spread() {
        let (data, settings) = small();
        let r = run_protocol(&data, &settings, None).unwrap();
        assert_eq!(r.runs.len(), 1);
        assert_eq!(r.mean, r.runs[0].accuracy);
        assert_eq!(r.std, 0.0);
        assert_eq!(r.runs[0].validation_size, 3);
    }

    #[test]
    fn protocol_is_deterministic_and_advances_seeds() {
        let (data, mut settings) = small();
        settings.train.runs = 3;
        let a = run_protocol(&data, &settings, None).unwrap();
        let b = run_protocol(&data, &settings, None).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![3, 4, 5]);
        let splits: Vec<Vec<usize>> = (3..6)
            .map(|s| split_data(&data.labels(), 0.25, s).unwrap().validation)
            .collect();
        assert!(splits[0] != splits[1] && splits[1] != splits[2] && splits[0] != splits[2]);
    }

    #[test]
    fn ablation_covers_four_modes_with_shared_splits() {
        let (data, settings) = small();
        let r = ablate(&data, &settings, None).unwrap();
        let modes: Vec<Mode> = r.modes.iter().map(|m| m.mode).collect();
        assert_eq!(modes, Mode::ALL.to_vec());
        let seeds: Vec<u64> = r.modes.iter().map(|m| m.runs[0].seed).collect();
        assert!(seeds.iter().all(|&s| s == seeds[0]));
        let a = run_once(&data, &ExperimentSettings { model: settings.model.clone().with_mode(Mode::Lexical), ..settings.clone() }, 3, None).unwrap();
        let b = run_once(&data, &settings, 3, None).unwrap();
        assert_eq!(a.split, b.split);
    }

    #[test]
    fn sweep_emits_one_row_per_value() {
        let (data, settings) = small();
        let pts = sweep(&data, &settings, SweepParam::SentencesPerDoc, &[1, 2, 3, 4], None).unwrap();
        let csv = sweep_csv(&pts);
        assert_eq!(csv.lines().next(), Some("value,accuracy"));
        assert_eq!(csv.lines().count(), 5);
        assert!(sweep(&data, &settings, SweepParam::WordsPerSentence, &[0], None).is_err());
        assert_eq!("words-per-sentence".parse::<SweepParam>().unwrap(), SweepParam::WordsPerSentence);
    }

    #[test]
    fn test_set_accuracy_takes_precedence() {
        let (data, settings) = small();
        let r = run_once(&data, &settings, 1, Some(&data)).unwrap();
        assert_eq!(r.accuracy(), r.test.as_ref().unwrap().accuracy);
        assert_eq!(r.attention.len(), 1);
    }
}
