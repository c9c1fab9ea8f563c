mod settings;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use stylehan::checkpoint::Checkpoint;
use stylehan::dataset::Dataset;
use stylehan::diagnostics::{model_gradcheck, GradcheckOptions};
use stylehan::experiments::{ablate, run_once, sweep, sweep_csv, SweepParam};
use stylehan::model::predict;
use stylehan::synth::{generate_corpus, Signal, SynthOptions, SynthSpec};
use stylehan::textpipe::formats::{load_dataset, write_tagged_documents};
use stylehan::textpipe::tagger::default_tagger;
use stylehan::textpipe::{tag_document, tensorize};
use stylehan::trainer::evaluate;

use settings::{usage, SettingsArgs, UsageError};

#[derive(Debug, Parser)]
#[command(name = "stylehan", version, about = "Style-aware hierarchical attention network for authorship attribution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model and write a checkpoint plus its loss history.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        settings: SettingsArgs,
        /// Checkpoint path; the history goes next to it as `<stem>.history.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy, loss and confusion matrix of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        tagged: Option<PathBuf>,
    },
    /// Predict the author of one plain-text document.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Run protocol for the syntactic, lexical, style and combined-embed modes.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        settings: SettingsArgs,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run protocol once per value of a grid parameter.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        settings: SettingsArgs,
        /// words-per-sentence or sentences-per-doc.
        #[arg(long, value_parser = parse_sweep_param)]
        param: SweepParam,
        /// Comma-separated positive integers.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients of a tiny model.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scale one parameter group's analytic gradient: `name` or `name=factor`.
        #[arg(long, hide = true)]
        corrupt_grad: Option<String>,
    },
    /// Generate a synthetic multi-author corpus.
    Synth {
        #[arg(long, default_value_t = 4)]
        authors: usize,
        #[arg(long, default_value_t = 50)]
        docs_per_author: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// dual, lexical-only or syntax-only.
        #[arg(long, default_value = "dual", value_parser = parse_signal)]
        signal: Signal,
        /// Writes `<out>.jsonl` and `<out>.tagged`.
        #[arg(long)]
        out: PathBuf,
        /// Replace the ground-truth tags with the bundled tagger's output.
        #[arg(long)]
        retag: bool,
    },
    /// Tag a plain-text file (one sentence per output line) or a dataset (pre-tagged documents).
    Tag {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
struct DataArgs {
    /// JSON-lines file of {"author", "text"} or a directory of author folders.
    #[arg(long)]
    data: PathBuf,
    /// Pre-tagged documents matching `--data`; skips the tagger.
    #[arg(long)]
    tagged: Option<PathBuf>,
    /// Separate held-out test set.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, requires = "test")]
    test_tagged: Option<PathBuf>,
}

fn parse_sweep_param(s: &str) -> Result<SweepParam, String> {
    s.parse().map_err(|e: stylehan::Error| e.to_string())
}

fn parse_signal(s: &str) -> Result<Signal, String> {
    s.parse().map_err(|e: stylehan::Error| e.to_string())
}

impl DataArgs {
    fn load(&self) -> anyhow::Result<(Dataset, Option<Dataset>)> {
        let data = Dataset::from_pairs(Dataset::load_pairs(&self.data, self.tagged.as_deref(), default_tagger)?);
        let test = match &self.test {
            Some(path) => {
                let pairs = Dataset::load_pairs(path, self.test_tagged.as_deref(), default_tagger)?;
                Some(Dataset::with_authors(data.authors.clone(), pairs)?)
            }
            None => None,
        };
        Ok((data, test))
    }
}

fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(value: &impl serde::Serialize) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn history_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    out.with_file_name(format!("{stem}.history.csv"))
}

fn cmd_train(data: &DataArgs, settings: &SettingsArgs, out: &Path) -> anyhow::Result<()> {
    let settings = settings.resolve()?;
    let (dataset, test) = data.load()?;
    let seed = settings.train.seed;
    let run = run_once(&dataset, &settings, seed, test.as_ref())?;
    let checkpoint = Checkpoint {
        train_config: settings.train.clone(),
        vocabulary: run.vocabulary.clone(),
        authors: dataset.authors.clone(),
        params: run.params.clone(),
    };
    checkpoint.save(out)?;
    let history = history_path(out);
    fs::write(&history, run.history.to_csv()).with_context(|| format!("writing {}", history.display()))?;
    let summary = json!({
        "mode": settings.model.mode.as_str(),
        "seed": seed,
        "authors": dataset.authors,
        "train_size": run.split.train.len(),
        "validation_size": run.split.validation.len(),
        "validation_accuracy": run.validation.accuracy,
        "test_accuracy": run.test.as_ref().map(|t| t.accuracy),
        "checkpoint": out.display().to_string(),
        "history": history.display().to_string(),
    });
    print!("{}", pretty(&summary)?);
    Ok(())
}

fn cmd_eval(model: &Path, data: &Path, tagged: Option<&Path>) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(model)?;
    let pairs = Dataset::load_pairs(data, tagged, default_tagger)?;
    let dataset = Dataset::with_authors(ckpt.authors.clone(), pairs)?;
    let docs = dataset.tensorize_all(&ckpt.vocabulary, ckpt.model_config())?;
    let report = evaluate(&ckpt.params, &docs)?;
    let value = json!({
        "authors": ckpt.authors,
        "accuracy": report.accuracy,
        "loss": report.loss,
        "total": report.total,
        "confusion": report.confusion,
    });
    print!("{}", pretty(&value)?);
    Ok(())
}

fn cmd_predict(model: &Path, input: &Path) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(model)?;
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let sentences = tag_document(&default_tagger(), &text);
    let doc = tensorize(&sentences, &ckpt.vocabulary, ckpt.model_config(), 0)
        .with_context(|| format!("{}: nothing to classify", input.display()))?;
    let pred = predict(&ckpt.params, &doc)?;
    let best = pred.argmax();
    let mut attention = Map::new();
    for (channel, weights) in &pred.alphas {
        attention.insert(channel.name().to_string(), json!(weights));
    }
    let value = json!({
        "author": ckpt.authors[best],
        "authors": ckpt.authors,
        "probabilities": pred.probs,
        "attention": Value::Object(attention),
    });
    print!("{}", pretty(&value)?);
    Ok(())
}

fn cmd_gradcheck(seed: u64, corrupt: Option<&str>) -> anyhow::Result<()> {
    let corrupt = match corrupt {
        Some(spec) => {
            let (name, factor) = match spec.split_once('=') {
                Some((n, f)) => (n, f.parse().map_err(|_| usage(format!("bad factor in {spec:?}")))?),
                None => (spec, 2.0),
            };
            Some((name.to_string(), factor))
        }
        None => None,
    };
    let defaults = GradcheckOptions::default();
    let opts = GradcheckOptions {
        seed,
        corrupt,
        fd: stylehan::tensor::gradcheck::FdOptions { seed, ..defaults.fd },
        ..defaults
    };
    let report = model_gradcheck(&opts).map_err(|e| match e {
        stylehan::Error::Config(msg) => usage(msg),
        other => other.into(),
    })?;
    print!("{}", pretty(&report)?);
    if !report.passed {
        bail!(
            "gradient check failed: max relative error {:.3e} ≥ {:.0e}",
            report.max_rel_error,
            report.tolerance
        );
    }
    Ok(())
}

fn cmd_synth(opts: SynthOptions, out: &Path, retag: bool) -> anyhow::Result<()> {
    let spec = SynthSpec::generate(&opts)?;
    let mut corpus = generate_corpus(&spec)?;
    if retag {
        corpus = corpus.retagged(&default_tagger());
    }
    let jsonl = out.with_extension("jsonl");
    let tagged = out.with_extension("tagged");
    corpus.write(&jsonl, &tagged)?;
    log::info!("wrote {} documents to {} and {}", corpus.len(), jsonl.display(), tagged.display());
    Ok(())
}

fn cmd_tag(input: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let tagger = default_tagger();
    let is_dataset = input.is_dir() || input.extension().is_some_and(|e| e == "jsonl");
    let text = if is_dataset {
        let raw = load_dataset(input)?;
        let docs: Vec<_> = raw.iter().map(|d| tag_document(&tagger, &d.text)).collect();
        write_tagged_documents(&docs)
    } else {
        let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
        let mut lines = String::new();
        for s in tag_document(&tagger, &text) {
            lines.push_str(&s.to_line());
            lines.push('\n');
        }
        lines
    };
    emit(&text, out)
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(value) = std::env::var("STYLEHAN_THREADS") {
        let n: usize = value
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| usage(format!("STYLEHAN_THREADS must be a positive integer, got {value:?}")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Train { data, settings, out } => cmd_train(&data, &settings, &out),
        Command::Eval { model, data, tagged } => cmd_eval(&model, &data, tagged.as_deref()),
        Command::Predict { model, input } => cmd_predict(&model, &input),
        Command::Ablate { data, settings, out } => {
            let settings = settings.resolve()?;
            let (dataset, test) = data.load()?;
            let report = ablate(&dataset, &settings, test.as_ref())?;
            emit(&pretty(&report)?, out.as_deref())
        }
        Command::Sweep {
            data,
            settings,
            param,
            values,
            out,
        } => {
            if values.contains(&0) {
                return Err(usage("sweep values must be positive integers"));
            }
            let settings = settings.resolve()?;
            let (dataset, test) = data.load()?;
            let points = sweep(&dataset, &settings, param, &values, test.as_ref())?;
            emit(&sweep_csv(&points), out.as_deref())
        }
        Command::Gradcheck { seed, corrupt_grad } => cmd_gradcheck(seed, corrupt_grad.as_deref()),
        Command::Synth {
            authors,
            docs_per_author,
            seed,
            signal,
            out,
            retag,
        } => cmd_synth(
            SynthOptions {
                authors,
                docs_per_author,
                seed,
                signal,
                ..SynthOptions::default()
            },
            &out,
            retag,
        ),
        Command::Tag { input, out } => cmd_tag(&input, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
