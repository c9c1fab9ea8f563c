//! Acceptance suite: one check per criterion, each printing a PASS or FAIL
//! line with the measured values. Exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stylehan::checkpoint::Checkpoint;
use stylehan::dataset::Dataset;
use stylehan::diagnostics::{model_gradcheck, GradcheckOptions};
use stylehan::experiments::{ablate, inversions, run_once, run_protocol, sweep, ExperimentSettings, SweepParam};
use stylehan::fixtures::{random_document, with_pad_sentences};
use stylehan::model::forward::{attend, bind, encode_sentences_bilstm};
use stylehan::model::{predict, Mode, ModelConfig, ModelParams};
use stylehan::synth::{generate_corpus, Signal, SynthOptions, SynthSpec};
use stylehan::tensor::Tape;
use stylehan::textpipe::tagger::{bundled_split, DEFAULT_TAGGER_EPOCHS, DEFAULT_TAGGER_SEED};
use stylehan::textpipe::{train_tagger, TagSet};
use stylehan::trainer::{compute_loss, evaluate, train, TrainConfig};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

const GRADCHECK_MAX_SECONDS: f64 = 60.0;
const GRADCHECK_MIN_SAMPLED: usize = 200;
const OVERFIT_MAX_SECONDS: f64 = 120.0;
const SLACK: f64 = 0.01;

fn protocol_settings(mode: Mode) -> ExperimentSettings {
    ExperimentSettings {
        model: ModelConfig::desk().with_mode(mode),
        train: TrainConfig {
            runs: 3,
            ..TrainConfig::default()
        },
        embeddings: None,
    }
}

fn synth_dataset(signal: Signal) -> Result<Dataset, Box<dyn std::error::Error>> {
    let spec = SynthSpec::generate(&SynthOptions {
        signal,
        ..SynthOptions::default()
    })?;
    Ok(Dataset::from_synth(&generate_corpus(&spec)?))
}

fn gradcheck() -> Outcome {
    let report = model_gradcheck(&GradcheckOptions::default())?;
    let undersampled: Vec<&str> = report
        .groups
        .iter()
        .filter(|g| g.checked + g.skipped_kinks < g.numel.min(GRADCHECK_MIN_SAMPLED))
        .map(|g| g.name.as_str())
        .collect();
    let ok = report.max_rel_error < 1e-4 && undersampled.is_empty() && report.seconds < GRADCHECK_MAX_SECONDS;
    Ok((
        ok,
        format!(
            "{} groups, {} coordinates, max rel error {:.2e}, {:.1}s, undersampled {:?}",
            report.groups.len(),
            report.checked,
            report.max_rel_error,
            report.seconds,
            undersampled
        ),
    ))
}

fn analytic_identities() -> Outcome {
    let mut tape = Tape::<f64>::new();
    let z = tape.vector(&[0.0, 0.0])?;
    let s = tape.softmax(z)?;
    let softmax_ok = tape.value(s) == [0.5, 0.5];

    let mut worst_ln = 0.0f64;
    for c in 2..=10usize {
        let mut tape = Tape::<f64>::new();
        let p = tape.vector(&vec![1.0 / c as f64; c])?;
        let loss = compute_loss(&mut tape, &[p], &[0], &[], 0.0, 2)?;
        worst_ln = worst_ln.max((tape.scalar(loss) - (c as f64).ln()).abs());
    }
    let ln_ok = worst_ln <= 1e-6;

    let cfg = ModelConfig::tiny();
    let mut params: ModelParams<f64> = ModelParams::init(&cfg, 20, 7, None)?.cast();
    let channel = params.layout().channels[0].clone();
    for cell in [channel.lstm.forward, channel.lstm.backward] {
        for id in [cell.w_ih, cell.w_hh, cell.bias] {
            params.get_mut(id).data_mut().fill(0.0);
        }
    }
    let width = cfg.filters_per_size * cfg.receptive_fields.len();
    let mut tape = Tape::new();
    let p = bind(&mut tape, &params);
    let xs = (0..4)
        .map(|i| tape.vector(&(0..width).map(|j| (i * width + j) as f64 * 0.3 - 1.0).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>, _>>()?;
    let hs = encode_sentences_bilstm(&mut tape, &xs, &channel.lstm, cfg.lstm_hidden, &p)?;
    let zero_ok = hs.iter().all(|&h| tape.value(h).iter().all(|&x| x == 0.0));

    let state: Vec<f64> = (0..2 * cfg.lstm_hidden).map(|j| j as f64 * 0.7 - 1.3).collect();
    let h = tape.vector(&state)?;
    let (v, alpha) = attend(&mut tape, &[h], &channel.attention, &p)?;
    let attend_ok = tape.value(v) == state.as_slice() && tape.value(alpha) == [1.0];

    Ok((
        softmax_ok && ln_ok && zero_ok && attend_ok,
        format!(
            "softmax {softmax_ok}, uniform loss max |L-ln C| {worst_ln:.1e}, zero BiLSTM {zero_ok}, single-sentence attention {attend_ok}"
        ),
    ))
}

fn pad_invariance() -> Outcome {
    let cfg = ModelConfig::tiny();
    let vocab = 20;
    let mut changed = 0;
    for seed in 0..100u64 {
        let mode = Mode::ALL[seed as usize % Mode::ALL.len()];
        let params = ModelParams::init(&cfg.clone().with_mode(mode), vocab, seed, None)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let real = 1 + seed as usize % cfg.sentences_per_doc;
        let doc = random_document(&mut rng, &cfg, vocab, real, 0);
        let padded_cfg = ModelConfig {
            sentences_per_doc: cfg.sentences_per_doc + 1 + seed as usize % 4,
            ..cfg.clone().with_mode(mode)
        };
        let padded = with_pad_sentences(&doc, padded_cfg.sentences_per_doc);
        let padded_params = ModelParams::from_tensors(&padded_cfg, vocab, params.tensors().to_vec())?;
        let a = predict(&params, &doc)?.probs;
        let b = predict(&padded_params, &padded)?.probs;
        let bits = |x: &[f32]| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        if bits(&a) != bits(&b) {
            changed += 1;
        }
    }
    Ok((changed == 0, format!("100 documents, {changed} with changed probabilities")))
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let spec = SynthSpec::generate(&SynthOptions {
        authors: 2,
        docs_per_author: 4,
        ..SynthOptions::default()
    })?;
    let data = Dataset::from_synth(&generate_corpus(&spec)?);
    let cfg = ModelConfig::desk().with_classes(2);
    let all: Vec<usize> = (0..data.len()).collect();
    let vocab = data.vocabulary(&all, 50_000);
    let docs = data.tensorize(&all, &vocab, &cfg)?;
    let mut perfect = 0;
    let mut accs = Vec::new();
    for seed in 0..10u64 {
        let tc = TrainConfig {
            epochs: 200,
            seed,
            ..TrainConfig::default()
        };
        let params = ModelParams::init(&cfg, vocab.len(), seed, None)?;
        let (params, _) = train(params, &docs, &[], &tc)?;
        let acc = evaluate(&params, &docs)?.accuracy;
        accs.push(acc);
        if acc == 1.0 {
            perfect += 1;
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    Ok((
        perfect >= 9 && seconds < OVERFIT_MAX_SECONDS,
        format!("{} docs, {perfect}/10 seeds at training accuracy 1.0 {accs:?}, {seconds:.1}s", docs.len()),
    ))
}

struct DualAblation {
    style: f64,
    lexical: f64,
    syntactic: f64,
    combined: f64,
}

fn dual_ablation() -> Result<DualAblation, Box<dyn std::error::Error>> {
    let data = synth_dataset(Signal::Dual)?;
    let report = ablate(&data, &protocol_settings(Mode::Style), None)?;
    let median = |m: Mode| report.get(m).map(|r| r.median).ok_or("missing mode");
    Ok(DualAblation {
        style: median(Mode::Style)?,
        lexical: median(Mode::Lexical)?,
        syntactic: median(Mode::Syntactic)?,
        combined: median(Mode::CombinedEmbed)?,
    })
}

fn separation(dual: &DualAblation) -> Outcome {
    let spec = SynthSpec::generate(&SynthOptions {
        signal: Signal::SyntaxOnly,
        ..SynthOptions::default()
    })?;
    let shared_lexicon = spec.authors.windows(2).all(|w| w[0].lexicons == w[1].lexicons);
    let data = Dataset::from_synth(&generate_corpus(&spec)?);
    let syntactic = run_protocol(&data, &protocol_settings(Mode::Syntactic), None)?.median;
    Ok((
        dual.style >= 0.90 && syntactic >= 0.80 && shared_lexicon,
        format!(
            "dual Style-HAN median {:.3} (≥ 0.90), syntax-only Syntactic-HAN median {syntactic:.3} (≥ 0.80), per-tag lexicons shared {shared_lexicon}",
            dual.style
        ),
    ))
}

fn ablation_ordering(dual: &DualAblation) -> Outcome {
    Ok((
        dual.style >= dual.lexical - SLACK && dual.style >= dual.syntactic - SLACK,
        format!(
            "style {:.3}, lexical {:.3}, syntactic {:.3}",
            dual.style, dual.lexical, dual.syntactic
        ),
    ))
}

fn fusion_trend(dual: &DualAblation) -> Outcome {
    Ok((
        dual.style >= dual.combined - SLACK,
        format!("parallel {:.3}, combined-embed {:.3}", dual.style, dual.combined),
    ))
}

fn determinism() -> Outcome {
    let spec = SynthSpec::generate(&SynthOptions {
        docs_per_author: 10,
        ..SynthOptions::default()
    })?;
    let data = Dataset::from_synth(&generate_corpus(&spec)?);
    let mut settings = protocol_settings(Mode::Style);
    settings.train.epochs = 5;
    let checkpoint = || -> Result<Checkpoint, Box<dyn std::error::Error>> {
        let run = run_once(&data, &settings, 3, None)?;
        Ok(Checkpoint {
            train_config: TrainConfig {
                seed: 3,
                ..settings.train.clone()
            },
            vocabulary: run.vocabulary,
            authors: data.authors.clone(),
            params: run.params,
        })
    };
    let a = checkpoint()?;
    let b = checkpoint()?;
    let same_bytes = a.to_bytes() == b.to_bytes();

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("m.shn");
    a.save(&path)?;
    let loaded = Checkpoint::load(&path)?;
    let round_trip = loaded.to_bytes() == a.to_bytes() && std::fs::read(&path)? == a.to_bytes();

    let docs = data.tensorize_all(&a.vocabulary, a.model_config())?;
    let mut same_predictions = true;
    for d in &docs {
        let p = predict(&a.params, d)?;
        let q = predict(&loaded.params, d)?;
        let bits = |x: &[f32]| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        same_predictions &= bits(&p.probs) == bits(&q.probs)
            && p.alphas.iter().zip(&q.alphas).all(|(x, y)| x.0 == y.0 && bits(&x.1) == bits(&y.1));
    }
    Ok((
        same_bytes && round_trip && same_predictions,
        format!(
            "identical-seed checkpoints equal {same_bytes}, round trip {round_trip}, predictions on {} docs equal {same_predictions}",
            docs.len()
        ),
    ))
}

fn tagger() -> Outcome {
    let (train_set, held) = bundled_split();
    let t = train_tagger(&train_set, DEFAULT_TAGGER_EPOCHS, DEFAULT_TAGGER_SEED)?;
    let acc = t.accuracy(&held);
    let (mut punct, mut punct_ok) = (0usize, 0usize);
    for s in held.iter().chain(&train_set) {
        let tagged = t.tag(&s.tokens);
        for (tok, &tag) in s.tokens.iter().zip(&tagged.tags) {
            if let Some(expected) = TagSet::punctuation_tag(tok) {
                punct += 1;
                punct_ok += usize::from(tag == expected);
            }
        }
    }
    Ok((
        acc >= 0.90 && punct > 0 && punct_ok == punct,
        format!("held-out accuracy {acc:.4} (≥ 0.90), punctuation {punct_ok}/{punct}"),
    ))
}

fn length_sweep() -> Outcome {
    let data = synth_dataset(Signal::Dual)?;
    let points = sweep(
        &data,
        &protocol_settings(Mode::Style),
        SweepParam::SentencesPerDoc,
        &[5, 10, 20, 40],
        None,
    )?;
    let accs: Vec<f64> = points.iter().map(|p| p.accuracy).collect();
    let inv = inversions(&accs);
    Ok((inv <= 1, format!("medians {accs:?}, {inv} inversion(s)")))
}

fn report(id: usize, name: &str, outcome: Outcome) -> bool {
    let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    println!("criterion {id:>2} {:<4} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn main() -> ExitCode {
    let mut passed = Vec::new();
    passed.push(report(1, "full-model gradient check", gradcheck()));
    passed.push(report(2, "analytic identities", analytic_identities()));
    passed.push(report(3, "pad invariance", pad_invariance()));
    passed.push(report(4, "overfit sanity", overfit()));
    match dual_ablation() {
        Ok(dual) => {
            passed.push(report(5, "synthetic separation", separation(&dual)));
            passed.push(report(6, "ablation ordering", ablation_ordering(&dual)));
            passed.push(report(7, "parallel vs combined fusion", fusion_trend(&dual)));
        }
        Err(e) => {
            for (id, name) in [(5, "synthetic separation"), (6, "ablation ordering"), (7, "parallel vs combined fusion")] {
                passed.push(report(id, name, Err(format!("dual-corpus ablation failed: {e}").into())));
            }
        }
    }
    passed.push(report(8, "determinism and persistence", determinism()));
    passed.push(report(9, "tagger", tagger()));
    passed.push(report(10, "document-length sweep", length_sweep()));
    let n = passed.iter().filter(|&&p| p).count();
    println!("acceptance: {n}/{} criteria passed", passed.len());
    if n == passed.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
