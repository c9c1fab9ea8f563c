use super::config::Channel;
use super::params::{AttentionParams, BiLstmParams, ClassifierParams, ConvFilterBank, LstmCell, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::{Float, ParamId, Tape, Var};
use crate::textpipe::TensorizedDocument;

/// Parameters recorded on one tape, indexed like [`ModelParams`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Wraps vars recorded by hand, one per parameter id in order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

pub fn bind<'p, T: Float>(tape: &mut Tape<'p, T>, params: &'p ModelParams<T>) -> Bound {
    Bound {
        vars: params.ids().map(|id| tape.param(id, params.get(id))).collect(),
    }
}

/// Word-level CNN: for each receptive field, `relu(conv)` followed by
/// max-over-time per filter; results concatenated in (r, filter) order.
pub fn encode_words_cnn<T: Float>(tape: &mut Tape<'_, T>, s: Var, bank: &ConvFilterBank, p: &Bound) -> Result<Var> {
    let mut pooled = Vec::with_capacity(bank.filters.len());
    for f in &bank.filters {
        let c = tape.conv1d(s, p.var(f.weight), p.var(f.bias))?;
        let a = tape.relu(c)?;
        pooled.push(tape.max_rows(a)?);
    }
    Ok(tape.concat(&pooled)?)
}

fn lstm_step<T: Float>(
    tape: &mut Tape<'_, T>,
    cell: &LstmCell,
    p: &Bound,
    hidden: usize,
    x: Var,
    state: Option<(Var, Var)>,
) -> Result<(Var, Var)> {
    let mut z = tape.matvec(p.var(cell.w_ih), x)?;
    if let Some((h, _)) = state {
        let r = tape.matvec(p.var(cell.w_hh), h)?;
        z = tape.add(z, r)?;
    }
    let z = tape.add(z, p.var(cell.bias))?;
    let gate = |tape: &mut Tape<'_, T>, k: usize| tape.slice(z, k * hidden, hidden);
    let (i, f, o, g) = (gate(tape, 0)?, gate(tape, 1)?, gate(tape, 2)?, gate(tape, 3)?);
    let i = tape.sigmoid(i)?;
    let o = tape.sigmoid(o)?;
    let g = tape.tanh(g)?;
    let ig = tape.mul(i, g)?;
    let c = match state {
        Some((_, c_prev)) => {
            let f = tape.sigmoid(f)?;
            let fc = tape.mul(f, c_prev)?;
            tape.add(fc, ig)?
        }
        None => ig,
    };
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Bidirectional LSTM over the real sentences of a document.
///
/// Gates: `i, f, o = σ(·)`, `g = tanh(·)`, `c = f⊙c′ + i⊙g`, `h = o⊙tanh(c)`,
/// with zero initial state (the zero-state terms are omitted rather than
/// multiplied out). Returns `[h_fwd; h_bwd]` per sentence.
pub fn encode_sentences_bilstm<T: Float>(
    tape: &mut Tape<'_, T>,
    xs: &[Var],
    lstm: &BiLstmParams,
    hidden: usize,
    p: &Bound,
) -> Result<Vec<Var>> {
    let n = xs.len();
    let mut fwd = Vec::with_capacity(n);
    let mut state = None;
    for &x in xs {
        let s = lstm_step(tape, &lstm.forward, p, hidden, x, state)?;
        fwd.push(s.0);
        state = Some(s);
    }
    let mut bwd = vec![None; n];
    let mut state = None;
    for (i, &x) in xs.iter().enumerate().rev() {
        let s = lstm_step(tape, &lstm.backward, p, hidden, x, state)?;
        bwd[i] = Some(s.0);
        state = Some(s);
    }
    fwd.into_iter()
        .zip(bwd)
        .map(|(f, b)| Ok(tape.concat(&[f, b.expect("every position visited")])?))
        .collect()
}

/// Sentence attention over the real sentences: `u_i = tanh(W_s h_i + b_s)`,
/// `α = softmax(u_iᵀ u_s)`, `V = Σ α_i h_i`. Returns `(V, α)`.
pub fn attend<T: Float>(tape: &mut Tape<'_, T>, hs: &[Var], att: &AttentionParams, p: &Bound) -> Result<(Var, Var)> {
    if hs.is_empty() {
        return Err(Error::AllMasked);
    }
    let mut scores = Vec::with_capacity(hs.len());
    for &h in hs {
        let proj = tape.matvec(p.var(att.w_s), h)?;
        let proj = tape.add(proj, p.var(att.b_s))?;
        let u = tape.tanh(proj)?;
        scores.push(tape.dot(u, p.var(att.u_s))?);
    }
    let scores = tape.concat(&scores)?;
    let alpha = tape.softmax(scores)?;
    let n = hs.len();
    let rows = tape.stack_rows(hs)?;
    let a = tape.reshape(alpha, vec![1, n])?;
    let v = tape.matmul(a, rows)?;
    let width = tape.shape(v)[1];
    let v = tape.reshape(v, vec![width])?;
    Ok((v, alpha))
}

/// Concatenates channel document vectors in channel order.
pub fn fuse<T: Float>(tape: &mut Tape<'_, T>, vs: &[Var]) -> Result<Var> {
    match vs {
        [single] => Ok(*single),
        _ => Ok(tape.concat(vs)?),
    }
}

/// `softmax(W_c v + b_c)`; returns `(logits, probabilities)`.
pub fn classify<T: Float>(tape: &mut Tape<'_, T>, v: Var, clf: &ClassifierParams, p: &Bound) -> Result<(Var, Var)> {
    let z = tape.matvec(p.var(clf.w_c), v)?;
    let logits = tape.add(z, p.var(clf.b_c))?;
    let probs = tape.softmax(logits)?;
    Ok((logits, probs))
}

#[derive(Debug, Clone)]
pub struct ChannelOutput {
    pub channel: Channel,
    /// Document vector `V` of this channel.
    pub vector: Var,
    /// Attention weights over the real sentences.
    pub alphas: Var,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Var,
    pub probs: Var,
    pub channels: Vec<ChannelOutput>,
}

impl ForwardOutput {
    /// Attention weights per channel, zero-padded to `sentences_per_doc`.
    pub fn padded_alphas<T: Float>(&self, tape: &Tape<'_, T>, sentences_per_doc: usize) -> Vec<(Channel, Vec<T>)> {
        self.channels
            .iter()
            .map(|c| {
                let mut a = tape.value(c.alphas).to_vec();
                a.resize(sentences_per_doc, T::zero());
                (c.channel, a)
            })
            .collect()
    }
}

fn sentence_input<T: Float>(
    tape: &mut Tape<'_, T>,
    channel: Channel,
    params: &ModelParams<T>,
    p: &Bound,
    doc: &TensorizedDocument,
    i: usize,
) -> Result<Var> {
    let layout = params.layout();
    let words = |tape: &mut Tape<'_, T>| -> Result<Var> {
        let table = layout.word_table.expect("mode uses words");
        let ids: Vec<usize> = doc.word_row(i).iter().map(|&x| x as usize).collect();
        Ok(tape.embedding_lookup(p.var(table), &ids)?)
    };
    let tags = |tape: &mut Tape<'_, T>| -> Result<Var> {
        let table = layout.tag_table.expect("mode uses tags");
        let ids: Vec<usize> = doc.tag_row(i).iter().map(|&x| usize::from(x)).collect();
        Ok(tape.embedding_lookup(p.var(table), &ids)?)
    };
    match channel {
        Channel::Lexical => words(tape),
        Channel::Syntactic => tags(tape),
        Channel::Combined => {
            let w = words(tape)?;
            let t = tags(tape)?;
            Ok(tape.hcat(w, t)?)
        }
    }
}

/// Runs every active channel over the real sentences of `doc`, fuses the
/// document vectors and classifies. Padding sentences are never computed,
/// so appending them leaves every recorded value unchanged.
pub fn forward_document<'p, T: Float>(
    tape: &mut Tape<'p, T>,
    params: &'p ModelParams<T>,
    p: &Bound,
    doc: &TensorizedDocument,
) -> Result<ForwardOutput> {
    let cfg = params.config();
    if doc.sentences_per_doc != cfg.sentences_per_doc || doc.words_per_sentence != cfg.words_per_sentence {
        return Err(Error::Config(format!(
            "document grid {}×{} does not match the model's {}×{}",
            doc.sentences_per_doc, doc.words_per_sentence, cfg.sentences_per_doc, cfg.words_per_sentence
        )));
    }
    if doc.label >= cfg.num_classes {
        return Err(Error::Data(format!(
            "label {} out of range for {} classes",
            doc.label, cfg.num_classes
        )));
    }
    let n = doc.real_sentences();
    let mut channels = Vec::new();
    for ch in &params.layout().channels {
        let mut xs = Vec::with_capacity(n);
        for i in 0..n {
            let s = sentence_input(tape, ch.channel, params, p, doc, i)?;
            xs.push(encode_words_cnn(tape, s, &ch.conv, p)?);
        }
        let hs = encode_sentences_bilstm(tape, &xs, &ch.lstm, cfg.lstm_hidden, p)?;
        let (vector, alphas) = attend(tape, &hs, &ch.attention, p)?;
        channels.push(ChannelOutput {
            channel: ch.channel,
            vector,
            alphas,
        });
    }
    let vs: Vec<Var> = channels.iter().map(|c| c.vector).collect();
    let v = fuse(tape, &vs)?;
    let (logits, probs) = classify(tape, v, &params.layout().classifier, p)?;
    Ok(ForwardOutput {
        logits,
        probs,
        channels,
    })
}

/// Class probabilities and padded attention weights for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub probs: Vec<T>,
    pub alphas: Vec<(Channel, Vec<T>)>,
}

impl<T: Float> Prediction<T> {
    /// Most probable class; ties go to the lowest id.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

pub fn argmax<T: Float>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn predict<T: Float>(params: &ModelParams<T>, doc: &TensorizedDocument) -> Result<Prediction<T>> {
    let mut tape = Tape::new();
    let p = bind(&mut tape, params);
    let out = forward_document(&mut tape, params, &p, doc)?;
    Ok(Prediction {
        probs: tape.value(out.probs).to_vec(),
        alphas: out.padded_alphas(&tape, params.config().sentences_per_doc),
    })
}
