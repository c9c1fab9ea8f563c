use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::config::{Channel, ModelConfig};
use crate::embeddings::{init_syntactic_with, FALLBACK_STD};
use crate::error::{Error, Result};
use crate::tensor::gradcheck::ParamSet;
use crate::tensor::{Float, ParamId, Tensor};
use crate::textpipe::NUM_TAG_IDS;

/// Uniform range of hidden-to-hidden recurrent weights.
pub const RECURRENT_INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvFilter {
    pub r: usize,
    /// `[filters_per_size × r·d]`
    pub weight: ParamId,
    /// `[filters_per_size]`
    pub bias: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvFilterBank {
    pub filters: Vec<ConvFilter>,
}

/// Gate rows are stacked in the order input, forget, output, candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCell {
    /// `[4H × K]`
    pub w_ih: ParamId,
    /// `[4H × H]`
    pub w_hh: ParamId,
    /// `[4H]`
    pub bias: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiLstmParams {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionParams {
    /// `[A × 2H]`
    pub w_s: ParamId,
    /// `[A]`
    pub b_s: ParamId,
    /// `[A]`
    pub u_s: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifierParams {
    /// `[C × fusion_dim]`
    pub w_c: ParamId,
    /// `[C]`
    pub b_c: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelParams {
    pub channel: Channel,
    pub conv: ConvFilterBank,
    pub lstm: BiLstmParams,
    pub attention: AttentionParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Zeros,
    /// Glorot uniform with the given fan-in and fan-out.
    Glorot(usize, usize),
    Recurrent,
    /// Zeros except the forget-gate slice `[H, 2H)`, which is one.
    ForgetBias(usize),
    WordTable,
    TagTable,
}

/// Names, shapes and ids of every parameter for one configuration.
///
/// Enumeration order is fixed: word table, tag table, then each active
/// channel (lexical, syntactic or combined) with its convolution filters by
/// receptive field (weight then bias), forward and backward LSTM cells
/// (`w_ih`, `w_hh`, `bias`) and attention (`w_s`, `b_s`, `u_s`), and finally
/// the classifier (`w_c`, `b_c`). Tables a mode does not use are omitted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub word_table: Option<ParamId>,
    pub tag_table: Option<ParamId>,
    pub channels: Vec<ChannelParams>,
    pub classifier: ClassifierParams,
    specs: Vec<(String, Vec<usize>, Init)>,
}

impl Layout {
    pub fn new(cfg: &ModelConfig, vocab_size: usize) -> Self {
        let mut specs: Vec<(String, Vec<usize>, Init)> = Vec::new();
        let mut add = |name: String, shape: Vec<usize>, init: Init| {
            specs.push((name, shape, init));
            ParamId(specs.len() - 1)
        };
        let word_table = cfg
            .mode
            .uses_words()
            .then(|| add("lexical.embedding".into(), vec![vocab_size, cfg.d_w], Init::WordTable));
        let tag_table = cfg
            .mode
            .uses_tags()
            .then(|| add("syntactic.embedding".into(), vec![NUM_TAG_IDS, cfg.d_p], Init::TagTable));

        let (f, h, a, k) = (cfg.filters_per_size, cfg.lstm_hidden, cfg.attention_dim, cfg.sentence_dim());
        let mut channels = Vec::new();
        for &channel in cfg.mode.channels() {
            let ch = channel.name();
            let d = cfg.channel_input_dim(channel);
            let filters = cfg
                .receptive_fields
                .iter()
                .map(|&r| ConvFilter {
                    r,
                    weight: add(format!("{ch}.conv.r{r}.weight"), vec![f, r * d], Init::Glorot(r * d, f)),
                    bias: add(format!("{ch}.conv.r{r}.bias"), vec![f], Init::Zeros),
                })
                .collect();
            let mut cell = |dir: &str| LstmCell {
                w_ih: add(format!("{ch}.lstm.{dir}.w_ih"), vec![4 * h, k], Init::Glorot(k, 4 * h)),
                w_hh: add(format!("{ch}.lstm.{dir}.w_hh"), vec![4 * h, h], Init::Recurrent),
                bias: add(format!("{ch}.lstm.{dir}.bias"), vec![4 * h], Init::ForgetBias(h)),
            };
            let lstm = BiLstmParams {
                forward: cell("fwd"),
                backward: cell("bwd"),
            };
            let attention = AttentionParams {
                w_s: add(format!("{ch}.attention.w_s"), vec![a, 2 * h], Init::Glorot(2 * h, a)),
                b_s: add(format!("{ch}.attention.b_s"), vec![a], Init::Zeros),
                u_s: add(format!("{ch}.attention.u_s"), vec![a], Init::Glorot(a, 1)),
            };
            channels.push(ChannelParams {
                channel,
                conv: ConvFilterBank { filters },
                lstm,
                attention,
            });
        }
        let fusion = cfg.fusion_dim();
        let c = cfg.num_classes;
        let classifier = ClassifierParams {
            w_c: add("classifier.w_c".into(), vec![c, fusion], Init::Glorot(fusion, c)),
            b_c: add("classifier.b_c".into(), vec![c], Init::Zeros),
        };
        Self {
            word_table,
            tag_table,
            channels,
            classifier,
            specs,
        }
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.specs[id.0].0
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.specs[id.0].1
    }

    /// Embedding tables, whose row 0 is the frozen padding row.
    pub fn tables(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.word_table.into_iter().chain(self.tag_table)
    }
}

/// Every learnable tensor of one model, in [`Layout`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Float = f32> {
    config: ModelConfig,
    layout: Layout,
    tensors: Vec<Tensor<T>>,
}

impl ModelParams<f32> {
    /// Seeded initialization. `word_table`, when given, replaces the random
    /// lexical table and must be `vocab_size × d_w`.
    pub fn init(cfg: &ModelConfig, vocab_size: usize, seed: u64, word_table: Option<Tensor<f32>>) -> Result<Self> {
        cfg.validate()?;
        if cfg.mode.uses_words() && vocab_size < 2 {
            return Err(Error::Config("vocabulary must hold at least PAD and UNK".into()));
        }
        let layout = Layout::new(cfg, vocab_size);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut word_table = word_table;
        let mut tensors = Vec::with_capacity(layout.len());
        for (name, shape, init) in &layout.specs {
            let t = match init {
                Init::WordTable => match word_table.take() {
                    Some(mut t) if t.shape() == shape.as_slice() => {
                        t.row_mut(0).fill(0.0);
                        t
                    }
                    Some(t) => {
                        return Err(Error::Config(format!(
                            "{name}: expected shape {shape:?}, got {:?}",
                            t.shape()
                        )))
                    }
                    None => random_word_table(&mut rng, shape),
                },
                Init::TagTable => init_syntactic_with(&mut rng, shape[1]).table,
                other => init_dense(&mut rng, shape, *other),
            };
            tensors.push(t);
        }
        let mut params = Self {
            config: cfg.clone(),
            layout,
            tensors,
        };
        params.apply_trainability();
        Ok(params)
    }
}

fn random_word_table<R: Rng>(rng: &mut R, shape: &[usize]) -> Tensor<f32> {
    let normal = Normal::new(0.0, FALLBACK_STD).expect("valid std");
    let mut data: Vec<f32> = (0..shape[0] * shape[1]).map(|_| normal.sample(rng) as f32).collect();
    data[..shape[1]].fill(0.0);
    Tensor::new(shape.to_vec(), data).expect("finite")
}

fn init_dense<R: Rng>(rng: &mut R, shape: &[usize], init: Init) -> Tensor<f32> {
    let n: usize = shape.iter().product();
    let uniform = |rng: &mut R, limit: f64| -> Vec<f32> {
        let dist = Uniform::new_inclusive(-limit, limit).expect("valid range");
        (0..n).map(|_| dist.sample(rng) as f32).collect()
    };
    let data = match init {
        Init::Zeros => vec![0.0; n],
        Init::Glorot(fan_in, fan_out) => uniform(rng, (6.0 / (fan_in + fan_out) as f64).sqrt()),
        Init::Recurrent => uniform(rng, RECURRENT_INIT_RANGE),
        Init::ForgetBias(h) => {
            let mut b = vec![0.0; n];
            b[h..2 * h].fill(1.0);
            b
        }
        Init::WordTable | Init::TagTable => unreachable!("tables are initialized separately"),
    };
    Tensor::new(shape.to_vec(), data).expect("finite")
}

impl<T: Float> ModelParams<T> {
    /// Rebuilds from tensors in layout order, checking every shape.
    pub fn from_tensors(cfg: &ModelConfig, vocab_size: usize, tensors: Vec<Tensor<T>>) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(cfg, vocab_size);
        if tensors.len() != layout.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for (i, t) in tensors.iter().enumerate() {
            let id = ParamId(i);
            if t.shape() != layout.shape(id) {
                return Err(Error::Config(format!(
                    "{}: expected shape {:?}, got {:?}",
                    layout.name(id),
                    layout.shape(id),
                    t.shape()
                )));
            }
        }
        let mut params = Self {
            config: cfg.clone(),
            layout,
            tensors,
        };
        params.apply_trainability();
        Ok(params)
    }

    fn apply_trainability(&mut self) {
        for (i, t) in self.tensors.iter_mut().enumerate() {
            let frozen = Some(ParamId(i)) == self.layout.word_table && !self.config.lexical_trainable;
            t.set_requires_grad(!frozen);
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn vocab_size(&self) -> usize {
        self.layout
            .word_table
            .map(|id| self.layout.shape(id)[0])
            .unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        self.layout.name(id)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.ids().find(|&id| self.name(id) == name)
    }

    /// `(name, tensor)` pairs in enumeration order.
    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.ids().map(move |id| (self.name(id), self.get(id)))
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn cast<U: Float>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            layout: self.layout.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// Whether `row` of parameter `id` is a frozen padding row.
    pub fn is_frozen_row(&self, id: ParamId, row: usize) -> bool {
        row == 0 && self.layout.tables().any(|t| t == id)
    }
}

impl ParamSet for ModelParams<f64> {
    fn len(&self) -> usize {
        self.tensors.len()
    }
    fn name(&self, i: usize) -> &str {
        self.layout.name(ParamId(i))
    }
    fn tensor(&self, i: usize) -> &Tensor<f64> {
        &self.tensors[i]
    }
    fn tensor_mut(&mut self, i: usize) -> &mut Tensor<f64> {
        &mut self.tensors[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;

    #[test]
    fn enumeration_order_is_fixed() {
        let p = ModelParams::init(&ModelConfig::tiny(), 20, 0, None).unwrap();
        let names: Vec<&str> = p.named().map(|(n, _)| n).collect();
        assert_eq!(names[0], "lexical.embedding");
        assert_eq!(names[1], "syntactic.embedding");
        assert_eq!(names[2], "lexical.conv.r2.weight");
        assert_eq!(names[3], "lexical.conv.r2.bias");
        assert_eq!(names[6], "lexical.lstm.fwd.w_ih");
        assert_eq!(*names.last().unwrap(), "classifier.b_c");
        // 2 tables + per channel (4 conv + 6 lstm + 3 attention) × 2 + 2 classifier
        assert_eq!(names.len(), 2 + 13 * 2 + 2);
    }

    #[test]
    fn shapes_follow_the_config() {
        let cfg = ModelConfig::tiny();
        let p = ModelParams::init(&cfg, 20, 0, None).unwrap();
        let shape = |n: &str| p.get(p.find(n).unwrap()).shape().to_vec();
        assert_eq!(shape("lexical.embedding"), vec![20, 4]);
        assert_eq!(shape("syntactic.embedding"), vec![48, 4]);
        assert_eq!(shape("syntactic.conv.r3.weight"), vec![2, 12]);
        assert_eq!(shape("lexical.lstm.bwd.w_ih"), vec![12, 4]);
        assert_eq!(shape("lexical.lstm.bwd.w_hh"), vec![12, 3]);
        assert_eq!(shape("syntactic.attention.w_s"), vec![6, 6]);
        assert_eq!(shape("classifier.w_c"), vec![2, 12]);
        let combined = ModelParams::init(&cfg.with_mode(Mode::CombinedEmbed), 20, 0, None).unwrap();
        let w = combined.find("combined.conv.r2.weight").unwrap();
        assert_eq!(combined.get(w).shape(), &[2, 16]);
    }

    #[test]
    fn single_channel_modes_omit_unused_tables() {
        let cfg = ModelConfig::tiny();
        let lex = ModelParams::init(&cfg.clone().with_mode(Mode::Lexical), 20, 0, None).unwrap();
        assert!(lex.layout().tag_table.is_none());
        assert!(lex.find("syntactic.conv.r2.weight").is_none());
        let syn = ModelParams::init(&cfg.with_mode(Mode::Syntactic), 20, 0, None).unwrap();
        assert!(syn.layout().word_table.is_none());
        assert_eq!(syn.get(syn.layout().classifier.w_c).shape(), &[2, 6]);
    }

    #[test]
    fn init_is_seeded_with_zero_pad_rows_and_forget_bias() {
        let cfg = ModelConfig::tiny();
        let a = ModelParams::init(&cfg, 20, 9, None).unwrap();
        assert_eq!(a, ModelParams::init(&cfg, 20, 9, None).unwrap());
        assert_ne!(a, ModelParams::init(&cfg, 20, 10, None).unwrap());
        for t in a.layout().tables() {
            assert!(a.get(t).row(0).iter().all(|&x| x == 0.0));
        }
        let b = a.get(a.find("lexical.lstm.fwd.bias").unwrap()).data();
        assert_eq!(b, &[0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0.]);
        let w_hh = a.get(a.find("lexical.lstm.fwd.w_hh").unwrap()).data();
        assert!(w_hh.iter().all(|x| f64::from(x.abs()) <= RECURRENT_INIT_RANGE));
    }

    #[test]
    fn frozen_lexical_table_does_not_require_grad() {
        let mut cfg = ModelConfig::tiny();
        cfg.lexical_trainable = false;
        let p = ModelParams::init(&cfg, 20, 0, None).unwrap();
        assert!(!p.get(p.layout().word_table.unwrap()).requires_grad());
        assert!(p.get(p.layout().tag_table.unwrap()).requires_grad());
    }

    #[test]
    fn from_tensors_checks_shapes() {
        let cfg = ModelConfig::tiny();
        let p = ModelParams::init(&cfg, 20, 0, None).unwrap();
        let back = ModelParams::from_tensors(&cfg, 20, p.tensors().to_vec()).unwrap();
        assert_eq!(back, p);
        assert!(ModelParams::from_tensors(&cfg, 21, p.tensors().to_vec()).is_err());
        assert!(ModelParams::from_tensors(&cfg, 20, p.tensors()[1..].to_vec()).is_err());
    }

    #[test]
    fn provided_word_table_is_used_with_zero_pad_row() {
        let cfg = ModelConfig::tiny();
        let table = Tensor::new(vec![20, 4], vec![0.5; 80]).unwrap();
        let p = ModelParams::init(&cfg, 20, 0, Some(table.clone())).unwrap();
        let got = p.get(p.layout().word_table.unwrap());
        assert_eq!(got.row(0), &[0.0; 4]);
        assert_eq!(got.data()[4..], table.data()[4..]);
        let bad = Tensor::new(vec![19, 4], vec![0.5; 76]).unwrap();
        assert!(ModelParams::init(&cfg, 20, 0, Some(bad)).is_err());
    }
}
