use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::attention::{multi_head_attention, positional_encoding, MultiHeadParams};
use super::{InputKind, ModelConfig, ModelError};
use crate::lexicon::BOS_ID;
use crate::tensor::{Mask, Tape, Tensor, Var};

/// Named parameters in canonical order.
pub type ParamStore = IndexMap<String, Arc<Tensor>>;

const LN_EPS: f64 = 1e-6;

/// Encoder input: padded frames or padded token ids.
#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    Features(&'a Tensor),
    Tokens(&'a [u32]),
}

impl Source<'_> {
    pub fn len(&self) -> usize {
        match self {
            Source::Features(t) => t.rows(),
            Source::Tokens(ids) => ids.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Encoder output `z` (frames × d_model); keys at or past `valid_len` are
/// padding and never attended to.
#[derive(Debug, Clone)]
pub struct EncoderMemory {
    pub z: Arc<Tensor>,
    pub valid_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttentionKind {
    EncoderSelf,
    DecoderSelf,
    Cross,
}

#[derive(Debug, Clone)]
pub struct AttentionRecord {
    pub kind: AttentionKind,
    pub layer: usize,
    pub head: usize,
    pub weights: Arc<Tensor>,
}

/// Model parameters bound to a tape for one forward pass, plus optional
/// dropout and attention capture.
pub struct Graph<'t> {
    tape: &'t Tape,
    vars: HashMap<String, Var<'t>>,
    dropout: Option<RefCell<(ChaCha8Rng, f64)>>,
    trace: Option<RefCell<Vec<AttentionRecord>>>,
}

impl<'t> Graph<'t> {
    /// Binds every parameter of `model`; `trainable` decides whether they
    /// receive gradients.
    pub fn new(tape: &'t Tape, model: &Transformer, trainable: bool) -> Self {
        let vars = model
            .params
            .iter()
            .map(|(name, t)| (name.clone(), tape.leaf(Arc::clone(t), trainable)))
            .collect();
        Graph {
            tape,
            vars,
            dropout: None,
            trace: None,
        }
    }

    /// Binds caller-made variables by parameter name, for differentiating
    /// with respect to values that are not stored in a model.
    pub fn from_vars(tape: &'t Tape, vars: impl IntoIterator<Item = (String, Var<'t>)>) -> Self {
        Graph {
            tape,
            vars: vars.into_iter().collect(),
            dropout: None,
            trace: None,
        }
    }

    /// Enables inverted dropout at `rate` with masks drawn from `seed`.
    pub fn with_dropout(mut self, rate: f64, seed: u64) -> Self {
        if rate > 0.0 {
            self.dropout = Some(RefCell::new((ChaCha8Rng::seed_from_u64(seed), rate)));
        }
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(RefCell::new(Vec::new()));
        self
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn param(&self, name: &str) -> Var<'t> {
        *self.vars.get(name).unwrap_or_else(|| panic!("no parameter named {name}"))
    }

    pub fn take_trace(&self) -> Vec<AttentionRecord> {
        self.trace.as_ref().map(|t| t.take()).unwrap_or_default()
    }

    fn dropout(&self, x: Var<'t>) -> Result<Var<'t>, ModelError> {
        let Some(cell) = &self.dropout else { return Ok(x) };
        let (rng, rate) = &mut *cell.borrow_mut();
        let keep = 1.0 / (1.0 - *rate);
        let value = x.value();
        let mask: Vec<f64> = (0..value.len())
            .map(|_| if rng.gen::<f64>() < *rate { 0.0 } else { keep })
            .collect();
        Ok(x.mul_const(Tensor::new(value.shape().to_vec(), mask)?)?)
    }

    fn record(&self, kind: AttentionKind, layer: usize, weights: &[Arc<Tensor>]) {
        if let Some(trace) = &self.trace {
            let mut t = trace.borrow_mut();
            for (head, w) in weights.iter().enumerate() {
                t.push(AttentionRecord {
                    kind,
                    layer,
                    head,
                    weights: Arc::clone(w),
                });
            }
        }
    }

    fn mha(&self, prefix: &str, heads: usize) -> MultiHeadParams<'t> {
        MultiHeadParams {
            w_q: self.param(&format!("{prefix}.wq")),
            w_k: self.param(&format!("{prefix}.wk")),
            w_v: self.param(&format!("{prefix}.wv")),
            w_o: self.param(&format!("{prefix}.wo")),
            heads,
        }
    }

    fn layer_norm(&self, x: Var<'t>, prefix: &str) -> Result<Var<'t>, ModelError> {
        Ok(x.layer_norm(self.param(&format!("{prefix}.g")), self.param(&format!("{prefix}.b")), LN_EPS)?)
    }

    fn linear(&self, x: Var<'t>, prefix: &str) -> Result<Var<'t>, ModelError> {
        Ok(x.matmul(self.param(&format!("{prefix}.w")))?.add_row(self.param(&format!("{prefix}.b")))?)
    }
}

/// One Transformer: configuration plus named parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformer {
    config: ModelConfig,
    params: ParamStore,
}

impl Transformer {
    /// The canonical parameter names and shapes for a configuration.
    pub fn parameter_layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        let d = cfg.d_model;
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        let mut push = |name: String, shape: Vec<usize>| out.push((name, shape));
        match cfg.input_kind {
            InputKind::Features => {
                push("enc.in.w".into(), vec![cfg.input_dim, d]);
                push("enc.in.b".into(), vec![d]);
                push("enc.in.ln.g".into(), vec![d]);
                push("enc.in.ln.b".into(), vec![d]);
            }
            InputKind::Tokens => push("enc.emb".into(), vec![cfg.input_dim, d]),
        }
        let mha = |push: &mut dyn FnMut(String, Vec<usize>), p: String| {
            push(format!("{p}.wq"), vec![d, cfg.n_heads * cfg.d_k]);
            push(format!("{p}.wk"), vec![d, cfg.n_heads * cfg.d_k]);
            push(format!("{p}.wv"), vec![d, cfg.n_heads * cfg.d_v]);
            push(format!("{p}.wo"), vec![cfg.n_heads * cfg.d_v, d]);
        };
        let ln = |push: &mut dyn FnMut(String, Vec<usize>), p: String| {
            push(format!("{p}.g"), vec![d]);
            push(format!("{p}.b"), vec![d]);
        };
        let ff = |push: &mut dyn FnMut(String, Vec<usize>), p: String| {
            push(format!("{p}.w1.w"), vec![d, cfg.d_ff]);
            push(format!("{p}.w1.b"), vec![cfg.d_ff]);
            push(format!("{p}.w2.w"), vec![cfg.d_ff, d]);
            push(format!("{p}.w2.b"), vec![d]);
        };
        for l in 0..cfg.n_layers {
            mha(&mut push, format!("enc.{l}.self"));
            ln(&mut push, format!("enc.{l}.ln1"));
            ff(&mut push, format!("enc.{l}.ff"));
            ln(&mut push, format!("enc.{l}.ln2"));
        }
        push("dec.emb".into(), vec![cfg.output_vocab_size, d]);
        for l in 0..cfg.n_layers {
            mha(&mut push, format!("dec.{l}.self"));
            ln(&mut push, format!("dec.{l}.ln1"));
            mha(&mut push, format!("dec.{l}.cross"));
            ln(&mut push, format!("dec.{l}.ln2"));
            ff(&mut push, format!("dec.{l}.ff"));
            ln(&mut push, format!("dec.{l}.ln3"));
        }
        push("dec.out.w".into(), vec![d, cfg.output_vocab_size]);
        push("dec.out.b".into(), vec![cfg.output_vocab_size]);
        out
    }

    /// Xavier-uniform matrices, uniform embeddings with variance `1/d_model`,
    /// zero biases and unit layer-norm gains. Values are rounded to `f32` so
    /// checkpoints reproduce them exactly.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model as f64;
        let params = Self::parameter_layout(&config)
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let data: Vec<f64> = if name.ends_with(".g") {
                    vec![1.0; n]
                } else if shape.len() == 1 {
                    vec![0.0; n]
                } else {
                    let limit = if name.ends_with("emb") {
                        (3.0 / d).sqrt()
                    } else {
                        (6.0 / (shape[0] + shape[1]) as f64).sqrt()
                    };
                    (0..n).map(|_| rng.gen_range(-limit..limit) as f32 as f64).collect()
                };
                (name, Arc::new(Tensor::new(shape, data).expect("layout shapes are positive")))
            })
            .collect();
        Ok(Transformer { config, params })
    }

    /// Assembles a model from stored parameters, checking names and shapes.
    pub fn from_parts(config: ModelConfig, mut tensors: IndexMap<String, Tensor>) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = ParamStore::new();
        for (name, shape) in Self::parameter_layout(&config) {
            let t = tensors
                .shift_remove(&name)
                .ok_or_else(|| ModelError::Config(format!("missing parameter {name}")))?;
            if t.shape() != shape.as_slice() {
                return Err(ModelError::Config(format!("parameter {name} has shape {:?}, expected {shape:?}", t.shape())));
            }
            params.insert(name, Arc::new(t));
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(ModelError::Config(format!("unexpected parameter {extra}")));
        }
        Ok(Transformer { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    fn check_source(&self, source: &Source<'_>) -> Result<(), ModelError> {
        match (self.config.input_kind, source) {
            (InputKind::Features, Source::Features(t)) if t.cols() == self.config.input_dim && t.shape().len() == 2 => Ok(()),
            (InputKind::Features, Source::Features(t)) => Err(ModelError::Config(format!(
                "feature input has shape {:?}, model expects {} columns",
                t.shape(),
                self.config.input_dim
            ))),
            (InputKind::Tokens, Source::Tokens(ids)) => match ids.iter().find(|&&i| i as usize >= self.config.input_dim) {
                Some(&bad) => Err(ModelError::Config(format!("source token {bad} outside vocabulary of {}", self.config.input_dim))),
                None if ids.is_empty() => Err(ModelError::Contract("empty source sequence".into())),
                None => Ok(()),
            },
            (kind, _) => Err(ModelError::Config(format!("model expects {kind:?} input"))),
        }
    }

    /// Key mask over `len` positions where only the first `valid` may be attended.
    fn key_mask(rows: usize, len: usize, valid: usize) -> Mask {
        Mask::from_fn(rows, len, |_, j| j < valid)
    }

    fn feed_forward<'t>(&self, g: &Graph<'t>, x: Var<'t>, prefix: &str) -> Result<Var<'t>, ModelError> {
        let h = g.linear(x, &format!("{prefix}.w1"))?.relu();
        g.linear(h, &format!("{prefix}.w2"))
    }

    /// `LayerNorm(x + Dropout(sublayer))`.
    fn residual<'t>(&self, g: &Graph<'t>, x: Var<'t>, sub: Var<'t>, ln: &str) -> Result<Var<'t>, ModelError> {
        let sub = g.dropout(sub)?;
        g.layer_norm(x.add(sub)?, ln)
    }

    fn token_embedding<'t>(&self, g: &Graph<'t>, table: &str, ids: &[u32]) -> Result<Var<'t>, ModelError> {
        let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let d = self.config.d_model;
        let e = g.param(table).embedding(&idx)?.scale((d as f64).sqrt());
        let pe = g.tape().constant(positional_encoding(ids.len(), d));
        g.dropout(e.add(pe)?)
    }

    /// Encoder stack over a (possibly padded) source whose first
    /// `valid_len` positions are real.
    pub fn encode_graph<'t>(&self, g: &Graph<'t>, source: &Source<'_>, valid_len: usize) -> Result<Var<'t>, ModelError> {
        self.check_source(source)?;
        let len = source.len();
        if valid_len == 0 || valid_len > len {
            return Err(ModelError::Contract(format!("valid length {valid_len} outside 1..={len}")));
        }
        let d = self.config.d_model;
        let mut x = match source {
            Source::Features(t) => {
                let input = g.tape().constant((*t).clone());
                let proj = g.layer_norm(g.linear(input, "enc.in")?, "enc.in.ln")?;
                let pe = g.tape().constant(positional_encoding(len, d));
                g.dropout(proj.add(pe)?)?
            }
            Source::Tokens(ids) => self.token_embedding(g, "enc.emb", ids)?,
        };
        let mask = Self::key_mask(len, len, valid_len);
        for l in 0..self.config.n_layers {
            let att = multi_head_attention(x, x, x, &g.mha(&format!("enc.{l}.self"), self.config.n_heads), Some(&mask))?;
            g.record(AttentionKind::EncoderSelf, l, &att.weights);
            x = self.residual(g, x, att.output, &format!("enc.{l}.ln1"))?;
            let f = self.feed_forward(g, x, &format!("enc.{l}.ff"))?;
            x = self.residual(g, x, f, &format!("enc.{l}.ln2"))?;
        }
        Ok(x)
    }

    /// Decoder stack; returns log-probabilities, one row per target input
    /// position. Target positions at or past `target_valid` are padding.
    pub fn decode_graph<'t>(
        &self,
        g: &Graph<'t>,
        memory: Var<'t>,
        memory_valid: usize,
        target_in: &[u32],
        target_valid: usize,
    ) -> Result<Var<'t>, ModelError> {
        if target_in.is_empty() {
            return Err(ModelError::Contract("empty target prefix".into()));
        }
        if let Some(&bad) = target_in.iter().find(|&&i| i as usize >= self.config.output_vocab_size) {
            return Err(ModelError::Config(format!("target token {bad} outside vocabulary of {}", self.config.output_vocab_size)));
        }
        let t = target_in.len();
        let s = memory.value().rows();
        let self_mask = Mask::from_fn(t, t, |i, j| j <= i && j < target_valid.max(1));
        let cross_mask = Self::key_mask(t, s, memory_valid);
        let mut x = self.token_embedding(g, "dec.emb", target_in)?;
        for l in 0..self.config.n_layers {
            let att = multi_head_attention(x, x, x, &g.mha(&format!("dec.{l}.self"), self.config.n_heads), Some(&self_mask))?;
            g.record(AttentionKind::DecoderSelf, l, &att.weights);
            x = self.residual(g, x, att.output, &format!("dec.{l}.ln1"))?;
            let att = multi_head_attention(x, memory, memory, &g.mha(&format!("dec.{l}.cross"), self.config.n_heads), Some(&cross_mask))?;
            g.record(AttentionKind::Cross, l, &att.weights);
            x = self.residual(g, x, att.output, &format!("dec.{l}.ln2"))?;
            let f = self.feed_forward(g, x, &format!("dec.{l}.ff"))?;
            x = self.residual(g, x, f, &format!("dec.{l}.ln3"))?;
        }
        Ok(g.linear(x, "dec.out")?.log_softmax_rows())
    }

    /// Inference-mode encoding of an unpadded source.
    pub fn encode(&self, source: &Source<'_>) -> Result<EncoderMemory, ModelError> {
        let tape = Tape::new();
        let g = Graph::new(&tape, self, false);
        let z = self.encode_graph(&g, source, source.len())?;
        Ok(EncoderMemory {
            z: z.value(),
            valid_len: source.len(),
        })
    }

    /// Log-probabilities of the next token after `prefix`, which must start
    /// with `<S>`.
    pub fn decode_step(&self, memory: &EncoderMemory, prefix: &[u32]) -> Result<Vec<f64>, ModelError> {
        if prefix.first() != Some(&BOS_ID) {
            return Err(ModelError::Contract("decoder prefix must start with <S>".into()));
        }
        let logp = self.decode_all(memory, prefix)?;
        Ok(logp.row(logp.rows() - 1).to_vec())
    }

    /// Log-probability rows for every position of `target_in`.
    pub fn decode_all(&self, memory: &EncoderMemory, target_in: &[u32]) -> Result<Tensor, ModelError> {
        let tape = Tape::new();
        let g = Graph::new(&tape, self, false);
        let z = tape.constant(Arc::clone(&memory.z));
        let out = self.decode_graph(&g, z, memory.valid_len, target_in, target_in.len())?;
        Ok((*out.value()).clone())
    }

    /// Teacher-forced pass capturing every head's attention weights.
    pub fn attention_maps(&self, source: &Source<'_>, target_in: &[u32]) -> Result<Vec<AttentionRecord>, ModelError> {
        let tape = Tape::new();
        let g = Graph::new(&tape, self, false).with_trace();
        let z = self.encode_graph(&g, source, source.len())?;
        self.decode_graph(&g, z, source.len(), target_in, target_in.len())?;
        Ok(g.take_trace())
    }
}
