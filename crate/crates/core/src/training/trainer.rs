use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{clip_gradients, label_smoothed_loss_sum, lr_schedule, Adam, GradMap, TrainError};
use crate::lexicon::{BOS_ID, EOS_ID, PAD_ID};
use crate::tensor::{Tape, Tensor};
use crate::transformer::{Checkpoint, Graph, ModelError, Source, Transformer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epsilon_ls: f64,
    pub max_grad_norm: f64,
    /// Utterances per batch.
    pub batch_size: usize,
    pub max_steps: u64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Steps between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: u64,
    /// Multiplier on the warmup schedule.
    pub lr_factor: f64,
    /// Stop once teacher-forced token accuracy on the training set reaches
    /// this value, measured every `eval_every` steps.
    pub stop_at_accuracy: Option<f64>,
    pub eval_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epsilon_ls: 0.1,
            max_grad_norm: 5.0,
            batch_size: 16,
            max_steps: 20_000,
            seed: 1,
            adam_beta1: 0.9,
            adam_beta2: 0.98,
            adam_eps: 1e-9,
            checkpoint_every: 1000,
            lr_factor: 1.0,
            stop_at_accuracy: None,
            eval_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(0.0..1.0).contains(&self.epsilon_ls) {
            return fail("epsilon_ls must lie in [0, 1)");
        }
        if self.max_grad_norm <= 0.0 || self.max_grad_norm.is_nan() {
            return fail("max_grad_norm must be positive");
        }
        if self.batch_size == 0 || self.max_steps == 0 {
            return fail("batch_size and max_steps must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || self.adam_eps <= 0.0 {
            return fail("Adam betas must lie in [0, 1) and eps must be positive");
        }
        if self.lr_factor <= 0.0 {
            return fail("lr_factor must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExampleSource {
    Features(Tensor),
    Tokens(Vec<u32>),
}

impl ExampleSource {
    pub fn len(&self) -> usize {
        match self {
            ExampleSource::Features(t) => t.rows(),
            ExampleSource::Tokens(ids) => ids.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_source(&self) -> Source<'_> {
        match self {
            ExampleSource::Features(t) => Source::Features(t),
            ExampleSource::Tokens(ids) => Source::Tokens(ids),
        }
    }
}

/// One training pair. `target` is framed: `<S> … </S>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub source: ExampleSource,
    pub target: Vec<u32>,
}

impl Example {
    fn check(&self) -> Result<(), TrainError> {
        let t = &self.target;
        if t.len() < 2 || t[0] != BOS_ID || t[t.len() - 1] != EOS_ID {
            return Err(TrainError::Contract(format!("target of {} is not framed by <S> … </S>", self.id)));
        }
        if self.source.is_empty() {
            return Err(TrainError::Contract(format!("source of {} is empty", self.id)));
        }
        Ok(())
    }
}

/// Utterances padded to a common length. Row `i` of each block is real up
/// to `source_lens[i]` / `target_lens[i]`; the rest is zero frames or PAD.
#[derive(Debug, Clone)]
pub struct Batch {
    pub sources: Vec<ExampleSource>,
    pub source_lens: Vec<usize>,
    /// Shifted-right decoder inputs, starting with `<S>`.
    pub target_in: Vec<Vec<u32>>,
    /// Next-token targets, ending with `</S>`.
    pub target_out: Vec<Vec<u32>>,
    pub target_lens: Vec<usize>,
}

impl Batch {
    pub fn assemble(examples: &[&Example]) -> Batch {
        let s_max = examples.iter().map(|e| e.source.len()).max().unwrap_or(0);
        let t_max = examples.iter().map(|e| e.target.len() - 1).max().unwrap_or(0);
        let pad = |ids: &[u32], n: usize| {
            let mut v = ids.to_vec();
            v.resize(n, PAD_ID);
            v
        };
        let sources = examples
            .iter()
            .map(|e| match &e.source {
                ExampleSource::Tokens(ids) => ExampleSource::Tokens(pad(ids, s_max)),
                ExampleSource::Features(t) => {
                    let mut data = t.data().to_vec();
                    data.resize(s_max * t.cols(), 0.0);
                    ExampleSource::Features(Tensor::matrix(s_max, t.cols(), data).expect("padded shape"))
                }
            })
            .collect();
        Batch {
            sources,
            source_lens: examples.iter().map(|e| e.source.len()).collect(),
            target_in: examples.iter().map(|e| pad(&e.target[..e.target.len() - 1], t_max)).collect(),
            target_out: examples.iter().map(|e| pad(&e.target[1..], t_max)).collect(),
            target_lens: examples.iter().map(|e| e.target.len() - 1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.target_lens.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub lr: f64,
    /// Mean label-smoothed loss per target token.
    pub loss: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: Transformer,
    pub adam: Adam,
    /// Completed optimizer steps.
    pub step: u64,
}

impl TrainState {
    pub fn new(model: Transformer, cfg: &TrainConfig) -> Self {
        let adam = Adam::new(model.params(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        TrainState { model, adam, step: 0 }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::from_model(&self.model);
        ck.meta.insert("step".into(), self.step.to_string());
        for (name, t) in &self.adam.m {
            ck.tensors.insert(format!("adam.m.{name}"), t.clone());
        }
        for (name, t) in &self.adam.v {
            ck.tensors.insert(format!("adam.v.{name}"), t.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint, cfg: &TrainConfig) -> Result<Self, TrainError> {
        let model = ck.to_model()?;
        let step: u64 = ck
            .meta
            .get("step")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| TrainError::Contract("checkpoint has no training step".into()))?;
        let mut adam = Adam::new(model.params(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        adam.t = step;
        for name in model.params().keys() {
            for (prefix, slot) in [("adam.m", &mut adam.m), ("adam.v", &mut adam.v)] {
                let t = ck
                    .tensors
                    .get(&format!("{prefix}.{name}"))
                    .ok_or_else(|| TrainError::Contract(format!("checkpoint lacks optimizer state {prefix}.{name}")))?;
                slot.insert(name.clone(), t.clone());
            }
        }
        Ok(TrainState { model, adam, step })
    }
}

/// Well-mixed seed for a (seed, a, b) triple.
fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Drives optimizer steps over a fixed example set.
///
/// Examples are sorted by source length and cut into batches once; each
/// epoch visits the batches in an order drawn from `(seed, epoch)`, so the
/// batch used at any step is a pure function of the step number.
pub struct Trainer<'a> {
    examples: &'a [Example],
    cfg: TrainConfig,
    batches: Vec<Vec<usize>>,
    pub state: TrainState,
}

impl<'a> Trainer<'a> {
    pub fn new(state: TrainState, examples: &'a [Example], cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        if examples.is_empty() {
            return Err(TrainError::Contract("no training examples".into()));
        }
        for e in examples {
            e.check()?;
        }
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.sort_by_key(|&i| (examples[i].source.len(), i));
        let batches = order.chunks(cfg.batch_size).map(|c| c.to_vec()).collect();
        Ok(Trainer {
            examples,
            cfg,
            batches,
            state,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn num_batches(&self) -> usize {
        self.batches.len()
    }

    /// Example indices of the batch used at 1-based `step`.
    pub fn batch_indices(&self, step: u64) -> &[usize] {
        let nb = self.batches.len() as u64;
        let epoch = (step - 1) / nb;
        let mut perm: Vec<usize> = (0..self.batches.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(self.cfg.seed, epoch, 0)));
        &self.batches[perm[((step - 1) % nb) as usize]]
    }

    /// Loss and gradients of the batch at `step` without updating anything.
    pub fn loss_and_gradients(&self, step: u64) -> Result<(f64, GradMap), TrainError> {
        let idx = self.batch_indices(step);
        let examples: Vec<&Example> = idx.iter().map(|&i| &self.examples[i]).collect();
        let batch = Batch::assemble(&examples);
        let total = batch.num_tokens() as f64;
        let model = &self.state.model;
        let rate = model.config().dropout_rate;
        let mut grads: GradMap = model.params().iter().map(|(k, t)| (k.clone(), Tensor::zeros(t.shape().to_vec()))).collect();
        let mut loss_sum = 0.0;
        for (j, &example) in idx.iter().enumerate() {
            let tape = Tape::new();
            let g = Graph::new(&tape, model, true).with_dropout(rate, mix(self.cfg.seed, step, example as u64 + 1));
            let z = model.encode_graph(&g, &batch.sources[j].as_source(), batch.source_lens[j])?;
            let logp = model.decode_graph(&g, z, batch.source_lens[j], &batch.target_in[j], batch.target_lens[j])?;
            let (sum, _) = label_smoothed_loss_sum(logp, &batch.target_out[j], self.cfg.epsilon_ls)?;
            loss_sum += sum.value().item();
            let grad = tape.gradients_of(sum.scale(1.0 / total))?;
            for (name, acc) in grads.iter_mut() {
                if let Some(d) = grad.get(g.param(name)) {
                    acc.data_mut().iter_mut().zip(d.data()).for_each(|(a, b)| *a += b);
                }
            }
        }
        Ok((loss_sum / total, grads))
    }

    /// Runs one optimizer step.
    pub fn step(&mut self) -> Result<StepRecord, TrainError> {
        let step = self.state.step + 1;
        let (loss, mut grads) = self.loss_and_gradients(step)?;
        if !loss.is_finite() {
            return Err(TrainError::NonFinite { step, value: loss });
        }
        let grad_norm = clip_gradients(&mut grads, self.cfg.max_grad_norm);
        if !grad_norm.is_finite() {
            return Err(TrainError::NonFinite { step, value: grad_norm });
        }
        let cfg = self.state.model.config();
        let lr = self.cfg.lr_factor * lr_schedule(step, cfg.d_model, cfg.warmup_steps.max(1));
        self.state.adam.step(self.state.model.params_mut(), &grads, lr);
        self.state.step = step;
        Ok(StepRecord { step, lr, loss, grad_norm })
    }

    /// Steps until `max_steps` or the accuracy target. `on_step` sees every
    /// completed step and may save checkpoints or log. Returns each
    /// measured `(step, training accuracy)`.
    pub fn run(&mut self, mut on_step: impl FnMut(&TrainState, &StepRecord) -> Result<(), TrainError>) -> Result<Vec<(u64, f64)>, TrainError> {
        let mut accuracy = Vec::new();
        while self.state.step < self.cfg.max_steps {
            let rec = self.step()?;
            on_step(&self.state, &rec)?;
            if let Some(target) = self.cfg.stop_at_accuracy {
                if self.cfg.eval_every > 0 && rec.step % self.cfg.eval_every == 0 {
                    let acc = token_accuracy(&self.state.model, self.examples)?;
                    accuracy.push((rec.step, acc));
                    if acc >= target {
                        break;
                    }
                }
            }
        }
        Ok(accuracy)
    }
}

/// Fraction of next-token targets (including `</S>`) whose teacher-forced
/// argmax is correct.
pub fn token_accuracy(model: &Transformer, examples: &[Example]) -> Result<f64, ModelError> {
    let (mut right, mut total) = (0usize, 0usize);
    for e in examples {
        let mem = model.encode(&e.source.as_source())?;
        let logp = model.decode_all(&mem, &e.target[..e.target.len() - 1])?;
        for (t, &y) in e.target[1..].iter().enumerate() {
            let row = logp.row(t);
            let best = row.iter().enumerate().fold(0, |b, (i, v)| if *v > row[b] { i } else { b });
            right += (best == y as usize) as usize;
            total += 1;
        }
    }
    Ok(right as f64 / total.max(1) as f64)
}
