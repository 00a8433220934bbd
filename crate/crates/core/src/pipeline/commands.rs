use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::config::{derive_seed, RunConfig, ACOUSTIC_INIT, ACOUSTIC_TRAIN, WORD_INIT, WORD_TRAIN};
use super::{parallel_map, PipelineError};
use crate::audio::{
    cmvn_by_speaker, log_mel, read_features, read_manifest, read_wav, speed_perturb, stack_and_downsample, write_features, FeatureMatrix,
    ManifestEntry,
};
use crate::decoding::{cascade_decode, CascadeOutput};
use crate::evaluation::{attention_matrix, score_corpus, units_to_words_lowerbound, write_attention, LowerBoundItem, ScoreReport};
use crate::lexicon::{Lexicon, VocabKind, Vocabulary, BOS_ID};
use crate::tensor::Tensor;
use crate::training::{Example, ExampleSource, TrainState, Trainer};
use crate::transformer::{AttentionKind, Checkpoint, InputKind, Source, Transformer};

/// Speed factors applied when perturbation is enabled, with id suffixes.
pub const PERTURB_FACTORS: [(f64, &str); 2] = [(0.9, "-sp0.9"), (1.1, "-sp1.1")];

/// Fixed places under the run directory.
#[derive(Debug, Clone)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: &Path) -> Self {
        RunLayout { root: root.to_path_buf() }
    }

    pub fn features_dir(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn ckpt_dir(&self) -> PathBuf {
        self.root.join("ckpt")
    }

    pub fn decode_dir(&self) -> PathBuf {
        self.root.join("decode")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn feature_path(&self, utterance_id: &str) -> PathBuf {
        self.features_dir().join(format!("{utterance_id}.feat"))
    }

    pub fn unit_vocab(&self) -> PathBuf {
        self.ckpt_dir().join("units.vocab")
    }

    pub fn word_vocab(&self) -> PathBuf {
        self.ckpt_dir().join("words.vocab")
    }

    pub fn checkpoint(&self, stage: Stage) -> PathBuf {
        self.ckpt_dir().join(format!("{stage}.ckpt"))
    }

    pub fn loss_log(&self, stage: Stage) -> PathBuf {
        self.reports_dir().join(format!("{stage}-loss.tsv"))
    }

    pub fn effective_config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    fn create(&self) -> Result<(), PipelineError> {
        for d in [self.features_dir(), self.ckpt_dir(), self.decode_dir(), self.reports_dir()] {
            fs::create_dir_all(d)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Features to sub-word units.
    Acoustic,
    /// Sub-word units to words.
    Word,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Acoustic => "acoustic",
            Stage::Word => "word",
        })
    }
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "acoustic" => Ok(Stage::Acoustic),
            "word" => Ok(Stage::Word),
            other => Err(format!("unknown stage `{other}` (expected acoustic or word)")),
        }
    }
}

/// Per-utterance failure that did not stop the command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceFailure {
    pub utterance_id: String,
    pub message: String,
}

fn prepare(cfg: &RunConfig) -> Result<RunLayout, PipelineError> {
    cfg.validate()?;
    let layout = RunLayout::new(&cfg.run_dir);
    layout.create()?;
    fs::write(layout.effective_config(), cfg.effective()?.to_toml())?;
    Ok(layout)
}

fn manifest_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "manifest".into())
}

fn write_failures(path: &Path, failures: &[UtteranceFailure]) -> Result<(), PipelineError> {
    if failures.is_empty() {
        if path.exists() {
            fs::remove_file(path)?;
        }
        return Ok(());
    }
    let text: String = failures.iter().map(|f| format!("{}\t{}\n", f.utterance_id, f.message.replace(['\t', '\n'], " "))).collect();
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct FeatureSummary {
    /// Cache entries written, including perturbed copies.
    pub written: Vec<String>,
    pub failures: Vec<UtteranceFailure>,
}

/// Log-Mel extraction, per-speaker CMVN, stacking and downsampling for
/// every utterance of `manifest`, written to `features/<id>.feat`.
pub fn cmd_features(cfg: &RunConfig, manifest: &Path) -> Result<FeatureSummary, PipelineError> {
    let layout = prepare(cfg)?;
    let entries = read_manifest(manifest)?;
    let mut variants: Vec<(f64, &str)> = vec![(1.0, "")];
    if cfg.speed_perturb {
        variants.extend(PERTURB_FACTORS);
    }
    let raw = parallel_map(&entries, cfg.jobs, |e| -> Result<Vec<FeatureMatrix>, PipelineError> {
        let audio = read_wav(&e.wav_path)?;
        variants
            .iter()
            .map(|&(factor, suffix)| {
                let audio = if factor == 1.0 { audio.clone() } else { speed_perturb(&audio, factor)? };
                // Perturbed copies count as separate speakers for normalization.
                Ok(log_mel(&audio, &cfg.frontend, &format!("{}{suffix}", e.utterance_id), &format!("{}{suffix}", e.speaker_id))?)
            })
            .collect()
    });
    let mut failures = Vec::new();
    let mut logmel = Vec::new();
    for (e, r) in entries.iter().zip(raw) {
        match r {
            Ok(f) => logmel.extend(f),
            Err(err) => failures.push(UtteranceFailure {
                utterance_id: e.utterance_id.clone(),
                message: err.to_string(),
            }),
        }
    }
    let mut written = Vec::with_capacity(logmel.len());
    for f in cmvn_by_speaker(&logmel) {
        let out = stack_and_downsample(&f, cfg.frontend.left_stack, cfg.frontend.downsample_factor);
        write_features(&layout.feature_path(&out.utterance_id), &out)?;
        written.push(out.utterance_id);
    }
    write_failures(&layout.reports_dir().join(format!("{}-features-errors.tsv", manifest_stem(manifest))), &failures)?;
    Ok(FeatureSummary { written, failures })
}

fn load_lexicon(cfg: &RunConfig) -> Result<Lexicon, PipelineError> {
    Ok(Lexicon::load(&cfg.lexicon, &cfg.syllables)?)
}

/// Unit vocabulary at the configured level and the word vocabulary, both
/// covering the whole lexicon; written to `ckpt/`.
pub fn cmd_prep_vocab(cfg: &RunConfig) -> Result<(Vocabulary, Vocabulary), PipelineError> {
    let layout = prepare(cfg)?;
    let lex = load_lexicon(cfg)?;
    let units = match cfg.unit_level {
        crate::lexicon::UnitLevel::Syllable => Vocabulary::build(lex.syllable_inventory()),
        crate::lexicon::UnitLevel::Phoneme => Vocabulary::build(lex.phoneme_inventory()),
    };
    let words = Vocabulary::build(lex.words());
    units.write(&layout.unit_vocab())?;
    words.write(&layout.word_vocab())?;
    Ok((units, words))
}

fn load_vocabs(cfg: &RunConfig, layout: &RunLayout) -> Result<(Vocabulary, Vocabulary), PipelineError> {
    if layout.unit_vocab().exists() && layout.word_vocab().exists() {
        Ok((Vocabulary::load(&layout.unit_vocab())?, Vocabulary::load(&layout.word_vocab())?))
    } else {
        cmd_prep_vocab(cfg)
    }
}

fn load_cached(layout: &RunLayout, cfg: &RunConfig, id: &str, speaker: &str) -> Result<Tensor, PipelineError> {
    let path = layout.feature_path(id);
    if !path.exists() {
        return Err(PipelineError::Config(format!("no cached features for {id}; run the features command first")));
    }
    let f = read_features(&path, id, speaker, cfg.frontend.output_frame_ms())?;
    if f.dim() != cfg.frontend.output_dim() {
        return Err(PipelineError::Config(format!(
            "cached features for {id} have dimension {}, the frontend configuration gives {}",
            f.dim(),
            cfg.frontend.output_dim()
        )));
    }
    Ok(f.frames)
}

fn unit_ids(lex: &Lexicon, cfg: &RunConfig, units: &Vocabulary, transcript: &[String]) -> Vec<u32> {
    lex.units_for(transcript, cfg.unit_level).iter().map(|u| units.id_or_unk(u)).collect()
}

fn framed(ids: &[u32]) -> Vec<u32> {
    let mut v = Vec::with_capacity(ids.len() + 2);
    v.push(BOS_ID);
    v.extend_from_slice(ids);
    v.push(crate::lexicon::EOS_ID);
    v
}

fn stage_examples(cfg: &RunConfig, layout: &RunLayout, stage: Stage, units: &Vocabulary, words: &Vocabulary) -> Result<Vec<Example>, PipelineError> {
    let lex = load_lexicon(cfg)?;
    let entries = read_manifest(&cfg.train_manifest)?;
    let mut out = Vec::new();
    for e in &entries {
        let unit_seq = unit_ids(&lex, cfg, units, &e.transcript);
        match stage {
            Stage::Acoustic => {
                let mut ids = vec![(e.utterance_id.clone(), e.speaker_id.clone())];
                if cfg.speed_perturb {
                    ids.extend(PERTURB_FACTORS.iter().map(|(_, s)| (format!("{}{s}", e.utterance_id), format!("{}{s}", e.speaker_id))));
                }
                for (id, spk) in ids {
                    let frames = load_cached(layout, cfg, &id, &spk)?;
                    out.push(Example {
                        id,
                        source: ExampleSource::Features(frames),
                        target: framed(&unit_seq),
                    });
                }
            }
            Stage::Word => {
                if unit_seq.is_empty() {
                    continue;
                }
                out.push(Example {
                    id: e.utterance_id.clone(),
                    source: ExampleSource::Tokens(unit_seq),
                    target: words.encode(VocabKind::Word, &e.transcript).ids,
                });
            }
        }
    }
    if out.is_empty() {
        return Err(PipelineError::Config(format!("{} holds no usable training utterances", cfg.train_manifest.display())));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub steps: u64,
    pub final_loss: f64,
    /// `(step, teacher-forced training accuracy)` at each evaluation.
    pub accuracy: Vec<(u64, f64)>,
    pub checkpoint: PathBuf,
}

/// Trains one stage. The acoustic stage reads cached features for the
/// training manifest; the word stage pairs each transcript's lexicon units
/// with its words. With `resume`, training continues from the stage's
/// checkpoint.
pub fn cmd_train(cfg: &RunConfig, stage: Stage, resume: bool) -> Result<TrainOutcome, PipelineError> {
    let layout = prepare(cfg)?;
    let (units, words) = load_vocabs(cfg, &layout)?;
    let (spec, mut tcfg, init_seed, train_seed) = match stage {
        Stage::Acoustic => (&cfg.acoustic.model, cfg.acoustic.train.clone(), ACOUSTIC_INIT, ACOUSTIC_TRAIN),
        Stage::Word => (&cfg.word.model, cfg.word.train.clone(), WORD_INIT, WORD_TRAIN),
    };
    tcfg.seed = derive_seed(cfg.seed, train_seed);
    let model_cfg = match stage {
        Stage::Acoustic => spec.resolve(InputKind::Features, cfg.frontend.output_dim(), units.len())?,
        Stage::Word => spec.resolve(InputKind::Tokens, units.len(), words.len())?,
    };
    let ckpt_path = layout.checkpoint(stage);
    let state = if resume && ckpt_path.exists() {
        let ck = Checkpoint::load(&ckpt_path)?;
        if ck.config != model_cfg {
            return Err(PipelineError::Config(format!(
                "{} was trained with a different model configuration or vocabulary",
                ckpt_path.display()
            )));
        }
        TrainState::from_checkpoint(&ck, &tcfg)?
    } else {
        TrainState::new(Transformer::new(model_cfg, derive_seed(cfg.seed, init_seed))?, &tcfg)
    };
    let examples = stage_examples(cfg, &layout, stage, &units, &words)?;
    let log_path = layout.loss_log(stage);
    let mut log = OpenOptions::new().create(true).append(true).truncate(false).open(&log_path)?;
    if state.step == 0 {
        log.set_len(0)?;
        writeln!(log, "step\tlr\tloss")?;
    }
    let every = tcfg.checkpoint_every;
    let mut trainer = Trainer::new(state, &examples, tcfg)?;
    let mut final_loss = f64::NAN;
    let mut io_error = None;
    let accuracy = trainer.run(|state, rec| {
        final_loss = rec.loss;
        let mut save = || -> Result<(), PipelineError> {
            writeln!(log, "{}\t{}\t{}", rec.step, rec.lr, rec.loss)?;
            if every > 0 && rec.step % every == 0 {
                state.to_checkpoint().save(&layout.ckpt_dir().join(format!("{stage}-step{:06}.ckpt", rec.step)))?;
            }
            Ok(())
        };
        if let Err(e) = save() {
            io_error.get_or_insert(e);
        }
        Ok(())
    })?;
    if let Some(e) = io_error {
        return Err(e);
    }
    trainer.state.to_checkpoint().save(&ckpt_path)?;
    Ok(TrainOutcome {
        steps: trainer.state.step,
        final_loss,
        accuracy,
        checkpoint: ckpt_path,
    })
}

fn load_model(path: &Path) -> Result<Transformer, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::Config(format!("checkpoint {} does not exist", path.display())));
    }
    Ok(Checkpoint::load(path)?.to_model()?)
}

fn check_vocab(model: &Transformer, input: Option<usize>, output: usize, what: &str) -> Result<(), PipelineError> {
    let c = model.config();
    if c.output_vocab_size != output || input.is_some_and(|i| i != c.input_dim) {
        return Err(PipelineError::Config(format!("{what} model does not match the run's vocabularies")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DecodeOutcome {
    pub report: ScoreReport,
    pub outputs: Vec<(String, CascadeOutput)>,
    pub failures: Vec<UtteranceFailure>,
    pub decode_file: PathBuf,
    pub report_file: PathBuf,
}

fn join_symbols(vocab: &Vocabulary, ids: &[u32]) -> Result<String, PipelineError> {
    Ok(vocab.decode(ids)?.join(" "))
}

/// Cascade decoding of every utterance in `manifest` (features must be
/// cached), then CER against the manifest transcripts. Writes
/// `decode/<stem>.tsv` and `reports/<stem>-cer.tsv`.
pub fn cmd_decode(cfg: &RunConfig, manifest: &Path, acoustic_ckpt: Option<&Path>, word_ckpt: Option<&Path>) -> Result<DecodeOutcome, PipelineError> {
    let layout = prepare(cfg)?;
    let (units, words) = load_vocabs(cfg, &layout)?;
    let acoustic = load_model(acoustic_ckpt.unwrap_or(&layout.checkpoint(Stage::Acoustic)))?;
    let word_model = load_model(word_ckpt.unwrap_or(&layout.checkpoint(Stage::Word)))?;
    check_vocab(&acoustic, Some(cfg.frontend.output_dim()), units.len(), "acoustic")?;
    check_vocab(&word_model, Some(units.len()), words.len(), "word")?;
    let entries = read_manifest(manifest)?;
    let results = parallel_map(&entries, cfg.jobs, |e: &ManifestEntry| -> Result<CascadeOutput, PipelineError> {
        let frames = load_cached(&layout, cfg, &e.utterance_id, &e.speaker_id)?;
        Ok(cascade_decode(&acoustic, &word_model, &frames, &cfg.decode)?)
    });
    let stem = manifest_stem(manifest);
    let mut text = String::from("utterance\tunits\twords\tunit_logprob\tword_logprob\ttruncated\n");
    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    let mut hyps = Vec::new();
    for (e, r) in entries.iter().zip(results) {
        match r {
            Ok(out) => {
                let w = words.decode(&out.words)?;
                text.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\n",
                    e.utterance_id,
                    join_symbols(&units, &out.units)?,
                    w.join(" "),
                    out.unit_logprob,
                    out.word_logprob,
                    out.truncated as u8
                ));
                hyps.push((e.utterance_id.clone(), w));
                outputs.push((e.utterance_id.clone(), out));
            }
            Err(err) => failures.push(UtteranceFailure {
                utterance_id: e.utterance_id.clone(),
                message: err.to_string(),
            }),
        }
    }
    let decode_file = layout.decode_dir().join(format!("{stem}.tsv"));
    fs::write(&decode_file, text)?;
    let refs: Vec<(String, Vec<String>)> = entries.iter().map(|e| (e.utterance_id.clone(), e.transcript.clone())).collect();
    let report = score_corpus(&refs, &hyps)?;
    let report_file = layout.reports_dir().join(format!("{stem}-cer.tsv"));
    fs::write(&report_file, report.to_tsv())?;
    write_failures(&layout.reports_dir().join(format!("{stem}-decode-errors.tsv")), &failures)?;
    Ok(DecodeOutcome {
        report,
        outputs,
        failures,
        decode_file,
        report_file,
    })
}

/// Word stage alone on the reference unit sequences of `manifest`: the
/// error floor left by the units-to-words mapping. Writes
/// `decode/<stem>-lowerbound.tsv` and `reports/<stem>-lowerbound-cer.tsv`.
pub fn cmd_lowerbound(cfg: &RunConfig, manifest: &Path, word_ckpt: Option<&Path>) -> Result<ScoreReport, PipelineError> {
    let layout = prepare(cfg)?;
    let (units, words) = load_vocabs(cfg, &layout)?;
    let word_model = load_model(word_ckpt.unwrap_or(&layout.checkpoint(Stage::Word)))?;
    check_vocab(&word_model, Some(units.len()), words.len(), "word")?;
    let lex = load_lexicon(cfg)?;
    let items: Vec<LowerBoundItem> = read_manifest(manifest)?
        .into_iter()
        .map(|e| LowerBoundItem {
            units: unit_ids(&lex, cfg, &units, &e.transcript),
            utterance_id: e.utterance_id,
            transcript: e.transcript,
        })
        .collect();
    let (report, hyps) = units_to_words_lowerbound(&word_model, &words, &items, cfg.decode.gamma, cfg.decode.max_words)?;
    let stem = manifest_stem(manifest);
    let mut text = String::from("utterance\tunits\twords\n");
    for (item, (_, w)) in items.iter().zip(&hyps) {
        text.push_str(&format!("{}\t{}\t{}\n", item.utterance_id, join_symbols(&units, &item.units)?, w.join(" ")));
    }
    fs::write(layout.decode_dir().join(format!("{stem}-lowerbound.tsv")), text)?;
    fs::write(layout.reports_dir().join(format!("{stem}-lowerbound-cer.tsv")), report.to_tsv())?;
    Ok(report)
}

/// Scores a decode file (as written by [`cmd_decode`]) against a manifest.
pub fn cmd_score(reference_manifest: &Path, decode_file: &Path, report_file: Option<&Path>) -> Result<ScoreReport, PipelineError> {
    let refs: Vec<(String, Vec<String>)> = read_manifest(reference_manifest)?
        .into_iter()
        .map(|e| (e.utterance_id, e.transcript))
        .collect();
    let text = fs::read_to_string(decode_file)?;
    let mut hyps = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 && line.starts_with("utterance\t") || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(PipelineError::Config(format!("{}:{}: expected at least 3 fields", decode_file.display(), i + 1)));
        }
        hyps.push((fields[0].to_string(), fields[2].split_whitespace().map(str::to_string).collect()));
    }
    let report = score_corpus(&refs, &hyps)?;
    if let Some(out) = report_file {
        fs::write(out, report.to_tsv())?;
    }
    Ok(report)
}

/// Which attention block to export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionSelector {
    pub kind: AttentionKind,
    pub layer: usize,
    pub head: usize,
}

pub fn parse_attention_kind(s: &str) -> Result<AttentionKind, String> {
    match s {
        "enc-self" => Ok(AttentionKind::EncoderSelf),
        "dec-self" => Ok(AttentionKind::DecoderSelf),
        "cross" => Ok(AttentionKind::Cross),
        other => Err(format!("unknown attention kind `{other}` (expected enc-self, dec-self or cross)")),
    }
}

fn kind_name(kind: AttentionKind) -> &'static str {
    match kind {
        AttentionKind::EncoderSelf => "enc-self",
        AttentionKind::DecoderSelf => "dec-self",
        AttentionKind::Cross => "cross",
    }
}

/// Teacher-forced pass of one stage's model over one utterance of
/// `manifest`, exporting the selected head as
/// `reports/attention/<id>-<stage>-<kind>-l<layer>-h<head>.{tsv,pgm}`.
pub fn cmd_dump_attention(
    cfg: &RunConfig,
    stage: Stage,
    ckpt: Option<&Path>,
    manifest: &Path,
    utterance_id: &str,
    sel: AttentionSelector,
) -> Result<PathBuf, PipelineError> {
    let layout = prepare(cfg)?;
    let (units, words) = load_vocabs(cfg, &layout)?;
    let model = load_model(ckpt.unwrap_or(&layout.checkpoint(stage)))?;
    let entry = read_manifest(manifest)?
        .into_iter()
        .find(|e| e.utterance_id == utterance_id)
        .ok_or_else(|| PipelineError::Config(format!("{utterance_id} is not in {}", manifest.display())))?;
    let lex = load_lexicon(cfg)?;
    let unit_seq = unit_ids(&lex, cfg, &units, &entry.transcript);
    let weights = match stage {
        Stage::Acoustic => {
            let frames = load_cached(&layout, cfg, &entry.utterance_id, &entry.speaker_id)?;
            let mut tgt = vec![BOS_ID];
            tgt.extend(&unit_seq);
            attention_matrix(&model, &Source::Features(&frames), &tgt, sel.kind, sel.layer, sel.head)?
        }
        Stage::Word => {
            let tgt = words.encode(VocabKind::Word, &entry.transcript).ids;
            attention_matrix(&model, &Source::Tokens(&unit_seq), &tgt[..tgt.len() - 1], sel.kind, sel.layer, sel.head)?
        }
    };
    let stem = layout
        .reports_dir()
        .join("attention")
        .join(format!("{utterance_id}-{stage}-{}-l{}-h{}", kind_name(sel.kind), sel.layer, sel.head));
    write_attention(&stem, &weights)?;
    Ok(stem)
}
