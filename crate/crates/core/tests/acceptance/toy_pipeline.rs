use std::cell::OnceCell;
use std::path::PathBuf;
use std::time::Instant;

use cascade_asr::pipeline::{cmd_decode, cmd_features, cmd_lowerbound, cmd_prep_vocab, cmd_train, ModelSpec, RunConfig, Stage};
use cascade_asr::toy;

use super::{verdict, Check};

const ACOUSTIC_STEP_LIMIT: u64 = 2000;
const WALL_LIMIT_SECS: f64 = 15.0 * 60.0;

fn toy_config(run_dir: PathBuf, files: &toy::ToyFiles) -> RunConfig {
    let mut cfg = RunConfig::new(run_dir, &files.manifest, &files.lexicon, &files.syllables);
    cfg.acoustic.model = ModelSpec::custom(2, 64, 4);
    cfg.word.model = ModelSpec::custom(2, 64, 4);
    cfg.acoustic.train.max_steps = ACOUSTIC_STEP_LIMIT;
    cfg.acoustic.train.stop_at_accuracy = Some(1.0);
    cfg.acoustic.train.eval_every = 50;
    cfg.acoustic.train.checkpoint_every = 0;
    cfg.word.train.max_steps = 3000;
    cfg.word.train.stop_at_accuracy = Some(1.0);
    cfg.word.train.eval_every = 50;
    cfg.word.train.checkpoint_every = 0;
    cfg
}

struct Base {
    cfg: RunConfig,
    utterances: Vec<toy::ToyUtterance>,
    first_99: Option<u64>,
    acoustic_steps: u64,
    word_accuracy: f64,
    word_steps: u64,
    cer: f64,
    failures: usize,
    lower_bound: f64,
    secs: f64,
}

pub struct ToyRun {
    dir: tempfile::TempDir,
    base: OnceCell<Result<Base, String>>,
}

impl ToyRun {
    pub fn new() -> Self {
        ToyRun {
            dir: tempfile::tempdir().expect("temporary directory"),
            base: OnceCell::new(),
        }
    }

    fn base(&self) -> Result<&Base, String> {
        self.base.get_or_init(|| self.run_base().map_err(|e| format!("base run: {e}"))).as_ref().map_err(Clone::clone)
    }

    fn run_base(&self) -> Result<Base, Box<dyn std::error::Error>> {
        let start = Instant::now();
        let utterances = toy::corpus(50, 1);
        let files = toy::write_corpus(&self.dir.path().join("corpus"), "train", &utterances, false)?;
        let cfg = toy_config(self.dir.path().join("run"), &files);
        cmd_features(&cfg, &files.manifest)?;
        cmd_prep_vocab(&cfg)?;
        let acoustic = cmd_train(&cfg, Stage::Acoustic, false)?;
        let word = cmd_train(&cfg, Stage::Word, false)?;
        let decoded = cmd_decode(&cfg, &files.manifest, None, None)?;
        let lb = cmd_lowerbound(&cfg, &files.manifest, None)?;
        Ok(Base {
            first_99: acoustic.accuracy.iter().find(|(_, a)| *a >= 0.99).map(|(s, _)| *s),
            acoustic_steps: acoustic.steps,
            word_accuracy: word.accuracy.last().map_or(0.0, |(_, a)| *a),
            word_steps: word.steps,
            cer: decoded.report.cer(),
            failures: decoded.failures.len(),
            lower_bound: lb.cer(),
            secs: start.elapsed().as_secs_f64(),
            cfg,
            utterances,
        })
    }

    pub fn end_to_end(&self) -> Check {
        let b = self.base()?;
        let acoustic_ok = b.first_99.is_some_and(|s| s <= ACOUSTIC_STEP_LIMIT);
        verdict(
            acoustic_ok && b.word_accuracy == 1.0 && b.lower_bound == 0.0 && b.cer == 0.0 && b.failures == 0 && b.secs < WALL_LIMIT_SECS,
            format!(
                "acoustic N=2/d64 reached 99% unit accuracy at step {} (stopped at {}), word model accuracy {:.4} after {} steps \
                 (lower bound {:.2}%), cascade CER {:.2}% on 50 utterances with {} failures, {:.0} s",
                b.first_99.map_or("never".to_string(), |s| s.to_string()),
                b.acoustic_steps,
                b.word_accuracy,
                b.word_steps,
                b.lower_bound,
                b.cer,
                b.failures,
                b.secs
            ),
        )
    }

    pub fn lower_bound(&self) -> Check {
        let b = self.base()?;
        self.homophone(b).map_err(|e| format!("homophone run: {e}"))?
    }

    fn homophone(&self, b: &Base) -> Result<Check, Box<dyn std::error::Error>> {
        let twins = toy::homophone_twins(&b.utterances);
        let mut all = b.utterances.clone();
        all.extend(twins.iter().cloned());
        let files = toy::write_corpus(&self.dir.path().join("homophone"), "train", &all, true)?;
        let mut cfg = toy_config(self.dir.path().join("run-homophone"), &files);
        // The twins make a perfect score impossible, so the word model trains
        // for a fixed budget.
        cfg.word.train.stop_at_accuracy = None;
        cfg.word.train.max_steps = 2000;
        cfg.seed = b.cfg.seed;
        cmd_features(&cfg, &files.manifest)?;
        cmd_prep_vocab(&cfg)?;
        cmd_train(&cfg, Stage::Word, false)?;
        let lb = cmd_lowerbound(&cfg, &files.manifest, None)?;

        // Each twin pair shares its unit sequence, so whichever spelling the
        // word model picks, exactly one of the pair gets one substitution.
        let total_chars: usize = all.iter().map(|u| u.words.iter().map(|w| w.chars().count()).sum::<usize>()).sum();
        let floor = 100.0 * twins.len() as f64 / total_chars as f64;

        let base_acoustic = b.cfg.run_dir.join("ckpt").join("acoustic.ckpt");
        let cascade = cmd_decode(&cfg, &files.manifest, Some(&base_acoustic), None)?;
        let base_ok = b.cer >= b.lower_bound;
        Ok(verdict(
            twins.len() > 0 && lb.errors == twins.len() && lb.reference_chars == total_chars && lb.cer() == floor && cascade.report.cer() >= lb.cer() && base_ok,
            format!(
                "{} homophone pairs over {total_chars} characters: lower bound {:.4}% ({} errors) vs floor {floor:.4}%; \
                 cascade {:.4}% >= lower bound (base run {:.2}% >= {:.2}%)",
                twins.len(),
                lb.cer(),
                lb.errors,
                cascade.report.cer(),
                b.cer,
                b.lower_bound
            ),
        ))
    }
}

