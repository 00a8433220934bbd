use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use cascade_asr::pipeline::{cmd_decode, cmd_features, cmd_lowerbound, cmd_prep_vocab, cmd_train, ModelSpec, RunConfig, Stage};
use cascade_asr::toy;

use super::{verdict, Check};

/// Every file under `root`, keyed by relative path.
fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn run(cfg: &RunConfig, manifest: &Path) -> Result<(), Box<dyn std::error::Error>> {
    cmd_features(cfg, manifest)?;
    cmd_prep_vocab(cfg)?;
    cmd_train(cfg, Stage::Acoustic, false)?;
    cmd_train(cfg, Stage::Word, false)?;
    cmd_decode(cfg, manifest, None, None)?;
    cmd_lowerbound(cfg, manifest, None)?;
    Ok(())
}

pub fn check() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let utts = toy::corpus(10, 3);
    let files = toy::write_corpus(&dir.path().join("corpus"), "train", &utts, false).map_err(|e| e.to_string())?;
    let mut snaps = Vec::new();
    for name in ["a", "b"] {
        let mut cfg = RunConfig::new(dir.path().join(name), &files.manifest, &files.lexicon, &files.syllables);
        cfg.seed = 11;
        cfg.acoustic.model = ModelSpec::custom(2, 32, 4);
        cfg.word.model = ModelSpec::custom(1, 32, 4);
        for train in [&mut cfg.acoustic.train, &mut cfg.word.train] {
            train.max_steps = 30;
            train.checkpoint_every = 10;
            train.batch_size = 4;
        }
        cfg.decode.max_units = 12;
        cfg.decode.max_words = 12;
        run(&cfg, &files.manifest).map_err(|e| e.to_string())?;
        let mut snap = snapshot(&cfg.run_dir);
        // Holds the run directory itself.
        snap.remove("config.toml");
        snaps.push(snap);
    }
    let (a, b) = (&snaps[0], &snaps[1]);
    let differing: Vec<&String> = a.keys().filter(|k| b.get(*k) != a.get(*k)).chain(b.keys().filter(|k| !a.contains_key(*k))).collect();
    let checkpoints = a.keys().filter(|k| k.ends_with(".ckpt")).count();
    let reports = a.keys().filter(|k| k.starts_with("reports") || k.starts_with("decode")).count();
    verdict(
        differing.is_empty() && checkpoints >= 8 && reports >= 4,
        format!(
            "{} files compared ({checkpoints} checkpoints, {reports} decode/report files), {} differ{}",
            a.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(": {:?}", differing) }
        ),
    )
}
