use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cascade_asr::lexicon::UnitLevel;
use cascade_asr::pipeline::{
    cmd_decode, cmd_dump_attention, cmd_features, cmd_lowerbound, cmd_prep_vocab, cmd_score, cmd_train, parse_attention_kind,
    AttentionSelector, ModelSpec, RunConfig, Stage, UtteranceFailure,
};
use cascade_asr::toy;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cascade-asr", version, about = "Transformer ASR for Mandarin with a sub-word to word cascade")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Where the run lives and what to override in its configuration.
#[derive(Args, Clone, Default)]
struct RunArgs {
    /// TOML run configuration; relative paths inside it are resolved
    /// against its directory.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Syllable-to-phoneme table.
    #[arg(long)]
    syllables: Option<PathBuf>,
    #[arg(long, value_parser = parse_from_str::<UnitLevel>)]
    unit_level: Option<UnitLevel>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output frame stride in 10 ms input frames (3, 5, 7 give 30/50/70 ms).
    #[arg(long)]
    frame_factor: Option<usize>,
    /// Threads for feature extraction and decoding.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    speed_perturb: bool,
    /// Acoustic beam width.
    #[arg(long)]
    beta: Option<usize>,
    /// Word beam width.
    #[arg(long)]
    gamma: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Extract, normalize and cache features for a manifest.
    Features {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Write the unit and word vocabularies for the lexicon.
    PrepVocab {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train the acoustic or the word model.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_parser = parse_from_str::<Stage>)]
        stage: Stage,
        /// Training manifest (defaults to the configured one).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// D512-H8 or D1024-H16, applied to the stage being trained.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        max_steps: Option<u64>,
        /// Continue from the stage's checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Cascade decoding plus CER against the manifest transcripts.
    Decode {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        acoustic_ckpt: Option<PathBuf>,
        #[arg(long)]
        word_ckpt: Option<PathBuf>,
    },
    /// Word model alone on reference units: the cascade's error floor.
    Lowerbound {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        word_ckpt: Option<PathBuf>,
    },
    /// Score a decode file against a manifest.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        decode_file: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Export one attention head for one utterance as TSV and PGM.
    DumpAttention {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_parser = parse_from_str::<Stage>)]
        stage: Stage,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        utterance: String,
        /// enc-self, dec-self or cross.
        #[arg(long, default_value = "cross")]
        kind: String,
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[arg(long, default_value_t = 0)]
        head: usize,
        #[arg(long)]
        ckpt: Option<PathBuf>,
    },
    /// Write the synthetic toy corpus and a matching run configuration.
    SynthToy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        utterances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Add the homophone and its twin utterances.
        #[arg(long)]
        homophone: bool,
    },
}

fn parse_from_str<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let (Some(run_dir), Some(lexicon), Some(syllables)) = (&args.run_dir, &args.lexicon, &args.syllables) else {
                bail!("either --config or all of --run-dir, --lexicon and --syllables are required");
            };
            RunConfig::new(run_dir, PathBuf::new(), lexicon, syllables)
        }
    };
    if args.config.is_some() {
        if let Some(d) = &args.run_dir {
            cfg.run_dir = d.clone();
        }
        if let Some(l) = &args.lexicon {
            cfg.lexicon = l.clone();
        }
        if let Some(s) = &args.syllables {
            cfg.syllables = s.clone();
        }
    }
    if let Some(u) = args.unit_level {
        cfg.unit_level = u;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(f) = args.frame_factor {
        cfg.frontend.downsample_factor = f;
    }
    if let Some(j) = args.jobs {
        cfg.jobs = j;
    }
    if args.speed_perturb {
        cfg.speed_perturb = true;
    }
    if let Some(b) = args.beta {
        cfg.decode.beta = b;
    }
    if let Some(g) = args.gamma {
        cfg.decode.gamma = g;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report_failures(what: &str, failures: &[UtteranceFailure]) -> ExitCode {
    if failures.is_empty() {
        return ExitCode::SUCCESS;
    }
    for f in failures {
        eprintln!("{what} failed for {}: {}", f.utterance_id, f.message);
    }
    eprintln!("{} utterance(s) failed", failures.len());
    ExitCode::from(1)
}

fn toy_config(dir: &Path, files: &toy::ToyFiles) -> RunConfig {
    let rel = |p: &Path| p.strip_prefix(dir).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf());
    let mut cfg = RunConfig::new("run", rel(&files.manifest), rel(&files.lexicon), rel(&files.syllables));
    cfg.acoustic.model = ModelSpec::custom(2, 64, 4);
    cfg.word.model = ModelSpec::custom(2, 64, 4);
    for t in [&mut cfg.acoustic.train, &mut cfg.word.train] {
        t.max_steps = 3000;
        t.stop_at_accuracy = Some(1.0);
        t.eval_every = 50;
        t.checkpoint_every = 0;
    }
    cfg
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Features { run, manifest } => {
            let cfg = load_config(&run)?;
            let manifest = manifest.unwrap_or_else(|| cfg.train_manifest.clone());
            if manifest.as_os_str().is_empty() {
                bail!("no manifest: pass --manifest or set train_manifest in the config");
            }
            let summary = cmd_features(&cfg, &manifest)?;
            println!("cached {} feature files under {}", summary.written.len(), cfg.run_dir.join("features").display());
            Ok(report_failures("feature extraction", &summary.failures))
        }
        Command::PrepVocab { run } => {
            let cfg = load_config(&run)?;
            let (units, words) = cmd_prep_vocab(&cfg)?;
            println!("{} units, {} words (including 4 special symbols each)", units.len(), words.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Train {
            run,
            stage,
            manifest,
            preset,
            max_steps,
            resume,
        } => {
            let mut cfg = load_config(&run)?;
            if let Some(m) = manifest {
                cfg.train_manifest = m;
            }
            let stage_cfg = match stage {
                Stage::Acoustic => &mut cfg.acoustic,
                Stage::Word => &mut cfg.word,
            };
            if let Some(p) = preset {
                stage_cfg.model = ModelSpec {
                    preset: p,
                    ..ModelSpec::default()
                };
            }
            if let Some(n) = max_steps {
                stage_cfg.train.max_steps = n;
            }
            if cfg.train_manifest.as_os_str().is_empty() {
                bail!("no training manifest: pass --manifest or set train_manifest in the config");
            }
            let out = cmd_train(&cfg, stage, resume)?;
            println!("{stage}: {} steps, final loss {:.4}", out.steps, out.final_loss);
            if let Some((step, acc)) = out.accuracy.last() {
                println!("training accuracy {:.2}% at step {step}", 100.0 * acc);
            }
            println!("checkpoint {}", out.checkpoint.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Decode {
            run,
            manifest,
            acoustic_ckpt,
            word_ckpt,
        } => {
            let cfg = load_config(&run)?;
            let out = cmd_decode(&cfg, &manifest, acoustic_ckpt.as_deref(), word_ckpt.as_deref())?;
            println!("CER {:.2}% over {} characters", out.report.cer(), out.report.reference_chars);
            println!("decode {}", out.decode_file.display());
            println!("report {}", out.report_file.display());
            Ok(report_failures("decoding", &out.failures))
        }
        Command::Lowerbound { run, manifest, word_ckpt } => {
            let cfg = load_config(&run)?;
            let report = cmd_lowerbound(&cfg, &manifest, word_ckpt.as_deref())?;
            println!("lower bound CER {:.2}% over {} characters", report.cer(), report.reference_chars);
            Ok(ExitCode::SUCCESS)
        }
        Command::Score { manifest, decode_file, report } => {
            let r = cmd_score(&manifest, &decode_file, report.as_deref())?;
            println!("CER {:.2}% over {} characters", r.cer(), r.reference_chars);
            if r.num_missing() > 0 {
                eprintln!("{} utterance(s) have no hypothesis", r.num_missing());
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::DumpAttention {
            run,
            stage,
            manifest,
            utterance,
            kind,
            layer,
            head,
            ckpt,
        } => {
            let cfg = load_config(&run)?;
            let kind = parse_attention_kind(&kind).map_err(anyhow::Error::msg)?;
            let stem = cmd_dump_attention(&cfg, stage, ckpt.as_deref(), &manifest, &utterance, AttentionSelector { kind, layer, head })?;
            println!("{}.tsv", stem.display());
            println!("{}.pgm", stem.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::SynthToy {
            out,
            utterances,
            seed,
            homophone,
        } => {
            let mut utts = toy::corpus(utterances, seed);
            if homophone {
                let twins = toy::homophone_twins(&utts);
                utts.extend(twins);
            }
            let files = toy::write_corpus(&out, "train", &utts, homophone)?;
            let cfg = toy_config(&out, &files);
            let cfg_path = out.join("run.toml");
            std::fs::write(&cfg_path, cfg.to_toml()).with_context(|| format!("writing {}", cfg_path.display()))?;
            println!("{} utterances in {}", utts.len(), files.manifest.display());
            println!("config {}", cfg_path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
