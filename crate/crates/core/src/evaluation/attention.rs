use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::EvalError;
use crate::tensor::Tensor;
use crate::transformer::{AttentionKind, Source, Transformer};

/// Post-softmax weights of one head (rows are queries, columns keys) from a
/// teacher-forced pass over `source` and `target_in`.
pub fn attention_matrix(
    model: &Transformer,
    source: &Source<'_>,
    target_in: &[u32],
    kind: AttentionKind,
    layer: usize,
    head: usize,
) -> Result<Tensor, EvalError> {
    let cfg = model.config();
    if layer >= cfg.n_layers || head >= cfg.n_heads {
        return Err(EvalError::Config(format!(
            "layer {layer} / head {head} outside a model with {} layers and {} heads",
            cfg.n_layers, cfg.n_heads
        )));
    }
    let maps = model.attention_maps(source, target_in)?;
    let rec = maps
        .into_iter()
        .find(|r| r.kind == kind && r.layer == layer && r.head == head)
        .expect("every layer and head is traced");
    Ok((*rec.weights).clone())
}

/// One row per query, tab-separated weights.
pub fn write_attention_tsv(path: &Path, weights: &Tensor) -> Result<(), EvalError> {
    let mut out = String::new();
    for r in 0..weights.rows() {
        let row: Vec<String> = weights.row(r).iter().map(|w| w.to_string()).collect();
        writeln!(out, "{}", row.join("\t")).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

/// Binary graymap where white is weight 1 and black weight 0.
pub fn render_pgm(weights: &Tensor) -> Vec<u8> {
    let (rows, cols) = (weights.rows(), weights.cols());
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(weights.data().iter().map(|w| (w.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Writes `<stem>.tsv` and `<stem>.pgm`.
pub fn write_attention(stem: &Path, weights: &Tensor) -> Result<(), EvalError> {
    if let Some(dir) = stem.parent() {
        fs::create_dir_all(dir)?;
    }
    write_attention_tsv(&stem.with_extension("tsv"), weights)?;
    fs::write(stem.with_extension("pgm"), render_pgm(weights))?;
    Ok(())
}
