use cascade_asr::lexicon::BOS_ID;
use cascade_asr::tensor::{Mask, Tape, Tensor};
use cascade_asr::transformer::{causal_mask, multi_head_attention, InputKind, ModelConfig, MultiHeadParams, Source, Transformer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{verdict, Check};

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Multi-head attention written as nested loops over each head.
fn per_head_loops(x: &Tensor, mem: &Tensor, w: [&Tensor; 4], h: usize, mask: &Mask) -> Tensor {
    let [wq, wk, wv, wo] = w;
    let (tq, tk, d) = (x.rows(), mem.rows(), x.cols());
    let (dk, dv) = (wq.cols() / h, wv.cols() / h);
    let proj = |a: &Tensor, w: &Tensor, r: usize, c: usize| (0..d).map(|i| a.at(r, i) * w.at(i, c)).sum::<f64>();
    let mut out = vec![0.0; tq * d];
    for head in 0..h {
        for i in 0..tq {
            let scores: Vec<f64> = (0..tk)
                .map(|j| {
                    if !mask.allows(i, j) {
                        return f64::NEG_INFINITY;
                    }
                    (0..dk).map(|c| proj(x, wq, i, head * dk + c) * proj(mem, wk, j, head * dk + c)).sum::<f64>() / (dk as f64).sqrt()
                })
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in 0..dv {
                let ctx: f64 = (0..tk).map(|j| e[j] / z * proj(mem, wv, j, head * dv + c)).sum();
                for o in 0..d {
                    out[i * d + o] += ctx * wo.at(head * dv + c, o);
                }
            }
        }
    }
    Tensor::matrix(tq, d, out).unwrap()
}

pub fn check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst_sum = 0.0f64;
    let mut masked_nonzero = 0usize;
    let mut worst_oracle = 0.0f64;
    for &(h, tq, tk, causal) in &[(1, 4, 4, true), (2, 5, 7, false), (4, 6, 6, true), (8, 3, 9, false)] {
        let d = 16;
        let x = random(&mut rng, tq, d, 1.0);
        let mem = if causal { x.clone() } else { random(&mut rng, tk, d, 1.0) };
        let ws: Vec<Tensor> = (0..4).map(|_| random(&mut rng, d, d, 1.0)).collect();
        let mask = if causal { causal_mask(tq) } else { Mask::all(tq, tk) };
        let tape = Tape::new();
        let params = MultiHeadParams {
            w_q: tape.constant(ws[0].clone()),
            w_k: tape.constant(ws[1].clone()),
            w_v: tape.constant(ws[2].clone()),
            w_o: tape.constant(ws[3].clone()),
            heads: h,
        };
        let (xv, mv) = (tape.constant(x.clone()), tape.constant(mem.clone()));
        let out = multi_head_attention(xv, mv, mv, &params, Some(&mask)).map_err(|e| e.to_string())?;
        let want = per_head_loops(&x, &mem, [&ws[0], &ws[1], &ws[2], &ws[3]], h, &mask);
        worst_oracle = worst_oracle.max(out.output.value().max_abs_diff(&want));
        for w in &out.weights {
            for i in 0..w.rows() {
                worst_sum = worst_sum.max((w.row(i).iter().sum::<f64>() - 1.0).abs());
                for j in 0..w.cols() {
                    if !mask.allows(i, j) && w.at(i, j) != 0.0 {
                        masked_nonzero += 1;
                    }
                }
            }
        }
    }

    // Changing a later target token must leave earlier decoder outputs
    // bit-identical.
    let mut leaks = 0usize;
    for seed in 0..20u64 {
        let mut cfg = ModelConfig::small(2, 16, 2, InputKind::Tokens, 9, 11);
        cfg.d_ff = 32;
        let model = Transformer::new(cfg, 500 + seed).map_err(|e| e.to_string())?;
        let src: Vec<u32> = (0..6).map(|_| rng.gen_range(4..9)).collect();
        let mem = model.encode(&Source::Tokens(&src)).map_err(|e| e.to_string())?;
        let mut tgt = vec![BOS_ID];
        tgt.extend((0..6).map(|_| rng.gen_range(3..11)));
        let base = model.decode_all(&mem, &tgt).map_err(|e| e.to_string())?;
        for j in 1..tgt.len() {
            let mut changed = tgt.clone();
            changed[j] = 4 + (tgt[j] + 1) % 7;
            let other = model.decode_all(&mem, &changed).map_err(|e| e.to_string())?;
            leaks += (0..j).filter(|&i| base.row(i) != other.row(i)).count();
        }
    }
    verdict(
        worst_sum <= 1e-6 && masked_nonzero == 0 && worst_oracle <= 1e-10 && leaks == 0,
        format!(
            "row-sum error {worst_sum:.1e}, {masked_nonzero} non-zero masked weights, MHA vs per-head loops {worst_oracle:.1e}, \
             {leaks} causality leaks over 20 models"
        ),
    )
}
