use std::time::Instant;

use cascade_asr::lexicon::BOS_ID;
use cascade_asr::tensor::gradcheck::check_gradients;
use cascade_asr::tensor::{Mask, Tape, Tensor};
use cascade_asr::transformer::{
    multi_head_attention, scaled_dot_attention, AttentionKind, Graph, InputKind, ModelConfig, ModelError, MultiHeadParams,
    Preset, Source, Transformer,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn tiny(kind: InputKind, input_dim: usize, vocab: usize, seed: u64) -> Transformer {
    let mut cfg = ModelConfig::small(1, 16, 2, kind, input_dim, vocab);
    cfg.d_ff = 32;
    Transformer::new(cfg, seed).unwrap()
}

/// Per-head attention with explicit loops over plain slices.
fn loop_oracle(x: &Tensor, mem: &Tensor, wq: &Tensor, wk: &Tensor, wv: &Tensor, wo: &Tensor, h: usize, mask: &Mask) -> Tensor {
    let (tq, tk, d) = (x.rows(), mem.rows(), x.cols());
    let dk = wq.cols() / h;
    let dv = wv.cols() / h;
    let proj = |a: &Tensor, w: &Tensor, r: usize, c: usize| (0..d).map(|i| a.at(r, i) * w.at(i, c)).sum::<f64>();
    let mut concat = vec![vec![0.0; h * dv]; tq];
    for head in 0..h {
        for i in 0..tq {
            let mut scores = vec![f64::NEG_INFINITY; tk];
            for j in 0..tk {
                if mask.allows(i, j) {
                    let s: f64 = (0..dk).map(|c| proj(x, wq, i, head * dk + c) * proj(mem, wk, j, head * dk + c)).sum();
                    scores[j] = s / (dk as f64).sqrt();
                }
            }
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in 0..dv {
                concat[i][head * dv + c] = (0..tk).map(|j| e[j] / z * proj(mem, wv, j, head * dv + c)).sum();
            }
        }
    }
    let mut out = vec![0.0; tq * d];
    for i in 0..tq {
        for o in 0..d {
            out[i * d + o] = (0..h * dv).map(|c| concat[i][c] * wo.at(c, o)).sum();
        }
    }
    Tensor::matrix(tq, d, out).unwrap()
}

#[test]
fn multi_head_attention_matches_per_head_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for &(h, tq, tk) in &[(1, 3, 3), (2, 4, 6), (4, 5, 2)] {
        let d = 8;
        let x = random(&mut rng, tq, d);
        let mem = random(&mut rng, tk, d);
        let (wq, wk, wv, wo) = (random(&mut rng, d, d), random(&mut rng, d, d), random(&mut rng, d, d), random(&mut rng, d, d));
        let mask = Mask::from_fn(tq, tk, |i, j| j <= i.max(tk / 2));
        let tape = Tape::new();
        let params = MultiHeadParams {
            w_q: tape.constant(wq.clone()),
            w_k: tape.constant(wk.clone()),
            w_v: tape.constant(wv.clone()),
            w_o: tape.constant(wo.clone()),
            heads: h,
        };
        let (xv, mv) = (tape.constant(x.clone()), tape.constant(mem.clone()));
        let got = multi_head_attention(xv, mv, mv, &params, Some(&mask)).unwrap();
        let want = loop_oracle(&x, &mem, &wq, &wk, &wv, &wo, h, &mask);
        assert!(got.output.value().max_abs_diff(&want) < 1e-10, "h={h}");
        assert_eq!(got.weights.len(), h);
    }
}

#[test]
fn single_head_is_plain_attention_with_projections() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(&mut rng, 4, 6);
    let ws: Vec<Tensor> = (0..4).map(|_| random(&mut rng, 6, 6)).collect();
    let tape = Tape::new();
    let w: Vec<_> = ws.iter().map(|t| tape.constant(t.clone())).collect();
    let xv = tape.constant(x);
    let params = MultiHeadParams { w_q: w[0], w_k: w[1], w_v: w[2], w_o: w[3], heads: 1 };
    let mha = multi_head_attention(xv, xv, xv, &params, None).unwrap();
    let plain = scaled_dot_attention(xv.matmul(w[0]).unwrap(), xv.matmul(w[1]).unwrap(), xv.matmul(w[2]).unwrap(), None).unwrap();
    let want = plain.output.matmul(w[3]).unwrap();
    assert!(mha.output.value().max_abs_diff(&want.value()) < 1e-12);
}

#[test]
fn base_preset_attention_shape() {
    let cfg = Preset::D512H8.config(InputKind::Features, 320, 40);
    let model = Transformer::new(cfg, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let frames = random(&mut rng, 7, 320);
    let mem = model.encode(&Source::Features(&frames)).unwrap();
    assert_eq!(mem.z.shape(), &[7, 512]);
    let frames = random(&mut rng, 12, 320);
    assert_eq!(model.encode(&Source::Features(&frames)).unwrap().z.shape(), &[12, 512]);
}

#[test]
fn single_frame_source_is_accepted() {
    let model = tiny(InputKind::Features, 5, 9, 3);
    let frames = Tensor::matrix(1, 5, vec![0.1, 0.2, -0.3, 0.4, 0.0]).unwrap();
    let mem = model.encode(&Source::Features(&frames)).unwrap();
    assert_eq!(mem.z.shape(), &[1, 16]);
    let p = model.decode_step(&mem, &[BOS_ID]).unwrap();
    assert_eq!(p.len(), 9);
}

#[test]
fn wrong_frame_width_is_a_config_error() {
    let model = tiny(InputKind::Features, 5, 9, 3);
    let frames = Tensor::zeros(vec![3, 4]);
    assert!(matches!(model.encode(&Source::Features(&frames)), Err(ModelError::Config(_))));
}

#[test]
fn next_token_distribution_is_normalized() {
    for seed in 0..5 {
        let model = tiny(InputKind::Tokens, 7, 9, seed);
        let mem = model.encode(&Source::Tokens(&[4, 5, 6, 4])).unwrap();
        let p = model.decode_step(&mem, &[BOS_ID, 5, 7]).unwrap();
        let total: f64 = p.iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }
}

#[test]
fn zero_feed_forward_weights_leave_only_the_residual() {
    // With both FF matrices and biases at zero the second sublayer of the
    // encoder reduces to LayerNorm(x), so encoding equals LN applied to the
    // first sublayer's output.
    let mut model = tiny(InputKind::Tokens, 7, 9, 4);
    for (name, t) in model.params_mut().iter_mut() {
        if name.starts_with("enc.0.ff.") {
            *t = std::sync::Arc::new(Tensor::zeros(t.shape().to_vec()));
        }
    }
    let src = [4u32, 5, 6];
    let tape = Tape::new();
    let g = Graph::new(&tape, &model, false).with_trace();
    let z = model.encode_graph(&g, &Source::Tokens(&src), 3).unwrap().value();
    // Every row of LayerNorm(y) with unit gain and zero bias has mean 0 and
    // variance ≈ 1, and applying LN again is (nearly) idempotent.
    for r in 0..3 {
        let row = z.row(r);
        let mean: f64 = row.iter().sum::<f64>() / 16.0;
        let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-4, "row {r}: mean {mean} var {var}");
    }
    let again = z.layer_norm(&Tensor::full(vec![16], 1.0), &Tensor::zeros(vec![16]), 1e-6).unwrap();
    assert!(again.max_abs_diff(&z) < 1e-5);
}

#[test]
fn decoder_is_causal_under_perturbation() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for seed in 0..20 {
        let model = tiny(InputKind::Tokens, 8, 10, 100 + seed);
        let src: Vec<u32> = (0..5).map(|_| rng.gen_range(4..8)).collect();
        let mem = model.encode(&Source::Tokens(&src)).unwrap();
        let mut tgt: Vec<u32> = vec![BOS_ID];
        tgt.extend((0..5).map(|_| rng.gen_range(4..10)));
        let base = model.decode_all(&mem, &tgt).unwrap();
        for j in 1..tgt.len() {
            let mut changed = tgt.clone();
            changed[j] = if tgt[j] == 4 { 5 } else { 4 };
            let other = model.decode_all(&mem, &changed).unwrap();
            for i in 0..j {
                assert_eq!(base.row(i), other.row(i), "seed {seed}: position {i} saw token {j}");
            }
        }
    }
}

#[test]
fn padding_does_not_change_real_positions() {
    let model = tiny(InputKind::Tokens, 8, 10, 9);
    let src = [4u32, 6, 7];
    let padded = [4u32, 6, 7, 0, 0];
    let mem = model.encode(&Source::Tokens(&src)).unwrap();
    let tape = Tape::new();
    let g = Graph::new(&tape, &model, false);
    let z = model.encode_graph(&g, &Source::Tokens(&padded), 3).unwrap();
    for r in 0..3 {
        for (a, b) in z.value().row(r).iter().zip(mem.z.row(r)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    let tgt = [BOS_ID, 5, 6];
    let want = model.decode_all(&mem, &tgt).unwrap();
    let got = model.decode_graph(&g, z, 3, &[BOS_ID, 5, 6, 0], 3).unwrap().value();
    for r in 0..3 {
        for (a, b) in got.row(r).iter().zip(want.row(r)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_maps_are_distributions_with_exact_zeros() {
    let model = tiny(InputKind::Tokens, 8, 10, 12);
    let maps = model.attention_maps(&Source::Tokens(&[4, 5, 6, 7]), &[BOS_ID, 4, 5]).unwrap();
    assert_eq!(maps.len(), 3 * 2);
    for rec in &maps {
        for i in 0..rec.weights.rows() {
            let s: f64 = rec.weights.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            if rec.kind == AttentionKind::DecoderSelf {
                for j in i + 1..rec.weights.cols() {
                    assert_eq!(rec.weights.at(i, j), 0.0);
                }
            }
        }
    }
}

#[test]
fn initialization_is_seeded() {
    let a = tiny(InputKind::Tokens, 8, 10, 1);
    assert_eq!(a, tiny(InputKind::Tokens, 8, 10, 1));
    assert_ne!(a, tiny(InputKind::Tokens, 8, 10, 2));
    assert!(a.params().values().all(|t| t.data().iter().all(|&v| v as f32 as f64 == v)));
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let start = Instant::now();
    let model = tiny(InputKind::Features, 3, 7, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let frames = random(&mut rng, 5, 3);
    let target_in = [BOS_ID, 4, 5, 6];
    let target_out = [4usize, 5, 6, 3];
    let names: Vec<String> = model.params().keys().cloned().collect();
    let inputs: Vec<Tensor> = model.params().values().map(|t| (**t).clone()).collect();
    let report = check_gradients(&inputs, 1e-4, None, |tape, vars| {
        let g = Graph::from_vars(tape, names.iter().cloned().zip(vars.iter().copied()));
        let run = || -> Result<_, ModelError> {
            let z = model.encode_graph(&g, &Source::Features(&frames), 5)?;
            let logp = model.decode_graph(&g, z, 5, &target_in, 4)?;
            let pick = Tensor::matrix(4, 7, (0..28).map(|k| if target_out[k / 7] == k % 7 { -1.0 } else { 0.0 }).collect())?;
            Ok(logp.mul_const(pick)?.sum())
        };
        run().map_err(|e| match e {
            ModelError::Tensor(t) => t,
            other => panic!("{other}"),
        })
    })
    .unwrap();
    assert!(report.checked > 5000);
    assert!(report.max_relative_error < 1e-3, "{report:?}");
    assert!(start.elapsed().as_secs() < 60);
}
