use std::time::Instant;

use cascade_asr::lexicon::BOS_ID;
use cascade_asr::tensor::gradcheck::check_gradients;
use cascade_asr::tensor::{Mask, Result, Tape, Tensor, Var};
use cascade_asr::transformer::{Graph, InputKind, ModelConfig, ModelError, Source, Transformer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{verdict, Check};

type Op = Box<dyn for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>>;

fn op(f: impl for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>> + 'static) -> Op {
    Box::new(f)
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Weighted sum with fixed weights, so every output entry matters.
fn reduce<'t>(v: Var<'t>) -> Result<Var<'t>> {
    let shape = v.shape();
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, (0..n).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0 + 0.05).collect())?;
    Ok(v.mul_const(w)?.sum())
}

fn ops(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Vec<Tensor>, Op)> {
    let mut r = |shapes: &[&[usize]]| shapes.iter().map(|s| random(rng, s)).collect::<Vec<_>>();
    let mask = Mask::from_fn(3, 4, |i, j| j <= i + 1);
    vec![
        ("add", r(&[&[3, 4], &[3, 4]]), op(|_, v| reduce(v[0].add(v[1])?))),
        ("add_row", r(&[&[3, 4], &[4]]), op(|_, v| reduce(v[0].add_row(v[1])?))),
        ("mul", r(&[&[3, 4], &[3, 4]]), op(|_, v| reduce(v[0].mul(v[1])?))),
        ("scale", r(&[&[3, 4]]), op(|_, v| reduce(v[0].scale(-1.7)))),
        ("mul_const", r(&[&[3, 4]]), op(|_, v| reduce(v[0].mul_const(Tensor::full(vec![3, 4], 0.3))?))),
        // Inputs are pushed away from the kink.
        ("relu", vec![r(&[&[3, 4]]).remove(0).map(|x| if x.abs() < 0.05 { x + 0.2 } else { x })], op(|_, v| reduce(v[0].relu()))),
        ("matmul", r(&[&[3, 4], &[4, 2]]), op(|_, v| reduce(v[0].matmul(v[1])?))),
        ("matmul_nt", r(&[&[3, 4], &[5, 4]]), op(|_, v| reduce(v[0].matmul_nt(v[1])?))),
        ("transpose", r(&[&[3, 4]]), op(|_, v| reduce(v[0].transpose()?))),
        ("softmax_rows", r(&[&[3, 4]]), op(|_, v| reduce(v[0].softmax_rows()))),
        ("masked_softmax_rows", r(&[&[3, 4]]), op(move |_, v| reduce(v[0].masked_softmax_rows(&mask)?))),
        ("log_softmax_rows", r(&[&[3, 4]]), op(|_, v| reduce(v[0].log_softmax_rows()))),
        ("layer_norm", r(&[&[3, 4], &[4], &[4]]), op(|_, v| reduce(v[0].layer_norm(v[1], v[2], 1e-6)?))),
        ("embedding", r(&[&[5, 3]]), op(|_, v| reduce(v[0].embedding(&[4, 0, 4, 2])?))),
        ("concat_cols", r(&[&[3, 2], &[3, 3]]), op(|_, v| reduce(Var::concat_cols(&[v[0], v[1]])?))),
        ("slice_cols", r(&[&[3, 5]]), op(|_, v| reduce(v[0].slice_cols(1, 3)?))),
        ("split_cols", r(&[&[3, 5]]), op(|_, v| {
            let parts = v[0].split_cols(&[2, 3])?;
            reduce(parts[0].matmul_nt(parts[1].slice_cols(0, 2)?)?)
        })),
        ("sum", r(&[&[3, 4]]), op(|_, v| Ok(v[0].sum()))),
    ]
}

fn full_model() -> std::result::Result<f64, String> {
    let mut cfg = ModelConfig::small(1, 16, 2, InputKind::Features, 4, 8);
    cfg.d_ff = 32;
    let model = Transformer::new(cfg, 5).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let frames = random(&mut rng, &[6, 4]);
    let target_in = [BOS_ID, 4, 6, 5];
    let target_out = [4usize, 6, 5, 3];
    let names: Vec<String> = model.params().keys().cloned().collect();
    let inputs: Vec<Tensor> = model.params().values().map(|t| (**t).clone()).collect();
    let report = check_gradients(&inputs, 1e-4, None, |tape, vars| {
        let g = Graph::from_vars(tape, names.iter().cloned().zip(vars.iter().copied()));
        let run = || -> std::result::Result<Var<'_>, ModelError> {
            let z = model.encode_graph(&g, &Source::Features(&frames), 6)?;
            let logp = model.decode_graph(&g, z, 6, &target_in, 4)?;
            let pick = Tensor::matrix(4, 8, (0..32).map(|k| if target_out[k / 8] == k % 8 { -1.0 } else { 0.0 }).collect())?;
            Ok(logp.mul_const(pick)?.sum())
        };
        run().map_err(|e| match e {
            ModelError::Tensor(t) => t,
            other => panic!("{other}"),
        })
    })
    .map_err(|e| e.to_string())?;
    Ok(report.max_relative_error)
}

pub fn check() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = (0.0f64, "");
    let mut failed = Vec::new();
    let list = ops(&mut rng);
    let n_ops = list.len();
    for (name, inputs, f) in list {
        let report = check_gradients(&inputs, 1e-4, None, f).map_err(|e| format!("{name}: {e}"))?;
        if report.max_relative_error >= 1e-3 {
            failed.push(format!("{name} {:.2e}", report.max_relative_error));
        }
        if report.max_relative_error > worst.0 {
            worst = (report.max_relative_error, name);
        }
    }
    let model_err = full_model()?;
    let secs = start.elapsed().as_secs_f64();
    if model_err >= 1e-3 {
        failed.push(format!("full model {model_err:.2e}"));
    }
    verdict(
        failed.is_empty() && secs < 60.0,
        format!(
            "{n_ops} ops worst {:.2e} ({}), N=1/d16/h2 model {:.2e}, {secs:.1} s < 60 s{}",
            worst.0,
            worst.1,
            model_err,
            if failed.is_empty() { String::new() } else { format!("; over tolerance: {}", failed.join(", ")) }
        ),
    )
}
