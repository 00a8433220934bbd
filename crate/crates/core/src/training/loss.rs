use super::TrainError;
use crate::lexicon::PAD_ID;
use crate::tensor::{Tensor, Var};

/// Summed label-smoothed cross-entropy over the non-PAD rows of `logprobs`
/// and the number of such rows.
///
/// The target distribution is `(1 − eps)·onehot + eps·uniform`, with the
/// uniform part spread over every class except PAD.
pub fn label_smoothed_loss_sum<'t>(logprobs: Var<'t>, targets: &[u32], eps: f64) -> Result<(Var<'t>, usize), TrainError> {
    let shape = logprobs.shape();
    if shape.len() != 2 || shape[0] != targets.len() {
        return Err(TrainError::Contract(format!("{} targets for log-probabilities of shape {shape:?}", targets.len())));
    }
    let v = shape[1];
    if v < 2 {
        return Err(TrainError::Contract("label smoothing needs at least one non-PAD class".into()));
    }
    let spread = eps / (v - 1) as f64;
    let mut weights = vec![0.0; targets.len() * v];
    let mut count = 0;
    for (t, &y) in targets.iter().enumerate() {
        if y == PAD_ID {
            continue;
        }
        if y as usize >= v {
            return Err(TrainError::Contract(format!("target {y} outside vocabulary of {v}")));
        }
        count += 1;
        let row = &mut weights[t * v..(t + 1) * v];
        for (c, w) in row.iter_mut().enumerate() {
            if c != PAD_ID as usize {
                *w = -spread;
            }
        }
        row[y as usize] -= 1.0 - eps;
    }
    if count == 0 {
        return Err(TrainError::Contract("every target position is PAD".into()));
    }
    let loss = logprobs.mul_const(Tensor::new(shape, weights)?)?.sum();
    Ok((loss, count))
}

/// Mean label-smoothed cross-entropy per non-PAD target position.
pub fn label_smoothed_loss<'t>(logprobs: Var<'t>, targets: &[u32], eps: f64) -> Result<Var<'t>, TrainError> {
    let (sum, n) = label_smoothed_loss_sum(logprobs, targets, eps)?;
    Ok(sum.scale(1.0 / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    fn loss_of(logits: &[&[f64]], targets: &[u32], eps: f64) -> f64 {
        let tape = Tape::new();
        let rows: Vec<Vec<f64>> = logits.iter().map(|r| r.to_vec()).collect();
        let x = tape.constant(Tensor::from_rows(&rows).unwrap());
        label_smoothed_loss(x.log_softmax_rows(), targets, eps).unwrap().value().item()
    }

    #[test]
    fn zero_eps_is_cross_entropy() {
        let l = loss_of(&[&[1.0, 2.0, 0.5]], &[1], 0.0);
        let z = 1f64.exp() + 2f64.exp() + 0.5f64.exp();
        assert!((l - (z.ln() - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn uniform_prediction_over_two_classes() {
        for eps in [0.0, 0.1, 0.5] {
            assert!((loss_of(&[&[0.3, 0.3]], &[1], eps) - 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn three_classes_direct_formula() {
        // PAD is class 0; target is class 1; smoothing covers classes 1 and 2.
        let z = 2f64.exp() + 2.0;
        let lp = [2.0 - z.ln(), -z.ln(), -z.ln()];
        let want = -((0.9 + 0.05) * lp[1] + 0.05 * lp[2]);
        let got = loss_of(&[&[2.0, 0.0, 0.0]], &[1], 0.1);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn pad_rows_are_ignored() {
        let a = loss_of(&[&[0.1, 0.7, -0.2, 0.4], &[1.0, 0.0, 0.3, 0.3]], &[2, 3], 0.1);
        let b = loss_of(&[&[0.1, 0.7, -0.2, 0.4], &[1.0, 0.0, 0.3, 0.3], &[5.0, 1.0, 1.0, 1.0]], &[2, 3, PAD_ID], 0.1);
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn all_pad_is_an_error() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::zeros(vec![2, 3]));
        assert!(label_smoothed_loss(x, &[0, 0], 0.1).is_err());
    }
}
