use std::sync::Arc;

use crate::tensor::{Mask, Tape, Tensor, TensorError, Var};

/// Result of an attention call: the output and the post-softmax weights of
/// every head (rows are queries, columns keys).
pub struct AttentionOutput<'t> {
    pub output: Var<'t>,
    pub weights: Vec<Arc<Tensor>>,
}

/// `softmax(Q·Kᵀ / √d_k + bias)·V` where `bias` is −∞ wherever `mask` is
/// false. A query row with no allowed key is an error.
pub fn scaled_dot_attention<'t>(q: Var<'t>, k: Var<'t>, v: Var<'t>, mask: Option<&Mask>) -> Result<AttentionOutput<'t>, TensorError> {
    let d_k = q.value().cols();
    let scores = q.matmul_nt(k)?.scale(1.0 / (d_k as f64).sqrt());
    let weights = match mask {
        Some(m) => scores.masked_softmax_rows(m)?,
        None => scores.softmax_rows(),
    };
    let output = weights.matmul(v)?;
    Ok(AttentionOutput {
        output,
        weights: vec![weights.value()],
    })
}

impl AttentionOutput<'_> {
    /// Convenience for evaluating attention on plain tensors.
    pub fn evaluate(q: &Tensor, k: &Tensor, v: &Tensor, mask: Option<&Mask>) -> Result<(Tensor, Tensor), TensorError> {
        let tape = Tape::new();
        let out = scaled_dot_attention(tape.constant(q.clone()), tape.constant(k.clone()), tape.constant(v.clone()), mask)?;
        let w = (*out.weights[0]).clone();
        Ok(((*out.output.value()).clone(), w))
    }
}

/// Projection weights of one multi-head attention block. Head `i` uses
/// columns `i·d_k .. (i+1)·d_k` of `w_q` and `w_k`, and columns
/// `i·d_v .. (i+1)·d_v` of `w_v`, so each column block is that head's
/// `d_model × d_k` (or `× d_v`) projection. `w_o` is `h·d_v × d_model`.
#[derive(Clone, Copy)]
pub struct MultiHeadParams<'t> {
    pub w_q: Var<'t>,
    pub w_k: Var<'t>,
    pub w_v: Var<'t>,
    pub w_o: Var<'t>,
    pub heads: usize,
}

/// `Concat(head_1 … head_h)·W_o` with `head_i = Attention(q·W_iQ, k·W_iK, v·W_iV)`.
pub fn multi_head_attention<'t>(
    q_in: Var<'t>,
    k_in: Var<'t>,
    v_in: Var<'t>,
    params: &MultiHeadParams<'t>,
    mask: Option<&Mask>,
) -> Result<AttentionOutput<'t>, TensorError> {
    let h = params.heads;
    let q = q_in.matmul(params.w_q)?;
    let k = k_in.matmul(params.w_k)?;
    let v = v_in.matmul(params.w_v)?;
    let d_k = q.value().cols() / h;
    let d_v = v.value().cols() / h;
    let mut heads = Vec::with_capacity(h);
    let mut weights = Vec::with_capacity(h);
    for i in 0..h {
        let att = scaled_dot_attention(
            q.slice_cols(i * d_k, d_k)?,
            k.slice_cols(i * d_k, d_k)?,
            v.slice_cols(i * d_v, d_v)?,
            mask,
        )?;
        heads.push(att.output);
        weights.extend(att.weights);
    }
    let concat = if h == 1 { heads[0] } else { Var::concat_cols(&heads)? };
    Ok(AttentionOutput {
        output: concat.matmul(params.w_o)?,
        weights,
    })
}

/// `PE[pos, 2i] = sin(pos / 10000^(2i/d))`, `PE[pos, 2i+1] = cos(…)`.
pub fn positional_encoding(len: usize, d_model: usize) -> Tensor {
    assert!(len >= 1 && d_model % 2 == 0, "positional encoding needs len ≥ 1 and even d_model");
    let mut data = vec![0.0; len * d_model];
    for pos in 0..len {
        for i in 0..d_model / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            data[pos * d_model + 2 * i] = angle.sin();
            data[pos * d_model + 2 * i + 1] = angle.cos();
        }
    }
    Tensor::matrix(len, d_model, data).expect("positive shape")
}

/// Position `(i, j)` is allowed iff `j ≤ i`.
pub fn causal_mask(len: usize) -> Mask {
    Mask::from_fn(len, len, |i, j| j <= i)
}
