//! Slice-level numeric kernels shared by the pure `Tensor` API and the tape.

/// `a[m,k] · b[k,n]`.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &y) in row.iter_mut().zip(b_row) {
                *o += x * y;
            }
        }
    }
    out
}

/// `a[m,k] · b[n,k]ᵀ`.
pub(crate) fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            out[i * n + j] = dot(a_row, b_row);
        }
    }
    out
}

/// `a[k,m]ᵀ · b[k,n]`, accumulated into `out[m,n]`.
pub(crate) fn matmul_tn_acc(a: &[f64], b: &[f64], k: usize, m: usize, n: usize, out: &mut [f64]) {
    for p in 0..k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for (i, &x) in a_row.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let o = &mut out[i * n..(i + 1) * n];
            for (o, &y) in o.iter_mut().zip(b_row) {
                *o += x * y;
            }
        }
    }
}

/// `a[m,k] · b[n,k]ᵀ`, accumulated into `out[m,n]`.
pub(crate) fn matmul_nt_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            out[i * n + j] += dot(a_row, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `a[m,k] · b[k,n]`, accumulated into `out[m,n]`.
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x == 0.0 {
                continue;
            }
            for (o, &y) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += x * y;
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize the reduction.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// Row-wise softmax. `allowed`, when given, is a row-major boolean mask with
/// the same layout as `x`; disallowed entries come out exactly zero.
/// Returns the index of the first row with no allowed entry as an error.
pub(crate) fn softmax_rows(
    x: &[f64],
    rows: usize,
    cols: usize,
    allowed: Option<&[bool]>,
) -> Result<Vec<f64>, usize> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let xs = &x[r * cols..(r + 1) * cols];
        let ys = &mut out[r * cols..(r + 1) * cols];
        let mask = allowed.map(|m| &m[r * cols..(r + 1) * cols]);
        let ok = |j: usize| mask.map_or(true, |m| m[j]);
        let mut max = f64::NEG_INFINITY;
        for (j, &v) in xs.iter().enumerate() {
            if ok(j) && v > max {
                max = v;
            }
        }
        if max == f64::NEG_INFINITY {
            return Err(r);
        }
        let mut sum = 0.0;
        for (j, y) in ys.iter_mut().enumerate() {
            if ok(j) {
                *y = (xs[j] - max).exp();
                sum += *y;
            }
        }
        let inv = 1.0 / sum;
        for y in ys.iter_mut() {
            *y *= inv;
        }
    }
    Ok(out)
}

pub(crate) fn log_softmax_rows(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let xs = &x[r * cols..(r + 1) * cols];
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + xs.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        for (o, &v) in out[r * cols..(r + 1) * cols].iter_mut().zip(xs) {
            *o = v - lse;
        }
    }
    out
}

pub(crate) struct LayerNormOut {
    pub y: Vec<f64>,
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// Normalizes each row to zero mean and unit (population) variance, then
/// applies `gamma` and `beta`. A row with `var + eps == 0` normalizes to zero.
pub(crate) fn layer_norm(
    x: &[f64],
    rows: usize,
    cols: usize,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> LayerNormOut {
    let mut y = vec![0.0; rows * cols];
    let mut xhat = vec![0.0; rows * cols];
    let mut inv_std = vec![0.0; rows];
    let n = cols as f64;
    for r in 0..rows {
        let xs = &x[r * cols..(r + 1) * cols];
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let denom = var + eps;
        let s = if denom > 0.0 { 1.0 / denom.sqrt() } else { 0.0 };
        inv_std[r] = s;
        for j in 0..cols {
            let h = (xs[j] - mean) * s;
            xhat[r * cols + j] = h;
            y[r * cols + j] = gamma[j] * h + beta[j];
        }
    }
    LayerNormOut { y, xhat, inv_std }
}
