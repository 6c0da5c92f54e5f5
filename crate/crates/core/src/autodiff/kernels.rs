//! Forward and backward math for every graph operation.
//!
//! Kernels are pure functions over [`Tensor`]s returning `Result<_, String>`;
//! the graph layer attaches node ids to errors. Everything is sequential and
//! deterministic: no parallel floating-point reductions.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use super::tensor::{strides_of, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Additive mask value for attention; exp(x) underflows to exactly 0.0 well
/// before this, so masked positions get exactly zero weight.
pub const MASK_NEG: f64 = -1e9;

fn view2(data: &[f64], rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), data).expect("view2 shape")
}

fn view2_mut(data: &mut [f64], rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("view2_mut shape")
}

// ---------------------------------------------------------------------------
// matmul

/// `a [.., m, k] x b [k, n]` (shared) or `a [.., m, k] x b [.., k, n]`
/// (grouped, equal leading dims). With `transpose_b`, `b` is `[n, k]`-shaped
/// (or `[.., n, k]`) and used transposed.
pub fn matmul_fwd(a: &Tensor, b: &Tensor, transpose_b: bool) -> Result<Tensor, String> {
    if a.rank() < 2 || b.rank() < 2 {
        return Err(format!(
            "matmul needs rank>=2 operands, got {:?} x {:?}",
            a.shape, b.shape
        ));
    }
    let (m, k) = a.mat_dims();
    let (bk, n) = {
        let (r, c) = b.mat_dims();
        if transpose_b {
            (c, r)
        } else {
            (r, c)
        }
    };
    if k != bk {
        return Err(format!(
            "matmul inner dims differ: {:?} x {:?} (transpose_b={})",
            a.shape, b.shape, transpose_b
        ));
    }
    let groups = a.group_count();
    let b_grouped = b.rank() > 2;
    if b_grouped && b.group_count() != groups {
        return Err(format!(
            "matmul group counts differ: {:?} x {:?}",
            a.shape, b.shape
        ));
    }
    let mut out_shape = a.shape[..a.rank() - 2].to_vec();
    out_shape.push(m);
    out_shape.push(n);
    let mut out = Tensor::zeros(&out_shape);
    let (a_sz, b_sz, c_sz) = (m * k, k * n, m * n);
    if !b_grouped {
        // shared right-hand side: collapse all leading dims into one GEMM
        let av = view2(&a.data, groups * m, k);
        let mut cv = view2_mut(&mut out.data, groups * m, n);
        if transpose_b {
            let bv = view2(&b.data, n, k);
            general_mat_mul(1.0, &av, &bv.t(), 0.0, &mut cv);
        } else {
            let bv = view2(&b.data, k, n);
            general_mat_mul(1.0, &av, &bv, 0.0, &mut cv);
        }
        return Ok(out);
    }
    let body = |g: usize, c_chunk: &mut [f64]| {
        let av = view2(&a.data[g * a_sz..(g + 1) * a_sz], m, k);
        let mut cv = view2_mut(c_chunk, m, n);
        if transpose_b {
            let bv = view2(&b.data[g * b_sz..(g + 1) * b_sz], n, k);
            general_mat_mul(1.0, &av, &bv.t(), 0.0, &mut cv);
        } else {
            let bv = view2(&b.data[g * b_sz..(g + 1) * b_sz], k, n);
            general_mat_mul(1.0, &av, &bv, 0.0, &mut cv);
        }
    };
    if groups >= 16 && groups * m * k * n >= 1 << 14 {
        use rayon::prelude::*;
        out.data
            .par_chunks_mut(c_sz)
            .enumerate()
            .for_each(|(g, chunk)| body(g, chunk));
    } else {
        for (g, chunk) in out.data.chunks_mut(c_sz).enumerate() {
            body(g, chunk);
        }
    }
    Ok(out)
}

pub fn matmul_bwd(
    a: &Tensor,
    b: &Tensor,
    transpose_b: bool,
    grad: &Tensor,
) -> (Tensor, Tensor) {
    let (m, k) = a.mat_dims();
    let n = grad.shape[grad.rank() - 1];
    let groups = a.group_count();
    let b_grouped = b.rank() > 2;
    let (a_sz, b_sz, c_sz) = (m * k, k * n, m * n);
    let mut da = Tensor::zeros(&a.shape);
    let mut db = Tensor::zeros(&b.shape);
    if !b_grouped {
        // shared rhs: one GEMM for each of da and db over the collapsed rows
        let av = view2(&a.data, groups * m, k);
        let gv = view2(&grad.data, groups * m, n);
        if transpose_b {
            let bv = view2(&b.data, n, k);
            let mut dav = view2_mut(&mut da.data, groups * m, k);
            general_mat_mul(1.0, &gv, &bv, 1.0, &mut dav);
            let mut dbv = view2_mut(&mut db.data, n, k);
            general_mat_mul(1.0, &gv.t(), &av, 1.0, &mut dbv);
        } else {
            let bv = view2(&b.data, k, n);
            let mut dav = view2_mut(&mut da.data, groups * m, k);
            general_mat_mul(1.0, &gv, &bv.t(), 1.0, &mut dav);
            let mut dbv = view2_mut(&mut db.data, k, n);
            general_mat_mul(1.0, &av.t(), &gv, 1.0, &mut dbv);
        }
        return (da, db);
    }
    let body = |g: usize, da_chunk: &mut [f64], db_chunk: &mut [f64]| {
        let av = view2(&a.data[g * a_sz..(g + 1) * a_sz], m, k);
        let gv = view2(&grad.data[g * c_sz..(g + 1) * c_sz], m, n);
        if transpose_b {
            let bv = view2(&b.data[g * b_sz..(g + 1) * b_sz], n, k);
            let mut dav = view2_mut(da_chunk, m, k);
            general_mat_mul(1.0, &gv, &bv, 1.0, &mut dav);
            let mut dbv = view2_mut(db_chunk, n, k);
            general_mat_mul(1.0, &gv.t(), &av, 1.0, &mut dbv);
        } else {
            let bv = view2(&b.data[g * b_sz..(g + 1) * b_sz], k, n);
            let mut dav = view2_mut(da_chunk, m, k);
            general_mat_mul(1.0, &gv, &bv.t(), 1.0, &mut dav);
            let mut dbv = view2_mut(db_chunk, k, n);
            general_mat_mul(1.0, &av.t(), &gv, 1.0, &mut dbv);
        }
    };
    if groups >= 16 && groups * m * k * n >= 1 << 14 {
        use rayon::prelude::*;
        da.data
            .par_chunks_mut(a_sz)
            .zip(db.data.par_chunks_mut(b_sz))
            .enumerate()
            .for_each(|(g, (dac, dbc))| body(g, dac, dbc));
    } else {
        for (g, (dac, dbc)) in da
            .data
            .chunks_mut(a_sz)
            .zip(db.data.chunks_mut(b_sz))
            .enumerate()
        {
            body(g, dac, dbc);
        }
    }
    (da, db)
}

// ---------------------------------------------------------------------------
// broadcast add / mul

/// Checks that `b` broadcasts onto `a`: after left-padding `b`'s shape with
/// 1s, each axis extent must equal `a`'s or be 1. Returns per-axis strides of
/// `b` aligned to `a`'s rank (0 stride where broadcast).
fn broadcast_strides(a: &Tensor, b: &Tensor) -> Result<Vec<usize>, String> {
    if b.rank() > a.rank() {
        return Err(format!(
            "broadcast rhs rank {} exceeds lhs rank {}",
            b.rank(),
            a.rank()
        ));
    }
    let pad = a.rank() - b.rank();
    let b_strides = strides_of(&b.shape);
    let mut aligned = vec![0usize; a.rank()];
    for i in 0..b.rank() {
        let (ba, aa) = (b.shape[i], a.shape[pad + i]);
        if ba == aa {
            aligned[pad + i] = b_strides[i];
        } else if ba == 1 {
            aligned[pad + i] = 0;
        } else {
            return Err(format!(
                "cannot broadcast {:?} onto {:?}",
                b.shape, a.shape
            ));
        }
    }
    Ok(aligned)
}

fn zip_broadcast(
    a: &Tensor,
    b: &Tensor,
    mut f: impl FnMut(usize, usize),
) -> Result<(), String> {
    if a.shape == b.shape {
        for i in 0..a.numel() {
            f(i, i);
        }
        return Ok(());
    }
    let b_aligned = broadcast_strides(a, b)?;
    let a_strides = strides_of(&a.shape);
    let rank = a.rank();
    let mut idx = vec![0usize; rank];
    let mut bi = 0usize;
    for ai in 0..a.numel() {
        f(ai, bi);
        // advance mixed-radix counter
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            bi += b_aligned[ax];
            if idx[ax] < a.shape[ax] {
                break;
            }
            bi -= b_aligned[ax] * a.shape[ax];
            idx[ax] = 0;
        }
        let _ = a_strides;
    }
    Ok(())
}

pub fn add_fwd(a: &Tensor, b: &Tensor) -> Result<Tensor, String> {
    let mut out = a.clone();
    if a.shape == b.shape {
        for (o, x) in out.data.iter_mut().zip(&b.data) {
            *o += x;
        }
        return Ok(out);
    }
    zip_broadcast(a, b, |ai, bi| out.data[ai] += b.data[bi])?;
    Ok(out)
}

pub fn add_bwd(a: &Tensor, b: &Tensor, grad: &Tensor) -> (Tensor, Tensor) {
    let da = grad.clone();
    let mut db = Tensor::zeros(&b.shape);
    if a.shape == b.shape {
        db.data.copy_from_slice(&grad.data);
    } else {
        zip_broadcast(a, b, |ai, bi| db.data[bi] += grad.data[ai]).expect("checked at fwd");
    }
    (da, db)
}

pub fn mul_fwd(a: &Tensor, b: &Tensor) -> Result<Tensor, String> {
    let mut out = a.clone();
    if a.shape == b.shape {
        for (o, x) in out.data.iter_mut().zip(&b.data) {
            *o *= x;
        }
        return Ok(out);
    }
    zip_broadcast(a, b, |ai, bi| out.data[ai] *= b.data[bi])?;
    Ok(out)
}

pub fn mul_bwd(a: &Tensor, b: &Tensor, grad: &Tensor) -> (Tensor, Tensor) {
    let mut da = Tensor::zeros(&a.shape);
    let mut db = Tensor::zeros(&b.shape);
    if a.shape == b.shape {
        for i in 0..grad.numel() {
            da.data[i] = grad.data[i] * b.data[i];
            db.data[i] = grad.data[i] * a.data[i];
        }
    } else {
        zip_broadcast(a, b, |ai, bi| {
            da.data[ai] = grad.data[ai] * b.data[bi];
            db.data[bi] += grad.data[ai] * a.data[ai];
        })
        .expect("checked at fwd");
    }
    (da, db)
}

// ---------------------------------------------------------------------------
// elementwise nonlinearities

pub fn relu_fwd(a: &Tensor) -> Tensor {
    let mut out = a.clone();
    for v in &mut out.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

pub fn relu_bwd(a: &Tensor, grad: &Tensor) -> Tensor {
    let mut da = grad.clone();
    for (d, x) in da.data.iter_mut().zip(&a.data) {
        if *x <= 0.0 {
            *d = 0.0;
        }
    }
    da
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu_fwd(a: &Tensor) -> Tensor {
    let mut out = a.clone();
    for v in &mut out.data {
        let x = *v;
        let u = GELU_C * (x + GELU_A * x * x * x);
        *v = 0.5 * x * (1.0 + u.tanh());
    }
    out
}

pub fn gelu_bwd(a: &Tensor, grad: &Tensor) -> Tensor {
    let mut da = grad.clone();
    for (d, &x) in da.data.iter_mut().zip(&a.data) {
        let u = GELU_C * (x + GELU_A * x * x * x);
        let t = u.tanh();
        let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
        *d *= 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
    }
    da
}

pub fn sigmoid_fwd(a: &Tensor) -> Tensor {
    let mut out = a.clone();
    for v in &mut out.data {
        *v = 1.0 / (1.0 + (-*v).exp());
    }
    out
}

pub fn sigmoid_bwd(value: &Tensor, grad: &Tensor) -> Tensor {
    let mut da = grad.clone();
    for (d, &s) in da.data.iter_mut().zip(&value.data) {
        *d *= s * (1.0 - s);
    }
    da
}

pub fn exp_fwd(a: &Tensor) -> Tensor {
    let mut out = a.clone();
    for v in &mut out.data {
        *v = v.exp();
    }
    out
}

pub fn exp_bwd(value: &Tensor, grad: &Tensor) -> Tensor {
    let mut da = grad.clone();
    for (d, &e) in da.data.iter_mut().zip(&value.data) {
        *d *= e;
    }
    da
}

pub fn scale_fwd(a: &Tensor, c: f64) -> Tensor {
    let mut out = a.clone();
    for v in &mut out.data {
        *v *= c;
    }
    out
}

pub fn scale_bwd(c: f64, grad: &Tensor) -> Tensor {
    scale_fwd(grad, c)
}

// ---------------------------------------------------------------------------
// softmax over the last axis

pub fn softmax_fwd(a: &Tensor) -> Result<Tensor, String> {
    if a.rank() == 0 {
        return Err("softmax needs rank >= 1".into());
    }
    let n = a.shape[a.rank() - 1];
    let rows = a.numel() / n;
    let mut out = a.clone();
    for r in 0..rows {
        let row = &mut out.data[r * n..(r + 1) * n];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

pub fn softmax_bwd(value: &Tensor, grad: &Tensor) -> Tensor {
    let n = value.shape[value.rank() - 1];
    let rows = value.numel() / n;
    let mut da = Tensor::zeros(&value.shape);
    for r in 0..rows {
        let y = &value.data[r * n..(r + 1) * n];
        let g = &grad.data[r * n..(r + 1) * n];
        let dot: f64 = y.iter().zip(g).map(|(yi, gi)| yi * gi).sum();
        let d = &mut da.data[r * n..(r + 1) * n];
        for i in 0..n {
            d[i] = y[i] * (g[i] - dot);
        }
    }
    da
}

// ---------------------------------------------------------------------------
// layer normalization over the last axis

pub fn layer_norm_fwd(a: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor, String> {
    let n = *a.shape.last().ok_or("layer_norm needs rank >= 1")?;
    if gamma.shape != [n] || beta.shape != [n] {
        return Err(format!(
            "layer_norm scale/shift must be [{n}], got {:?} and {:?}",
            gamma.shape, beta.shape
        ));
    }
    let rows = a.numel() / n;
    let mut out = a.clone();
    for r in 0..rows {
        let row = &mut out.data[r * n..(r + 1) * n];
        let mean: f64 = row.iter().sum::<f64>() / n as f64;
        let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for (i, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) * inv * gamma.data[i] + beta.data[i];
        }
    }
    Ok(out)
}

pub fn layer_norm_bwd(
    a: &Tensor,
    gamma: &Tensor,
    grad: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let n = *a.shape.last().unwrap();
    let rows = a.numel() / n;
    let mut da = Tensor::zeros(&a.shape);
    let mut dgamma = Tensor::zeros(&gamma.shape);
    let mut dbeta = Tensor::zeros(&gamma.shape);
    let nf = n as f64;
    for r in 0..rows {
        let x = &a.data[r * n..(r + 1) * n];
        let g = &grad.data[r * n..(r + 1) * n];
        let mean: f64 = x.iter().sum::<f64>() / nf;
        let var: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        // accumulate parameter grads and the two reduction terms
        let mut sum_dxhat = 0.0;
        let mut sum_dxhat_xhat = 0.0;
        for i in 0..n {
            let xhat = (x[i] - mean) * inv;
            dgamma.data[i] += g[i] * xhat;
            dbeta.data[i] += g[i];
            let dxhat = g[i] * gamma.data[i];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
        }
        let d = &mut da.data[r * n..(r + 1) * n];
        for i in 0..n {
            let xhat = (x[i] - mean) * inv;
            let dxhat = g[i] * gamma.data[i];
            d[i] = inv / nf * (nf * dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
        }
    }
    (da, dgamma, dbeta)
}

// ---------------------------------------------------------------------------
// reductions

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    Max,
}

pub fn reduce_fwd(a: &Tensor, axis: usize, kind: ReduceKind) -> Result<Tensor, String> {
    if axis >= a.rank() {
        return Err(format!("reduce axis {axis} out of range for {:?}", a.shape));
    }
    let outer: usize = a.shape[..axis].iter().product();
    let len = a.shape[axis];
    let inner: usize = a.shape[axis + 1..].iter().product();
    let mut out_shape = a.shape.clone();
    out_shape.remove(axis);
    let mut out = Tensor::zeros(&out_shape);
    for o in 0..outer {
        for i in 0..inner {
            let mut acc = match kind {
                ReduceKind::Max => f64::NEG_INFINITY,
                _ => 0.0,
            };
            for l in 0..len {
                let v = a.data[(o * len + l) * inner + i];
                match kind {
                    ReduceKind::Sum | ReduceKind::Mean => acc += v,
                    ReduceKind::Max => {
                        if v > acc {
                            acc = v;
                        }
                    }
                }
            }
            if kind == ReduceKind::Mean {
                acc /= len as f64;
            }
            out.data[o * inner + i] = acc;
        }
    }
    Ok(out)
}

pub fn reduce_bwd(
    a: &Tensor,
    axis: usize,
    kind: ReduceKind,
    value: &Tensor,
    grad: &Tensor,
) -> Tensor {
    let outer: usize = a.shape[..axis].iter().product();
    let len = a.shape[axis];
    let inner: usize = a.shape[axis + 1..].iter().product();
    let mut da = Tensor::zeros(&a.shape);
    for o in 0..outer {
        for i in 0..inner {
            let g = grad.data[o * inner + i];
            match kind {
                ReduceKind::Sum => {
                    for l in 0..len {
                        da.data[(o * len + l) * inner + i] = g;
                    }
                }
                ReduceKind::Mean => {
                    let per = g / len as f64;
                    for l in 0..len {
                        da.data[(o * len + l) * inner + i] = per;
                    }
                }
                ReduceKind::Max => {
                    // subgradient: route to the first argmax
                    let m = value.data[o * inner + i];
                    for l in 0..len {
                        let idx = (o * len + l) * inner + i;
                        if a.data[idx] == m {
                            da.data[idx] = g;
                            break;
                        }
                    }
                }
            }
        }
    }
    da
}

pub fn mean_all_fwd(a: &Tensor) -> Tensor {
    Tensor::scalar(a.data.iter().sum::<f64>() / a.numel() as f64)
}

pub fn mean_all_bwd(a: &Tensor, grad: &Tensor) -> Tensor {
    Tensor::filled(&a.shape, grad.scalar_value() / a.numel() as f64)
}

// ---------------------------------------------------------------------------
// structural ops

pub fn concat_fwd(parts: &[&Tensor]) -> Result<Tensor, String> {
    let first = parts.first().ok_or("concat of zero tensors")?;
    let rank = first.rank();
    if rank == 0 {
        return Err("concat needs rank >= 1".into());
    }
    let lead = &first.shape[..rank - 1];
    let mut total_last = 0;
    for p in parts {
        if p.rank() != rank || &p.shape[..rank - 1] != lead {
            return Err(format!(
                "concat leading dims differ: {:?} vs {:?}",
                first.shape, p.shape
            ));
        }
        total_last += p.shape[rank - 1];
    }
    let rows: usize = lead.iter().product();
    let mut out_shape = lead.to_vec();
    out_shape.push(total_last);
    let mut out = Tensor::zeros(&out_shape);
    for r in 0..rows {
        let mut off = 0;
        for p in parts {
            let w = p.shape[rank - 1];
            out.data[r * total_last + off..r * total_last + off + w]
                .copy_from_slice(&p.data[r * w..(r + 1) * w]);
            off += w;
        }
    }
    Ok(out)
}

pub fn concat_bwd(parts: &[&Tensor], grad: &Tensor) -> Vec<Tensor> {
    let rank = parts[0].rank();
    let rows: usize = parts[0].shape[..rank - 1].iter().product();
    let total_last = grad.shape[rank - 1];
    let mut grads: Vec<Tensor> = parts.iter().map(|p| Tensor::zeros(&p.shape)).collect();
    for r in 0..rows {
        let mut off = 0;
        for (p, dp) in parts.iter().zip(grads.iter_mut()) {
            let w = p.shape[rank - 1];
            dp.data[r * w..(r + 1) * w]
                .copy_from_slice(&grad.data[r * total_last + off..r * total_last + off + w]);
            off += w;
        }
    }
    grads
}

pub fn narrow_fwd(a: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor, String> {
    if axis >= a.rank() || start + len > a.shape[axis] {
        return Err(format!(
            "narrow axis {axis} [{start}, {start}+{len}) out of range for {:?}",
            a.shape
        ));
    }
    let outer: usize = a.shape[..axis].iter().product();
    let extent = a.shape[axis];
    let inner: usize = a.shape[axis + 1..].iter().product();
    let mut out_shape = a.shape.clone();
    out_shape[axis] = len;
    let mut out = Tensor::zeros(&out_shape);
    for o in 0..outer {
        let src = (o * extent + start) * inner;
        let dst = o * len * inner;
        out.data[dst..dst + len * inner].copy_from_slice(&a.data[src..src + len * inner]);
    }
    Ok(out)
}

pub fn narrow_bwd(a: &Tensor, axis: usize, start: usize, len: usize, grad: &Tensor) -> Tensor {
    let outer: usize = a.shape[..axis].iter().product();
    let extent = a.shape[axis];
    let inner: usize = a.shape[axis + 1..].iter().product();
    let mut da = Tensor::zeros(&a.shape);
    for o in 0..outer {
        let dst = (o * extent + start) * inner;
        let src = o * len * inner;
        da.data[dst..dst + len * inner].copy_from_slice(&grad.data[src..src + len * inner]);
    }
    da
}

pub fn reshape_fwd(a: &Tensor, shape: &[usize]) -> Result<Tensor, String> {
    if shape.iter().product::<usize>() != a.numel() {
        return Err(format!("cannot reshape {:?} to {:?}", a.shape, shape));
    }
    Ok(Tensor {
        shape: shape.to_vec(),
        data: a.data.clone(),
    })
}

pub fn permute_fwd(a: &Tensor, perm: &[usize]) -> Result<Tensor, String> {
    if perm.len() != a.rank() {
        return Err(format!("permute {:?} rank mismatch for {:?}", perm, a.shape));
    }
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || seen[p] {
            return Err(format!("invalid permutation {perm:?}"));
        }
        seen[p] = true;
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| a.shape[p]).collect();
    let in_strides = strides_of(&a.shape);
    let out_strides = strides_of(&out_shape);
    let mut out = Tensor::zeros(&out_shape);
    let rank = a.rank();
    let mut idx = vec![0usize; rank];
    for out_i in 0..a.numel() {
        let mut in_i = 0;
        for d in 0..rank {
            in_i += idx[d] * in_strides[perm[d]];
        }
        out.data[out_i] = a.data[in_i];
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
        let _ = out_strides;
    }
    Ok(out)
}

pub fn permute_bwd(a: &Tensor, perm: &[usize], grad: &Tensor) -> Tensor {
    let mut inverse = vec![0usize; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inverse[p] = i;
    }
    let mut da = permute_fwd(grad, &inverse).expect("inverse permutation");
    da.shape = a.shape.clone();
    da
}

pub fn tile_fwd(a: &Tensor, times: usize) -> Tensor {
    let mut out_shape = vec![times];
    out_shape.extend_from_slice(&a.shape);
    let mut data = Vec::with_capacity(a.numel() * times);
    for _ in 0..times {
        data.extend_from_slice(&a.data);
    }
    Tensor {
        shape: out_shape,
        data,
    }
}

pub fn tile_bwd(a: &Tensor, times: usize, grad: &Tensor) -> Tensor {
    let mut da = Tensor::zeros(&a.shape);
    let n = a.numel();
    for t in 0..times {
        for i in 0..n {
            da.data[i] += grad.data[t * n + i];
        }
    }
    da
}

// ---------------------------------------------------------------------------
// embedding lookup

pub fn embedding_fwd(table: &Tensor, ids: &[usize]) -> Result<Tensor, String> {
    if table.rank() != 2 {
        return Err(format!("embedding table must be rank 2, got {:?}", table.shape));
    }
    let (v, d) = (table.shape[0], table.shape[1]);
    let mut out = Tensor::zeros(&[ids.len(), d]);
    for (i, &id) in ids.iter().enumerate() {
        if id >= v {
            return Err(format!("embedding id {id} out of range (table rows {v})"));
        }
        out.data[i * d..(i + 1) * d].copy_from_slice(&table.data[id * d..(id + 1) * d]);
    }
    Ok(out)
}

pub fn embedding_bwd(table: &Tensor, ids: &[usize], grad: &Tensor) -> Tensor {
    let d = table.shape[1];
    let mut dt = Tensor::zeros(&table.shape);
    for (i, &id) in ids.iter().enumerate() {
        for k in 0..d {
            dt.data[id * d + k] += grad.data[i * d + k];
        }
    }
    dt
}

// ---------------------------------------------------------------------------
// masked row mean: x [B, S, d], mask [B, S] -> [B, d]

pub fn masked_mean_rows_fwd(x: &Tensor, mask: &Tensor) -> Result<Tensor, String> {
    if x.rank() != 3 || mask.rank() != 2 || mask.shape[0] != x.shape[0] || mask.shape[1] != x.shape[1]
    {
        return Err(format!(
            "masked_mean_rows expects x [B,S,d], mask [B,S]; got {:?}, {:?}",
            x.shape, mask.shape
        ));
    }
    let (b, s, d) = (x.shape[0], x.shape[1], x.shape[2]);
    let mut out = Tensor::zeros(&[b, d]);
    for bi in 0..b {
        let mut wsum = 0.0;
        for si in 0..s {
            let w = mask.data[bi * s + si];
            wsum += w;
            for k in 0..d {
                out.data[bi * d + k] += w * x.data[(bi * s + si) * d + k];
            }
        }
        if wsum <= 0.0 {
            return Err(format!("masked_mean_rows: row {bi} has zero mask weight"));
        }
        for k in 0..d {
            out.data[bi * d + k] /= wsum;
        }
    }
    Ok(out)
}

pub fn masked_mean_rows_bwd(x: &Tensor, mask: &Tensor, grad: &Tensor) -> Tensor {
    let (b, s, d) = (x.shape[0], x.shape[1], x.shape[2]);
    let mut dx = Tensor::zeros(&x.shape);
    for bi in 0..b {
        let wsum: f64 = (0..s).map(|si| mask.data[bi * s + si]).sum();
        for si in 0..s {
            let w = mask.data[bi * s + si] / wsum;
            for k in 0..d {
                dx.data[(bi * s + si) * d + k] = w * grad.data[bi * d + k];
            }
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// masked squared-error loss (mean over mask weight)

pub fn mse_masked_fwd(pred: &Tensor, target: &Tensor, mask: &Tensor) -> Result<Tensor, String> {
    if pred.shape != target.shape || pred.shape != mask.shape {
        return Err(format!(
            "mse_masked shapes differ: pred {:?}, target {:?}, mask {:?}",
            pred.shape, target.shape, mask.shape
        ));
    }
    let wsum: f64 = mask.data.iter().sum();
    if wsum <= 0.0 {
        return Err("mse_masked: zero total mask weight".into());
    }
    let mut acc = 0.0;
    for i in 0..pred.numel() {
        let d = pred.data[i] - target.data[i];
        acc += mask.data[i] * d * d;
    }
    Ok(Tensor::scalar(acc / wsum))
}

pub fn mse_masked_bwd(
    pred: &Tensor,
    target: &Tensor,
    mask: &Tensor,
    grad: &Tensor,
) -> (Tensor, Tensor) {
    let wsum: f64 = mask.data.iter().sum();
    let g = grad.scalar_value();
    let mut dp = Tensor::zeros(&pred.shape);
    let mut dt = Tensor::zeros(&target.shape);
    for i in 0..pred.numel() {
        let d = 2.0 * mask.data[i] * (pred.data[i] - target.data[i]) / wsum * g;
        dp.data[i] = d;
        dt.data[i] = -d;
    }
    (dp, dt)
}
