//! Plain (untracked) array kernels shared by the tape ops.

use crate::error::{AutodiffError, Result};
use crate::tensor::{dims2, Tensor};

pub(crate) fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(AutodiffError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}

fn require_rank2(op: &'static str, a: &Tensor, other: &Tensor) -> Result<()> {
    if a.shape().len() == 2 {
        Ok(())
    } else {
        Err(AutodiffError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: other.shape().to_vec(),
        })
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    require_rank2("matmul", a, b)?;
    require_rank2("matmul", b, a)?;
    let (m, k) = a.dims2();
    let (k2, n) = b.dims2();
    if k != k2 {
        return Err(AutodiffError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = ad[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Ok(Tensor::from_parts(vec![m, n], out))
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 2 {
        return Err(AutodiffError::InvalidArgument {
            op: "transpose",
            msg: format!("expected a matrix, got shape {:?}", a.shape()),
        });
    }
    let (r, c) = a.dims2();
    let d = a.data();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = d[i * c + j];
        }
    }
    Ok(Tensor::from_parts(vec![c, r], out))
}

/// Checks that `from` can be broadcast to `to` (rank ≤ 2, numpy-style on the
/// matrix view) and returns both matrix views.
fn broadcast_dims(
    op: &'static str,
    from: &[usize],
    to: &[usize],
) -> Result<((usize, usize), (usize, usize))> {
    let (fr, fc) = dims2(from);
    let (tr, tc) = dims2(to);
    let ok = from.len() <= to.len() && (fr == tr || fr == 1) && (fc == tc || fc == 1);
    if ok {
        Ok(((fr, fc), (tr, tc)))
    } else {
        Err(AutodiffError::ShapeMismatch {
            op,
            lhs: from.to_vec(),
            rhs: to.to_vec(),
        })
    }
}

pub fn broadcast_to(a: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let ((fr, fc), (tr, tc)) = broadcast_dims("broadcast_to", a.shape(), shape)?;
    let d = a.data();
    let mut out = Vec::with_capacity(tr * tc);
    for i in 0..tr {
        let si = if fr == 1 { 0 } else { i };
        for j in 0..tc {
            let sj = if fc == 1 { 0 } else { j };
            out.push(d[si * fc + sj]);
        }
    }
    Ok(Tensor::from_parts(shape.to_vec(), out))
}

/// Sums `a` down to `shape`; the adjoint of [`broadcast_to`].
pub fn reduce_to(a: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let ((tr, tc), (fr, fc)) = broadcast_dims("reduce_to", shape, a.shape())?;
    let d = a.data();
    let mut out = vec![0.0; tr * tc];
    for i in 0..fr {
        let ti = if tr == 1 { 0 } else { i };
        for j in 0..fc {
            let tj = if tc == 1 { 0 } else { j };
            out[ti * tc + tj] += d[i * fc + j];
        }
    }
    Ok(Tensor::from_parts(shape.to_vec(), out))
}

pub fn index_select(a: &Tensor, index: &[usize]) -> Result<Tensor> {
    let (rows, cols) = a.dims2();
    let d = a.data();
    let mut out = Vec::with_capacity(index.len() * cols);
    for &i in index {
        if i >= rows {
            return Err(AutodiffError::IndexOutOfBounds {
                op: "index_select",
                index: i,
                bound: rows,
            });
        }
        out.extend_from_slice(&d[i * cols..(i + 1) * cols]);
    }
    Ok(Tensor::from_parts(vec![index.len(), cols], out))
}

/// `out[index[i]] += a[i]` for every row `i` of `a`, into `rows` output rows.
pub fn scatter_add(a: &Tensor, index: &[usize], rows: usize) -> Result<Tensor> {
    let (r, cols) = a.dims2();
    if r != index.len() {
        return Err(AutodiffError::InvalidArgument {
            op: "scatter_add",
            msg: format!("{} source rows but {} indices", r, index.len()),
        });
    }
    let d = a.data();
    let mut out = vec![0.0; rows * cols];
    for (src, &dst) in index.iter().enumerate() {
        if dst >= rows {
            return Err(AutodiffError::IndexOutOfBounds {
                op: "scatter_add",
                index: dst,
                bound: rows,
            });
        }
        let orow = &mut out[dst * cols..(dst + 1) * cols];
        for (o, &v) in orow.iter_mut().zip(&d[src * cols..(src + 1) * cols]) {
            *o += v;
        }
    }
    Ok(Tensor::from_parts(vec![rows, cols], out))
}

pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
    let Some(first) = parts.first() else {
        return Err(AutodiffError::InvalidArgument {
            op: "concat_cols",
            msg: "nothing to concatenate".into(),
        });
    };
    let rows = first.rows();
    for p in parts {
        if p.shape().len() != 2 || p.rows() != rows {
            return Err(AutodiffError::ShapeMismatch {
                op: "concat_cols",
                lhs: first.shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
    }
    let total: usize = parts.iter().map(|p| p.cols()).sum();
    let mut out = Vec::with_capacity(rows * total);
    for i in 0..rows {
        for p in parts {
            out.extend_from_slice(p.row(i));
        }
    }
    Ok(Tensor::from_parts(vec![rows, total], out))
}

pub fn slice_cols(a: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let (rows, cols) = a.dims2();
    if a.shape().len() != 2 || start + len > cols {
        return Err(AutodiffError::InvalidArgument {
            op: "slice_cols",
            msg: format!(
                "columns {start}..{} out of range for shape {:?}",
                start + len,
                a.shape()
            ),
        });
    }
    let mut out = Vec::with_capacity(rows * len);
    for i in 0..rows {
        out.extend_from_slice(&a.row(i)[start..start + len]);
    }
    Ok(Tensor::from_parts(vec![rows, len], out))
}

/// Places `a` at column offset `start` inside a zero matrix of `total` columns.
pub fn pad_cols(a: &Tensor, start: usize, total: usize) -> Result<Tensor> {
    let (rows, cols) = a.dims2();
    if a.shape().len() != 2 || start + cols > total {
        return Err(AutodiffError::InvalidArgument {
            op: "pad_cols",
            msg: format!(
                "cannot place shape {:?} at column {start} of {total}",
                a.shape()
            ),
        });
    }
    let mut out = vec![0.0; rows * total];
    for i in 0..rows {
        out[i * total + start..i * total + start + cols].copy_from_slice(a.row(i));
    }
    Ok(Tensor::from_parts(vec![rows, total], out))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
