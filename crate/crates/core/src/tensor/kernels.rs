//! Raw row-major kernels. Every kernel accumulates into its output and
//! sums in a fixed order, so results are bit-reproducible.

/// Matrix operand layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Layout {
    /// Stored as written.
    Plain,
    /// Stored transposed.
    Trans,
}

/// `c[m×n] += op(a)[m×k] · op(b)[k×n]`.
///
/// The `(Trans, Trans)` combination is never needed by the tape and is
/// rejected.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    a: &[f64],
    la: Layout,
    b: &[f64],
    lb: Layout,
    c: &mut [f64],
    m: usize,
    k: usize,
    n: usize,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    match (la, lb) {
        (Layout::Plain, Layout::Plain) => {
            for i in 0..m {
                let a_row = &a[i * k..(i + 1) * k];
                let c_row = &mut c[i * n..(i + 1) * n];
                for (p, &aip) in a_row.iter().enumerate() {
                    if aip == 0.0 {
                        continue;
                    }
                    let b_row = &b[p * n..(p + 1) * n];
                    for (cij, &bpj) in c_row.iter_mut().zip(b_row) {
                        *cij += aip * bpj;
                    }
                }
            }
        }
        (Layout::Plain, Layout::Trans) => {
            // b is stored n×k
            for i in 0..m {
                let a_row = &a[i * k..(i + 1) * k];
                for j in 0..n {
                    let b_row = &b[j * k..(j + 1) * k];
                    c[i * n + j] += dot(a_row, b_row);
                }
            }
        }
        (Layout::Trans, Layout::Plain) => {
            // a is stored k×m
            for p in 0..k {
                let a_row = &a[p * m..(p + 1) * m];
                let b_row = &b[p * n..(p + 1) * n];
                for (i, &api) in a_row.iter().enumerate() {
                    if api == 0.0 {
                        continue;
                    }
                    let c_row = &mut c[i * n..(i + 1) * n];
                    for (cij, &bpj) in c_row.iter_mut().zip(b_row) {
                        *cij += api * bpj;
                    }
                }
            }
        }
        (Layout::Trans, Layout::Trans) => unreachable!("transposed-transposed gemm is not used"),
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-wise softmax over the last dimension with max subtraction.
pub(crate) fn softmax_rows(input: &[f64], width: usize, out: &mut [f64]) {
    for (row, out_row) in input.chunks_exact(width).zip(out.chunks_exact_mut(width)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (o, &x) in out_row.iter_mut().zip(row) {
            *o = (x - max).exp();
            total += *o;
        }
        for o in out_row.iter_mut() {
            *o /= total;
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
