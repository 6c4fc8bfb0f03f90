//! Raw numeric kernels behind the tape operations.
//!
//! Everything here works on flat row-major slices with explicit extents; the
//! tape layer owns shape checking. Inner loops are written as contiguous
//! zips/axpys over the time axis so they autovectorize.

/// y += a * x
#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += a * *xi;
    }
}

/// Dot product with four independent accumulators (fixed summation order).
#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = [0.0f64; 4];
    let (xc, xr) = x.split_at(x.len() & !3);
    let (yc, yr) = y.split_at(x.len() & !3);
    for (xs, ys) in xc.chunks_exact(4).zip(yc.chunks_exact(4)) {
        acc[0] += xs[0] * ys[0];
        acc[1] += xs[1] * ys[1];
        acc[2] += xs[2] * ys[2];
        acc[3] += xs[3] * ys[3];
    }
    let mut tail = 0.0;
    for (a, b) in xr.iter().zip(yr.iter()) {
        tail += a * b;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Cross-correlation with zero "same" padding.
///
/// x: [batch, cin, t], w: [cout, cin, k] (k odd), bias: [cout], out: [batch, cout, t].
pub fn conv1d_forward(
    x: &[f64],
    batch: usize,
    cin: usize,
    t: usize,
    w: &[f64],
    cout: usize,
    k: usize,
    bias: &[f64],
    out: &mut [f64],
) {
    let pad = (k - 1) / 2;
    for b in 0..batch {
        for co in 0..cout {
            let out_row = &mut out[(b * cout + co) * t..][..t];
            out_row.fill(bias[co]);
            for ci in 0..cin {
                let x_row = &x[(b * cin + ci) * t..][..t];
                for dk in 0..k {
                    let wv = w[(co * cin + ci) * k + dk];
                    let s = dk as isize - pad as isize;
                    // out[i] += wv * x[i + s] over the in-range band
                    if s >= 0 {
                        let s = s as usize;
                        axpy(wv, &x_row[s..], &mut out_row[..t - s]);
                    } else {
                        let s = (-s) as usize;
                        axpy(wv, &x_row[..t - s], &mut out_row[s..]);
                    }
                }
            }
        }
    }
}

/// Gradients of [`conv1d_forward`]. `g` is the output cotangent; all three
/// gradient buffers are accumulated into.
pub fn conv1d_backward(
    x: &[f64],
    batch: usize,
    cin: usize,
    t: usize,
    w: &[f64],
    cout: usize,
    k: usize,
    g: &[f64],
    gx: &mut [f64],
    gw: &mut [f64],
    gb: &mut [f64],
) {
    let pad = (k - 1) / 2;
    for b in 0..batch {
        for co in 0..cout {
            let g_row = &g[(b * cout + co) * t..][..t];
            gb[co] += g_row.iter().sum::<f64>();
            for ci in 0..cin {
                let x_row = &x[(b * cin + ci) * t..][..t];
                let gx_row = &mut gx[(b * cin + ci) * t..][..t];
                for dk in 0..k {
                    let widx = (co * cin + ci) * k + dk;
                    let wv = w[widx];
                    let s = dk as isize - pad as isize;
                    if s >= 0 {
                        let s = s as usize;
                        // forward read x[i+s] for i in 0..t-s
                        gw[widx] += dot(&g_row[..t - s], &x_row[s..]);
                        axpy(wv, &g_row[..t - s], &mut gx_row[s..]);
                    } else {
                        let s = (-s) as usize;
                        gw[widx] += dot(&g_row[s..], &x_row[..t - s]);
                        axpy(wv, &g_row[s..], &mut gx_row[..t - s]);
                    }
                }
            }
        }
    }
}

/// Stride-2 transposed convolution (adjoint of a stride-2 convolution).
///
/// x: [batch, cin, tin], w: [cin, cout, k], out: [batch, cout, (tin-1)*2 + k].
pub fn conv1d_tr_forward(
    x: &[f64],
    batch: usize,
    cin: usize,
    tin: usize,
    w: &[f64],
    cout: usize,
    k: usize,
    out: &mut [f64],
) {
    let tout = (tin - 1) * 2 + k;
    out.fill(0.0);
    for b in 0..batch {
        for ci in 0..cin {
            let x_row = &x[(b * cin + ci) * tin..][..tin];
            for co in 0..cout {
                let out_row = &mut out[(b * cout + co) * tout..][..tout];
                for dk in 0..k {
                    let wv = w[(ci * cout + co) * k + dk];
                    // out[2s + dk] += wv * x[s]
                    for (o, xv) in out_row[dk..].iter_mut().step_by(2).zip(x_row.iter()) {
                        *o += wv * *xv;
                    }
                }
            }
        }
    }
}

/// Gradients of [`conv1d_tr_forward`].
pub fn conv1d_tr_backward(
    x: &[f64],
    batch: usize,
    cin: usize,
    tin: usize,
    w: &[f64],
    cout: usize,
    k: usize,
    g: &[f64],
    gx: &mut [f64],
    gw: &mut [f64],
) {
    let tout = (tin - 1) * 2 + k;
    for b in 0..batch {
        for ci in 0..cin {
            let x_row = &x[(b * cin + ci) * tin..][..tin];
            let gx_row = &mut gx[(b * cin + ci) * tin..][..tin];
            for co in 0..cout {
                let g_row = &g[(b * cout + co) * tout..][..tout];
                for dk in 0..k {
                    let widx = (ci * cout + co) * k + dk;
                    let wv = w[widx];
                    let mut wsum = 0.0;
                    for ((gxv, xv), gv) in gx_row
                        .iter_mut()
                        .zip(x_row.iter())
                        .zip(g_row[dk..].iter().step_by(2))
                    {
                        *gxv += wv * *gv;
                        wsum += *xv * *gv;
                    }
                    gw[widx] += wsum;
                }
            }
        }
    }
}

/// Window-2 max pooling over rows of length `t` (t even).
///
/// `argmax` receives, per output element, the within-row index of the winning
/// input; ties go to the earlier index.
pub fn maxpool2_forward(x: &[f64], rows: usize, t: usize, out: &mut [f64], argmax: &mut [u32]) {
    let half = t / 2;
    for r in 0..rows {
        let x_row = &x[r * t..][..t];
        let out_row = &mut out[r * half..][..half];
        let am_row = &mut argmax[r * half..][..half];
        for j in 0..half {
            let (a, b) = (x_row[2 * j], x_row[2 * j + 1]);
            if b > a {
                out_row[j] = b;
                am_row[j] = (2 * j + 1) as u32;
            } else {
                out_row[j] = a;
                am_row[j] = (2 * j) as u32;
            }
        }
    }
}

pub fn maxpool2_backward(g: &[f64], rows: usize, t: usize, argmax: &[u32], gx: &mut [f64]) {
    let half = t / 2;
    for r in 0..rows {
        let g_row = &g[r * half..][..half];
        let am_row = &argmax[r * half..][..half];
        let gx_row = &mut gx[r * t..][..t];
        for j in 0..half {
            gx_row[am_row[j] as usize] += g_row[j];
        }
    }
}

/// out = a @ b with a: [m, inner], b: [inner, n].
pub fn matmul(a: &[f64], m: usize, inner: usize, b: &[f64], n: usize, out: &mut [f64]) {
    out.fill(0.0);
    for i in 0..m {
        let out_row = &mut out[i * n..][..n];
        for p in 0..inner {
            axpy(a[i * inner + p], &b[p * n..][..n], out_row);
        }
    }
}

/// Gradients of [`matmul`]: ga += g @ b^T, gb += a^T @ g.
pub fn matmul_backward(
    a: &[f64],
    m: usize,
    inner: usize,
    b: &[f64],
    n: usize,
    g: &[f64],
    ga: &mut [f64],
    gb: &mut [f64],
) {
    for i in 0..m {
        let g_row = &g[i * n..][..n];
        for p in 0..inner {
            ga[i * inner + p] += dot(g_row, &b[p * n..][..n]);
            axpy(a[i * inner + p], g_row, &mut gb[p * n..][..n]);
        }
    }
}
