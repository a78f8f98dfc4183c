//! Dense inner loops shared by the graph's forward and backward rules.

use crate::graph::ConvGeometry;

/// `out[j] += Σ_i x[i] · w[i, j]` with `w` stored row-major as `n x m`.
pub(crate) fn matvec_acc(x: &[f64], w: &[f64], n: usize, m: usize, out: &mut [f64]) {
    debug_assert_eq!(w.len(), n * m);
    for (i, &xi) in x.iter().enumerate().take(n) {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * m..(i + 1) * m];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += xi * wv;
        }
    }
}

/// Gradients of `out = x · W`: `dx[i] += W[i, :] · g`, `dW[i, :] += x[i] · g`.
pub(crate) fn matvec_backward(
    x: &[f64],
    w: &[f64],
    g: &[f64],
    n: usize,
    m: usize,
    dx: &mut [f64],
    dw: &mut [f64],
) {
    for i in 0..n {
        let row = &w[i * m..(i + 1) * m];
        dx[i] += row.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
        let xi = x[i];
        if xi != 0.0 {
            for (d, &gv) in dw[i * m..(i + 1) * m].iter_mut().zip(g) {
                *d += xi * gv;
            }
        }
    }
}

// Input is H x W x Cin (channels fastest), weights are k x k x Cin x Cout.
// For a fixed output pixel and kernel row, the touched input span is a
// contiguous run of k·Cin values, matching k·Cin consecutive weight rows.

pub(crate) fn conv2d_forward(geom: &ConvGeometry, input: &[f64], weight: &[f64], bias: &[f64], out: &mut [f64]) {
    let ConvGeometry { in_w, c_in, kernel, c_out, stride, out_h, out_w, .. } = *geom;
    let span = kernel * c_in;
    for oy in 0..out_h {
        for ox in 0..out_w {
            let o = &mut out[(oy * out_w + ox) * c_out..(oy * out_w + ox + 1) * c_out];
            o.copy_from_slice(bias);
            for ky in 0..kernel {
                let start = ((oy * stride + ky) * in_w + ox * stride) * c_in;
                let patch = &input[start..start + span];
                let wblock = &weight[ky * span * c_out..(ky + 1) * span * c_out];
                matvec_acc(patch, wblock, span, c_out, o);
            }
        }
    }
}

pub(crate) fn conv2d_backward(
    geom: &ConvGeometry,
    input: &[f64],
    weight: &[f64],
    g: &[f64],
    d_in: &mut [f64],
    d_w: &mut [f64],
    d_b: &mut [f64],
) {
    let ConvGeometry { in_w, c_in, kernel, c_out, stride, out_h, out_w, .. } = *geom;
    let span = kernel * c_in;
    for oy in 0..out_h {
        for ox in 0..out_w {
            let go = &g[(oy * out_w + ox) * c_out..(oy * out_w + ox + 1) * c_out];
            if go.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (b, &v) in d_b.iter_mut().zip(go) {
                *b += v;
            }
            for ky in 0..kernel {
                let start = ((oy * stride + ky) * in_w + ox * stride) * c_in;
                let wrange = ky * span * c_out..(ky + 1) * span * c_out;
                matvec_backward(
                    &input[start..start + span],
                    &weight[wrange.clone()],
                    go,
                    span,
                    c_out,
                    &mut d_in[start..start + span],
                    &mut d_w[wrange],
                );
            }
        }
    }
}
