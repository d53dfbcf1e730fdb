//! Raw convolution kernels shared by the tape's forward and backward passes.
//!
//! All loops are single-threaded and iterate in a fixed structural order, so
//! results are bitwise reproducible.

use crate::scalar::Scalar;

/// Output spatial size of a cross-correlation: floor((n + 2p - k) / s) + 1.
pub fn conv_out_dim(n: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = n + 2 * padding;
    if padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Output spatial size of a transposed convolution: (n - 1)*s - 2p + k.
pub fn conv_transpose_out_dim(n: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let grown = (n - 1) * stride + k;
    if grown <= 2 * padding {
        return None;
    }
    Some(grown - 2 * padding)
}

/// Cross-correlation. `x`: Cin*H*W, `k`: Cout*Cin*kh*kw, `bias`: Cout,
/// `out`: Cout*Ho*Wo (overwritten).
#[allow(clippy::too_many_arguments)]
pub fn conv2d_forward<S: Scalar>(
    x: &[S],
    (cin, h, w): (usize, usize, usize),
    k: &[S],
    ksize: usize,
    bias: &[S],
    stride: usize,
    padding: usize,
    out: &mut [S],
    (cout, ho, wo): (usize, usize, usize),
) {
    for co in 0..cout {
        let base = co * ho * wo;
        out[base..base + ho * wo].fill(bias[co]);
        for ci in 0..cin {
            let xoff = ci * h * w;
            let koff = (co * cin + ci) * ksize * ksize;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = S::zero();
                    for ky in 0..ksize {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = xoff + iy as usize * w;
                        let krow = koff + ky * ksize;
                        for kx in 0..ksize {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc = acc + x[row + ix as usize] * k[krow + kx];
                        }
                    }
                    out[base + oy * wo + ox] += acc;
                }
            }
        }
    }
}

/// Gradients of `conv2d_forward`. Any of the output slices may be empty when
/// that operand does not require a gradient.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<S: Scalar>(
    x: &[S],
    (cin, h, w): (usize, usize, usize),
    k: &[S],
    ksize: usize,
    stride: usize,
    padding: usize,
    grad_out: &[S],
    (cout, ho, wo): (usize, usize, usize),
    grad_x: &mut [S],
    grad_k: &mut [S],
    grad_bias: &mut [S],
) {
    if !grad_bias.is_empty() {
        for co in 0..cout {
            let base = co * ho * wo;
            let mut acc = S::zero();
            for g in &grad_out[base..base + ho * wo] {
                acc += *g;
            }
            grad_bias[co] += acc;
        }
    }
    if grad_x.is_empty() && grad_k.is_empty() {
        return;
    }
    for co in 0..cout {
        let base = co * ho * wo;
        for ci in 0..cin {
            let xoff = ci * h * w;
            let koff = (co * cin + ci) * ksize * ksize;
            for oy in 0..ho {
                for ox in 0..wo {
                    let g = grad_out[base + oy * wo + ox];
                    for ky in 0..ksize {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = xoff + iy as usize * w;
                        let krow = koff + ky * ksize;
                        for kx in 0..ksize {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            if !grad_x.is_empty() {
                                grad_x[row + ix as usize] += g * k[krow + kx];
                            }
                            if !grad_k.is_empty() {
                                grad_k[krow + kx] += g * x[row + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Transposed convolution (adjoint of `conv2d_forward` w.r.t. the input).
/// `x`: Cin*H*W, `k`: Cin*Cout*kh*kw, `bias`: Cout, `out`: Cout*Ho*Wo.
#[allow(clippy::too_many_arguments)]
pub fn conv_transpose2d_forward<S: Scalar>(
    x: &[S],
    (cin, h, w): (usize, usize, usize),
    k: &[S],
    ksize: usize,
    bias: &[S],
    stride: usize,
    padding: usize,
    out: &mut [S],
    (cout, ho, wo): (usize, usize, usize),
) {
    for co in 0..cout {
        let base = co * ho * wo;
        out[base..base + ho * wo].fill(bias[co]);
    }
    for ci in 0..cin {
        let xoff = ci * h * w;
        for co in 0..cout {
            let base = co * ho * wo;
            let koff = (ci * cout + co) * ksize * ksize;
            for iy in 0..h {
                for ix in 0..w {
                    let v = x[xoff + iy * w + ix];
                    for ky in 0..ksize {
                        let oy = (iy * stride + ky) as isize - padding as isize;
                        if oy < 0 || oy >= ho as isize {
                            continue;
                        }
                        let orow = base + oy as usize * wo;
                        let krow = koff + ky * ksize;
                        for kx in 0..ksize {
                            let ox = (ix * stride + kx) as isize - padding as isize;
                            if ox < 0 || ox >= wo as isize {
                                continue;
                            }
                            out[orow + ox as usize] += v * k[krow + kx];
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of `conv_transpose2d_forward`.
#[allow(clippy::too_many_arguments)]
pub fn conv_transpose2d_backward<S: Scalar>(
    x: &[S],
    (cin, h, w): (usize, usize, usize),
    k: &[S],
    ksize: usize,
    stride: usize,
    padding: usize,
    grad_out: &[S],
    (cout, ho, wo): (usize, usize, usize),
    grad_x: &mut [S],
    grad_k: &mut [S],
    grad_bias: &mut [S],
) {
    if !grad_bias.is_empty() {
        for co in 0..cout {
            let base = co * ho * wo;
            let mut acc = S::zero();
            for g in &grad_out[base..base + ho * wo] {
                acc += *g;
            }
            grad_bias[co] += acc;
        }
    }
    if grad_x.is_empty() && grad_k.is_empty() {
        return;
    }
    for ci in 0..cin {
        let xoff = ci * h * w;
        for co in 0..cout {
            let base = co * ho * wo;
            let koff = (ci * cout + co) * ksize * ksize;
            for iy in 0..h {
                for ix in 0..w {
                    let xi = xoff + iy * w + ix;
                    for ky in 0..ksize {
                        let oy = (iy * stride + ky) as isize - padding as isize;
                        if oy < 0 || oy >= ho as isize {
                            continue;
                        }
                        let orow = base + oy as usize * wo;
                        let krow = koff + ky * ksize;
                        for kx in 0..ksize {
                            let ox = (ix * stride + kx) as isize - padding as isize;
                            if ox < 0 || ox >= wo as isize {
                                continue;
                            }
                            let g = grad_out[orow + ox as usize];
                            if !grad_x.is_empty() {
                                grad_x[xi] += g * k[krow + kx];
                            }
                            if !grad_k.is_empty() {
                                grad_k[krow + kx] += g * x[xi];
                            }
                        }
                    }
                }
            }
        }
    }
}
