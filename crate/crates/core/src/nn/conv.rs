//! Convolution and pooling kernels on NCHW data.
//!
//! Convolution lowers each sample to a column matrix (`im2col`) and runs a
//! single GEMM against the `[out_ch, in_ch * k * k]` weight matrix.

use crate::linalg::gemm;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    /// Rows of the column matrix: `in_ch * kernel * kernel`.
    pub fn patch_len(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    /// Columns of the column matrix: `out_h * out_w`.
    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_len(&self) -> usize {
        self.in_ch * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_ch * self.positions()
    }
}

/// Output extent of a sliding window, or `None` when the window does not fit.
pub fn window_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || input + 2 * padding < kernel {
        return None;
    }
    Some((input + 2 * padding - kernel) / stride + 1)
}

/// Output positions `[lo, hi)` along one axis whose input index
/// `o * stride + k - padding` falls inside `[0, input)`.
fn valid_range(
    out: usize,
    input: usize,
    k: usize,
    stride: usize,
    padding: usize,
) -> (usize, usize) {
    let lo = padding.saturating_sub(k).div_ceil(stride).min(out);
    let hi = if input + padding > k {
        ((input + padding - k - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Lowers one `[in_ch, in_h, in_w]` sample into `cols` (`patch_len x positions`).
pub fn im2col(g: &ConvGeom, input: &[f64], cols: &mut [f64]) {
    let p = g.positions();
    let mut row = 0;
    for c in 0..g.in_ch {
        let plane = &input[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..g.kernel {
            let (y_lo, y_hi) = valid_range(g.out_h, g.in_h, ky, g.stride, g.padding);
            for kx in 0..g.kernel {
                let (x_lo, x_hi) = valid_range(g.out_w, g.in_w, kx, g.stride, g.padding);
                let dst = &mut cols[row * p..(row + 1) * p];
                dst[..y_lo * g.out_w].fill(0.0);
                dst[y_hi * g.out_w..].fill(0.0);
                for oy in y_lo..y_hi {
                    let iy = oy * g.stride + ky - g.padding;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    line[..x_lo].fill(0.0);
                    line[x_hi..].fill(0.0);
                    let src = &plane[iy * g.in_w..(iy + 1) * g.in_w];
                    let first = x_lo * g.stride + kx - g.padding;
                    if g.stride == 1 {
                        line[x_lo..x_hi].copy_from_slice(&src[first..first + (x_hi - x_lo)]);
                    } else {
                        for (v, &s) in line[x_lo..x_hi]
                            .iter_mut()
                            .zip(src[first..].iter().step_by(g.stride))
                        {
                            *v = s;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatters a column-matrix gradient back onto one input sample (adds).
pub fn col2im(g: &ConvGeom, cols: &[f64], dinput: &mut [f64]) {
    let p = g.positions();
    let mut row = 0;
    for c in 0..g.in_ch {
        let plane = &mut dinput[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..g.kernel {
            let (y_lo, y_hi) = valid_range(g.out_h, g.in_h, ky, g.stride, g.padding);
            for kx in 0..g.kernel {
                let (x_lo, x_hi) = valid_range(g.out_w, g.in_w, kx, g.stride, g.padding);
                let src = &cols[row * p..(row + 1) * p];
                for oy in y_lo..y_hi {
                    let iy = oy * g.stride + ky - g.padding;
                    let line = &src[oy * g.out_w + x_lo..oy * g.out_w + x_hi];
                    let first = x_lo * g.stride + kx - g.padding;
                    let dst = &mut plane[iy * g.in_w + first..(iy + 1) * g.in_w];
                    for (d, &v) in dst.iter_mut().step_by(g.stride).zip(line) {
                        *d += v;
                    }
                }
                row += 1;
            }
        }
    }
}

/// Forward convolution of a whole batch. Returns the output and the column
/// matrices (one per sample, concatenated) for reuse in the backward pass.
pub fn conv_forward(
    g: &ConvGeom,
    batch: usize,
    input: &[f64],
    weight: &[f64],
    bias: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (kl, p) = (g.patch_len(), g.positions());
    let mut cols = vec![0.0; batch * kl * p];
    let mut out = vec![0.0; batch * g.out_len()];
    for n in 0..batch {
        let col = &mut cols[n * kl * p..(n + 1) * kl * p];
        im2col(g, &input[n * g.in_len()..(n + 1) * g.in_len()], col);
        let y = &mut out[n * g.out_len()..(n + 1) * g.out_len()];
        for (oc, chunk) in y.chunks_mut(p).enumerate() {
            chunk.iter_mut().for_each(|v| *v = bias[oc]);
        }
        gemm(g.out_ch, kl, p, weight, false, col, false, y, true);
    }
    (out, cols)
}

/// Backward convolution. Accumulates into `dweight` / `dbias` and, when
/// `dinput` is given, writes the input gradient.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward(
    g: &ConvGeom,
    batch: usize,
    cols: &[f64],
    weight: &[f64],
    dout: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    let (kl, p) = (g.patch_len(), g.positions());
    let mut dcol = vec![0.0; kl * p];
    for n in 0..batch {
        let dy = &dout[n * g.out_len()..(n + 1) * g.out_len()];
        let col = &cols[n * kl * p..(n + 1) * kl * p];
        for (oc, chunk) in dy.chunks(p).enumerate() {
            dbias[oc] += chunk.iter().sum::<f64>();
        }
        gemm(g.out_ch, p, kl, dy, false, col, true, dweight, true);
        if let Some(dx) = dinput.as_deref_mut() {
            gemm(kl, g.out_ch, p, weight, true, dy, false, &mut dcol, false);
            let dst = &mut dx[n * g.in_len()..(n + 1) * g.in_len()];
            dst.iter_mut().for_each(|v| *v = 0.0);
            col2im(g, &dcol, dst);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolGeom {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl PoolGeom {
    pub fn in_len(&self) -> usize {
        self.channels * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.channels * self.out_h * self.out_w
    }
}

/// Max pooling. Ties go to the first (lowest linear index) element of the
/// window; the returned indices are absolute positions in `input`.
pub fn maxpool_forward(g: &PoolGeom, batch: usize, input: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut out = Vec::with_capacity(batch * g.out_len());
    let mut argmax = Vec::with_capacity(batch * g.out_len());
    for n in 0..batch {
        for c in 0..g.channels {
            let base = n * g.in_len() + c * g.in_h * g.in_w;
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let mut best = f64::NEG_INFINITY;
                    let mut at = base + oy * g.stride * g.in_w + ox * g.stride;
                    for ky in 0..g.kernel {
                        let row = base + (oy * g.stride + ky) * g.in_w + ox * g.stride;
                        for kx in 0..g.kernel {
                            let v = input[row + kx];
                            if v > best {
                                best = v;
                                at = row + kx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(at);
                }
            }
        }
    }
    (out, argmax)
}

pub fn maxpool_backward(argmax: &[usize], dout: &[f64], dinput: &mut [f64]) {
    dinput.iter_mut().for_each(|v| *v = 0.0);
    for (&i, &d) in argmax.iter().zip(dout) {
        dinput[i] += d;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(
        in_ch: usize,
        out_ch: usize,
        k: usize,
        s: usize,
        pad: usize,
        h: usize,
        w: usize,
    ) -> ConvGeom {
        ConvGeom {
            in_ch,
            out_ch,
            kernel: k,
            stride: s,
            padding: pad,
            in_h: h,
            in_w: w,
            out_h: window_extent(h, k, s, pad).unwrap(),
            out_w: window_extent(w, k, s, pad).unwrap(),
        }
    }

    #[test]
    fn extents() {
        assert_eq!(window_extent(28, 5, 1, 2), Some(28));
        assert_eq!(window_extent(28, 5, 1, 0), Some(24));
        assert_eq!(window_extent(4, 2, 2, 0), Some(2));
        assert_eq!(window_extent(5, 2, 2, 0), Some(2));
        assert_eq!(window_extent(2, 5, 1, 1), None);
        assert_eq!(window_extent(8, 3, 0, 0), None);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        for &(k, st, pad, h, w) in &[(3, 2, 1, 5, 6), (5, 1, 2, 7, 7), (2, 3, 2, 6, 5)] {
            let g = geom(2, 1, k, st, pad, h, w);
            let x: Vec<f64> = (0..g.in_len()).map(|i| (i as f64 * 0.7).sin()).collect();
            let y: Vec<f64> = (0..g.patch_len() * g.positions())
                .map(|i| (i as f64 * 0.3).cos())
                .collect();
            let mut cols = vec![0.0; y.len()];
            im2col(&g, &x, &mut cols);
            let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
            let mut back = vec![0.0; x.len()];
            col2im(&g, &y, &mut back);
            let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn im2col_matches_direct_indexing() {
        for &(k, st, pad, h, w) in &[
            (3, 1, 1, 5, 6),
            (5, 1, 2, 7, 7),
            (3, 2, 0, 7, 8),
            (2, 3, 2, 6, 5),
            (4, 2, 3, 3, 3),
        ] {
            let g = geom(2, 1, k, st, pad, h, w);
            let x: Vec<f64> = (0..g.in_len()).map(|i| i as f64 + 1.0).collect();
            let mut cols = vec![f64::NAN; g.patch_len() * g.positions()];
            im2col(&g, &x, &mut cols);
            for c in 0..2 {
                for ky in 0..k {
                    for kx in 0..k {
                        let row = (c * k + ky) * k + kx;
                        for oy in 0..g.out_h {
                            for ox in 0..g.out_w {
                                let iy = (oy * st + ky) as isize - pad as isize;
                                let ix = (ox * st + kx) as isize - pad as isize;
                                let inside =
                                    iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w;
                                let want = if inside {
                                    x[c * h * w + iy as usize * w + ix as usize]
                                } else {
                                    0.0
                                };
                                assert_eq!(cols[row * g.positions() + oy * g.out_w + ox], want);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn pool_ties_pick_first() {
        let g = PoolGeom {
            channels: 1,
            kernel: 2,
            stride: 2,
            in_h: 2,
            in_w: 2,
            out_h: 1,
            out_w: 1,
        };
        let (out, idx) = maxpool_forward(&g, 1, &[3.0, 3.0, 3.0, 1.0]);
        assert_eq!(out, vec![3.0]);
        assert_eq!(idx, vec![0]);
        let mut d = vec![9.0; 4];
        maxpool_backward(&idx, &[2.0], &mut d);
        assert_eq!(d, vec![2.0, 0.0, 0.0, 0.0]);
    }
}
