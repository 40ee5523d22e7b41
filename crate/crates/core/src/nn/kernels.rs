//! Strided 1-D convolution primitives.
//!
//! All three share one geometry: output position `j` of the forward
//! convolution reads input positions `j * stride + k - pad` for
//! `k in 0..kernel`, with zeros outside `[0, len_in)`. A transposed
//! convolution is [`conv1d_input_grad`] used as a forward map, and its
//! backward pass reuses [`conv1d`] and [`conv1d_weight_grad`] with the roles
//! of input and output swapped.
//!
//! Summation order is fixed (batch, output channel, input channel, tap,
//! position) so results are bit-reproducible.

use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_len(&self, len_in: usize) -> usize {
        (len_in + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Output positions `j < len_out` whose tap `k` lands inside the input.
    #[inline]
    fn valid(&self, k: usize, len_in: usize, len_out: usize) -> Range<usize> {
        let lo = if self.pad > k { (self.pad - k).div_ceil(self.stride) } else { 0 };
        let hi = if len_in + self.pad > k { ((len_in - 1 + self.pad - k) / self.stride + 1).min(len_out) } else { 0 };
        lo..hi.max(lo)
    }
}

/// `y[n, o, j] = sum_{c, k} w[o, c, k] * x[n, c, j*stride + k - pad]`.
///
/// `x` is `batch x c_in x len_in`, `w` is `c_out x c_in x kernel`; returns
/// `batch x c_out x len_out` (no bias).
#[allow(clippy::too_many_arguments)]
pub fn conv1d(
    x: &[f64],
    batch: usize,
    c_in: usize,
    len_in: usize,
    w: &[f64],
    c_out: usize,
    g: ConvGeometry,
    len_out: usize,
) -> Vec<f64> {
    debug_assert_eq!(x.len(), batch * c_in * len_in);
    debug_assert_eq!(w.len(), c_out * c_in * g.kernel);
    let mut y = vec![0.0; batch * c_out * len_out];
    for n in 0..batch {
        for o in 0..c_out {
            let yo = &mut y[(n * c_out + o) * len_out..][..len_out];
            for c in 0..c_in {
                let xc = &x[(n * c_in + c) * len_in..][..len_in];
                let wk = &w[(o * c_in + c) * g.kernel..][..g.kernel];
                for (k, &wv) in wk.iter().enumerate() {
                    for j in g.valid(k, len_in, len_out) {
                        yo[j] += wv * xc[j * g.stride + k - g.pad];
                    }
                }
            }
        }
    }
    y
}

/// Adjoint of [`conv1d`] with respect to its input: scatters `dy`
/// (`batch x c_out x len_out`) back onto a `batch x c_in x len_in` buffer.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_input_grad(
    dy: &[f64],
    batch: usize,
    c_out: usize,
    len_out: usize,
    w: &[f64],
    c_in: usize,
    g: ConvGeometry,
    len_in: usize,
) -> Vec<f64> {
    debug_assert_eq!(dy.len(), batch * c_out * len_out);
    debug_assert_eq!(w.len(), c_out * c_in * g.kernel);
    let mut dx = vec![0.0; batch * c_in * len_in];
    for n in 0..batch {
        for o in 0..c_out {
            let dyo = &dy[(n * c_out + o) * len_out..][..len_out];
            for c in 0..c_in {
                let dxc = &mut dx[(n * c_in + c) * len_in..][..len_in];
                let wk = &w[(o * c_in + c) * g.kernel..][..g.kernel];
                for (k, &wv) in wk.iter().enumerate() {
                    for j in g.valid(k, len_in, len_out) {
                        dxc[j * g.stride + k - g.pad] += wv * dyo[j];
                    }
                }
            }
        }
    }
    dx
}

/// Gradient of [`conv1d`] with respect to `w`, shape `c_out x c_in x kernel`.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_weight_grad(
    x: &[f64],
    batch: usize,
    c_in: usize,
    len_in: usize,
    dy: &[f64],
    c_out: usize,
    g: ConvGeometry,
    len_out: usize,
) -> Vec<f64> {
    let mut dw = vec![0.0; c_out * c_in * g.kernel];
    for n in 0..batch {
        for o in 0..c_out {
            let dyo = &dy[(n * c_out + o) * len_out..][..len_out];
            for c in 0..c_in {
                let xc = &x[(n * c_in + c) * len_in..][..len_in];
                let dwk = &mut dw[(o * c_in + c) * g.kernel..][..g.kernel];
                for (k, dwv) in dwk.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for j in g.valid(k, len_in, len_out) {
                        acc += dyo[j] * xc[j * g.stride + k - g.pad];
                    }
                    *dwv += acc;
                }
            }
        }
    }
    dw
}
