//! Slice-level numeric kernels shared by the tape's forward and backward rules.

/// `a[m×k] · b[k×n]`.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `g[m×n] · bᵀ` where `b` is `k×n`; result `m×k`.
pub(crate) fn matmul_b_transposed(g: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `aᵀ · g` where `a` is `m×k` and `g` is `m×n`; result `k×n`.
pub(crate) fn matmul_a_transposed(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel_h) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel_w) / self.stride + 1
    }

    /// Input coordinate for output position `o` and kernel offset `k`, if inside the image.
    #[inline]
    fn source(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }
}

/// Cross-correlation (no kernel flip).
pub(crate) fn conv2d_forward(input: &[f64], kernel: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut out = vec![0.0; g.batch * g.filters * oh * ow];
    for n in 0..g.batch {
        for f in 0..g.filters {
            let obase = (n * g.filters + f) * oh * ow;
            for c in 0..g.channels {
                let ibase = (n * g.channels + c) * g.height * g.width;
                let kbase = (f * g.channels + c) * g.kernel_h * g.kernel_w;
                for ki in 0..g.kernel_h {
                    for kj in 0..g.kernel_w {
                        let kv = kernel[kbase + ki * g.kernel_w + kj];
                        for y in 0..oh {
                            let Some(iy) = g.source(y, ki, g.height) else { continue };
                            for x in 0..ow {
                                let Some(ix) = g.source(x, kj, g.width) else { continue };
                                out[obase + y * ow + x] += kv * input[ibase + iy * g.width + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns `(d_input, d_kernel)` for upstream gradient `grad_out`.
pub(crate) fn conv2d_backward(
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    g: &ConvGeometry,
) -> (Vec<f64>, Vec<f64>) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut d_input = vec![0.0; input.len()];
    let mut d_kernel = vec![0.0; kernel.len()];
    for n in 0..g.batch {
        for f in 0..g.filters {
            let obase = (n * g.filters + f) * oh * ow;
            for c in 0..g.channels {
                let ibase = (n * g.channels + c) * g.height * g.width;
                let kbase = (f * g.channels + c) * g.kernel_h * g.kernel_w;
                for ki in 0..g.kernel_h {
                    for kj in 0..g.kernel_w {
                        let kidx = kbase + ki * g.kernel_w + kj;
                        let kv = kernel[kidx];
                        let mut acc = 0.0;
                        for y in 0..oh {
                            let Some(iy) = g.source(y, ki, g.height) else { continue };
                            for x in 0..ow {
                                let Some(ix) = g.source(x, kj, g.width) else { continue };
                                let go = grad_out[obase + y * ow + x];
                                let iidx = ibase + iy * g.width + ix;
                                acc += go * input[iidx];
                                d_input[iidx] += go * kv;
                            }
                        }
                        d_kernel[kidx] += acc;
                    }
                }
            }
        }
    }
    (d_input, d_kernel)
}

/// Row-wise softmax over the trailing axis of length `cols`, max-subtracted.
pub(crate) fn softmax_rows(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, orow) in x.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (o, v) in orow.iter_mut().zip(row) {
            *o = (v - max).exp();
            total += *o;
        }
        orow.iter_mut().for_each(|o| *o /= total);
    }
    out
}

/// Row-wise log-softmax over the trailing axis of length `cols`.
pub(crate) fn log_softmax_rows(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, orow) in x.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for (o, v) in orow.iter_mut().zip(row) {
            *o = v - lse;
        }
    }
    out
}
