use alloc::vec;
use alloc::vec::Vec;

/// Dense NCHW activations.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Tensor {
        Tensor {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Tensor {
        assert_eq!(data.len(), n * c * h * w, "tensor data length");
        Tensor { n, c, h, w, data }
    }

    /// Features per sample.
    pub fn features(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn spatial(&self) -> usize {
        self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let f = self.features();
        &self.data[i * f..(i + 1) * f]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        (self.n, self.c, self.h, self.w) == (other.n, other.c, other.h, other.w)
    }
}

/// Dot product with four independent accumulators.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`.
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Geometry of a square-kernel 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Length of one patch row.
    pub fn patch_len(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    /// Rows are `(sample, out_y, out_x)`; columns are `(channel, ky, kx)`.
    /// Positions outside the input take `pad_value`.
    pub fn im2col(&self, x: &Tensor, pad_value: f64) -> Vec<f64> {
        let (oh, ow, k) = (self.out_h(), self.out_w(), self.kernel);
        let plen = self.patch_len();
        let mut cols = vec![pad_value; x.n * oh * ow * plen];
        for b in 0..x.n {
            let img = x.sample(b);
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = ((b * oh + oy) * ow + ox) * plen;
                    for c in 0..self.in_c {
                        for ky in 0..k {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= self.in_h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= self.in_w as isize {
                                    continue;
                                }
                                cols[row + (c * k + ky) * k + kx] =
                                    img[(c * self.in_h + iy as usize) * self.in_w + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`im2col`](Self::im2col); padded positions are dropped.
    pub fn col2im(&self, cols: &[f64], n: usize) -> Tensor {
        let (oh, ow, k) = (self.out_h(), self.out_w(), self.kernel);
        let plen = self.patch_len();
        let mut out = Tensor::zeros(n, self.in_c, self.in_h, self.in_w);
        let feat = out.features();
        for b in 0..n {
            let img = &mut out.data[b * feat..(b + 1) * feat];
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = ((b * oh + oy) * ow + ox) * plen;
                    for c in 0..self.in_c {
                        for ky in 0..k {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= self.in_h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= self.in_w as isize {
                                    continue;
                                }
                                img[(c * self.in_h + iy as usize) * self.in_w + ix as usize] +=
                                    cols[row + (c * k + ky) * k + kx];
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Reorders `(sample, y, x) × channel` rows into an NCHW tensor.
pub(crate) fn rows_to_nchw(rows: &[f64], n: usize, c: usize, h: usize, w: usize) -> Tensor {
    let mut out = Tensor::zeros(n, c, h, w);
    let sp = h * w;
    for b in 0..n {
        for pos in 0..sp {
            let src = &rows[(b * sp + pos) * c..(b * sp + pos + 1) * c];
            for (ch, &v) in src.iter().enumerate() {
                out.data[(b * c + ch) * sp + pos] = v;
            }
        }
    }
    out
}

/// Inverse of [`rows_to_nchw`].
pub(crate) fn nchw_to_rows(t: &Tensor) -> Vec<f64> {
    let sp = t.spatial();
    let mut rows = vec![0.0; t.data.len()];
    for b in 0..t.n {
        for ch in 0..t.c {
            for pos in 0..sp {
                rows[(b * sp + pos) * t.c + ch] = t.data[(b * t.c + ch) * sp + pos];
            }
        }
    }
    rows
}
