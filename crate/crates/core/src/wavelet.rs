//! Orthonormal Daubechies-4 separable 2D wavelet transform (periodized),
//! used by the sparsity-regularized reconstruction. The filters are
//! orthonormal, so the transform preserves the Euclidean norm and the
//! inverse is exact.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::tensor::C32;

// Daubechies 4-tap analysis filters.
const H: [f32; 4] = [
    0.482_962_91,  // (1 + sqrt3) / (4 sqrt2)
    0.836_516_3,   // (3 + sqrt3) / (4 sqrt2)
    0.224_143_87,  // (3 - sqrt3) / (4 sqrt2)
    -0.129_409_52, // (1 - sqrt3) / (4 sqrt2)
];

fn g(k: usize) -> f32 {
    // Quadrature mirror: g_k = (-1)^k h_{3-k}
    let v = H[3 - k];
    if k % 2 == 0 {
        v
    } else {
        -v
    }
}

fn analyze_1d(s: &[C32], a: &mut [C32], d: &mut [C32]) {
    let n = s.len();
    let half = n / 2;
    for i in 0..half {
        let mut av = C32::new(0.0, 0.0);
        let mut dv = C32::new(0.0, 0.0);
        for k in 0..4 {
            let v = s[(2 * i + k) % n];
            av += v * H[k];
            dv += v * g(k);
        }
        a[i] = av;
        d[i] = dv;
    }
}

fn synthesize_1d(a: &[C32], d: &[C32], s: &mut [C32]) {
    let half = a.len();
    let n = 2 * half;
    s.iter_mut().for_each(|v| *v = C32::new(0.0, 0.0));
    for i in 0..half {
        for k in 0..4 {
            s[(2 * i + k) % n] += a[i] * H[k] + d[i] * g(k);
        }
    }
}

/// Multi-level periodized 2D transform bound to an image shape. Shapes not
/// divisible by `2^levels` are zero-padded internally; the inverse crops
/// back to the original shape.
#[derive(Debug, Clone)]
pub struct WaveletTransform {
    levels: usize,
    in_shape: (usize, usize),
    padded: (usize, usize),
}

fn pad_to_multiple(n: usize, m: usize) -> usize {
    n.div_ceil(m) * m
}

impl WaveletTransform {
    pub fn new(in_shape: (usize, usize), levels: usize) -> Result<Self> {
        if levels == 0 || levels > 6 {
            return Err(Error::Invalid(format!("wavelet levels {levels} outside [1, 6]")));
        }
        let block = 1usize << levels;
        let padded = (
            pad_to_multiple(in_shape.0.max(block * 2), block),
            pad_to_multiple(in_shape.1.max(block * 2), block),
        );
        Ok(Self { levels, in_shape, padded })
    }

    pub fn db4(in_shape: (usize, usize)) -> Result<Self> {
        Self::new(in_shape, 3)
    }

    pub fn coeff_shape(&self) -> (usize, usize) {
        self.padded
    }

    /// Image to coefficient array (approximation band in the top-left).
    pub fn forward(&self, x: &Array2<C32>) -> Result<Array2<C32>> {
        if x.dim() != self.in_shape {
            return Err(Error::Shape(format!(
                "wavelet forward: image {:?}, transform {:?}",
                x.dim(),
                self.in_shape
            )));
        }
        let mut c = Array2::<C32>::zeros(self.padded);
        for i in 0..self.in_shape.0 {
            for j in 0..self.in_shape.1 {
                c[[i, j]] = x[[i, j]];
            }
        }
        let (mut nh, mut nw) = self.padded;
        let mut row = vec![C32::new(0.0, 0.0); self.padded.0.max(self.padded.1)];
        let mut a = vec![C32::new(0.0, 0.0); self.padded.0.max(self.padded.1) / 2];
        let mut d = a.clone();
        for _ in 0..self.levels {
            for i in 0..nh {
                for j in 0..nw {
                    row[j] = c[[i, j]];
                }
                analyze_1d(&row[..nw], &mut a[..nw / 2], &mut d[..nw / 2]);
                for j in 0..nw / 2 {
                    c[[i, j]] = a[j];
                    c[[i, j + nw / 2]] = d[j];
                }
            }
            for j in 0..nw {
                for i in 0..nh {
                    row[i] = c[[i, j]];
                }
                analyze_1d(&row[..nh], &mut a[..nh / 2], &mut d[..nh / 2]);
                for i in 0..nh / 2 {
                    c[[i, j]] = a[i];
                    c[[i + nh / 2, j]] = d[i];
                }
            }
            nh /= 2;
            nw /= 2;
        }
        Ok(c)
    }

    /// Coefficient array back to an image; exact inverse of [`forward`].
    pub fn inverse(&self, c: &Array2<C32>) -> Result<Array2<C32>> {
        if c.dim() != self.padded {
            return Err(Error::Shape(format!(
                "wavelet inverse: coeffs {:?}, transform {:?}",
                c.dim(),
                self.padded
            )));
        }
        let mut c = c.clone();
        let mut sizes = Vec::new();
        let (mut nh, mut nw) = self.padded;
        for _ in 0..self.levels {
            sizes.push((nh, nw));
            nh /= 2;
            nw /= 2;
        }
        let mut buf = vec![C32::new(0.0, 0.0); self.padded.0.max(self.padded.1)];
        let mut a = vec![C32::new(0.0, 0.0); buf.len() / 2];
        let mut d = a.clone();
        for &(nh, nw) in sizes.iter().rev() {
            for j in 0..nw {
                for i in 0..nh / 2 {
                    a[i] = c[[i, j]];
                    d[i] = c[[i + nh / 2, j]];
                }
                synthesize_1d(&a[..nh / 2], &d[..nh / 2], &mut buf[..nh]);
                for i in 0..nh {
                    c[[i, j]] = buf[i];
                }
            }
            for i in 0..nh {
                for j in 0..nw / 2 {
                    a[j] = c[[i, j]];
                    d[j] = c[[i, j + nw / 2]];
                }
                synthesize_1d(&a[..nw / 2], &d[..nw / 2], &mut buf[..nw]);
                for j in 0..nw {
                    c[[i, j]] = buf[j];
                }
            }
        }
        let mut out = Array2::<C32>::zeros(self.in_shape);
        for i in 0..self.in_shape.0 {
            for j in 0..self.in_shape.1 {
                out[[i, j]] = c[[i, j]];
            }
        }
        Ok(out)
    }
}
