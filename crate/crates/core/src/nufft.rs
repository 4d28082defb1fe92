//! Non-uniform Fourier encoding.
//!
//! The forward model evaluates k-space samples of a 2D image at arbitrary
//! real-valued coordinates. The fast path factorizes the transform as
//! de-apodization, an oversampled FFT, and Kaiser-Bessel interpolation;
//! a direct double-precision non-uniform DFT serves as the accuracy oracle
//! for it. Density-compensation weights and the multi-coil SENSE composite
//! operator live here as well.
//!
//! Conventions (fixed repo-wide, pinned by the delta-input test):
//! - coordinates are in cycles/FOV, component `i` in `[-N_i/2, N_i/2)`;
//! - forward transform uses the negative exponent with image indices
//!   centered at `N/2`, scaled by `1/sqrt(Nx*Ny)` (orthonormal w.r.t. the
//!   image grid, so a centered delta maps to a flat spectrum).

use std::sync::Arc;

use ndarray::{Array1, Array2, Array3, ArrayD, ArrayView1, Ix1, Ix2};
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::tensor::{Cplx, LinearOperator, Scalar, C32, C64};

pub const DEFAULT_OVERSAMPLING: f64 = 2.0;
pub const DEFAULT_KERNEL_WIDTH: usize = 4;

/// List of non-integer k-space sample coordinates bound to an image size.
#[derive(Debug, Clone)]
pub struct Trajectory {
    coords: Array2<f32>,
    nominal_accel: f32,
}

impl Trajectory {
    pub fn new(coords: Array2<f32>, nominal_accel: f32) -> Result<Self> {
        if coords.nrows() < 1 || coords.ncols() != 2 {
            return Err(Error::Shape(format!(
                "trajectory must be (M, 2) with M >= 1, got {:?}",
                coords.shape()
            )));
        }
        if !coords.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("trajectory contains non-finite coordinates".into()));
        }
        Ok(Self { coords, nominal_accel })
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coords(&self) -> &Array2<f32> {
        &self.coords
    }

    pub fn nominal_accel(&self) -> f32 {
        self.nominal_accel
    }

    /// Checks every coordinate against the half-open per-axis range for the
    /// given image shape, listing offending sample indices.
    pub fn validate_for(&self, image_shape: (usize, usize)) -> Result<()> {
        let half = (image_shape.0 as f32 / 2.0, image_shape.1 as f32 / 2.0);
        let mut bad = Vec::new();
        for (m, row) in self.coords.rows().into_iter().enumerate() {
            let (k0, k1) = (row[0], row[1]);
            if !(-half.0..half.0).contains(&k0) || !(-half.1..half.1).contains(&k1) {
                bad.push(m);
                if bad.len() >= 8 {
                    break;
                }
            }
        }
        if !bad.is_empty() {
            return Err(Error::Invalid(format!(
                "trajectory coordinates out of range for image {:?} at sample indices {:?}",
                image_shape, bad
            )));
        }
        Ok(())
    }

    /// Sub-trajectory restricted to the given sample indices.
    pub fn subset(&self, idx: &[usize]) -> Result<Trajectory> {
        if idx.is_empty() {
            return Err(Error::Invalid("empty trajectory subset".into()));
        }
        let mut coords = Array2::zeros((idx.len(), 2));
        for (r, &m) in idx.iter().enumerate() {
            if m >= self.len() {
                return Err(Error::Invalid(format!("subset index {m} out of range")));
            }
            coords[[r, 0]] = self.coords[[m, 0]];
            coords[[r, 1]] = self.coords[[m, 1]];
        }
        Trajectory::new(coords, self.nominal_accel)
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / ((k * k) as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser-Bessel interpolation kernel, normalized to 1 at the origin and
/// defined as 0 for |t| >= J/2.
pub fn kaiser_bessel(t: f64, width: usize, beta: f64) -> f64 {
    let half = width as f64 / 2.0;
    if t.abs() >= half {
        return 0.0;
    }
    let r = t / half;
    bessel_i0(beta * (1.0 - r * r).sqrt()) / bessel_i0(beta)
}

/// Continuous Fourier transform of [`kaiser_bessel`] at frequency `x`
/// (cycles per oversampled-grid sample).
pub fn kaiser_bessel_transform(x: f64, width: usize, beta: f64) -> f64 {
    let j = width as f64;
    let arg = beta * beta - (std::f64::consts::PI * j * x).powi(2);
    let core = if arg > 1e-12 {
        let s = arg.sqrt();
        s.sinh() / s
    } else if arg < -1e-12 {
        let s = (-arg).sqrt();
        s.sin() / s
    } else {
        1.0
    };
    j * core / bessel_i0(beta)
}

fn even_ceil(x: f64) -> usize {
    let n = x.ceil() as usize;
    if n % 2 == 0 {
        n
    } else {
        n + 1
    }
}

/// Precomputed state for applying the gridded transform: de-apodization
/// weights, oversampled FFT handles, and per-sample interpolation taps.
pub struct NufftPlan {
    image_shape: (usize, usize),
    os_shape: (usize, usize),
    kernel_width: usize,
    kernel_beta: f64,
    apod: Array2<f32>,
    interp_idx: Vec<u32>,
    interp_w: Vec<f32>,
    n_samples: usize,
    scale: f32,
    fft_row: Arc<dyn Fft<f32>>,
    fft_col: Arc<dyn Fft<f32>>,
    ifft_row: Arc<dyn Fft<f32>>,
    ifft_col: Arc<dyn Fft<f32>>,
}

impl NufftPlan {
    pub fn image_shape(&self) -> (usize, usize) {
        self.image_shape
    }

    pub fn os_shape(&self) -> (usize, usize) {
        self.os_shape
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn kernel_width(&self) -> usize {
        self.kernel_width
    }

    pub fn kernel_beta(&self) -> f64 {
        self.kernel_beta
    }

    /// De-apodization weights (reciprocal of the kernel transform on the
    /// image grid).
    pub fn apod(&self) -> &Array2<f32> {
        &self.apod
    }

    fn fft2(&self, grid: &mut Array2<C32>, inverse: bool) {
        let (n0, n1) = grid.dim();
        let (row, col) = if inverse {
            (&self.ifft_row, &self.ifft_col)
        } else {
            (&self.fft_row, &self.fft_col)
        };
        {
            let flat = grid.as_slice_mut().expect("grid is contiguous");
            let mut scratch = vec![C32::new(0.0, 0.0); row.get_inplace_scratch_len()];
            for r in 0..n0 {
                row.process_with_scratch(&mut flat[r * n1..(r + 1) * n1], &mut scratch);
            }
        }
        let mut buf = vec![C32::new(0.0, 0.0); n0];
        let mut scratch = vec![C32::new(0.0, 0.0); col.get_inplace_scratch_len()];
        for c in 0..n1 {
            for r in 0..n0 {
                buf[r] = grid[[r, c]];
            }
            col.process_with_scratch(&mut buf, &mut scratch);
            for r in 0..n0 {
                grid[[r, c]] = buf[r];
            }
        }
    }

    /// `y = G F_s (D .* x)`: de-apodize, oversampled FFT, gather through the
    /// interpolation taps.
    pub fn forward(&self, x: &Array2<C32>) -> Result<Array1<C32>> {
        if x.dim() != self.image_shape {
            return Err(Error::Shape(format!(
                "nufft forward: image {:?}, plan {:?}",
                x.dim(),
                self.image_shape
            )));
        }
        let (n0, n1) = self.image_shape;
        let (os0, os1) = self.os_shape;
        let mut grid = Array2::<C32>::zeros((os0, os1));
        // Embed with centered indices wrapped onto the FFT grid; the wrap
        // replaces an explicit fftshift.
        for w in 0..n0 {
            let q0 = (w + os0 - n0 / 2) % os0;
            for h in 0..n1 {
                let q1 = (h + os1 - n1 / 2) % os1;
                grid[[q0, q1]] = x[[w, h]] * (self.apod[[w, h]] * self.scale);
            }
        }
        self.fft2(&mut grid, false);
        let flat = grid.as_slice().expect("grid is contiguous");
        let taps = self.kernel_width * self.kernel_width;
        let mut y = Array1::<C32>::zeros(self.n_samples);
        for m in 0..self.n_samples {
            let base = m * taps;
            let mut acc = C32::new(0.0, 0.0);
            for t in 0..taps {
                let idx = self.interp_idx[base + t] as usize;
                acc += flat[idx] * self.interp_w[base + t];
            }
            y[m] = acc;
        }
        Ok(y)
    }

    /// Exact adjoint of [`NufftPlan::forward`]: scatter through the taps,
    /// oversampled inverse FFT, crop, de-apodize.
    pub fn adjoint(&self, y: ArrayView1<C32>) -> Result<Array2<C32>> {
        if y.len() != self.n_samples {
            return Err(Error::Shape(format!(
                "nufft adjoint: {} samples, plan has {}",
                y.len(),
                self.n_samples
            )));
        }
        let (n0, n1) = self.image_shape;
        let (os0, os1) = self.os_shape;
        let mut grid = Array2::<C32>::zeros((os0, os1));
        {
            let flat = grid.as_slice_mut().expect("grid is contiguous");
            let taps = self.kernel_width * self.kernel_width;
            for m in 0..self.n_samples {
                let base = m * taps;
                let v = y[m];
                for t in 0..taps {
                    let idx = self.interp_idx[base + t] as usize;
                    flat[idx] += v * self.interp_w[base + t];
                }
            }
        }
        self.fft2(&mut grid, true);
        let mut x = Array2::<C32>::zeros((n0, n1));
        for w in 0..n0 {
            let q0 = (w + os0 - n0 / 2) % os0;
            for h in 0..n1 {
                let q1 = (h + os1 - n1 / 2) % os1;
                x[[w, h]] = grid[[q0, q1]] * (self.apod[[w, h]] * self.scale);
            }
        }
        Ok(x)
    }
}

/// Builds a gridding plan for the trajectory: Kaiser-Bessel kernel with
/// `beta = pi * sqrt((J/s)^2 (s - 0.5)^2 - 0.8)`, de-apodization from the
/// kernel's closed-form transform, and precomputed interpolation taps.
pub fn plan_nufft(
    image_shape: (usize, usize),
    traj: &Trajectory,
    oversampling: f64,
    kernel_width: usize,
) -> Result<NufftPlan> {
    let (n0, n1) = image_shape;
    if n0 < 8 || n1 < 8 || n0 % 2 != 0 || n1 % 2 != 0 {
        return Err(Error::Invalid(format!(
            "image shape ({n0}, {n1}) must be even and at least 8x8"
        )));
    }
    if !(1.25..=8.0).contains(&oversampling) {
        return Err(Error::Invalid(format!(
            "oversampling {oversampling} outside [1.25, 8]"
        )));
    }
    if !(2..=8).contains(&kernel_width) {
        return Err(Error::Invalid(format!(
            "kernel width {kernel_width} outside [2, 8]"
        )));
    }
    traj.validate_for(image_shape)?;

    let j = kernel_width as f64;
    let beta_sq = (j / oversampling).powi(2) * (oversampling - 0.5).powi(2) - 0.8;
    if beta_sq <= 0.0 {
        return Err(Error::Invalid(
            "kernel parameterization degenerate for this (J, s)".into(),
        ));
    }
    let beta = std::f64::consts::PI * beta_sq.sqrt();

    let os0 = even_ceil(oversampling * n0 as f64);
    let os1 = even_ceil(oversampling * n1 as f64);

    // De-apodization: pixel at centered offset v sees the kernel transform
    // at frequency v / os.
    let col_apod = |n: usize, os: usize| -> Result<Vec<f64>> {
        (0..n)
            .map(|w| {
                let v = w as f64 - n as f64 / 2.0;
                let c = kaiser_bessel_transform(v / os as f64, kernel_width, beta);
                if c <= 0.0 || !c.is_finite() {
                    return Err(Error::Numeric(
                        "kernel transform non-positive on the image grid".into(),
                    ));
                }
                Ok(1.0 / c)
            })
            .collect()
    };
    let a0 = col_apod(n0, os0)?;
    let a1 = col_apod(n1, os1)?;
    let mut apod = Array2::<f32>::zeros((n0, n1));
    for w in 0..n0 {
        for h in 0..n1 {
            apod[[w, h]] = (a0[w] * a1[h]) as f32;
        }
    }

    let m = traj.len();
    let taps = kernel_width * kernel_width;
    let mut interp_idx = vec![0u32; m * taps];
    let mut interp_w = vec![0f32; m * taps];
    let half = j / 2.0;
    let mut w0 = vec![0f64; kernel_width];
    let mut w1 = vec![0f64; kernel_width];
    let mut i0 = vec![0usize; kernel_width];
    let mut i1 = vec![0usize; kernel_width];
    for s in 0..m {
        let u0 = traj.coords()[[s, 0]] as f64 * os0 as f64 / n0 as f64;
        let u1 = traj.coords()[[s, 1]] as f64 * os1 as f64 / n1 as f64;
        let start0 = (u0 - half).ceil() as i64;
        let start1 = (u1 - half).ceil() as i64;
        let mut sum = 0.0;
        for t in 0..kernel_width {
            let j0 = start0 + t as i64;
            let j1 = start1 + t as i64;
            w0[t] = kaiser_bessel(u0 - j0 as f64, kernel_width, beta);
            w1[t] = kaiser_bessel(u1 - j1 as f64, kernel_width, beta);
            i0[t] = j0.rem_euclid(os0 as i64) as usize;
            i1[t] = j1.rem_euclid(os1 as i64) as usize;
        }
        let base = s * taps;
        for a in 0..kernel_width {
            for b in 0..kernel_width {
                let t = base + a * kernel_width + b;
                interp_idx[t] = (i0[a] * os1 + i1[b]) as u32;
                let wgt = w0[a] * w1[b];
                interp_w[t] = wgt as f32;
                sum += wgt;
            }
        }
        if sum <= 0.0 || !sum.is_finite() {
            return Err(Error::Numeric(format!(
                "interpolation weights degenerate at sample {s}"
            )));
        }
    }

    let mut planner = FftPlanner::<f32>::new();
    Ok(NufftPlan {
        image_shape,
        os_shape: (os0, os1),
        kernel_width,
        kernel_beta: beta,
        apod,
        interp_idx,
        interp_w,
        n_samples: m,
        scale: 1.0 / ((n0 * n1) as f32).sqrt(),
        fft_row: planner.plan_fft_forward(os1),
        fft_col: planner.plan_fft_forward(os0),
        ifft_row: planner.plan_fft_inverse(os1),
        ifft_col: planner.plan_fft_inverse(os0),
    })
}

const NDFT_BUDGET: usize = 100_000_000;

fn ndft_tables(
    k0: f64,
    k1: f64,
    shape: (usize, usize),
    sign: f64,
) -> (Vec<C64>, Vec<C64>) {
    let (n0, n1) = shape;
    let t0: Vec<C64> = (0..n0)
        .map(|w| {
            let v = w as f64 - n0 as f64 / 2.0;
            C64::from_polar(1.0, sign * 2.0 * std::f64::consts::PI * k0 * v / n0 as f64)
        })
        .collect();
    let t1: Vec<C64> = (0..n1)
        .map(|h| {
            let v = h as f64 - n1 as f64 / 2.0;
            C64::from_polar(1.0, sign * 2.0 * std::f64::consts::PI * k1 * v / n1 as f64)
        })
        .collect();
    (t0, t1)
}

fn ndft_check_budget(shape: (usize, usize), m: usize) -> Result<()> {
    if shape.0 * shape.1 * m > NDFT_BUDGET {
        return Err(Error::Invalid(format!(
            "ndft size budget exceeded: {}x{} image with {} samples",
            shape.0, shape.1, m
        )));
    }
    Ok(())
}

/// Direct double-precision non-uniform DFT; ground truth for the plan-based
/// transform. Desk-scale sizes only.
pub fn ndft_forward(traj: &Trajectory, x: &Array2<C64>) -> Result<Array1<C64>> {
    let shape = x.dim();
    ndft_check_budget(shape, traj.len())?;
    traj.validate_for(shape)?;
    let scale = 1.0 / ((shape.0 * shape.1) as f64).sqrt();
    let mut y = Array1::<C64>::zeros(traj.len());
    for m in 0..traj.len() {
        let (t0, t1) = ndft_tables(
            traj.coords()[[m, 0]] as f64,
            traj.coords()[[m, 1]] as f64,
            shape,
            -1.0,
        );
        let mut acc = C64::new(0.0, 0.0);
        for w in 0..shape.0 {
            let mut row = C64::new(0.0, 0.0);
            for h in 0..shape.1 {
                row += x[[w, h]] * t1[h];
            }
            acc += row * t0[w];
        }
        y[m] = acc * scale;
    }
    Ok(y)
}

/// Exact adjoint of [`ndft_forward`].
pub fn ndft_adjoint(
    traj: &Trajectory,
    y: ArrayView1<C64>,
    shape: (usize, usize),
) -> Result<Array2<C64>> {
    if y.len() != traj.len() {
        return Err(Error::Shape(format!(
            "ndft adjoint: {} samples, trajectory has {}",
            y.len(),
            traj.len()
        )));
    }
    ndft_check_budget(shape, traj.len())?;
    traj.validate_for(shape)?;
    let scale = 1.0 / ((shape.0 * shape.1) as f64).sqrt();
    let mut x = Array2::<C64>::zeros(shape);
    for m in 0..traj.len() {
        let (t0, t1) = ndft_tables(
            traj.coords()[[m, 0]] as f64,
            traj.coords()[[m, 1]] as f64,
            shape,
            1.0,
        );
        let v = y[m] * scale;
        for w in 0..shape.0 {
            let f = v * t0[w];
            for h in 0..shape.1 {
                x[[w, h]] += f * t1[h];
            }
        }
    }
    Ok(x)
}

/// Per-sample density-compensation weights.
#[derive(Debug, Clone)]
pub struct DensityWeights {
    w: Array1<f32>,
}

impl DensityWeights {
    pub fn new(w: Array1<f32>) -> Result<Self> {
        if !w.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::Numeric(
                "density weights must be positive and finite".into(),
            ));
        }
        Ok(Self { w })
    }

    pub fn weights(&self) -> &Array1<f32> {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Pipe-Menon fixed point `w <- w ./ |G (G^H w)|` (gridding interpolation
/// followed by de-gridding, no FFT), run for 20 iterations from uniform
/// weights, then normalized so gridding reconstruction preserves the DC
/// amplitude of a constant image.
pub fn density_compensation(plan: &NufftPlan) -> Result<DensityWeights> {
    let m = plan.n_samples;
    let taps = plan.kernel_width * plan.kernel_width;
    let grid_len = plan.os_shape.0 * plan.os_shape.1;
    let mut w = vec![1.0f64; m];
    let mut grid = vec![0.0f64; grid_len];
    for _ in 0..20 {
        grid.iter_mut().for_each(|g| *g = 0.0);
        for s in 0..m {
            let base = s * taps;
            for t in 0..taps {
                grid[plan.interp_idx[base + t] as usize] += w[s] * plan.interp_w[base + t] as f64;
            }
        }
        for s in 0..m {
            let base = s * taps;
            let mut v = 0.0;
            for t in 0..taps {
                v += grid[plan.interp_idx[base + t] as usize] * plan.interp_w[base + t] as f64;
            }
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Numeric(format!(
                    "density compensation degenerate at sample {s}: {v}"
                )));
            }
            w[s] /= v;
        }
        if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Numeric(format!(
                "density compensation produced weight {bad}"
            )));
        }
    }

    // Normalize so the density-compensated adjoint of a constant image keeps
    // its mean.
    let (n0, n1) = plan.image_shape;
    let ones = Array2::<C32>::from_elem((n0, n1), C32::new(1.0, 0.0));
    let mut y = plan.forward(&ones)?;
    for s in 0..m {
        y[s] *= w[s] as f32;
    }
    let z = plan.adjoint(y.view())?;
    let mean_re: f64 = z.iter().map(|c| c.re as f64).sum::<f64>() / (n0 * n1) as f64;
    if !(mean_re.is_finite() && mean_re > 0.0) {
        return Err(Error::Numeric(
            "density normalization: DC response non-positive".into(),
        ));
    }
    let gamma = 1.0 / mean_re;
    let w32 = Array1::from_iter(w.iter().map(|v| (v * gamma) as f32));
    DensityWeights::new(w32)
}

/// Complex coil sensitivity maps, shape `(ncoil, H, W)`.
#[derive(Debug, Clone)]
pub struct CoilMaps {
    maps: Array3<C32>,
}

impl CoilMaps {
    pub fn new(maps: Array3<C32>) -> Result<Self> {
        if maps.dim().0 < 1 {
            return Err(Error::Invalid("need at least one coil".into()));
        }
        if !maps.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::Numeric("coil maps contain non-finite values".into()));
        }
        Ok(Self { maps })
    }

    pub fn ncoil(&self) -> usize {
        self.maps.dim().0
    }

    pub fn image_shape(&self) -> (usize, usize) {
        let (_, h, w) = self.maps.dim();
        (h, w)
    }

    pub fn maps(&self) -> &Array3<C32> {
        &self.maps
    }

    /// Root-sum-of-squares magnitude over coils.
    pub fn rss(&self) -> Array2<f32> {
        let (c, h, w) = self.maps.dim();
        let mut out = Array2::<f32>::zeros((h, w));
        for ci in 0..c {
            for i in 0..h {
                for j in 0..w {
                    out[[i, j]] += self.maps[[ci, i, j]].norm_sqr();
                }
            }
        }
        out.mapv(f32::sqrt)
    }
}

/// Plain single-coil NUFFT as a [`LinearOperator`], image `(H, W)` to
/// samples `(M,)`.
pub struct NufftOp {
    plan: Arc<NufftPlan>,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
}

impl NufftOp {
    pub fn new(plan: Arc<NufftPlan>) -> Self {
        let (h, w) = plan.image_shape();
        let m = plan.n_samples();
        Self {
            plan,
            in_shape: vec![h, w],
            out_shape: vec![m],
        }
    }
}

impl LinearOperator<f32> for NufftOp {
    fn in_shape(&self) -> &[usize] {
        &self.in_shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }
    fn apply(&self, x: &ArrayD<C32>) -> Result<ArrayD<C32>> {
        let x2 = x
            .view()
            .into_dimensionality::<Ix2>()
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.plan.forward(&x2.to_owned())?.into_dyn())
    }
    fn apply_adjoint(&self, y: &ArrayD<C32>) -> Result<ArrayD<C32>> {
        let y1 = y
            .view()
            .into_dimensionality::<Ix1>()
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.plan.adjoint(y1)?.into_dyn())
    }
}

/// Multi-coil SENSE encoding: `(E x)_c = nufft(maps_c .* x)`, adjoint
/// `E^H y = sum_c conj(maps_c) .* nufft_adjoint(y_c)`. This is the sampling
/// operator used by every reconstruction module.
pub struct SenseOp {
    plan: Arc<NufftPlan>,
    maps: Arc<CoilMaps>,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
}

impl SenseOp {
    pub fn new(plan: Arc<NufftPlan>, maps: Arc<CoilMaps>) -> Result<Self> {
        if maps.image_shape() != plan.image_shape() {
            return Err(Error::Shape(format!(
                "coil maps {:?} do not match plan image {:?}",
                maps.image_shape(),
                plan.image_shape()
            )));
        }
        let (h, w) = plan.image_shape();
        let out_shape = vec![maps.ncoil(), plan.n_samples()];
        Ok(Self {
            plan,
            maps,
            in_shape: vec![h, w],
            out_shape,
        })
    }

    pub fn ncoil(&self) -> usize {
        self.maps.ncoil()
    }

    pub fn plan(&self) -> &Arc<NufftPlan> {
        &self.plan
    }

    pub fn forward_coils(&self, x: &Array2<C32>) -> Result<Array2<C32>> {
        let (h, w) = self.plan.image_shape();
        if x.dim() != (h, w) {
            return Err(Error::Shape(format!(
                "sense forward: image {:?}, plan {:?}",
                x.dim(),
                (h, w)
            )));
        }
        let ncoil = self.maps.ncoil();
        let mut y = Array2::<C32>::zeros((ncoil, self.plan.n_samples()));
        let mut weighted = Array2::<C32>::zeros((h, w));
        for c in 0..ncoil {
            for i in 0..h {
                for j in 0..w {
                    weighted[[i, j]] = self.maps.maps()[[c, i, j]] * x[[i, j]];
                }
            }
            let yc = self.plan.forward(&weighted)?;
            y.row_mut(c).assign(&yc);
        }
        Ok(y)
    }

    pub fn adjoint_coils(&self, y: &Array2<C32>) -> Result<Array2<C32>> {
        let ncoil = self.maps.ncoil();
        if y.dim() != (ncoil, self.plan.n_samples()) {
            return Err(Error::Shape(format!(
                "sense adjoint: data {:?}, expected {:?}",
                y.dim(),
                (ncoil, self.plan.n_samples())
            )));
        }
        let (h, w) = self.plan.image_shape();
        let mut x = Array2::<C32>::zeros((h, w));
        for c in 0..ncoil {
            let xc = self.plan.adjoint(y.row(c))?;
            for i in 0..h {
                for j in 0..w {
                    x[[i, j]] += self.maps.maps()[[c, i, j]].conj() * xc[[i, j]];
                }
            }
        }
        Ok(x)
    }
}

impl LinearOperator<f32> for SenseOp {
    fn in_shape(&self) -> &[usize] {
        &self.in_shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }
    fn apply(&self, x: &ArrayD<C32>) -> Result<ArrayD<C32>> {
        let x2 = x
            .view()
            .into_dimensionality::<Ix2>()
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.forward_coils(&x2.to_owned())?.into_dyn())
    }
    fn apply_adjoint(&self, y: &ArrayD<C32>) -> Result<ArrayD<C32>> {
        let y2 = y
            .view()
            .into_dimensionality::<Ix2>()
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.adjoint_coils(&y2.to_owned())?.into_dyn())
    }
}

/// SENSE encoding evaluated through the direct double-precision transform;
/// exact to rounding and generic over the working precision. Backs the
/// gradient-check and accuracy oracles.
pub struct NdftSenseOp<T: Scalar> {
    traj: Trajectory,
    maps: Array3<C64>,
    image_shape: (usize, usize),
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> NdftSenseOp<T> {
    pub fn new(traj: Trajectory, maps: &CoilMaps) -> Result<Self> {
        let (c, h, w) = maps.maps().dim();
        traj.validate_for((h, w))?;
        let maps64 = maps.maps().mapv(|v| C64::new(v.re as f64, v.im as f64));
        Ok(Self {
            traj,
            maps: maps64,
            image_shape: (h, w),
            in_shape: vec![h, w],
            out_shape: vec![c, 0].into_iter().take(1).chain([0]).collect::<Vec<_>>(),
            _marker: std::marker::PhantomData,
        }
        .with_out_shape(c))
    }

    fn with_out_shape(mut self, c: usize) -> Self {
        self.out_shape = vec![c, self.traj.len()];
        self
    }
}

impl<T: Scalar> LinearOperator<T> for NdftSenseOp<T> {
    fn in_shape(&self) -> &[usize] {
        &self.in_shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }
    fn apply(&self, x: &ArrayD<Cplx<T>>) -> Result<ArrayD<Cplx<T>>> {
        let x2 = x
            .view()
            .into_dimensionality::<Ix2>()
            .map_err(|e| Error::Shape(e.to_string()))?;
        if x2.dim() != self.image_shape {
            return Err(Error::Shape("ndft sense: image shape mismatch".into()));
        }
        let x64 = x2.mapv(|v| C64::new(v.re.to_f64().unwrap(), v.im.to_f64().unwrap()));
        let ncoil = self.maps.dim().0;
        let mut out = Array2::<Cplx<T>>::zeros((ncoil, self.traj.len()));
        for c in 0..ncoil {
            let mut weighted = x64.clone();
            for i in 0..self.image_shape.0 {
                for j in 0..self.image_shape.1 {
                    weighted[[i, j]] *= self.maps[[c, i, j]];
                }
            }
            let yc = ndft_forward(&self.traj, &weighted)?;
            for m in 0..self.traj.len() {
                out[[c, m]] = Cplx::new(
                    T::from_f64(yc[m].re).unwrap(),
                    T::from_f64(yc[m].im).unwrap(),
                );
            }
        }
        Ok(out.into_dyn())
    }
    fn apply_adjoint(&self, y: &ArrayD<Cplx<T>>) -> Result<ArrayD<Cplx<T>>> {
        let y2 = y
            .view()
            .into_dimensionality::<Ix2>()
            .map_err(|e| Error::Shape(e.to_string()))?;
        let ncoil = self.maps.dim().0;
        if y2.dim() != (ncoil, self.traj.len()) {
            return Err(Error::Shape("ndft sense adjoint: data shape mismatch".into()));
        }
        let mut acc = Array2::<C64>::zeros(self.image_shape);
        for c in 0..ncoil {
            let yc64 = Array1::from_iter(
                y2.row(c)
                    .iter()
                    .map(|v| C64::new(v.re.to_f64().unwrap(), v.im.to_f64().unwrap())),
            );
            let xc = ndft_adjoint(&self.traj, yc64.view(), self.image_shape)?;
            for i in 0..self.image_shape.0 {
                for j in 0..self.image_shape.1 {
                    acc[[i, j]] += self.maps[[c, i, j]].conj() * xc[[i, j]];
                }
            }
        }
        Ok(acc
            .mapv(|v| Cplx::new(T::from_f64(v.re).unwrap(), T::from_f64(v.im).unwrap()))
            .into_dyn())
    }
}
