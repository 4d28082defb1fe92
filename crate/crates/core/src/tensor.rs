//! Dense complex/real array types, inner products and norms, and the
//! linear-operator contract shared by the encoding and solver modules.
//!
//! Conventions fixed here and used everywhere else:
//! - images are row-major `(rows, cols)` with the row axis leading;
//! - the canonical element type is complex64 (two f32); accuracy-critical
//!   reference computations accumulate in f64;
//! - an operator's adjoint must satisfy `<Au, v> = <u, A^H v>` to rounding
//!   accuracy, which [`adjoint_identity_gap`] measures.

use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayD, Zip};
use num_complex::Complex;
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Real scalar type over which the differentiable pipeline is generic.
/// f32 is the production type; f64 backs the reference/oracle paths.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
}
impl<T> Scalar for T where
    T: Float
        + NumAssign
        + FromPrimitive
        + ToPrimitive
        + std::iter::Sum
        + std::fmt::Debug
        + std::fmt::Display
        + Send
        + Sync
        + 'static
{
}

pub type Cplx<T> = Complex<T>;
pub type C32 = Complex<f32>;
pub type C64 = Complex<f64>;

/// 2D complex-valued image, the reconstruction target.
#[derive(Debug, Clone)]
pub struct ComplexImage {
    data: Array2<C32>,
    fov_mm: (f32, f32),
}

pub const DEFAULT_FOV_MM: (f32, f32) = (220.0, 220.0);

impl ComplexImage {
    /// Wraps image data, enforcing the shape and finiteness invariants
    /// (both sides at least 8 and even, all elements finite).
    pub fn new(data: Array2<C32>) -> Result<Self> {
        Self::with_fov(data, DEFAULT_FOV_MM)
    }

    pub fn with_fov(data: Array2<C32>, fov_mm: (f32, f32)) -> Result<Self> {
        let (h, w) = data.dim();
        if h < 8 || w < 8 || h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Invalid(format!(
                "image shape ({h}, {w}) must be even and at least 8x8"
            )));
        }
        if !data.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::Numeric("image contains non-finite values".into()));
        }
        Ok(Self { data, fov_mm })
    }

    pub fn zeros(shape: (usize, usize)) -> Result<Self> {
        Self::new(Array2::zeros(shape))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn data(&self) -> &Array2<C32> {
        &self.data
    }

    pub fn into_data(self) -> Array2<C32> {
        self.data
    }

    pub fn fov_mm(&self) -> (f32, f32) {
        self.fov_mm
    }

    /// Magnitude view of the image.
    pub fn magnitude(&self) -> Array2<f32> {
        self.data.mapv(|c| c.norm())
    }
}

/// 2D real-valued image (magnitude views, masks, metric inputs).
#[derive(Debug, Clone)]
pub struct RealImage {
    pub data: Array2<f32>,
}

impl RealImage {
    pub fn new(data: Array2<f32>) -> Result<Self> {
        let (h, w) = data.dim();
        if h < 8 || w < 8 || h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Invalid(format!(
                "image shape ({h}, {w}) must be even and at least 8x8"
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("image contains non-finite values".into()));
        }
        Ok(Self { data })
    }
}

/// `sum(conj(u_i) * v_i)`, conjugate-linear in the first argument.
/// Accumulates in f64 regardless of the element type.
pub fn inner_product<T: Scalar>(u: &ArrayD<Cplx<T>>, v: &ArrayD<Cplx<T>>) -> Result<C64> {
    if u.shape() != v.shape() {
        return Err(Error::Shape(format!(
            "inner_product: {:?} vs {:?}",
            u.shape(),
            v.shape()
        )));
    }
    let mut acc = C64::new(0.0, 0.0);
    for (a, b) in u.iter().zip(v.iter()) {
        let a = C64::new(a.re.to_f64().unwrap(), a.im.to_f64().unwrap());
        let b = C64::new(b.re.to_f64().unwrap(), b.im.to_f64().unwrap());
        acc += a.conj() * b;
    }
    Ok(acc)
}

fn check_finite<T: Scalar>(u: &ArrayD<Cplx<T>>, what: &str) -> Result<()> {
    if u.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::Numeric(format!("{what}: non-finite input")));
    }
    Ok(())
}

/// Sum of complex magnitudes.
pub fn l1_norm<T: Scalar>(u: &ArrayD<Cplx<T>>) -> Result<f64> {
    check_finite(u, "l1_norm")?;
    Ok(u.iter()
        .map(|c| {
            let re = c.re.to_f64().unwrap();
            let im = c.im.to_f64().unwrap();
            (re * re + im * im).sqrt()
        })
        .sum())
}

/// Euclidean norm: sqrt of the sum of squared magnitudes.
pub fn l2_norm<T: Scalar>(u: &ArrayD<Cplx<T>>) -> Result<f64> {
    check_finite(u, "l2_norm")?;
    let s: f64 = u
        .iter()
        .map(|c| {
            let re = c.re.to_f64().unwrap();
            let im = c.im.to_f64().unwrap();
            re * re + im * im
        })
        .sum();
    Ok(s.sqrt())
}

/// Largest complex magnitude.
pub fn linf_norm<T: Scalar>(u: &ArrayD<Cplx<T>>) -> Result<f64> {
    check_finite(u, "linf_norm")?;
    Ok(u.iter()
        .map(|c| {
            let re = c.re.to_f64().unwrap();
            let im = c.im.to_f64().unwrap();
            (re * re + im * im).sqrt()
        })
        .fold(0.0, f64::max))
}

/// Linear map between complex arrays together with its adjoint.
///
/// Implementations must be genuine adjoint pairs: `<Au, v> = <u, A^H v>`
/// for all inputs of the declared shapes.
pub trait LinearOperator<T: Scalar>: Send + Sync {
    fn in_shape(&self) -> &[usize];
    fn out_shape(&self) -> &[usize];
    fn apply(&self, x: &ArrayD<Cplx<T>>) -> Result<ArrayD<Cplx<T>>>;
    fn apply_adjoint(&self, y: &ArrayD<Cplx<T>>) -> Result<ArrayD<Cplx<T>>>;
}

/// Operator scaled by a real factor; adjoint scales by the same factor.
pub struct ScaledOp<T: Scalar> {
    inner: Arc<dyn LinearOperator<T>>,
    factor: f64,
}

impl<T: Scalar> ScaledOp<T> {
    pub fn new(inner: Arc<dyn LinearOperator<T>>, factor: f64) -> Self {
        Self { inner, factor }
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }
}

impl<T: Scalar> LinearOperator<T> for ScaledOp<T> {
    fn in_shape(&self) -> &[usize] {
        self.inner.in_shape()
    }
    fn out_shape(&self) -> &[usize] {
        self.inner.out_shape()
    }
    fn apply(&self, x: &ArrayD<Cplx<T>>) -> Result<ArrayD<Cplx<T>>> {
        let f = T::from_f64(self.factor).unwrap();
        Ok(self.inner.apply(x)?.mapv(|c| c * f))
    }
    fn apply_adjoint(&self, y: &ArrayD<Cplx<T>>) -> Result<ArrayD<Cplx<T>>> {
        let f = T::from_f64(self.factor).unwrap();
        Ok(self.inner.apply_adjoint(y)?.mapv(|c| c * f))
    }
}

/// Draws a standard complex Gaussian array of the given shape.
pub fn random_complex<T: Scalar>(shape: &[usize], rng: &mut impl Rng) -> ArrayD<Cplx<T>> {
    ArrayD::from_shape_simple_fn(shape.to_vec(), || {
        let re = standard_normal(rng);
        let im = standard_normal(rng);
        Cplx::new(T::from_f64(re).unwrap(), T::from_f64(im).unwrap())
    })
}

/// Box-Muller standard normal draw; keeps the RNG stream identical across
/// element types, which the determinism tests rely on.
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Relative gap in the adjoint identity `<Au, v> = <u, A^H v>` for random
/// `u`, `v`: `|<Au,v> - <u,A^H v>| / (|Au||v| + |u||A^H v|)`.
pub fn adjoint_identity_gap<T: Scalar>(op: &dyn LinearOperator<T>, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_complex::<T>(op.in_shape(), &mut rng);
    let v = random_complex::<T>(op.out_shape(), &mut rng);
    let au = op.apply(&u)?;
    let ahv = op.apply_adjoint(&v)?;
    let lhs = inner_product(&au, &v)?;
    let rhs = inner_product(&u, &ahv)?;
    let denom = l2_norm(&au)? * l2_norm(&v)? + l2_norm(&u)? * l2_norm(&ahv)?;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((lhs - rhs).norm() / denom)
}

/// Relative linearity defect `|A(au + bw) - aAu - bAw| / |A(au + bw)|`
/// for random complex coefficients.
pub fn linearity_gap<T: Scalar>(op: &dyn LinearOperator<T>, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x11b);
    let u = random_complex::<T>(op.in_shape(), &mut rng);
    let w = random_complex::<T>(op.in_shape(), &mut rng);
    let a = Cplx::new(
        T::from_f64(standard_normal(&mut rng)).unwrap(),
        T::from_f64(standard_normal(&mut rng)).unwrap(),
    );
    let b = Cplx::new(
        T::from_f64(standard_normal(&mut rng)).unwrap(),
        T::from_f64(standard_normal(&mut rng)).unwrap(),
    );
    let mut mix = u.clone();
    Zip::from(&mut mix).and(&w).for_each(|m, &wv| *m = *m * a + wv * b);
    let lhs = op.apply(&mix)?;
    let au = op.apply(&u)?;
    let aw = op.apply(&w)?;
    let mut rhs = au;
    Zip::from(&mut rhs).and(&aw).for_each(|r, &x| *r = *r * a + x * b);
    let mut diff = lhs.clone();
    Zip::from(&mut diff).and(&rhs).for_each(|d, &x| *d -= x);
    Ok(l2_norm(&diff)? / l2_norm(&lhs)?.max(1e-300))
}

/// Estimates the largest eigenvalue of `A^H A` by power iteration.
pub fn normal_op_power_iteration<T: Scalar>(
    op: &dyn LinearOperator<T>,
    n_iter: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let mut v = random_complex::<T>(op.in_shape(), &mut rng);
    let norm = l2_norm(&v)?;
    let inv = T::from_f64(1.0 / norm.max(1e-300)).unwrap();
    v.mapv_inplace(|c| c * inv);
    let mut lambda = 0.0;
    for _ in 0..n_iter {
        let w = op.apply_adjoint(&op.apply(&v)?)?;
        lambda = l2_norm(&w)?;
        if !lambda.is_finite() {
            return Err(Error::Numeric("power iteration diverged".into()));
        }
        if lambda <= 0.0 {
            return Ok(0.0);
        }
        let inv = T::from_f64(1.0 / lambda).unwrap();
        v = w.mapv(|c| c * inv);
    }
    Ok(lambda)
}

/// Complex image to a `(2, H, W)` real tensor (channel 0 real, 1 imaginary).
pub fn image_to_channels<T: Scalar>(img: &Array2<Cplx<T>>) -> Array3<T> {
    let (h, w) = img.dim();
    let mut out = Array3::zeros((2, h, w));
    for i in 0..h {
        for j in 0..w {
            out[[0, i, j]] = img[[i, j]].re;
            out[[1, i, j]] = img[[i, j]].im;
        }
    }
    out
}

/// Inverse of [`image_to_channels`]; the pair is an exact bijection.
pub fn channels_to_image<T: Scalar>(t: &Array3<T>) -> Result<Array2<Cplx<T>>> {
    let (c, h, w) = t.dim();
    if c != 2 {
        return Err(Error::Shape(format!("expected 2 channels, got {c}")));
    }
    let mut out = Array2::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            out[[i, j]] = Cplx::new(t[[0, i, j]], t[[1, i, j]]);
        }
    }
    Ok(out)
}

/// Multi-coil k-space `(C, M)` to a `(C, M, 2)` real tensor.
pub fn kspace_to_channels<T: Scalar>(y: &Array2<Cplx<T>>) -> Array3<T> {
    let (c, m) = y.dim();
    let mut out = Array3::zeros((c, m, 2));
    for i in 0..c {
        for j in 0..m {
            out[[i, j, 0]] = y[[i, j]].re;
            out[[i, j, 1]] = y[[i, j]].im;
        }
    }
    out
}

pub fn channels_to_kspace<T: Scalar>(t: &Array3<T>) -> Result<Array2<Cplx<T>>> {
    let (c, m, two) = t.dim();
    if two != 2 {
        return Err(Error::Shape(format!("expected trailing dim 2, got {two}")));
    }
    let mut out = Array2::zeros((c, m));
    for i in 0..c {
        for j in 0..m {
            out[[i, j]] = Cplx::new(t[[i, j, 0]], t[[i, j, 1]]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    fn carr(vals: &[(f64, f64)]) -> ArrayD<C32> {
        ArrayD::from_shape_vec(
            IxDyn(&[vals.len()]),
            vals.iter().map(|&(r, i)| C32::new(r as f32, i as f32)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn inner_product_identity_case() {
        let u = ArrayD::from_elem(IxDyn(&[2, 2]), C32::new(1.0, 0.0));
        let ip = inner_product(&u, &u).unwrap();
        assert!((ip - C64::new(4.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn inner_product_conjugation_convention() {
        // u = (i, 0), v = (1, 0) -> <u, v> = -i
        let u = carr(&[(0.0, 1.0), (0.0, 0.0)]);
        let v = carr(&[(1.0, 0.0), (0.0, 0.0)]);
        let ip = inner_product(&u, &v).unwrap();
        assert!((ip - C64::new(0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn inner_product_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = random_complex::<f32>(&[16], &mut rng);
        let v = random_complex::<f32>(&[16], &mut rng);
        let mut expect = C64::new(0.0, 0.0);
        for k in 0..16 {
            let a = u[[k]];
            let b = v[[k]];
            expect += C64::new(a.re as f64, -(a.im as f64)) * C64::new(b.re as f64, b.im as f64);
        }
        let got = inner_product(&u, &v).unwrap();
        assert!(
            (got - expect).norm() <= 1e-12 * expect.norm().max(1.0),
            "got {got}, expected {expect}"
        );
    }

    #[test]
    fn inner_product_shape_mismatch_errors() {
        let u = carr(&[(1.0, 0.0)]);
        let v = carr(&[(1.0, 0.0), (0.0, 0.0)]);
        assert!(inner_product(&u, &v).is_err());
    }

    #[test]
    fn norms_closed_forms() {
        let u = carr(&[(3.0, 0.0), (4.0, 0.0)]);
        assert!((l2_norm(&u).unwrap() - 5.0).abs() < 1e-7);
        let w = carr(&[(1.0, 1.0)]);
        assert!((l1_norm(&w).unwrap() - 2f64.sqrt()).abs() < 1e-7);
        assert!((linf_norm(&u).unwrap() - 4.0).abs() < 1e-7);
    }

    #[test]
    fn norms_match_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_complex::<f32>(&[64], &mut rng);
        let mut l1 = 0.0f64;
        let mut l2 = 0.0f64;
        let mut li: f64 = 0.0;
        for k in 0..64 {
            let m = ((u[[k]].re as f64).powi(2) + (u[[k]].im as f64).powi(2)).sqrt();
            l1 += m;
            l2 += m * m;
            li = li.max(m);
        }
        let l2 = l2.sqrt();
        assert!((l1_norm(&u).unwrap() - l1).abs() / l1 < 1e-6);
        assert!((l2_norm(&u).unwrap() - l2).abs() / l2 < 1e-6);
        assert!((linf_norm(&u).unwrap() - li).abs() / li < 1e-6);
    }

    #[test]
    fn nan_input_rejected() {
        let u = carr(&[(f64::NAN, 0.0)]);
        assert!(l1_norm(&u).is_err());
        assert!(l2_norm(&u).is_err());
    }

    #[test]
    fn image_odd_shape_rejected() {
        assert!(ComplexImage::new(Array2::zeros((9, 8))).is_err());
        assert!(ComplexImage::new(Array2::zeros((8, 6))).is_err());
        assert!(ComplexImage::new(Array2::zeros((8, 8))).is_ok());
    }

    #[test]
    fn channel_views_are_bijective() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = random_complex::<f32>(&[8, 10], &mut rng)
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap();
        let rt = channels_to_image(&image_to_channels(&img)).unwrap();
        assert_eq!(img, rt);
        let ksp = random_complex::<f32>(&[3, 17], &mut rng)
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap();
        let rt = channels_to_kspace(&kspace_to_channels(&ksp)).unwrap();
        assert_eq!(ksp, rt);
    }
}
