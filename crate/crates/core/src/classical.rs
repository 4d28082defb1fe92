//! Non-learned reconstruction baselines: plain adjoint, density-compensated
//! gridding, Tikhonov-regularized conjugate-gradient SENSE, and
//! wavelet-sparsity FISTA.

use std::time::Instant;

use ndarray::{Array2, ArrayD};

use crate::error::{Error, Result};
use crate::metrics;
use crate::nufft::DensityWeights;
use crate::tensor::{inner_product, normal_op_power_iteration, ComplexImage, LinearOperator, C32};
use crate::wavelet::WaveletTransform;

/// Output of an iterative reconstruction.
#[derive(Debug, Clone)]
pub struct ReconResult {
    pub image: ComplexImage,
    pub iterations: usize,
    /// Relative residual (CG) or objective value (FISTA) per iteration.
    pub residual_history: Vec<f64>,
    pub wall_time_s: f64,
}

fn as_image(x: ArrayD<C32>) -> Result<ComplexImage> {
    ComplexImage::new(
        x.into_dimensionality::<ndarray::Ix2>()
            .map_err(|e| Error::Shape(e.to_string()))?,
    )
}

/// `x = E^H y`.
pub fn adjoint_recon(op: &dyn LinearOperator<f32>, y: &Array2<C32>) -> Result<ComplexImage> {
    as_image(op.apply_adjoint(&y.clone().into_dyn())?)
}

/// `x = E^H (W .* y)` with the density weights applied per coil sample.
pub fn gridding_recon(
    op: &dyn LinearOperator<f32>,
    weights: &DensityWeights,
    y: &Array2<C32>,
) -> Result<ComplexImage> {
    if weights.len() != y.ncols() {
        return Err(Error::Shape(format!(
            "density weights ({}) do not match samples ({})",
            weights.len(),
            y.ncols()
        )));
    }
    let mut wy = y.clone();
    for mut row in wy.rows_mut() {
        for (v, w) in row.iter_mut().zip(weights.weights().iter()) {
            *v *= *w;
        }
    }
    as_image(op.apply_adjoint(&wy.into_dyn())?)
}

/// Conjugate-gradient solve of `(E^H E + lambda I) x = E^H y` from zero.
/// Stops when the relative normal-equation residual drops below `tol`.
pub fn cg_sense(
    op: &dyn LinearOperator<f32>,
    y: &Array2<C32>,
    lambda_tik: f32,
    max_iter: usize,
    tol: f64,
) -> Result<ReconResult> {
    if lambda_tik < 0.0 {
        return Err(Error::Invalid("cg_sense: lambda must be nonnegative".into()));
    }
    let t0 = Instant::now();
    let b = op.apply_adjoint(&y.clone().into_dyn())?;
    let b_norm = crate::tensor::l2_norm(&b)?;
    if b_norm == 0.0 {
        return Ok(ReconResult {
            image: as_image(ArrayD::zeros(b.raw_dim()))?,
            iterations: 0,
            residual_history: vec![0.0],
            wall_time_s: t0.elapsed().as_secs_f64(),
        });
    }
    let normal = |x: &ArrayD<C32>| -> Result<ArrayD<C32>> {
        let mut ax = op.apply_adjoint(&op.apply(x)?)?;
        if lambda_tik > 0.0 {
            for (a, v) in ax.iter_mut().zip(x.iter()) {
                *a += v * lambda_tik;
            }
        }
        Ok(ax)
    };
    let mut x = ArrayD::<C32>::zeros(b.raw_dim());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs_old = inner_product(&r, &r)?.re;
    let mut history = vec![1.0f64];
    let mut iterations = 0;
    for _ in 0..max_iter {
        let ap = normal(&p)?;
        let denom = inner_product(&p, &ap)?.re;
        if !(denom.is_finite() && denom > 0.0) {
            return Err(Error::Numeric(format!(
                "cg_sense: curvature {denom} (ill-conditioned system)"
            )));
        }
        let alpha = (rs_old / denom) as f32;
        for (xv, pv) in x.iter_mut().zip(p.iter()) {
            *xv += pv * alpha;
        }
        for (rv, av) in r.iter_mut().zip(ap.iter()) {
            *rv -= av * alpha;
        }
        let rs_new = inner_product(&r, &r)?.re;
        if !rs_new.is_finite() {
            return Err(Error::Numeric("cg_sense: residual diverged".into()));
        }
        if rs_new >= rs_old {
            // Single-precision stagnation: no further progress is possible.
            break;
        }
        iterations += 1;
        let rel = rs_new.sqrt() / b_norm;
        history.push(rel);
        if rel <= tol {
            break;
        }
        let beta = (rs_new / rs_old) as f32;
        for (pv, rv) in p.iter_mut().zip(r.iter()) {
            *pv = *rv + *pv * beta;
        }
        rs_old = rs_new;
    }
    Ok(ReconResult {
        image: as_image(x)?,
        iterations,
        residual_history: history,
        wall_time_s: t0.elapsed().as_secs_f64(),
    })
}

/// Complex soft-thresholding `c * max(0, 1 - t/|c|)`.
pub fn soft_threshold(c: C32, t: f32) -> C32 {
    let m = c.norm();
    if m <= t {
        C32::new(0.0, 0.0)
    } else {
        c * ((m - t) / m)
    }
}

/// FISTA for `argmin 0.5 ||Ex - y||^2 + mu ||Psi x||_1` with step `1/L`
/// (`L` from 20 power iterations on `E^H E`), Daubechies-4 sparsity, and
/// function-value restart. Errors out if the objective rises three
/// iterations in a row.
pub fn l1_wavelet_recon(
    op: &dyn LinearOperator<f32>,
    y: &Array2<C32>,
    mu: f32,
    n_iter: usize,
) -> Result<ReconResult> {
    if mu <= 0.0 {
        return Err(Error::Invalid("l1_wavelet_recon: mu must be positive".into()));
    }
    let t0 = Instant::now();
    let shape = (op.in_shape()[0], op.in_shape()[1]);
    let wt = WaveletTransform::db4(shape)?;
    let lip = normal_op_power_iteration(op, 20, 0)?.max(1e-12);
    let step = (1.0 / lip) as f32;
    let thresh = mu * step;
    let y_dyn = y.clone().into_dyn();

    let objective = |x: &Array2<C32>| -> Result<f64> {
        let ex = op.apply(&x.clone().into_dyn())?;
        let mut fidel = 0.0f64;
        for (a, b) in ex.iter().zip(y.iter()) {
            fidel += (a - b).norm_sqr() as f64;
        }
        let c = wt.forward(x)?;
        let l1: f64 = c.iter().map(|v| v.norm() as f64).sum();
        Ok(0.5 * fidel + mu as f64 * l1)
    };

    let mut x = Array2::<C32>::zeros(shape);
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut obj_prev = objective(&x)?;
    let mut history = vec![obj_prev];
    let mut rising = 0usize;
    for it in 0..n_iter {
        let ez = op.apply(&z.clone().into_dyn())?;
        let mut resid = ez;
        for (r, yv) in resid.iter_mut().zip(y_dyn.iter()) {
            *r -= *yv;
        }
        let grad = op.apply_adjoint(&resid)?;
        let mut v = z.clone();
        for (vv, gv) in v.iter_mut().zip(grad.iter()) {
            *vv -= *gv * step;
        }
        let mut c = wt.forward(&v)?;
        c.mapv_inplace(|cv| soft_threshold(cv, thresh));
        let x_new = wt.inverse(&c)?;

        let obj = objective(&x_new)?;
        if !obj.is_finite() {
            return Err(Error::Numeric(format!("fista: objective non-finite at iter {it}")));
        }
        if obj > obj_prev * (1.0 + 1e-6) {
            rising += 1;
            if rising >= 3 {
                return Err(Error::Numeric(format!(
                    "fista diverging: objective rose 3 consecutive iterations \
                     (iter {it}, {obj_prev} -> {obj}, L = {lip})"
                )));
            }
            // Momentum restart; the next step is plain proximal descent.
            t = 1.0;
        } else {
            rising = 0;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = ((t - 1.0) / t_new) as f32;
        let mut z_new = x_new.clone();
        for ((zv, xn), xo) in z_new.iter_mut().zip(x_new.iter()).zip(x.iter()) {
            *zv = *xn + (*xn - *xo) * beta;
        }
        x = x_new;
        z = z_new;
        t = t_new;
        obj_prev = obj;
        history.push(obj);
    }
    Ok(ReconResult {
        image: ComplexImage::new(x)?,
        iterations: n_iter,
        residual_history: history,
        wall_time_s: t0.elapsed().as_secs_f64(),
    })
}

/// Convenience: SSIM/PSNR ordering helpers compare magnitude images.
pub fn magnitude_psnr(truth: &ComplexImage, recon: &ComplexImage) -> Result<f64> {
    metrics::psnr(&truth.magnitude(), &recon.magnitude())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nufft::{density_compensation, plan_nufft, NdftSenseOp, SenseOp};
    use crate::sim::{make_coil_maps, make_phantom, simulate_case, PhantomKind, PhantomSpec};
    use crate::tensor::random_complex;
    use crate::traj::SamplingSpec;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn small_case(
        shape: (usize, usize),
        accel: f32,
        ncoil: usize,
        sigma: f32,
        seed: u64,
    ) -> (crate::sim::SimulatedCase, SenseOp) {
        let phantom = PhantomSpec::new(shape, PhantomKind::RandomEllipses, seed);
        let sampling = SamplingSpec::new(shape, accel, seed + 1000);
        let case = simulate_case(&phantom, &sampling, ncoil, sigma).unwrap();
        let plan = plan_nufft(shape, &case.trajectory, 2.0, 4).unwrap();
        let op = SenseOp::new(Arc::new(plan), Arc::new(case.maps.clone())).unwrap();
        (case, op)
    }

    #[test]
    fn adjoint_recon_zero_and_sanity() {
        let (case, op) = small_case((32, 32), 2.0, 4, 0.0, 1);
        let zeros = Array2::<C32>::zeros(case.y.dim());
        let x = adjoint_recon(&op, &zeros).unwrap();
        assert!(x.data().iter().all(|c| c.norm() == 0.0));

        let x = adjoint_recon(&op, &case.y).unwrap();
        let s_adj = crate::metrics::ssim(&case.truth.magnitude(), &x.magnitude()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let noise = random_complex::<f32>(&[32, 32], &mut rng)
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap();
        let s_noise =
            crate::metrics::ssim(&case.truth.magnitude(), &ComplexImage::new(noise).unwrap().magnitude())
                .unwrap();
        assert!(
            s_adj > s_noise,
            "adjoint recon ssim {s_adj} should beat random {s_noise}"
        );
    }

    #[test]
    fn adjoint_matches_direct_transform_composition() {
        let (case, op) = small_case((16, 16), 2.0, 2, 0.0, 2);
        let x = adjoint_recon(&op, &case.y).unwrap();
        let oracle_op = NdftSenseOp::<f32>::new(case.trajectory.clone(), &case.maps).unwrap();
        let want = oracle_op
            .apply_adjoint(&case.y.clone().into_dyn())
            .unwrap();
        let peak = want.iter().map(|c| c.norm()).fold(0.0f32, f32::max);
        let err = x
            .data()
            .iter()
            .zip(want.iter())
            .map(|(a, b)| (a - b).norm() / peak)
            .fold(0.0f32, f32::max);
        assert!(err <= 1e-3, "adjoint deviates from oracle by {err}");
    }

    #[test]
    fn gridding_with_unit_weights_equals_adjoint() {
        let (case, op) = small_case((16, 16), 2.0, 2, 0.0, 3);
        let m = case.trajectory.len();
        let unit = DensityWeights::new(ndarray::Array1::ones(m)).unwrap();
        let a = adjoint_recon(&op, &case.y).unwrap();
        let g = gridding_recon(&op, &unit, &case.y).unwrap();
        assert_eq!(a.data(), g.data());
    }

    #[test]
    fn gridding_weight_length_checked() {
        let (case, op) = small_case((16, 16), 2.0, 2, 0.0, 4);
        let unit = DensityWeights::new(ndarray::Array1::ones(7)).unwrap();
        assert!(gridding_recon(&op, &unit, &case.y).is_err());
    }

    #[test]
    fn fully_sampled_gridding_reaches_30db() {
        // Noiseless, fully sampled at 1.25x Nyquist: gridding must recover
        // the phantom to at least 30 dB.
        let (case, op) = small_case((64, 64), 1.0, 8, 0.0, 5);
        let w = density_compensation(op.plan()).unwrap();
        let x = gridding_recon(&op, &w, &case.y).unwrap();
        let p = magnitude_psnr(&case.truth, &x).unwrap();
        assert!(p >= 30.0, "fully sampled gridding psnr {p}");
    }

    #[test]
    fn gridding_beats_adjoint_at_r2() {
        let mut adj = Vec::new();
        let mut grid = Vec::new();
        for seed in 0..10 {
            let (case, op) = small_case((32, 32), 2.0, 8, 0.005, 100 + seed);
            let w = density_compensation(op.plan()).unwrap();
            let a = adjoint_recon(&op, &case.y).unwrap();
            let g = gridding_recon(&op, &w, &case.y).unwrap();
            adj.push(magnitude_psnr(&case.truth, &a).unwrap());
            grid.push(magnitude_psnr(&case.truth, &g).unwrap());
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&grid) > mean(&adj),
            "gridding {:?} should beat adjoint {:?}",
            mean(&grid),
            mean(&adj)
        );
    }

    #[test]
    fn cg_recovers_well_posed_case() {
        // Fully determined: dense sampling over the whole k-space square
        // (disk trajectories leave corner frequencies unobserved).
        let shape = (32, 32);
        let phantom = PhantomSpec::new(shape, PhantomKind::RandomEllipses, 6);
        let truth = make_phantom(&phantom).unwrap();
        let maps = make_coil_maps(shape, 8, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let m = 32 * 32 * 5 / 4;
        let mut coords = Array2::<f32>::zeros((m, 2));
        for s in 0..m {
            coords[[s, 0]] = (rng.random::<f32>() - 0.5) * 31.99;
            coords[[s, 1]] = (rng.random::<f32>() - 0.5) * 31.99;
        }
        let traj = crate::nufft::Trajectory::new(coords, 1.0).unwrap();
        let plan = plan_nufft(shape, &traj, 2.0, 4).unwrap();
        let op = SenseOp::new(Arc::new(plan), Arc::new(maps)).unwrap();
        let y = op.forward_coils(truth.data()).unwrap();
        let case = crate::sim::SimulatedCase {
            truth,
            maps: make_coil_maps(shape, 8, 6).unwrap(),
            trajectory: traj,
            y,
            seed: 6,
            noise_sigma: 0.0,
            accel: 1.0,
        };
        let result = cg_sense(&op, &case.y, 0.0, 50, 1e-6).unwrap();
        let t = case.truth.data();
        let r = result.image.data();
        let num: f64 = t
            .iter()
            .zip(r.iter())
            .map(|(a, b)| (a - b).norm_sqr() as f64)
            .sum();
        let den: f64 = t.iter().map(|a| a.norm_sqr() as f64).sum();
        let nmse = num / den;
        assert!(
            nmse <= 1e-3,
            "cg nmse {nmse} after {} iterations",
            result.iterations
        );
        assert!(result.iterations <= 50);
    }

    #[test]
    fn cg_residuals_monotone() {
        for seed in 0..5 {
            let (case, op) = small_case((32, 32), 2.0, 4, 0.01, 10 + seed);
            let result = cg_sense(&op, &case.y, 1e-4, 30, 1e-12).unwrap();
            for w in result.residual_history.windows(2) {
                assert!(
                    w[1] <= w[0] * (1.0 + 1e-6),
                    "cg residual rose: {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn soft_threshold_closed_forms() {
        let s = soft_threshold(C32::new(0.5, 0.0), 0.2);
        assert!((s.re - 0.3).abs() < 1e-7 && s.im == 0.0);
        let s = soft_threshold(C32::new(-0.1, 0.0), 0.2);
        assert_eq!(s, C32::new(0.0, 0.0));
        let c = C32::new(3.0, 4.0);
        let s = soft_threshold(c, 1.0);
        assert!((s.norm() - 4.0).abs() < 1e-6);
        assert!((s.arg() - c.arg()).abs() < 1e-6);
    }

    #[test]
    fn fista_objective_decreases_and_huge_mu_zeroes() {
        let (case, op) = small_case((32, 32), 2.0, 4, 0.005, 20);
        let result = l1_wavelet_recon(&op, &case.y, 1e-3, 40).unwrap();
        let first = result.residual_history.first().unwrap();
        let last = result.residual_history.last().unwrap();
        assert!(last < first, "objective did not decrease: {first} -> {last}");

        let result = l1_wavelet_recon(&op, &case.y, 1e4, 30).unwrap();
        let peak = result.image.data().iter().map(|c| c.norm()).fold(0.0f32, f32::max);
        assert!(peak < 1e-4, "over-penalized solution should vanish, peak {peak}");
    }

    #[test]
    fn power_iteration_within_dense_eigenvalue_bounds() {
        // Dense oracle: largest eigenvalue of E^H E via the real symmetric
        // embedding of the explicitly assembled normal matrix.
        let (_case, op) = small_case((16, 16), 2.0, 2, 0.0, 30);
        let n = 16 * 16;
        let mut columns: Vec<ndarray::ArrayD<C32>> = Vec::with_capacity(n);
        for k in 0..n {
            let mut e = Array2::<C32>::zeros((16, 16));
            e[[k / 16, k % 16]] = C32::new(1.0, 0.0);
            columns.push(op.apply_adjoint(&op.apply(&e.into_dyn()).unwrap()).unwrap());
        }
        let mut h = nalgebra::DMatrix::<f64>::zeros(2 * n, 2 * n);
        for col in 0..n {
            for row in 0..n {
                let v = columns[col][[row / 16, row % 16]];
                h[(row, col)] = v.re as f64;
                h[(row + n, col)] = v.im as f64;
                h[(row, col + n)] = -v.im as f64;
                h[(row + n, col + n)] = v.re as f64;
            }
        }
        // Symmetrize away float asymmetry before the eigensolve.
        let hs = (&h + h.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::new(hs);
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
        let est = normal_op_power_iteration(&op, 20, 0).unwrap();
        assert!(
            est >= 0.5 * lmax && est <= 1.5 * lmax,
            "power iteration {est} vs dense {lmax}"
        );
    }

    #[test]
    fn r2_method_ordering_classical() {
        // Mean PSNR over a small suite: l1-wavelet > cg-sense > gridding.
        let mut cg = Vec::new();
        let mut l1 = Vec::new();
        let mut grid = Vec::new();
        for seed in 0..6 {
            let (case, op) = small_case((32, 32), 2.0, 8, 0.01, 200 + seed);
            let w = density_compensation(op.plan()).unwrap();
            let g = gridding_recon(&op, &w, &case.y).unwrap();
            let c = cg_sense(&op, &case.y, 1e-4, 50, 1e-6).unwrap();
            let f = l1_wavelet_recon(&op, &case.y, 2e-3, 60).unwrap();
            grid.push(magnitude_psnr(&case.truth, &g).unwrap());
            cg.push(magnitude_psnr(&case.truth, &c.image).unwrap());
            l1.push(magnitude_psnr(&case.truth, &f.image).unwrap());
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&cg) > mean(&grid),
            "cg {} should beat gridding {}",
            mean(&cg),
            mean(&grid)
        );
        assert!(
            mean(&l1) > mean(&cg),
            "l1-wavelet {} should beat cg {}",
            mean(&l1),
            mean(&cg)
        );
    }
}
