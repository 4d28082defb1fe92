//! Synthetic multi-coil phantom data: magnitude phantoms with smooth
//! synthetic phase, analytic ring coil maps, and noisy undersampled k-space
//! produced through the SENSE encoding operator.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nufft::{plan_nufft, CoilMaps, SenseOp, Trajectory, DEFAULT_KERNEL_WIDTH, DEFAULT_OVERSAMPLING};
use crate::seed::{mix_seed, mix_seed_idx};
use crate::tensor::{standard_normal, ComplexImage, C32};
use crate::traj::{generate_vd_trajectory, SamplingSpec};

/// Fraction of the short image side that bounds the phantom support disk.
pub const SUPPORT_FRAC: f32 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomKind {
    SheppLogan,
    RandomEllipses,
}

#[derive(Debug, Clone)]
pub struct PhantomSpec {
    pub shape: (usize, usize),
    pub kind: PhantomKind,
    pub n_ellipses: usize,
    pub intensity_range: (f32, f32),
    /// Ellipse semi-axis range as a fraction of the support radius.
    pub axis_range: (f32, f32),
    pub phase_poly_degree: usize,
    /// Peak amplitude (radians) of the polynomial phase term.
    pub phase_poly_amp: f32,
    /// Amplitude (radians) of the low-frequency sinusoidal phase term.
    pub phase_sin_amp: f32,
    pub noise_sigma: f32,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn new(shape: (usize, usize), kind: PhantomKind, seed: u64) -> Self {
        Self {
            shape,
            kind,
            n_ellipses: 8,
            intensity_range: (0.15, 0.6),
            axis_range: (0.08, 0.45),
            phase_poly_degree: 2,
            phase_poly_amp: 1.0,
            phase_sin_amp: 0.5,
            noise_sigma: 0.0,
            seed,
        }
    }
}

/// Classic head phantom ellipse table: (intensity, a, b, x0, y0, phi_deg)
/// in [-1, 1] coordinates.
const SHEPP_LOGAN: [(f32, f32, f32, f32, f32, f32); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.98, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.02, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.02, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.01, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.01, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.01, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.01, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.01, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.01, 0.023, 0.046, 0.06, -0.605, 0.0),
];

struct Ellipse {
    intensity: f32,
    a: f32,
    b: f32,
    x0: f32,
    y0: f32,
    cos_phi: f32,
    sin_phi: f32,
}

impl Ellipse {
    fn contains(&self, x: f32, y: f32) -> bool {
        let dx = x - self.x0;
        let dy = y - self.y0;
        let u = dx * self.cos_phi + dy * self.sin_phi;
        let v = -dx * self.sin_phi + dy * self.cos_phi;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

fn render_ellipses(shape: (usize, usize), ellipses: &[Ellipse]) -> Array2<f32> {
    let (h, w) = shape;
    // Unit coordinates scaled so |x| = 1 sits at the support radius over the
    // largest table extent (0.92 for the classic table).
    let rs = SUPPORT_FRAC * h.min(w) as f32 / 0.92;
    let mut mag = Array2::<f32>::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let y = -((i as f32 - h as f32 / 2.0) / rs);
            let x = (j as f32 - w as f32 / 2.0) / rs;
            let mut v = 0.0;
            for e in ellipses {
                if e.contains(x, y) {
                    v += e.intensity;
                }
            }
            mag[[i, j]] = v.clamp(0.0, 1.0);
        }
    }
    mag
}

fn synth_phase(spec: &PhantomSpec, rng: &mut impl Rng) -> Array2<f32> {
    let (h, w) = spec.shape;
    let mut phase = Array2::<f32>::zeros((h, w));

    // The RNG draws happen even at zero amplitude so that the stream layout
    // (and hence everything seeded after it) does not depend on amplitudes.
    let mut coeffs = Vec::new();
    for p in 0..=spec.phase_poly_degree {
        for q in 0..=(spec.phase_poly_degree - p) {
            if p + q == 0 {
                continue;
            }
            coeffs.push((p, q, (rng.random::<f32>() * 2.0 - 1.0)));
        }
    }
    let n_terms = coeffs.len().max(1) as f32;
    let f0 = 0.5 + rng.random::<f32>();
    let f1 = 0.5 + rng.random::<f32>();
    let phi0 = rng.random::<f32>() * 2.0 * std::f32::consts::PI;

    for i in 0..h {
        for j in 0..w {
            let un = (i as f32 - h as f32 / 2.0) / (h as f32 / 2.0);
            let vn = (j as f32 - w as f32 / 2.0) / (w as f32 / 2.0);
            let mut poly = 0.0;
            for &(p, q, c) in &coeffs {
                poly += c * un.powi(p as i32) * vn.powi(q as i32);
            }
            let sin_term = (2.0 * std::f32::consts::PI * (f0 * un + f1 * vn) + phi0).sin();
            phase[[i, j]] =
                spec.phase_poly_amp * poly / n_terms + spec.phase_sin_amp * sin_term;
        }
    }
    phase
}

/// Deterministic complex phantom: superposed ellipses clipped to [0, 1] with
/// a low-order polynomial plus one low-frequency sinusoid as phase.
pub fn make_phantom(spec: &PhantomSpec) -> Result<ComplexImage> {
    let (h, w) = spec.shape;
    if h < 8 || w < 8 || h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Invalid(format!(
            "phantom shape ({h}, {w}) must be even and at least 8x8"
        )));
    }
    if spec.axis_range.0 <= 0.0 || spec.axis_range.1 <= spec.axis_range.0 {
        return Err(Error::Invalid(format!(
            "degenerate ellipse axis range {:?}",
            spec.axis_range
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, "phantom"));

    let ellipses: Vec<Ellipse> = match spec.kind {
        PhantomKind::SheppLogan => SHEPP_LOGAN
            .iter()
            .map(|&(v, a, b, x0, y0, deg)| {
                let rad = deg.to_radians();
                Ellipse {
                    intensity: v,
                    a,
                    b,
                    x0,
                    y0,
                    cos_phi: rad.cos(),
                    sin_phi: rad.sin(),
                }
            })
            .collect(),
        PhantomKind::RandomEllipses => {
            let mut es = Vec::with_capacity(spec.n_ellipses);
            // Base ellipse carrying the bulk of the support.
            let base_a = 0.55 + 0.3 * rng.random::<f32>();
            let base_b = 0.55 + 0.3 * rng.random::<f32>();
            let rad = rng.random::<f32>() * std::f32::consts::PI;
            es.push(Ellipse {
                intensity: 0.5 + 0.4 * rng.random::<f32>(),
                a: base_a * 0.92,
                b: base_b * 0.92,
                x0: 0.0,
                y0: 0.0,
                cos_phi: rad.cos(),
                sin_phi: rad.sin(),
            });
            for _ in 1..spec.n_ellipses.max(1) {
                let (lo, hi) = spec.axis_range;
                let a = (lo + (hi - lo) * rng.random::<f32>()) * 0.92;
                let b = (lo + (hi - lo) * rng.random::<f32>()) * 0.92;
                if a * rs_pixels(spec.shape) < 0.5 || b * rs_pixels(spec.shape) < 0.5 {
                    return Err(Error::Invalid(
                        "ellipse axes degenerate at this resolution".into(),
                    ));
                }
                let ctr_r = 0.5 * rng.random::<f32>();
                let ctr_t = rng.random::<f32>() * 2.0 * std::f32::consts::PI;
                let (lo_i, hi_i) = spec.intensity_range;
                let mag = lo_i + (hi_i - lo_i) * rng.random::<f32>();
                let sign = if rng.random::<f32>() < 0.5 { -1.0 } else { 1.0 };
                let rad = rng.random::<f32>() * std::f32::consts::PI;
                es.push(Ellipse {
                    intensity: sign * mag,
                    a,
                    b,
                    x0: ctr_r * ctr_t.cos(),
                    y0: ctr_r * ctr_t.sin(),
                    cos_phi: rad.cos(),
                    sin_phi: rad.sin(),
                });
            }
            es
        }
    };

    let mag = render_ellipses(spec.shape, &ellipses);
    let phase = synth_phase(spec, &mut rng);
    let mut data = Array2::<C32>::zeros(spec.shape);
    for i in 0..h {
        for j in 0..w {
            data[[i, j]] = C32::from_polar(mag[[i, j]], phase[[i, j]]);
        }
    }
    ComplexImage::new(data)
}

fn rs_pixels(shape: (usize, usize)) -> f32 {
    SUPPORT_FRAC * shape.0.min(shape.1) as f32
}

/// Analytic coil sensitivities: Gaussian lobes centered on a ring just
/// outside the FOV with a smooth per-coil linear phase, normalized to unit
/// root-sum-of-squares (the convention of estimated sensitivity maps, which
/// return unit-norm eigenvectors per voxel).
pub fn make_coil_maps(shape: (usize, usize), ncoil: usize, seed: u64) -> Result<CoilMaps> {
    if ncoil < 1 {
        return Err(Error::Invalid("need at least one coil".into()));
    }
    let (h, w) = shape;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, "coil-maps"));
    let min_side = h.min(w) as f64;
    let ring = 0.6 * min_side;
    let sigma = 0.7 * min_side;
    let mut maps = Array3::<C32>::zeros((ncoil, h, w));
    for c in 0..ncoil {
        let jitter = 0.2 * (rng.random::<f64>() - 0.5);
        let ang = 2.0 * std::f64::consts::PI * (c as f64 / ncoil as f64 + jitter / ncoil as f64);
        let cy = h as f64 / 2.0 + ring * ang.sin();
        let cx = w as f64 / 2.0 + ring * ang.cos();
        let g0 = (rng.random::<f64>() * 2.0 - 1.0) * 1.5;
        let g1 = (rng.random::<f64>() * 2.0 - 1.0) * 1.5;
        let phi0 = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
        for i in 0..h {
            for j in 0..w {
                let d2 = (i as f64 - cy).powi(2) + (j as f64 - cx).powi(2);
                let amp = (-0.5 * d2 / (sigma * sigma)).exp();
                let ph = g0 * (i as f64 - h as f64 / 2.0) / min_side
                    + g1 * (j as f64 - w as f64 / 2.0) / min_side
                    + phi0;
                maps[[c, i, j]] = C32::from_polar(amp as f32, ph as f32);
            }
        }
    }
    for i in 0..h {
        for j in 0..w {
            let mut rss = 0.0f32;
            for c in 0..ncoil {
                rss += maps[[c, i, j]].norm_sqr();
            }
            let rss = rss.sqrt();
            if rss > 0.0 {
                for c in 0..ncoil {
                    maps[[c, i, j]] /= rss;
                }
            }
        }
    }
    CoilMaps::new(maps)
}

/// A fully specified synthetic acquisition: ground truth, coil maps,
/// trajectory, and the measured multi-coil k-space.
#[derive(Debug, Clone)]
pub struct SimulatedCase {
    pub truth: ComplexImage,
    pub maps: CoilMaps,
    pub trajectory: Trajectory,
    pub y: Array2<C32>,
    pub seed: u64,
    pub noise_sigma: f32,
    pub accel: f32,
}

/// Simulates `y = E truth + eps` with `eps ~ CN(0, (sigma |DC|)^2)` i.i.d.
/// per sample and coil, where `|DC|` is the peak magnitude of the clean data.
/// All RNG streams derive from the phantom spec's seed.
pub fn simulate_case(
    phantom: &PhantomSpec,
    sampling: &SamplingSpec,
    ncoil: usize,
    noise_sigma: f32,
) -> Result<SimulatedCase> {
    if phantom.shape != sampling.image_shape {
        return Err(Error::Shape(format!(
            "phantom shape {:?} != sampling shape {:?}",
            phantom.shape, sampling.image_shape
        )));
    }
    let truth = make_phantom(phantom)?;
    let maps = make_coil_maps(phantom.shape, ncoil, phantom.seed)?;
    let trajectory = generate_vd_trajectory(sampling)?;
    let plan = plan_nufft(
        phantom.shape,
        &trajectory,
        DEFAULT_OVERSAMPLING,
        DEFAULT_KERNEL_WIDTH,
    )?;
    let op = SenseOp::new(std::sync::Arc::new(plan), std::sync::Arc::new(maps.clone()))?;
    let mut y = op.forward_coils(truth.data())?;
    if noise_sigma > 0.0 {
        let dc_ref = y.iter().map(|c| c.norm()).fold(0.0f32, f32::max);
        let comp_std = noise_sigma as f64 * dc_ref as f64 / 2f64.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(phantom.seed, "noise"));
        for v in y.iter_mut() {
            let re = standard_normal(&mut rng) * comp_std;
            let im = standard_normal(&mut rng) * comp_std;
            *v += C32::new(re as f32, im as f32);
        }
    }
    Ok(SimulatedCase {
        truth,
        maps,
        trajectory,
        y,
        seed: phantom.seed,
        noise_sigma,
        accel: sampling.accel,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct CaseManifest {
    seed: u64,
    noise_sigma: f32,
    accel: f32,
    shape: Vec<usize>,
    ncoil: usize,
    n_samples: usize,
}

/// Writes a case directory: truth, maps, trajectory, and data in the binary
/// container format plus a JSON manifest.
pub fn save_case(dir: &Path, case: &SimulatedCase) -> Result<()> {
    fs::create_dir_all(dir)?;
    crate::container::save_c64(&dir.join("truth.bin"), &case.truth.data().clone().into_dyn())?;
    crate::container::save_c64(&dir.join("maps.bin"), &case.maps.maps().clone().into_dyn())?;
    crate::container::save_f32(
        &dir.join("trajectory.bin"),
        &case.trajectory.coords().clone().into_dyn(),
    )?;
    crate::container::save_c64(&dir.join("y.bin"), &case.y.clone().into_dyn())?;
    let manifest = CaseManifest {
        seed: case.seed,
        noise_sigma: case.noise_sigma,
        accel: case.accel,
        shape: vec![case.truth.shape().0, case.truth.shape().1],
        ncoil: case.maps.ncoil(),
        n_samples: case.trajectory.len(),
    };
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

pub fn load_case(dir: &Path) -> Result<SimulatedCase> {
    let manifest: CaseManifest = serde_json::from_str(
        &fs::read_to_string(dir.join("manifest.json"))
            .map_err(|e| Error::Format(format!("{}: {e}", dir.display())))?,
    )
    .map_err(|e| Error::Format(e.to_string()))?;
    let truth = crate::container::load(&dir.join("truth.bin"))?
        .into_c64()?
        .into_dimensionality::<ndarray::Ix2>()
        .map_err(|e| Error::Format(e.to_string()))?;
    let maps = crate::container::load(&dir.join("maps.bin"))?
        .into_c64()?
        .into_dimensionality::<ndarray::Ix3>()
        .map_err(|e| Error::Format(e.to_string()))?;
    let coords = crate::container::load(&dir.join("trajectory.bin"))?
        .into_f32()?
        .into_dimensionality::<ndarray::Ix2>()
        .map_err(|e| Error::Format(e.to_string()))?;
    let y = crate::container::load(&dir.join("y.bin"))?
        .into_c64()?
        .into_dimensionality::<ndarray::Ix2>()
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok(SimulatedCase {
        truth: ComplexImage::new(truth)?,
        maps: CoilMaps::new(maps)?,
        trajectory: Trajectory::new(coords, manifest.accel)?,
        y,
        seed: manifest.seed,
        noise_sigma: manifest.noise_sigma,
        accel: manifest.accel,
    })
}

/// Dataset layout and acquisition settings for `simulate`.
#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub n_train: usize,
    pub n_eval: usize,
    pub size: usize,
    pub ncoil: usize,
    pub accel: f32,
    pub noise_sigma: f32,
    pub seed: u64,
    pub kind: PhantomKind,
    /// One trajectory shared across the dataset (default) or a fresh
    /// trajectory per example.
    pub per_example_trajectory: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_train: 20,
            n_eval: 10,
            size: 64,
            ncoil: 8,
            accel: 2.0,
            noise_sigma: 0.005,
            seed: 0,
            kind: PhantomKind::RandomEllipses,
            per_example_trajectory: false,
        }
    }
}

/// Generates `train/case_###` and `eval/case_###` directories.
pub fn simulate_dataset(cfg: &DatasetConfig, out: &Path) -> Result<()> {
    let shape = (cfg.size, cfg.size);
    let write_split = |split: &str, count: usize, tag: &str| -> Result<()> {
        for i in 0..count {
            let case_seed = mix_seed_idx(cfg.seed, tag, i as u64);
            let traj_seed = if cfg.per_example_trajectory {
                mix_seed_idx(cfg.seed, "trajectory", case_seed)
            } else {
                mix_seed(cfg.seed, "trajectory")
            };
            let mut phantom = PhantomSpec::new(shape, cfg.kind, case_seed);
            phantom.noise_sigma = cfg.noise_sigma;
            let sampling = SamplingSpec::new(shape, cfg.accel, traj_seed);
            let case = simulate_case(&phantom, &sampling, cfg.ncoil, cfg.noise_sigma)?;
            save_case(&out.join(split).join(format!("case_{i:03}")), &case)?;
        }
        Ok(())
    };
    write_split("train", cfg.n_train, "train-case")?;
    write_split("eval", cfg.n_eval, "eval-case")?;
    Ok(())
}

/// Case directories of a dataset split, in index order.
pub fn list_cases(dataset: &Path, split: &str) -> Result<Vec<std::path::PathBuf>> {
    let dir = dataset.join(split);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .map_err(|e| Error::Format(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nufft::NdftSenseOp;
    use crate::tensor::LinearOperator;

    #[test]
    fn zero_phase_amplitude_gives_real_phantom() {
        let mut spec = PhantomSpec::new((32, 32), PhantomKind::RandomEllipses, 3);
        spec.phase_poly_amp = 0.0;
        spec.phase_sin_amp = 0.0;
        let img = make_phantom(&spec).unwrap();
        assert!(img.data().iter().all(|c| c.im == 0.0));
    }

    #[test]
    fn shepp_logan_peak_magnitude_is_one() {
        let spec = PhantomSpec::new((64, 64), PhantomKind::SheppLogan, 0);
        let img = make_phantom(&spec).unwrap();
        let peak = img.magnitude().iter().fold(0.0f32, |a, &b| a.max(b));
        assert_eq!(peak, 1.0);
    }

    #[test]
    fn distinct_seeds_give_distinct_phantoms() {
        let a = make_phantom(&PhantomSpec::new((64, 64), PhantomKind::RandomEllipses, 1)).unwrap();
        let b = make_phantom(&PhantomSpec::new((64, 64), PhantomKind::RandomEllipses, 2)).unwrap();
        let ma = a.magnitude();
        let mb = b.magnitude();
        let mean_a = ma.mean().unwrap();
        let mean_b = mb.mean().unwrap();
        let mut num = 0.0f64;
        let mut da = 0.0f64;
        let mut db = 0.0f64;
        for (x, y) in ma.iter().zip(mb.iter()) {
            num += ((x - mean_a) * (y - mean_b)) as f64;
            da += ((x - mean_a) * (x - mean_a)) as f64;
            db += ((y - mean_b) * (y - mean_b)) as f64;
        }
        let ncc = num / (da.sqrt() * db.sqrt());
        assert!(ncc < 0.995, "phantoms too similar: ncc = {ncc}");
    }

    #[test]
    fn degenerate_axes_rejected() {
        let mut spec = PhantomSpec::new((32, 32), PhantomKind::RandomEllipses, 0);
        spec.axis_range = (0.0, 0.3);
        assert!(make_phantom(&spec).is_err());
        spec.axis_range = (0.001, 0.002);
        assert!(make_phantom(&spec).is_err());
    }

    #[test]
    fn single_coil_is_unit_magnitude() {
        let maps = make_coil_maps((32, 32), 1, 5).unwrap();
        for v in maps.maps() {
            assert!((v.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn eight_coil_rss_bounded_inside_support() {
        let maps = make_coil_maps((64, 64), 8, 5).unwrap();
        let rss = maps.rss();
        let rs = rs_pixels((64, 64));
        let mut lo = f32::INFINITY;
        let mut hi = 0.0f32;
        for i in 0..64 {
            for j in 0..64 {
                let d = ((i as f32 - 32.0).powi(2) + (j as f32 - 32.0).powi(2)).sqrt();
                if d <= rs {
                    lo = lo.min(rss[[i, j]]);
                    hi = hi.max(rss[[i, j]]);
                }
            }
        }
        assert!(lo >= 0.1, "rss lower bound {lo}");
        assert!(hi / lo <= 20.0, "rss dynamic range {}", hi / lo);

        // Normalization must not flatten the per-coil structure that gives
        // SENSE its spatial encoding.
        let m = maps.maps();
        for c in 0..8 {
            let mut lo_c = f32::INFINITY;
            let mut hi_c = 0.0f32;
            for i in 0..64 {
                for j in 0..64 {
                    let v = m[[c, i, j]].norm();
                    lo_c = lo_c.min(v);
                    hi_c = hi_c.max(v);
                }
            }
            assert!(hi_c / lo_c.max(1e-6) > 1.5, "coil {c} has no spatial variation");
        }
    }

    #[test]
    fn coil_maps_deterministic() {
        let a = make_coil_maps((32, 32), 8, 9).unwrap();
        let b = make_coil_maps((32, 32), 8, 9).unwrap();
        assert_eq!(a.maps(), b.maps());
    }

    #[test]
    fn noiseless_data_matches_direct_transform() {
        let shape = (16, 16);
        let phantom = PhantomSpec::new(shape, PhantomKind::RandomEllipses, 11);
        let sampling = SamplingSpec::new(shape, 2.0, 12);
        let case = simulate_case(&phantom, &sampling, 2, 0.0).unwrap();
        let op = NdftSenseOp::<f32>::new(case.trajectory.clone(), &case.maps).unwrap();
        let want = op
            .apply(&case.truth.data().clone().into_dyn())
            .unwrap()
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap();
        let peak = want.iter().map(|c| c.norm()).fold(0.0f32, f32::max);
        let err = case
            .y
            .iter()
            .zip(want.iter())
            .map(|(a, b)| (a - b).norm() / peak)
            .fold(0.0f32, f32::max);
        assert!(err <= 1e-3, "simulated data deviates from oracle by {err}");
    }

    #[test]
    fn noise_level_matches_target() {
        let shape = (64, 64);
        let phantom = PhantomSpec::new(shape, PhantomKind::RandomEllipses, 13);
        let sampling = SamplingSpec::new(shape, 2.0, 14);
        let clean = simulate_case(&phantom, &sampling, 8, 0.0).unwrap();
        let noisy = simulate_case(&phantom, &sampling, 8, 0.01).unwrap();
        let dc = clean.y.iter().map(|c| c.norm()).fold(0.0f32, f32::max);
        let target = 0.01 * dc;
        let n = (clean.y.len() * 2) as f64;
        let var: f64 = noisy
            .y
            .iter()
            .zip(clean.y.iter())
            .map(|(a, b)| (a - b).norm_sqr() as f64)
            .sum::<f64>()
            / (n / 2.0);
        let std = var.sqrt();
        let rel = (std - target as f64).abs() / target as f64;
        assert!(rel < 0.10, "noise std {std} vs target {target}");
    }

    #[test]
    fn cases_bit_identical_per_seed() {
        let shape = (16, 16);
        let phantom = PhantomSpec::new(shape, PhantomKind::RandomEllipses, 17);
        let sampling = SamplingSpec::new(shape, 2.0, 18);
        let a = simulate_case(&phantom, &sampling, 2, 0.02).unwrap();
        let b = simulate_case(&phantom, &sampling, 2, 0.02).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.truth.data(), b.truth.data());
    }

    #[test]
    fn case_roundtrips_through_directory() {
        let shape = (16, 16);
        let phantom = PhantomSpec::new(shape, PhantomKind::RandomEllipses, 19);
        let sampling = SamplingSpec::new(shape, 2.0, 20);
        let case = simulate_case(&phantom, &sampling, 2, 0.01).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_case(dir.path(), &case).unwrap();
        let back = load_case(dir.path()).unwrap();
        assert_eq!(case.y, back.y);
        assert_eq!(case.truth.data(), back.truth.data());
        assert_eq!(case.trajectory.coords(), back.trajectory.coords());
        assert_eq!(case.maps.maps(), back.maps.maps());
    }

    #[test]
    fn dataset_generation_distinct_cases() {
        let cfg = DatasetConfig {
            n_train: 3,
            n_eval: 2,
            size: 16,
            ncoil: 2,
            noise_sigma: 0.0,
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        simulate_dataset(&cfg, dir.path()).unwrap();
        let train = list_cases(dir.path(), "train").unwrap();
        let eval = list_cases(dir.path(), "eval").unwrap();
        assert_eq!(train.len(), 3);
        assert_eq!(eval.len(), 2);
        let a = load_case(&train[0]).unwrap();
        let b = load_case(&train[1]).unwrap();
        assert_ne!(a.truth.data(), b.truth.data());
        // Shared trajectory mode: same coordinates across cases.
        assert_eq!(a.trajectory.coords(), b.trajectory.coords());
    }
}
