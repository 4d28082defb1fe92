//! Image-quality metrics (SSIM, PSNR, NMSE) and per-method metric reports.
//!
//! PSNR uses the per-case reference peak; identical images are reported as
//! the capped sentinel 99.0 dB. SSIM uses a uniform 7x7 window over the
//! valid (fully interior) region with the dynamic range anchored to the
//! reference.

use ndarray::Array2;

use crate::error::{Error, Result};

fn check_same_shape(a: &Array2<f32>, b: &Array2<f32>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("metric inputs {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

pub const PSNR_CAP_DB: f64 = 99.0;

/// `10 log10(max(ref)^2 / MSE)`, capped at 99 dB.
pub fn psnr(reference: &Array2<f32>, test: &Array2<f32>) -> Result<f64> {
    check_same_shape(reference, test)?;
    let peak = reference.iter().fold(0.0f32, |a, &b| a.max(b)) as f64;
    if peak <= 0.0 {
        return Err(Error::Invalid("psnr: reference peak must be positive".into()));
    }
    let n = reference.len() as f64;
    let mse: f64 = reference
        .iter()
        .zip(test.iter())
        .map(|(&r, &t)| ((r - t) as f64).powi(2))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

/// `||test - ref||^2 / ||ref||^2`.
pub fn nmse(reference: &Array2<f32>, test: &Array2<f32>) -> Result<f64> {
    check_same_shape(reference, test)?;
    let denom: f64 = reference.iter().map(|&r| (r as f64).powi(2)).sum();
    if denom <= 0.0 {
        return Err(Error::Invalid("nmse: reference norm must be positive".into()));
    }
    let num: f64 = reference
        .iter()
        .zip(test.iter())
        .map(|(&r, &t)| ((t - r) as f64).powi(2))
        .sum();
    Ok(num / denom)
}

/// Mean local SSIM with a uniform `window` x `window` box over the fully
/// interior region; `k1`/`k2` are the usual stabilizers, `L` the dynamic
/// range of the reference.
pub fn ssim_with(
    reference: &Array2<f32>,
    test: &Array2<f32>,
    window: usize,
    k1: f64,
    k2: f64,
) -> Result<f64> {
    check_same_shape(reference, test)?;
    let (h, w) = reference.dim();
    if window % 2 == 0 || window == 0 {
        return Err(Error::Invalid(format!("ssim window {window} must be odd")));
    }
    if window > h || window > w {
        return Err(Error::Invalid(format!(
            "ssim window {window} larger than image {h}x{w}"
        )));
    }
    let lo = reference.iter().fold(f32::INFINITY, |a, &b| a.min(b)) as f64;
    let hi = reference.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
    let l = hi - lo;
    if l <= 0.0 {
        return Err(Error::Invalid("ssim: reference has no dynamic range".into()));
    }
    let c1 = (k1 * l).powi(2);
    let c2 = (k2 * l).powi(2);

    // Summed-area tables, one row/col of zero padding at the origin.
    let mut s1 = Array2::<f64>::zeros((h + 1, w + 1));
    let mut s2 = Array2::<f64>::zeros((h + 1, w + 1));
    let mut s11 = Array2::<f64>::zeros((h + 1, w + 1));
    let mut s22 = Array2::<f64>::zeros((h + 1, w + 1));
    let mut s12 = Array2::<f64>::zeros((h + 1, w + 1));
    for i in 0..h {
        for j in 0..w {
            let x = reference[[i, j]] as f64;
            let y = test[[i, j]] as f64;
            s1[[i + 1, j + 1]] = x + s1[[i, j + 1]] + s1[[i + 1, j]] - s1[[i, j]];
            s2[[i + 1, j + 1]] = y + s2[[i, j + 1]] + s2[[i + 1, j]] - s2[[i, j]];
            s11[[i + 1, j + 1] ] = x * x + s11[[i, j + 1]] + s11[[i + 1, j]] - s11[[i, j]];
            s22[[i + 1, j + 1]] = y * y + s22[[i, j + 1]] + s22[[i + 1, j]] - s22[[i, j]];
            s12[[i + 1, j + 1]] = x * y + s12[[i, j + 1]] + s12[[i + 1, j]] - s12[[i, j]];
        }
    }
    let boxsum = |s: &Array2<f64>, i: usize, j: usize| -> f64 {
        s[[i + window, j + window]] + s[[i, j]] - s[[i, j + window]] - s[[i + window, j]]
    };
    let n = (window * window) as f64;
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in 0..=(h - window) {
        for j in 0..=(w - window) {
            let mx = boxsum(&s1, i, j) / n;
            let my = boxsum(&s2, i, j) / n;
            let vx = boxsum(&s11, i, j) / n - mx * mx;
            let vy = boxsum(&s22, i, j) / n - my * my;
            let cxy = boxsum(&s12, i, j) / n - mx * my;
            let val = ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            acc += val;
            count += 1;
        }
    }
    Ok(acc / count as f64)
}

pub fn ssim(reference: &Array2<f32>, test: &Array2<f32>) -> Result<f64> {
    ssim_with(reference, test, 7, 0.01, 0.03)
}

/// Per-case metric row.
#[derive(Debug, Clone)]
pub struct CaseMetrics {
    pub case: String,
    pub ssim: f64,
    pub psnr: f64,
    pub nmse: f64,
}

/// Per-case and aggregate metrics for one method. NMSE values are stored
/// raw; the table rendering scales them by 1e3.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub method: String,
    pub config_hash: String,
    pub cases: Vec<CaseMetrics>,
}

#[derive(Debug, Clone, Copy)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

fn aggregate(vals: impl Iterator<Item = f64> + Clone) -> Aggregate {
    let n = vals.clone().count().max(1) as f64;
    let mean = vals.clone().sum::<f64>() / n;
    let var = vals.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Aggregate { mean, std: var.sqrt() }
}

impl MetricReport {
    pub fn evaluate<'a>(
        method: &str,
        config_hash: &str,
        pairs: impl Iterator<Item = (&'a str, &'a Array2<f32>, &'a Array2<f32>)>,
    ) -> Result<Self> {
        let mut cases = Vec::new();
        for (name, reference, test) in pairs {
            cases.push(CaseMetrics {
                case: name.to_string(),
                ssim: ssim(reference, test)?,
                psnr: psnr(reference, test)?,
                nmse: nmse(reference, test)?,
            });
        }
        Ok(Self {
            method: method.to_string(),
            config_hash: config_hash.to_string(),
            cases,
        })
    }

    pub fn ssim_agg(&self) -> Aggregate {
        aggregate(self.cases.iter().map(|c| c.ssim))
    }

    pub fn psnr_agg(&self) -> Aggregate {
        aggregate(self.cases.iter().map(|c| c.psnr))
    }

    pub fn nmse_agg(&self) -> Aggregate {
        aggregate(self.cases.iter().map(|c| c.nmse))
    }

    /// One row per case: `method,case,ssim,psnr,nmse`. Values use shortest
    /// round-trip formatting so parsing reproduces them exactly.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for c in &self.cases {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.method, c.case, c.ssim, c.psnr, c.nmse
            ));
        }
        out
    }

    pub fn table_row(&self) -> String {
        let s = self.ssim_agg();
        let p = self.psnr_agg();
        let n = self.nmse_agg();
        format!(
            "{:<12} SSIM {:.3} +- {:.3}   PSNR {:>6.3} +- {:.3} dB   NMSE(x1e3) {:.3} +- {:.3}",
            self.method,
            s.mean,
            s.std,
            p.mean,
            p.std,
            n.mean * 1e3,
            n.std * 1e3
        )
    }
}

/// Parses rows written by [`MetricReport::csv_rows`].
pub fn parse_csv_rows(text: &str) -> Result<Vec<(String, CaseMetrics)>> {
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() || line.starts_with("method,") {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(Error::Format(format!("bad metrics row: {line}")));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::Format(format!("bad number {s}: {e}")))
        };
        out.push((
            parts[0].to_string(),
            CaseMetrics {
                case: parts[1].to_string(),
                ssim: parse(parts[2])?,
                psnr: parse(parts[3])?,
                nmse: parse(parts[4])?,
            },
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_real(shape: (usize, usize), seed: u64) -> Array2<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn(shape, || rng.random::<f32>())
    }

    #[test]
    fn psnr_identical_hits_cap() {
        let a = random_real((16, 16), 1);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn psnr_closed_form() {
        let mut reference = Array2::<f32>::zeros((16, 16));
        reference[[3, 3]] = 1.0; // peak exactly 1
        let test = reference.mapv(|v| v + 0.1);
        let p = psnr(&reference, &test).unwrap();
        assert!((p - 20.0).abs() < 1e-5, "psnr {p}");
    }

    #[test]
    fn psnr_matches_loop_oracle_and_scale_invariance() {
        for seed in 0..5 {
            let a = random_real((20, 18), seed);
            let b = random_real((20, 18), seed + 100);
            let peak = a.iter().fold(0.0f32, |x, &y| x.max(y)) as f64;
            let mut mse = 0.0f64;
            for (x, y) in a.iter().zip(b.iter()) {
                mse += ((x - y) as f64).powi(2);
            }
            mse /= a.len() as f64;
            let want = 10.0 * (peak * peak / mse).log10();
            let got = psnr(&a, &b).unwrap();
            assert!((got - want).abs() < 1e-6, "psnr {got} vs {want}");

            let a2 = a.mapv(|v| v * 3.5);
            let b2 = b.mapv(|v| v * 3.5);
            let got2 = psnr(&a2, &b2).unwrap();
            assert!((got - got2).abs() < 1e-5, "psnr not scale invariant");
        }
    }

    #[test]
    fn nmse_closed_forms_and_asymmetry() {
        let a = random_real((12, 12), 3);
        assert_eq!(nmse(&a, &a).unwrap(), 0.0);
        let zero = Array2::<f32>::zeros((12, 12));
        assert!((nmse(&a, &zero).unwrap() - 1.0).abs() < 1e-12);
        let scaled = a.mapv(|v| v * 1.1);
        assert!((nmse(&a, &scaled).unwrap() - 0.01).abs() < 1e-6);
        // Not symmetric by construction.
        assert!(nmse(&zero, &a).is_err());
        let b = a.mapv(|v| v + 0.5);
        let ab = nmse(&a, &b).unwrap();
        let ba = nmse(&b, &a).unwrap();
        assert!((ab - ba).abs() > 1e-6, "nmse unexpectedly symmetric");
    }

    #[test]
    fn ssim_identical_is_one() {
        let a = random_real((16, 16), 4);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_negated_phantom_is_low() {
        // Textured phantom covering the full frame (flat zero regions would
        // score +1 against their negation and wash out the comparison).
        let n = 64usize;
        let mut mag = Array2::<f32>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                mag[[i, j]] = match (i < 32, j < 32) {
                    (true, true) => 0.3,
                    (true, false) => 0.6,
                    (false, true) => 0.8,
                    (false, false) => 0.45,
                };
            }
        }
        let neg = mag.mapv(|v| -v);
        let s = ssim(&mag, &neg).unwrap();
        assert!(s < 0.2, "ssim of negated phantom {s}");
    }

    #[test]
    fn ssim_matches_windowed_loop_oracle() {
        // Independent route: naive per-window two-pass statistics.
        let window = 7usize;
        let (k1, k2) = (0.01f64, 0.03f64);
        for seed in 0..3 {
            let a = random_real((24, 20), seed + 50);
            let b = random_real((24, 20), seed + 150);
            let lo = a.iter().fold(f32::INFINITY, |x, &y| x.min(y)) as f64;
            let hi = a.iter().fold(f32::NEG_INFINITY, |x, &y| x.max(y)) as f64;
            let l = hi - lo;
            let c1 = (k1 * l).powi(2);
            let c2 = (k2 * l).powi(2);
            let (h, w) = a.dim();
            let mut acc = 0.0;
            let mut cnt = 0.0;
            for i in 0..=(h - window) {
                for j in 0..=(w - window) {
                    let mut mx = 0.0;
                    let mut my = 0.0;
                    for di in 0..window {
                        for dj in 0..window {
                            mx += a[[i + di, j + dj]] as f64;
                            my += b[[i + di, j + dj]] as f64;
                        }
                    }
                    let n = (window * window) as f64;
                    mx /= n;
                    my /= n;
                    let mut vx = 0.0;
                    let mut vy = 0.0;
                    let mut cxy = 0.0;
                    for di in 0..window {
                        for dj in 0..window {
                            let x = a[[i + di, j + dj]] as f64 - mx;
                            let y = b[[i + di, j + dj]] as f64 - my;
                            vx += x * x;
                            vy += y * y;
                            cxy += x * y;
                        }
                    }
                    vx /= n;
                    vy /= n;
                    cxy /= n;
                    acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2));
                    cnt += 1.0;
                }
            }
            let want = acc / cnt;
            let got = ssim(&a, &b).unwrap();
            assert!((got - want).abs() < 1e-5, "ssim {got} vs oracle {want}");
        }
    }

    #[test]
    fn ssim_window_validation() {
        let a = random_real((8, 8), 9);
        assert!(ssim_with(&a, &a, 6, 0.01, 0.03).is_err());
        assert!(ssim_with(&a, &a, 9, 0.01, 0.03).is_err());
    }

    #[test]
    fn csv_roundtrip_exact() {
        let a = random_real((16, 16), 10);
        let b = random_real((16, 16), 11);
        let report = MetricReport::evaluate(
            "adjoint",
            "deadbeef",
            [("case_000", &a, &b), ("case_001", &b, &a)].into_iter(),
        )
        .unwrap();
        let text = report.csv_rows();
        let parsed = parse_csv_rows(&text).unwrap();
        assert_eq!(parsed.len(), 2);
        for (row, case) in parsed.iter().zip(report.cases.iter()) {
            assert_eq!(row.0, "adjoint");
            assert_eq!(row.1.ssim, case.ssim);
            assert_eq!(row.1.psnr, case.psnr);
            assert_eq!(row.1.nmse, case.nmse);
        }
        // Aggregates recomputable from rows.
        let mean: f64 =
            parsed.iter().map(|r| r.1.psnr).sum::<f64>() / parsed.len() as f64;
        assert!((mean - report.psnr_agg().mean).abs() < 1e-12);
    }
}
