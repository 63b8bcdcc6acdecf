//! Weighted nonlinear least squares for stretched-exponential decays and the
//! storage-efficiency surface.

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::echo::{absorption_factor, gaussian_intensity_factor};
use crate::error::{Error, Result};

/// Iteration cap of the Levenberg-Marquardt loop.
pub const MAX_ITERATIONS: usize = 200;
/// Relative parameter step below which a fit is converged.
pub const STEP_TOLERANCE: f64 = 1e-10;
/// Starting Mims exponents tried by [`fit_mims`].
pub const MIMS_STARTS: [f64; 4] = [0.8, 1.0, 1.5, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub t: f64,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub t31: f64,
    pub t42: f64,
    pub value: f64,
    pub sigma: f64,
}

/// Prefactor of the Mims exponent: `exp(-(t/T2)^m)` for amplitudes,
/// `exp(-2 (t/T2)^m)` for intensities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MimsPower {
    Amplitude,
    Intensity,
}

impl MimsPower {
    pub fn prefactor(self) -> f64 {
        match self {
            MimsPower::Amplitude => 1.0,
            MimsPower::Intensity => 2.0,
        }
    }
}

/// `amplitude * exp(-k (t / t2)^m)`.
pub fn mims(t: f64, amplitude: f64, t2: f64, m: f64, power: MimsPower) -> f64 {
    amplitude * (-power.prefactor() * (t / t2).powf(m)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub t2: f64,
    pub m: f64,
    pub amplitude: f64,
    /// Covariance of `(amplitude, t2, m)`.
    pub covariance: [[f64; 3]; 3],
    /// `sqrt(sum ((model - value) / sigma)^2)`.
    pub residual_norm: f64,
    pub power: MimsPower,
    pub iterations: usize,
    pub n_points: usize,
}

impl DecayFit {
    /// One-sigma errors of `(amplitude, t2, m)`.
    pub fn std_errors(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| self.covariance[i][i].max(0.0).sqrt())
    }

    pub fn eval(&self, t: f64) -> f64 {
        mims(t, self.amplitude, self.t2, self.m, self.power)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlpeFit {
    /// Hz
    pub gamma34: f64,
    /// Hz
    pub gamma23bar: f64,
    /// 1/s
    pub gamma_opt: f64,
    pub eta_control: f64,
    /// Covariance of `(gamma34, gamma23bar, gamma_opt, eta_control)`.
    pub covariance: [[f64; 4]; 4],
    pub residual_norm: f64,
    pub polished: bool,
}

impl NlpeFit {
    pub fn std_errors(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|i| self.covariance[i][i].max(0.0).sqrt())
    }
}

/// Quantities held fixed in the surface fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceFixed {
    pub d: f64,
    /// Measured efficiency `(t31, t42, eta)` used to set the control
    /// efficiency; the fitted absolute scale is used when absent.
    pub measured: Option<(f64, f64, f64)>,
    /// Finish with a joint four-parameter refinement.
    pub polish: bool,
}

struct LmOutcome {
    params: Vec<f64>,
    covariance: DMatrix<f64>,
    cost: f64,
    iterations: usize,
}

/// Minimizes `|r(p)|^2` for weighted residuals `r`, keeping each parameter
/// at or above its lower bound.
fn levenberg_marquardt<F>(residuals: F, p0: &[f64], lower: &[f64]) -> Result<LmOutcome>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let np = p0.len();
    let eval = |p: &[f64]| -> Result<DVector<f64>> {
        let r = DVector::from_vec(residuals(p));
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::Fit("non-finite residual".into()));
        }
        Ok(r)
    };
    let jacobian = |p: &[f64], r0: &DVector<f64>| -> Result<DMatrix<f64>> {
        let mut j = DMatrix::zeros(r0.len(), np);
        for k in 0..np {
            let h = 1e-7 * p[k].abs().max(1e-3);
            let mut q = p.to_vec();
            q[k] += h;
            let rp = eval(&q)?;
            q[k] = p[k] - h;
            let rm = eval(&q)?;
            j.set_column(k, &((rp - rm) / (2.0 * h)));
        }
        Ok(j)
    };
    let project = |p: &mut [f64]| {
        for (x, lo) in p.iter_mut().zip(lower) {
            if *x < *lo {
                *x = *lo;
            }
        }
    };
    let mut p = p0.to_vec();
    project(&mut p);
    let mut r = eval(&p)?;
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let j = jacobian(&p, &r)?;
        let a = j.transpose() * &j;
        let g = j.transpose() * &r;
        let mut accepted = false;
        let mut small_step = false;
        while lambda < 1e16 {
            let mut damped = a.clone();
            for k in 0..np {
                damped[(k, k)] += lambda * a[(k, k)].max(1e-300);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let mut q: Vec<f64> = p.iter().zip(delta.iter()).map(|(x, d)| x + d).collect();
            project(&mut q);
            let size: f64 = p.iter().map(|b| b * b).sum::<f64>().sqrt();
            let step = q
                .iter()
                .zip(&p)
                .map(|(a, b)| (a - b).abs() / b.abs().max(1e-8 * size).max(1e-300))
                .fold(0.0, f64::max);
            let rq = eval(&q)?;
            let cq = rq.norm_squared();
            if cq <= cost {
                small_step = step < STEP_TOLERANCE;
                p = q;
                r = rq;
                cost = cq;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
            if step < STEP_TOLERANCE {
                small_step = true;
                break;
            }
        }
        if !accepted || small_step || cost == 0.0 {
            break;
        }
    }
    let j = jacobian(&p, &r)?;
    let a = j.transpose() * &j;
    // Rank test on the column-normalized normal matrix, so that parameters
    // of very different magnitude do not look degenerate.
    let norms: Vec<f64> = (0..np).map(|k| a[(k, k)].sqrt()).collect();
    if norms.iter().any(|&n| !(n > 0.0)) {
        return Err(Error::Fit("rank-deficient Jacobian".into()));
    }
    let scaled = DMatrix::from_fn(np, np, |i, k| a[(i, k)] / (norms[i] * norms[k]));
    let svd = scaled.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-13 * smax {
        return Err(Error::Fit("rank-deficient Jacobian".into()));
    }
    let inv = svd_inverse(&scaled)?;
    let covariance = DMatrix::from_fn(np, np, |i, k| inv[(i, k)] / (norms[i] * norms[k]));
    Ok(LmOutcome {
        params: p,
        covariance,
        cost,
        iterations,
    })
}

fn svd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Fit("singular normal matrix".into()))
}

fn check_points(points: &[DataPoint], min: usize) -> Result<()> {
    if points.len() < min {
        return Err(Error::InsufficientData(format!("need at least {min} points, got {}", points.len())));
    }
    for p in points {
        if !(p.t.is_finite() && p.value.is_finite()) {
            return Err(Error::Validation(format!("non-finite data point {p:?}")));
        }
        if !(p.sigma > 0.0) {
            return Err(Error::Validation(format!("sigma must be positive, got {}", p.sigma)));
        }
    }
    if points.iter().all(|p| p.value == 0.0) {
        return Err(Error::Fit("all data values are zero".into()));
    }
    Ok(())
}

/// Rough `T2` from where the data fall to `1/e^k` of their largest value.
fn t2_guess(points: &[DataPoint], power: MimsPower) -> f64 {
    let top = points.iter().map(|p| p.value).fold(f64::MIN, f64::max);
    let target = top * (-power.prefactor()).exp();
    let mut sorted: Vec<&DataPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    sorted
        .iter()
        .find(|p| p.value <= target)
        .map(|p| p.t)
        .unwrap_or_else(|| 2.0 * sorted.last().map_or(1.0, |p| p.t))
        .max(1e-300)
}

/// Stretched-exponential fit with `(amplitude, T2, m)` free, started from
/// each exponent in [`MIMS_STARTS`]; the lowest weighted residual wins.
pub fn fit_mims(points: &[DataPoint], power: MimsPower) -> Result<DecayFit> {
    check_points(points, 4)?;
    if points.iter().any(|p| !(p.t > 0.0)) {
        return Err(Error::Validation("decay times must be positive".into()));
    }
    let top = points.iter().map(|p| p.value).fold(f64::MIN, f64::max);
    let tg = t2_guess(points, power);
    let residuals = |q: &[f64]| -> Vec<f64> {
        let (a, t2, m) = (q[0], q[1].exp(), q[2].exp());
        points.iter().map(|p| (mims(p.t, a, t2, m, power) - p.value) / p.sigma).collect()
    };
    let mut best: Option<LmOutcome> = None;
    let mut last_err = None;
    for m0 in MIMS_STARTS {
        let a0 = top * (power.prefactor() * (points[0].t / tg).powf(m0)).exp().min(10.0);
        match levenberg_marquardt(residuals, &[a0, tg.ln(), m0.ln()], &[f64::MIN, f64::MIN, f64::MIN]) {
            Ok(o) => {
                if best.as_ref().map_or(true, |b| o.cost < b.cost) {
                    best = Some(o);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let o = best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Fit("no start converged".into())))?;
    let (a, t2, m) = (o.params[0], o.params[1].exp(), o.params[2].exp());
    // Map the covariance of (a, ln t2, ln m) to (a, t2, m).
    let scale = [1.0, t2, m];
    let mut cov = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            cov[i][j] = o.covariance[(i, j)] * scale[i] * scale[j];
        }
    }
    Ok(DecayFit {
        t2,
        m,
        amplitude: a,
        covariance: cov,
        residual_norm: o.cost.sqrt(),
        power,
        iterations: o.iterations,
        n_points: points.len(),
    })
}

/// Intensity-law fit restricted to points at or after `t_min`, for data whose
/// early part is distorted.
pub fn fit_tail(points: &[DataPoint], t_min: f64) -> Result<DecayFit> {
    let tail: Vec<DataPoint> = points.iter().copied().filter(|p| p.t >= t_min).collect();
    if tail.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} points at or after t_min = {t_min} s, need 4",
            tail.len()
        )));
    }
    fit_mims(&tail, MimsPower::Intensity)
}

const GAUSS_K: f64 = PI * PI / (2.0 * LN_2);

/// Efficiency model evaluated at one point.
pub fn nlpe_surface(t31: f64, t42: f64, gamma34: f64, gamma23bar: f64, gamma_opt: f64, eta_control: f64, d: f64) -> f64 {
    absorption_factor(d)
        * eta_control.powi(4)
        * gaussian_intensity_factor(gamma34, t31)
        * gaussian_intensity_factor(gamma23bar, t42)
        * (-2.0 * gamma_opt * t42).exp()
}

/// Points of the most populated slice at fixed `key`, if it holds at least
/// four distinct values of the other coordinate.
fn best_slice<'a>(points: &'a [SurfacePoint], key: impl Fn(&SurfacePoint) -> f64, other: impl Fn(&SurfacePoint) -> f64) -> Option<(f64, Vec<&'a SurfacePoint>)> {
    let mut groups: BTreeMap<u64, Vec<&SurfacePoint>> = BTreeMap::new();
    for p in points {
        groups.entry(key(p).to_bits()).or_default().push(p);
    }
    groups
        .into_iter()
        .filter(|(_, g)| {
            let mut v: Vec<u64> = g.iter().map(|p| other(p).to_bits()).collect();
            v.sort_unstable();
            v.dedup();
            v.len() >= 4
        })
        .max_by_key(|(_, g)| g.len())
        .map(|(k, g)| (f64::from_bits(k), g))
}

/// Fits the storage-efficiency surface slice by slice: the spin width from
/// the decay along `t31` at fixed `t42`, the excited-pair width and optical
/// decoherence rate together from the decay along `t42` at fixed `t31`, and
/// finally the control efficiency from the absolute scale.
pub fn fit_nlpe_surface(points: &[SurfacePoint], fixed: &SurfaceFixed) -> Result<NlpeFit> {
    for p in points {
        if p.sigma < 0.0 {
            return Err(Error::Validation(format!("negative variance at {p:?}")));
        }
        if !(p.sigma > 0.0 && p.value.is_finite() && p.t31 >= 0.0 && p.t42 >= 0.0) {
            return Err(Error::Validation(format!("invalid surface point {p:?}")));
        }
    }
    if !(fixed.d > 0.0) {
        return Err(Error::Validation("optical depth must be positive".into()));
    }
    let (t42_fixed, s1) = best_slice(points, |p| p.t42, |p| p.t31)
        .ok_or_else(|| Error::InsufficientData("no fixed-t42 slice with 4 distinct t31 values".into()))?;
    let (t31_fixed, s2) = best_slice(points, |p| p.t31, |p| p.t42)
        .ok_or_else(|| Error::InsufficientData("no fixed-t31 slice with 4 distinct t42 values".into()))?;

    // Along t31: a1 * exp(-k s34 t31^2) with s34 = G34^2.
    let p1 = loglinear_start(&s1, |p| vec![1.0, -GAUSS_K * p.t31 * p.t31])?;
    let r1 = |q: &[f64]| -> Vec<f64> {
        s1.iter()
            .map(|p| (q[0] * (-GAUSS_K * q[1] * p.t31 * p.t31).exp() - p.value) / p.sigma)
            .collect()
    };
    let o1 = levenberg_marquardt(r1, &[p1[0].exp(), p1[1].max(0.0)], &[f64::MIN, 0.0])?;
    let (a1, g34) = (o1.params[0], o1.params[1].sqrt());

    // Along t42: a2 * exp(-k s23 t42^2 - 2 gamma t42), gamma >= 0.
    let p2 = loglinear_start(&s2, |p| vec![1.0, -GAUSS_K * p.t42 * p.t42, -2.0 * p.t42])?;
    let r2 = |q: &[f64]| -> Vec<f64> {
        s2.iter()
            .map(|p| (q[0] * (-GAUSS_K * q[1] * p.t42 * p.t42 - 2.0 * q[2] * p.t42).exp() - p.value) / p.sigma)
            .collect()
    };
    let o2 = levenberg_marquardt(r2, &[p2[0].exp(), p2[1].max(0.0), p2[2].max(0.0)], &[f64::MIN, 0.0, 0.0])?;
    let (a2, g23, gamma) = (o2.params[0], o2.params[1].sqrt(), o2.params[2]);

    let base = absorption_factor(fixed.d);
    let scale = match fixed.measured {
        Some((t31, t42, eta)) => {
            eta / (gaussian_intensity_factor(g34, t31) * gaussian_intensity_factor(g23, t42) * (-2.0 * gamma * t42).exp())
        }
        None => {
            let s_from_1 = a1 / (gaussian_intensity_factor(g23, t42_fixed) * (-2.0 * gamma * t42_fixed).exp());
            let s_from_2 = a2 / gaussian_intensity_factor(g34, t31_fixed);
            (s_from_1 * s_from_2).sqrt()
        }
    };
    if !(scale > 0.0) {
        return Err(Error::Fit("non-positive efficiency scale".into()));
    }
    let eta_c = (scale / base).powf(0.25);

    let mut cov = [[0.0; 4]; 4];
    cov[0][0] = o1.covariance[(1, 1)] / (4.0 * g34 * g34);
    cov[1][1] = o2.covariance[(1, 1)] / (4.0 * g23 * g23);
    cov[2][2] = o2.covariance[(2, 2)];
    cov[1][2] = o2.covariance[(1, 2)] / (2.0 * g23);
    cov[2][1] = cov[1][2];
    // Relative scale error from the slice amplitudes, propagated to eta_c.
    let rel_a = 0.5 * ((o1.covariance[(0, 0)] / (a1 * a1)) + (o2.covariance[(0, 0)] / (a2 * a2)));
    cov[3][3] = (0.25 * eta_c).powi(2) * rel_a;
    let mut fit = NlpeFit {
        gamma34: g34,
        gamma23bar: g23,
        gamma_opt: gamma,
        eta_control: eta_c,
        covariance: cov,
        residual_norm: surface_residual(points, [g34, g23, gamma, eta_c], fixed.d),
        polished: false,
    };

    if fixed.polish && fixed.measured.is_none() {
        let d = fixed.d;
        let r = |q: &[f64]| -> Vec<f64> {
            points
                .iter()
                .map(|p| (nlpe_surface(p.t31, p.t42, q[0].sqrt(), q[1].sqrt(), q[2], q[3], d) - p.value) / p.sigma)
                .collect()
        };
        let start = [g34 * g34, g23 * g23, gamma, eta_c];
        if let Ok(o) = levenberg_marquardt(r, &start, &[0.0, 0.0, 0.0, 0.0]) {
            let q = &o.params;
            let (a, b) = (q[0].sqrt(), q[1].sqrt());
            // Jacobian of (G34, G23, gamma, eta) with respect to the fitted
            // (G34^2, G23^2, gamma, eta).
            let jd = [0.5 / a, 0.5 / b, 1.0, 1.0];
            fit = NlpeFit {
                gamma34: a,
                gamma23bar: b,
                gamma_opt: q[2],
                eta_control: q[3],
                covariance: std::array::from_fn(|i| std::array::from_fn(|j| o.covariance[(i, j)] * jd[i] * jd[j])),
                residual_norm: o.cost.sqrt(),
                polished: true,
            };
        }
    }
    if !(fit.gamma34 > 0.0 && fit.gamma23bar > 0.0 && fit.gamma_opt >= 0.0 && fit.eta_control > 0.0) {
        return Err(Error::Fit(format!("non-physical surface fit {fit:?}")));
    }
    if fit.eta_control > 1.0 {
        return Err(Error::Fit(format!("control efficiency {} exceeds 1", fit.eta_control)));
    }
    Ok(fit)
}

/// Weighted linear fit of `ln(value)` on the given basis, used as a starting
/// point for the nonlinear slice fits.
fn loglinear_start(points: &[&SurfacePoint], basis: impl Fn(&SurfacePoint) -> Vec<f64>) -> Result<Vec<f64>> {
    let rows: Vec<&&SurfacePoint> = points.iter().filter(|p| p.value > 0.0).collect();
    let nb = basis(points[0]).len();
    if rows.len() < nb {
        return Err(Error::Fit("too few positive values for a starting estimate".into()));
    }
    let mut a = DMatrix::zeros(rows.len(), nb);
    let mut y = DVector::zeros(rows.len());
    for (i, p) in rows.iter().enumerate() {
        let w = p.value / p.sigma;
        for (k, b) in basis(p).into_iter().enumerate() {
            a[(i, k)] = w * b;
        }
        y[i] = w * p.value.ln();
    }
    let sol = a
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::Fit(format!("starting estimate: {e}")))?;
    Ok(sol.iter().copied().collect())
}

fn surface_residual(points: &[SurfacePoint], q: [f64; 4], d: f64) -> f64 {
    points
        .iter()
        .map(|p| ((nlpe_surface(p.t31, p.t42, q[0], q[1], q[2], q[3], d) - p.value) / p.sigma).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Reads `t, value, sigma` rows (with header). A missing sigma column means
/// Poisson weights `sqrt(max(value, 1))`.
pub fn read_decay_csv(path: &Path) -> Result<Vec<DataPoint>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<Option<f64>> {
            match rec.get(i) {
                None | Some("") => Ok(None),
                Some(s) => s
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|e| Error::Validation(format!("bad number '{s}': {e}"))),
            }
        };
        let t = num(0)?.ok_or_else(|| Error::Validation("missing t".into()))?;
        let value = num(1)?.ok_or_else(|| Error::Validation("missing value".into()))?;
        let sigma = num(2)?.unwrap_or_else(|| value.max(1.0).sqrt());
        out.push(DataPoint { t, value, sigma });
    }
    Ok(out)
}

/// Reads `t31, t42, value, sigma` rows (with header).
pub fn read_surface_csv(path: &Path) -> Result<Vec<SurfacePoint>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut v = [0.0; 4];
        for (i, x) in v.iter_mut().enumerate() {
            let s = rec.get(i).ok_or_else(|| Error::Validation(format!("row has {} columns, need 4", rec.len())))?;
            *x = s.parse().map_err(|e| Error::Validation(format!("bad number '{s}': {e}")))?;
        }
        out.push(SurfacePoint {
            t31: v[0],
            t42: v[1],
            value: v[2],
            sigma: v[3],
        });
    }
    Ok(out)
}

/// Mims-law data at times `ts` with seeded Gaussian noise of standard
/// deviation `rel_noise * max(y, 0.02 amplitude)`. Noiseless data carry
/// `sigma = 1e-3 amplitude`.
pub fn synthetic_decay(ts: &[f64], amplitude: f64, t2: f64, m: f64, power: MimsPower, rel_noise: f64, seed: u64) -> Vec<DataPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    ts.iter()
        .map(|&t| {
            let y = mims(t, amplitude, t2, m, power);
            let s = rel_noise * y.max(0.02 * amplitude);
            DataPoint {
                t,
                value: y + if rel_noise > 0.0 { s * unit.sample(&mut rng) } else { 0.0 },
                sigma: if rel_noise > 0.0 { s } else { 1e-3 * amplitude },
            }
        })
        .collect()
}

/// Efficiency-surface data at `(t31, t42)` pairs for `truth = [gamma34,
/// gamma23bar, gamma_opt, eta_control]`, with seeded relative Gaussian noise.
pub fn synthetic_surface(at: &[(f64, f64)], truth: [f64; 4], d: f64, rel_noise: f64, seed: u64) -> Vec<SurfacePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    at.iter()
        .map(|&(t31, t42)| {
            let y = nlpe_surface(t31, t42, truth[0], truth[1], truth[2], truth[3], d);
            let s = rel_noise * y;
            SurfacePoint {
                t31,
                t42,
                value: y + if rel_noise > 0.0 { s * unit.sample(&mut rng) } else { 0.0 },
                sigma: if rel_noise > 0.0 { s } else { 1e-4 * y },
            }
        })
        .collect()
}

/// Two crossing slices: `t31` swept at fixed `t42`, then `t42` swept at fixed `t31`.
pub fn surface_slices(t31_sweep: &[f64], t42_fixed: f64, t42_sweep: &[f64], t31_fixed: f64) -> Vec<(f64, f64)> {
    t31_sweep
        .iter()
        .map(|&a| (a, t42_fixed))
        .chain(t42_sweep.iter().map(|&b| (t31_fixed, b)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth(t2: f64, m: f64, power: MimsPower, noise: f64, seed: u64, ts: &[f64]) -> Vec<DataPoint> {
        synthetic_decay(ts, 1.0, t2, m, power, noise, seed)
    }

    fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn noiseless_exponential_is_exact() {
        let pts = synth(5.0, 1.0, MimsPower::Amplitude, 0.0, 0, &grid(0.5, 15.0, 12));
        let f = fit_mims(&pts, MimsPower::Amplitude).unwrap();
        assert!(f.residual_norm < 1e-12, "{}", f.residual_norm);
        assert!((f.t2 - 5.0).abs() < 1e-9 && (f.m - 1.0).abs() < 1e-9);
    }

    #[test]
    fn recovers_stretched_decays() {
        for (t2, m, seed) in [(18.7, 1.05, 1), (27.6, 1.70, 2), (33.1, 1.25, 3)] {
            let pts = synth(t2, m, MimsPower::Amplitude, 0.01, seed, &grid(1.0, 2.5 * t2, 20));
            let f = fit_mims(&pts, MimsPower::Amplitude).unwrap();
            assert!((f.t2 / t2 - 1.0).abs() < 0.05, "{f:?}");
            assert!((f.m / m - 1.0).abs() < 0.10, "{f:?}");
        }
    }

    #[test]
    fn too_few_points_or_zero_data_rejected() {
        let pts = synth(5.0, 1.0, MimsPower::Amplitude, 0.0, 0, &grid(1.0, 5.0, 3));
        assert!(matches!(fit_mims(&pts, MimsPower::Amplitude), Err(Error::InsufficientData(_))));
        let zeros: Vec<DataPoint> = grid(1.0, 5.0, 6)
            .into_iter()
            .map(|t| DataPoint { t, value: 0.0, sigma: 1.0 })
            .collect();
        assert!(matches!(fit_mims(&zeros, MimsPower::Amplitude), Err(Error::Fit(_))));
    }

    #[test]
    fn scale_equivariance() {
        let pts = synth(18.7, 1.05, MimsPower::Intensity, 0.01, 9, &grid(1.0, 40.0, 16));
        let a = fit_mims(&pts, MimsPower::Intensity).unwrap();
        let scaled: Vec<DataPoint> = pts
            .iter()
            .map(|p| DataPoint {
                value: 3.0 * p.value,
                sigma: 3.0 * p.sigma,
                ..*p
            })
            .collect();
        let b = fit_mims(&scaled, MimsPower::Intensity).unwrap();
        assert!((b.amplitude / a.amplitude - 3.0).abs() < 1e-6);
        assert!((b.t2 / a.t2 - 1.0).abs() < 1e-6 && (b.m / a.m - 1.0).abs() < 1e-6);
    }

    #[test]
    fn amplitude_and_intensity_views_agree() {
        let ts = grid(1.0, 40.0, 16);
        let amp = synth(18.7, 1.05, MimsPower::Amplitude, 0.01, 4, &ts);
        let int: Vec<DataPoint> = synth(18.7, 1.05, MimsPower::Intensity, 0.01, 5, &ts);
        let fa = fit_mims(&amp, MimsPower::Amplitude).unwrap();
        let fi = fit_mims(&int, MimsPower::Intensity).unwrap();
        let combined = (fa.std_errors()[1].powi(2) + fi.std_errors()[1].powi(2)).sqrt();
        assert!((fa.t2 - fi.t2).abs() < 3.0 * combined, "{} {} {combined}", fa.t2, fi.t2);
    }

    fn heated(t2: f64, m: f64, seed: u64) -> Vec<DataPoint> {
        let mut pts = synth(t2, m, MimsPower::Intensity, 0.01, seed, &grid(1.0, 60.0, 30));
        for p in &mut pts {
            if p.t < 10.0 {
                p.value *= 0.7;
            }
        }
        pts
    }

    #[test]
    fn tail_fit_sees_through_heating() {
        let pts = heated(36.3, 1.25, 11);
        let tail = fit_tail(&pts, 15.0).unwrap();
        assert!((tail.t2 / 36.3 - 1.0).abs() < 0.1 && (tail.m / 1.25 - 1.0).abs() < 0.1, "{tail:?}");
        let full = fit_mims(&pts, MimsPower::Intensity).unwrap();
        assert!((full.t2 / 36.3 - 1.0).abs() >= 0.1 || (full.m / 1.25 - 1.0).abs() >= 0.1, "{full:?}");
    }

    #[test]
    fn tail_limits() {
        let pts = heated(36.3, 1.25, 12);
        assert_eq!(fit_tail(&pts, 0.0).unwrap(), fit_mims(&pts, MimsPower::Intensity).unwrap());
        assert!(matches!(fit_tail(&pts, 100.0), Err(Error::InsufficientData(_))));
    }

    pub(crate) fn surface(noise: f64, gamma: f64, seed: u64) -> Vec<SurfacePoint> {
        let at = surface_slices(&grid(10e-6, 90e-6, 12), 13e-6, &grid(10e-6, 90e-6, 12), 15.1e-6);
        synthetic_surface(&at, [7.7e3, 8.4e3, gamma, 0.82], 1.0, noise, seed)
    }

    #[test]
    fn surface_recovery() {
        let fixed = SurfaceFixed {
            d: 1.0,
            measured: None,
            polish: true,
        };
        let f = fit_nlpe_surface(&surface(0.02, 5.9e3, 21), &fixed).unwrap();
        for (got, want) in [(f.gamma34, 7.7e3), (f.gamma23bar, 8.4e3), (f.gamma_opt, 5.9e3), (f.eta_control, 0.82)] {
            assert!((got / want - 1.0).abs() < 0.1, "{f:?}");
        }
        let exact = fit_nlpe_surface(&surface(0.0, 5.9e3, 0), &fixed).unwrap();
        assert!(exact.residual_norm < 1e-10, "{}", exact.residual_norm);
    }

    #[test]
    fn pure_gaussian_t42_decay() {
        let fixed = SurfaceFixed {
            d: 1.0,
            measured: None,
            polish: false,
        };
        let f = fit_nlpe_surface(&surface(0.0, 0.0, 0), &fixed).unwrap();
        assert!(f.gamma_opt < f.gamma23bar / 100.0, "{f:?}");
        assert!((f.gamma23bar / 8.4e3 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn t42_only_data_is_not_identifiable() {
        let pts: Vec<SurfacePoint> = surface(0.0, 5.9e3, 0).into_iter().filter(|p| p.t31 == 15.1e-6).collect();
        let fixed = SurfaceFixed {
            d: 1.0,
            measured: None,
            polish: true,
        };
        assert!(matches!(fit_nlpe_surface(&pts, &fixed), Err(Error::InsufficientData(_))));
        let mut bad = surface(0.0, 5.9e3, 0);
        bad[0].sigma = -1.0;
        assert!(matches!(fit_nlpe_surface(&bad, &fixed), Err(Error::Validation(_))));
    }

    #[test]
    fn measured_point_sets_control_efficiency() {
        let eta = nlpe_surface(15.1e-6, 13e-6, 7.7e3, 8.4e3, 5.9e3, 0.82, 1.0);
        let fixed = SurfaceFixed {
            d: 1.0,
            measured: Some((15.1e-6, 13e-6, eta)),
            polish: false,
        };
        let f = fit_nlpe_surface(&surface(0.0, 5.9e3, 0), &fixed).unwrap();
        assert!((f.eta_control - 0.82).abs() < 1e-6, "{f:?}");
    }

    #[test]
    fn csv_readers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "t,value,sigma\n1,0.5,0.01\n2,0.25,\n").unwrap();
        let pts = read_decay_csv(&p).unwrap();
        assert_eq!(pts[0], DataPoint { t: 1.0, value: 0.5, sigma: 0.01 });
        assert_eq!(pts[1].sigma, 1.0);
        let q = dir.path().join("s.csv");
        std::fs::write(&q, "t31,t42,value,sigma\n1e-5,1e-5,0.1,0.002\n").unwrap();
        assert_eq!(read_surface_csv(&q).unwrap().len(), 1);
        std::fs::write(&q, "t31,t42,value\n1e-5,1e-5,0.1\n").unwrap();
        assert!(read_surface_csv(&q).is_err());
    }
}
