//! Inhomogeneous ensembles: seeded detuning draws and ordered reductions.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::state::{CMatrix, Detunings, IonState};
use crate::error::{Error, Result};

/// `FWHM / sigma` of a Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Gaussian inhomogeneous broadening of the three detunings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_ions: usize,
    /// Hz
    pub optical_fwhm: f64,
    /// Hz
    pub spin_fwhm: f64,
    /// Hz
    pub ee_fwhm: f64,
    pub seed: u64,
    /// Draw ions in pairs with opposite detunings.
    #[serde(default)]
    pub antithetic: bool,
    /// Latin-hypercube draws: each detuning axis is split into `n_ions`
    /// equal-probability strata, one ion per stratum, paired across axes by
    /// seeded permutations. Takes precedence over `antithetic`.
    #[serde(default)]
    pub stratified: bool,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_ions == 0 {
            return Err(Error::Validation("ensemble needs at least one ion".into()));
        }
        for (name, w) in [
            ("optical_fwhm", self.optical_fwhm),
            ("spin_fwhm", self.spin_fwhm),
            ("ee_fwhm", self.ee_fwhm),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Validation(format!("{name} must be non-negative, got {w}")));
            }
        }
        Ok(())
    }

    /// Detuning ranges `(optical, spin, ee)` covering `k` standard deviations.
    pub fn bounds(&self, k: f64) -> [f64; 3] {
        [self.optical_fwhm, self.spin_fwhm, self.ee_fwhm].map(|w| k * w / FWHM_PER_SIGMA)
    }
}

/// Detunings of ion `i`; depends only on `(seed, i)`.
pub fn ion_detunings(spec: &EnsembleSpec, i: usize) -> Detunings {
    let (stream, sign) = if spec.antithetic {
        ((i / 2) as u64, if i % 2 == 0 { 1.0 } else { -1.0 })
    } else {
        (i as u64, 1.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let mut draw = |fwhm: f64| {
        let z: f64 = StandardNormal.sample(&mut rng);
        sign * z * fwhm / FWHM_PER_SIGMA
    };
    Detunings {
        optical: draw(spec.optical_fwhm),
        spin: draw(spec.spin_fwhm),
        ee: draw(spec.ee_fwhm),
    }
}

pub fn sample_detunings(spec: &EnsembleSpec) -> Result<Vec<Detunings>> {
    spec.validate()?;
    if spec.stratified {
        return Ok(stratified_detunings(spec));
    }
    Ok((0..spec.n_ions).map(|i| ion_detunings(spec, i)).collect())
}

fn stratified_detunings(spec: &EnsembleSpec) -> Vec<Detunings> {
    let n = spec.n_ions;
    let unit = Normal::standard();
    let axis = |k: u64, fwhm: f64| -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(u64::MAX - k);
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        strata
            .into_iter()
            .map(|j| {
                let u = (j as f64 + rng.gen::<f64>()) / n as f64;
                unit.inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16)) * fwhm / FWHM_PER_SIGMA
            })
            .collect()
    };
    let (o, s, e) = (axis(0, spec.optical_fwhm), axis(1, spec.spin_fwhm), axis(2, spec.ee_fwhm));
    (0..n)
        .map(|i| Detunings {
            optical: o[i],
            spin: s[i],
            ee: e[i],
        })
        .collect()
}

/// Ions with detunings drawn from `spec`, all starting in `rho0`.
pub fn sample_ensemble(spec: &EnsembleSpec, rho0: &CMatrix) -> Result<Vec<IonState>> {
    Ok(sample_detunings(spec)?
        .into_iter()
        .map(|d| IonState::new(rho0.clone(), d))
        .collect())
}

/// Maps `f` over ion indices in parallel; results keep index order.
pub fn par_map_ions<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Pairwise (cascade) sum in index order.
pub fn pairwise_sum(values: &[Complex64]) -> Complex64 {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        return values.iter().fold(Complex64::new(0.0, 0.0), |a, b| a + b);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Real-valued pairwise sum.
pub fn pairwise_sum_real(values: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum_real(&values[..mid]) + pairwise_sum_real(&values[mid..])
}

pub fn mean_complex(values: &[Complex64]) -> Result<Complex64> {
    if values.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    Ok(pairwise_sum(values) / values.len() as f64)
}

/// Mean of `rho[pair]` over the ensemble.
pub fn ensemble_mean_coherence(ions: &[IonState], pair: (usize, usize)) -> Result<Complex64> {
    if ions.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let d = ions[0].rho.nrows();
    if pair.0 >= d || pair.1 >= d {
        return Err(Error::IndexOutOfRange {
            index: pair.0.max(pair.1),
            max: d - 1,
        });
    }
    if ions.iter().any(|s| s.rho.nrows() != d) {
        return Err(Error::Validation("ions do not share a level subset".into()));
    }
    let vals: Vec<Complex64> = ions.iter().map(|s| s.rho[pair]).collect();
    mean_complex(&vals)
}

/// `|<exp(-i 2 pi delta t)>|` for Gaussian detunings of width `fwhm`.
pub fn gaussian_coherence_decay(fwhm: f64, t: f64) -> f64 {
    let x = std::f64::consts::PI * fwhm * t;
    (-x * x / (4.0 * std::f64::consts::LN_2)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::state::Subsystem;
    use crate::pulses::Level;

    fn spec(n: usize) -> EnsembleSpec {
        EnsembleSpec {
            n_ions: n,
            optical_fwhm: 0.8e6,
            spin_fwhm: 7.7e3,
            ee_fwhm: 8.4e3,
            seed: 42,
            antithetic: false,
            stratified: false,
        }
    }

    #[test]
    fn zero_width_gives_zero_detunings() {
        let mut s = spec(100);
        s.optical_fwhm = 0.0;
        s.spin_fwhm = 0.0;
        s.ee_fwhm = 0.0;
        for d in sample_detunings(&s).unwrap() {
            assert_eq!(d, Detunings::default());
        }
    }

    #[test]
    fn sample_width_matches_fwhm() {
        let d = sample_detunings(&spec(10_000)).unwrap();
        let n = d.len() as f64;
        let mean = d.iter().map(|x| x.spin).sum::<f64>() / n;
        let var = d.iter().map(|x| (x.spin - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let fwhm = FWHM_PER_SIGMA * var.sqrt();
        assert!((fwhm / 7.7e3 - 1.0).abs() < 0.03, "{fwhm}");
    }

    #[test]
    fn seeded_and_prefix_stable() {
        let a = sample_detunings(&spec(500)).unwrap();
        let b = sample_detunings(&spec(500)).unwrap();
        assert_eq!(a, b);
        let c = sample_detunings(&spec(50)).unwrap();
        assert_eq!(&a[..50], &c[..]);
        let mut other = spec(500);
        other.seed = 43;
        assert_ne!(a, sample_detunings(&other).unwrap());
    }

    #[test]
    fn antithetic_pairs_give_real_mean() {
        let mut s = spec(1000);
        s.antithetic = true;
        let sub = Subsystem::spin_pair(3, 4).unwrap();
        let mut rho0 = sub.pure_population(Level::g(3)).unwrap();
        rho0.fill(Complex64::new(0.5, 0.0));
        let t = 37e-6;
        let ions: Vec<IonState> = sample_ensemble(&s, &rho0)
            .unwrap()
            .into_iter()
            .map(|mut ion| {
                let ph = Complex64::from_polar(1.0, -std::f64::consts::TAU * ion.spin_detuning * t);
                ion.rho[(1, 0)] *= ph;
                ion
            })
            .collect();
        let m = ensemble_mean_coherence(&ions, (1, 0)).unwrap();
        assert!(m.im.abs() < 1e-15);
    }

    #[test]
    fn identical_ions_mean_is_that_ion() {
        let sub = Subsystem::spin_pair(3, 4).unwrap();
        let mut rho = sub.pure_population(Level::g(3)).unwrap();
        rho[(1, 0)] = Complex64::new(0.3, -0.2);
        let ions = vec![IonState::new(rho, Detunings::default()); 37];
        let m = ensemble_mean_coherence(&ions, (1, 0)).unwrap();
        assert!((m - Complex64::new(0.3, -0.2)).norm() < 1e-15);
        assert!(matches!(ensemble_mean_coherence(&[], (1, 0)), Err(Error::EmptyEnsemble)));
    }

    #[test]
    fn stratified_draws_cover_every_stratum() {
        let mut s = spec(1000);
        s.stratified = true;
        let d = sample_detunings(&s).unwrap();
        assert_eq!(d, sample_detunings(&s).unwrap());
        let unit = Normal::standard();
        let mut hits = vec![0usize; 1000];
        for x in &d {
            let u = unit.cdf(x.spin * FWHM_PER_SIGMA / 7.7e3);
            hits[((u * 1000.0) as usize).min(999)] += 1;
        }
        assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn stratified_dephasing_is_accurate() {
        let mut s = spec(10_000);
        s.stratified = true;
        let d = sample_detunings(&s).unwrap();
        for t in [20e-6, 60e-6, 100e-6] {
            let v: Vec<Complex64> = d
                .iter()
                .map(|x| Complex64::from_polar(1.0, -std::f64::consts::TAU * x.spin * t))
                .collect();
            let m = mean_complex(&v).unwrap().norm_sqr();
            let exact = gaussian_coherence_decay(7.7e3, t).powi(2);
            assert!((m / exact - 1.0).abs() < 0.02, "{t}: {m} vs {exact}");
        }
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let v: Vec<Complex64> = (0..1001).map(|i| Complex64::new(i as f64, -(i as f64) * 0.5)).collect();
        let s = pairwise_sum(&v);
        assert_eq!(s, Complex64::new(500_500.0, -250_250.0));
    }
}
