use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::{FourLevelSystem, LevelScheme};
use crate::pulses::{Level, Manifold, Transition};

pub type CMatrix = DMatrix<Complex64>;

/// Largest supported level subset.
pub const MAX_LEVELS: usize = 12;

/// Static frequency offsets of one ion (Hz).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Detunings {
    pub optical: f64,
    pub spin: f64,
    pub ee: f64,
}

/// Ordered subset of levels an ion is simulated on.
///
/// Each level's static offset is a linear combination of the ion's three
/// detunings: excited levels carry the optical offset, `spin_upper` carries the
/// spin offset and `ee_upper` additionally carries the excited-pair offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsystem {
    levels: Vec<Level>,
    spin_upper: Option<Level>,
    ee_upper: Option<Level>,
    /// `decay[g][e]`: fraction of decay from position `e` landing in position `g`.
    decay: Vec<Vec<f64>>,
}

impl Subsystem {
    pub fn new(
        levels: Vec<Level>,
        spin_upper: Option<Level>,
        ee_upper: Option<Level>,
        scheme: Option<&LevelScheme>,
    ) -> Result<Self> {
        let d = levels.len();
        if d < 2 || d > MAX_LEVELS {
            return Err(Error::Validation(format!("subsystem must have 2..={MAX_LEVELS} levels, got {d}")));
        }
        for (i, l) in levels.iter().enumerate() {
            if !(1..=6).contains(&l.index) {
                return Err(Error::IndexOutOfRange { index: l.index, max: 6 });
            }
            if levels[..i].contains(l) {
                return Err(Error::Validation(format!("level {l} listed twice")));
            }
        }
        for (name, l) in [("spin_upper", spin_upper), ("ee_upper", ee_upper)] {
            if let Some(l) = l {
                if !levels.contains(&l) {
                    return Err(Error::Validation(format!("{name} {l} not in subsystem")));
                }
            }
        }
        let mut decay = vec![vec![0.0; d]; d];
        for (ie, le) in levels.iter().enumerate() {
            if le.manifold != Manifold::Excited {
                continue;
            }
            let grounds: Vec<usize> = (0..d).filter(|&i| levels[i].manifold == Manifold::Ground).collect();
            let weights: Vec<f64> = grounds
                .iter()
                .map(|&ig| match scheme {
                    Some(s) => s.branching(levels[ig].index, le.index).unwrap_or(0.0),
                    None => 1.0,
                })
                .collect();
            let total: f64 = weights.iter().sum();
            for (k, &ig) in grounds.iter().enumerate() {
                decay[ig][ie] = if total > 0.0 {
                    weights[k] / total
                } else {
                    1.0 / grounds.len() as f64
                };
            }
        }
        Ok(Subsystem {
            levels,
            spin_upper,
            ee_upper,
            decay,
        })
    }

    /// The four levels of the storage protocol, ordered
    /// `[g_low, g_high, e_aux, e_signal]`.
    pub fn nlpe(four: &FourLevelSystem, scheme: &LevelScheme) -> Result<Self> {
        let (lo, hi) = four.ground_pair;
        Subsystem::new(
            vec![
                Level::g(lo),
                Level::g(hi),
                Level::e(four.auxiliary_excited),
                Level::e(four.signal_excited),
            ],
            Some(Level::g(hi)),
            Some(Level::e(four.auxiliary_excited)),
            Some(scheme),
        )
    }

    /// Two ground levels, the lower one at zero offset.
    pub fn spin_pair(lower: usize, upper: usize) -> Result<Self> {
        Subsystem::new(vec![Level::g(lower), Level::g(upper)], Some(Level::g(upper)), None, None)
    }

    /// One ground and one excited level.
    pub fn optical_pair(g: usize, e: usize) -> Result<Self> {
        Subsystem::new(vec![Level::g(g), Level::e(e)], None, None, None)
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn position(&self, level: Level) -> Result<usize> {
        self.levels
            .iter()
            .position(|&l| l == level)
            .ok_or_else(|| Error::Validation(format!("level {level} not in subsystem")))
    }

    pub fn positions(&self, t: &Transition) -> Result<(usize, usize)> {
        Ok((self.position(t.lower)?, self.position(t.upper)?))
    }

    /// Coefficients of `(optical, spin, ee)` in the level's offset.
    pub fn offset_coeffs(&self, level: Level) -> [f64; 3] {
        let mut c = [0.0; 3];
        if level.manifold == Manifold::Excited {
            c[0] = 1.0;
        }
        if Some(level) == self.spin_upper {
            c[1] = 1.0;
        }
        if Some(level) == self.ee_upper {
            c[2] = 1.0;
        }
        c
    }

    pub fn offset_hz(&self, level: Level, det: &Detunings) -> f64 {
        let c = self.offset_coeffs(level);
        c[0] * det.optical + c[1] * det.spin + c[2] * det.ee
    }

    /// Rotating-frame energies (rad/s) of every level for one ion.
    pub fn energies(&self, det: &Detunings) -> Vec<f64> {
        self.levels.iter().map(|&l| TAU * self.offset_hz(l, det)).collect()
    }

    pub fn decay_weight(&self, ground_pos: usize, excited_pos: usize) -> f64 {
        self.decay[ground_pos][excited_pos]
    }

    pub fn is_excited(&self, pos: usize) -> bool {
        self.levels[pos].manifold == Manifold::Excited
    }

    /// Density matrix with all population in `level`.
    pub fn pure_population(&self, level: Level) -> Result<CMatrix> {
        let i = self.position(level)?;
        let d = self.dim();
        let mut rho = CMatrix::zeros(d, d);
        rho[(i, i)] = Complex64::new(1.0, 0.0);
        Ok(rho)
    }
}

/// Dephasing and decay rates shared by all ions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceSpec {
    /// Amplitude decay rate of coherences involving an excited level (1/s).
    #[serde(default)]
    pub optical_dephasing_rate: f64,
    /// Amplitude decay rate of ground-ground coherences (1/s).
    #[serde(default)]
    pub spin_dephasing_rate: f64,
    /// Excited-state population lifetime (s); `None` disables decay.
    #[serde(default)]
    pub excited_lifetime: Option<f64>,
}

impl DecoherenceSpec {
    pub fn none() -> Self {
        DecoherenceSpec::default()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.optical_dephasing_rate >= 0.0
            && self.spin_dephasing_rate >= 0.0
            && self.excited_lifetime.map_or(true, |t| t > 0.0);
        if !ok {
            return Err(Error::Validation(format!("invalid decoherence rates {self:?}")));
        }
        Ok(())
    }

    pub fn is_none(&self) -> bool {
        self.optical_dephasing_rate == 0.0 && self.spin_dephasing_rate == 0.0 && self.excited_lifetime.is_none()
    }
}

/// Density matrix of one ion plus its static detunings.
#[derive(Debug, Clone, PartialEq)]
pub struct IonState {
    pub rho: CMatrix,
    pub optical_detuning: f64,
    pub spin_detuning: f64,
    pub ee_detuning: f64,
}

impl IonState {
    pub fn new(rho: CMatrix, det: Detunings) -> Self {
        IonState {
            rho,
            optical_detuning: det.optical,
            spin_detuning: det.spin,
            ee_detuning: det.ee,
        }
    }

    pub fn detunings(&self) -> Detunings {
        Detunings {
            optical: self.optical_detuning,
            spin: self.spin_detuning,
            ee: self.ee_detuning,
        }
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.rho - self.rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn population(&self, pos: usize) -> f64 {
        self.rho[(pos, pos)].re
    }

    /// Checks trace, hermiticity and positivity against `tol`.
    pub fn check_physical(&self, tol: f64) -> Result<()> {
        let tr = self.trace();
        if !tr.is_finite() || (tr - 1.0).abs() > tol {
            return Err(Error::NonFinite(format!("trace {tr}")));
        }
        let herm = self.hermiticity_error();
        if herm > tol {
            return Err(Error::NonFinite(format!("hermiticity error {herm:e}")));
        }
        let ev = self.min_eigenvalue();
        if ev < -tol {
            return Err(Error::NonFinite(format!("negative eigenvalue {ev:e}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nlpe_layout_and_offsets() {
        let scheme = LevelScheme::shipped();
        let four = scheme.select_nlpe_levels((3, 4)).unwrap();
        let sub = Subsystem::nlpe(&four, &scheme).unwrap();
        assert_eq!(sub.levels(), &[Level::g(3), Level::g(4), Level::e(2), Level::e(3)]);
        let det = Detunings {
            optical: 100.0,
            spin: 10.0,
            ee: 1.0,
        };
        assert_eq!(sub.offset_hz(Level::g(3), &det), 0.0);
        assert_eq!(sub.offset_hz(Level::g(4), &det), 10.0);
        assert_eq!(sub.offset_hz(Level::e(2), &det), 101.0);
        assert_eq!(sub.offset_hz(Level::e(3), &det), 100.0);
    }

    #[test]
    fn decay_weights_renormalised() {
        let scheme = LevelScheme::shipped();
        let four = scheme.select_nlpe_levels((3, 4)).unwrap();
        let sub = Subsystem::nlpe(&four, &scheme).unwrap();
        // e3 decays to g3 and g4 in ratio 0.44 : 0.14.
        let w3 = sub.decay_weight(0, 3);
        let w4 = sub.decay_weight(1, 3);
        assert!((w3 + w4 - 1.0).abs() < 1e-15);
        assert!((w3 / w4 - 0.44 / 0.14).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_subsets() {
        assert!(Subsystem::new(vec![Level::g(1)], None, None, None).is_err());
        assert!(Subsystem::new(vec![Level::g(1), Level::g(1)], None, None, None).is_err());
        assert!(Subsystem::new(vec![Level::g(1), Level::g(7)], None, None, None).is_err());
        assert!(Subsystem::new(vec![Level::g(1), Level::g(2)], Some(Level::g(3)), None, None).is_err());
    }

    #[test]
    fn physical_checks() {
        let sub = Subsystem::optical_pair(1, 1).unwrap();
        let ion = IonState::new(sub.pure_population(Level::g(1)).unwrap(), Detunings::default());
        ion.check_physical(1e-12).unwrap();
        assert!((ion.purity() - 1.0).abs() < 1e-15);
        let mut bad = ion.clone();
        bad.rho[(1, 1)] = Complex64::new(-0.5, 0.0);
        assert!(bad.check_physical(1e-9).is_err());
    }
}
