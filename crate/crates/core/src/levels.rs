//! Hyperfine level structure of the doped crystal and selection of the
//! four-level subsystem used for noiseless photon echo storage.
//!
//! Indices in the public API are 1-based and counted bottom-up within each
//! manifold, so `(3, 4)` is the ground-state spin pair and `(3, 3)` the
//! signal line of the shipped scheme.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEVELS_PER_MANIFOLD: usize = 6;

/// Row/column sums of the branching table are printed at two decimals.
pub const BRANCHING_SUM_TOLERANCE: f64 = 0.02;

/// Document form of a level scheme, as it appears in the config file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LevelSchemeDoc {
    pub ground_energies_hz: Vec<f64>,
    pub excited_energies_hz: Vec<f64>,
    #[serde(default)]
    pub optical_origin_hz: f64,
    /// `branching[g][e]`, rows are ground levels, columns excited levels.
    pub branching: Vec<Vec<f64>>,
}

/// Validated level scheme: energies, optical origin and branching ratios.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelScheme {
    ground_energies: [f64; LEVELS_PER_MANIFOLD],
    excited_energies: [f64; LEVELS_PER_MANIFOLD],
    optical_origin: f64,
    branching: [[f64; LEVELS_PER_MANIFOLD]; LEVELS_PER_MANIFOLD],
}

/// The four levels taking part in the storage protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourLevelSystem {
    /// `(g_low, g_high)`, the spin pair holding the spin-wave excitation.
    pub ground_pair: (usize, usize),
    pub signal_excited: usize,
    pub auxiliary_excited: usize,
    /// `E(g_high) - E(g_low)` in Hz.
    pub spin_frequency: f64,
    /// `f(g_low, signal_excited)` in Hz.
    pub signal_frequency: f64,
    /// `(f(g_high, signal_excited), f(g_low, auxiliary_excited))` in Hz.
    pub control_frequencies: (f64, f64),
}

fn check_index(index: usize) -> Result<usize> {
    if (1..=LEVELS_PER_MANIFOLD).contains(&index) {
        Ok(index - 1)
    } else {
        Err(Error::IndexOutOfRange {
            index,
            max: LEVELS_PER_MANIFOLD,
        })
    }
}

fn to_array(name: &str, v: &[f64]) -> Result<[f64; LEVELS_PER_MANIFOLD]> {
    v.try_into().map_err(|_| {
        Error::Validation(format!(
            "{name} must have {LEVELS_PER_MANIFOLD} entries, got {}",
            v.len()
        ))
    })
}

impl LevelScheme {
    pub fn new(
        ground_energies: [f64; LEVELS_PER_MANIFOLD],
        excited_energies: [f64; LEVELS_PER_MANIFOLD],
        optical_origin: f64,
        branching: [[f64; LEVELS_PER_MANIFOLD]; LEVELS_PER_MANIFOLD],
    ) -> Result<Self> {
        let scheme = LevelScheme {
            ground_energies,
            excited_energies,
            optical_origin,
            branching,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    /// The shipped default scheme (branching table plus placeholder energies).
    pub fn shipped() -> Self {
        crate::config::Config::shipped().scheme().expect("shipped level scheme is valid")
    }

    fn validate(&self) -> Result<()> {
        let all = self
            .ground_energies
            .iter()
            .chain(self.excited_energies.iter())
            .chain(std::iter::once(&self.optical_origin));
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("non-finite level energy".into()));
        }
        for (name, e) in [
            ("ground_energies", &self.ground_energies),
            ("excited_energies", &self.excited_energies),
        ] {
            if e.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Validation(format!("{name} must be strictly increasing")));
            }
        }
        for (g, row) in self.branching.iter().enumerate() {
            for (e, &r) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&r) || !r.is_finite() {
                    return Err(Error::Validation(format!(
                        "branching ratio R({}, {}) = {r} outside [0, 1]",
                        g + 1,
                        e + 1
                    )));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > BRANCHING_SUM_TOLERANCE {
                return Err(Error::Validation(format!(
                    "branching row {} sums to {sum:.4}",
                    g + 1
                )));
            }
        }
        for e in 0..LEVELS_PER_MANIFOLD {
            let sum: f64 = self.branching.iter().map(|row| row[e]).sum();
            if (sum - 1.0).abs() > BRANCHING_SUM_TOLERANCE {
                return Err(Error::Validation(format!(
                    "branching column {} sums to {sum:.4}",
                    e + 1
                )));
            }
        }
        Ok(())
    }

    pub fn from_doc(doc: &LevelSchemeDoc) -> Result<Self> {
        if doc.branching.len() != LEVELS_PER_MANIFOLD {
            return Err(Error::Validation(format!(
                "branching table must have {LEVELS_PER_MANIFOLD} rows, got {}",
                doc.branching.len()
            )));
        }
        let mut branching = [[0.0; LEVELS_PER_MANIFOLD]; LEVELS_PER_MANIFOLD];
        for (g, row) in doc.branching.iter().enumerate() {
            branching[g] = to_array(&format!("branching row {}", g + 1), row)?;
        }
        LevelScheme::new(
            to_array("ground_energies_hz", &doc.ground_energies_hz)?,
            to_array("excited_energies_hz", &doc.excited_energies_hz)?,
            doc.optical_origin_hz,
            branching,
        )
    }

    pub fn to_doc(&self) -> LevelSchemeDoc {
        LevelSchemeDoc {
            ground_energies_hz: self.ground_energies.to_vec(),
            excited_energies_hz: self.excited_energies.to_vec(),
            optical_origin_hz: self.optical_origin,
            branching: self.branching.iter().map(|r| r.to_vec()).collect(),
        }
    }

    pub fn ground_energy(&self, g: usize) -> Result<f64> {
        Ok(self.ground_energies[check_index(g)?])
    }

    pub fn excited_energy(&self, e: usize) -> Result<f64> {
        Ok(self.excited_energies[check_index(e)?])
    }

    pub fn optical_origin(&self) -> f64 {
        self.optical_origin
    }

    /// Branching ratio `R(g, e)`.
    pub fn branching(&self, g: usize, e: usize) -> Result<f64> {
        Ok(self.branching[check_index(g)?][check_index(e)?])
    }

    /// Frequency of the `|g> <-> |e>` optical line in Hz.
    pub fn transition_frequency(&self, g: usize, e: usize) -> Result<f64> {
        Ok(self.optical_origin + self.excited_energies[check_index(e)?]
            - self.ground_energies[check_index(g)?])
    }

    /// Selects signal and auxiliary excited levels for a given ground pair.
    ///
    /// The signal line is the strongest transition out of `g_low`. The
    /// auxiliary level maximises `R(g_low, e) * (1 - R(g_high, e))`: strong
    /// coupling to `g_low` and weak coupling to `g_high`. Ties go to the lower
    /// index.
    pub fn select_nlpe_levels(&self, zefoz_pair: (usize, usize)) -> Result<FourLevelSystem> {
        let lo = check_index(zefoz_pair.0)?;
        let hi = check_index(zefoz_pair.1)?;
        if lo == hi {
            return Err(Error::Validation("ground pair levels must be distinct".into()));
        }
        let row_lo = &self.branching[lo];
        let row_hi = &self.branching[hi];

        let signal = argmax((0..LEVELS_PER_MANIFOLD).map(|e| (e, row_lo[e])))
            .ok_or_else(|| Error::DegenerateScheme(format!("no transition out of |{}>g", lo + 1)))?;
        let auxiliary = argmax(
            (0..LEVELS_PER_MANIFOLD)
                .filter(|&e| e != signal)
                .map(|e| (e, row_lo[e] * (1.0 - row_hi[e]))),
        )
        .ok_or_else(|| Error::DegenerateScheme("all auxiliary scores are zero".into()))?;

        let (g_low, g_high) = zefoz_pair;
        Ok(FourLevelSystem {
            ground_pair: zefoz_pair,
            signal_excited: signal + 1,
            auxiliary_excited: auxiliary + 1,
            spin_frequency: self.ground_energies[hi] - self.ground_energies[lo],
            signal_frequency: self.transition_frequency(g_low, signal + 1)?,
            control_frequencies: (
                self.transition_frequency(g_high, signal + 1)?,
                self.transition_frequency(g_low, auxiliary + 1)?,
            ),
        })
    }
}

/// Index of the strictly largest positive score; earlier entries win ties.
fn argmax(scores: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores {
        if s > 0.0 && best.map_or(true, |(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Free function form of [`LevelScheme::transition_frequency`].
pub fn transition_frequency(scheme: &LevelScheme, g: usize, e: usize) -> Result<f64> {
    scheme.transition_frequency(g, e)
}

/// Free function form of [`LevelScheme::select_nlpe_levels`].
pub fn select_nlpe_levels(scheme: &LevelScheme, zefoz_pair: (usize, usize)) -> Result<FourLevelSystem> {
    scheme.select_nlpe_levels(zefoz_pair)
}

/// Parses and validates a level scheme from a TOML document.
pub fn load_level_scheme(toml_text: &str) -> Result<LevelScheme> {
    let doc: LevelSchemeDoc = toml::from_str(toml_text)?;
    LevelScheme::from_doc(&doc)
}
