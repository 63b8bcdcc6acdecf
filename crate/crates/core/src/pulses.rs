//! Drive waveforms in the rotating frame and analytic properties of
//! adiabatic chirped pulses.
//!
//! Waveforms are complex Rabi envelopes `Omega(t) exp(i phi(t))` in rad/s with
//! time measured from the pulse center.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Relative tolerance for the axis-phase integrals.
pub const AXIS_PHASE_REL_TOL: f64 = 1e-9;

/// Default sech level at which the envelope is truncated.
pub const DEFAULT_TRUNCATION: f64 = 0.01;

/// Complex hyperbolic secant pulse parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChsParams {
    /// Peak Rabi frequency (rad/s).
    pub omega0: f64,
    /// Envelope rate (1/s).
    pub beta: f64,
    /// Dimensionless chirp strength.
    pub mu: f64,
    pub phi0: f64,
    /// Total duration of the truncated pulse (s).
    pub duration: f64,
    /// Lab-frame carrier (rad/s); zero in the rotating frame.
    #[serde(default)]
    pub carrier: f64,
}

impl ChsParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.omega0, self.beta, self.mu, self.phi0, self.duration, self.carrier]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Validation("non-finite CHS parameter".into()));
        }
        if self.omega0 <= 0.0 || self.beta <= 0.0 || self.duration <= 0.0 || self.mu < 0.0 {
            return Err(Error::Validation(format!(
                "CHS parameters out of range: omega0={}, beta={}, duration={}, mu={}",
                self.omega0, self.beta, self.duration, self.mu
            )));
        }
        Ok(())
    }

    pub fn with_phi0(mut self, phi0: f64) -> Self {
        self.phi0 = phi0;
        self
    }

    pub fn with_omega0(mut self, omega0: f64) -> Self {
        self.omega0 = omega0;
        self
    }

    fn inside(&self, t: f64) -> bool {
        t.abs() <= 0.5 * self.duration
    }

    /// Total instantaneous-frequency sweep in Hz (`mu beta / pi`).
    pub fn sweep_hz(&self) -> f64 {
        self.mu * self.beta / PI
    }
}

/// `-ln(sech(x))` evaluated without overflow for large `|x|`.
fn neg_ln_sech(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

/// Envelope (rad/s) and phase (rad) of a CHS pulse; zero envelope outside the support.
pub fn chs_envelope_phase(p: &ChsParams, t: f64) -> (f64, f64) {
    let phase = p.mu * neg_ln_sech(p.beta * t) + p.phi0;
    if !p.inside(t) {
        return (0.0, phase);
    }
    (p.omega0 * sech(p.beta * t), phase)
}

/// Rotating-frame complex amplitude `Omega0 sech(beta t) exp(i phi(t))`.
pub fn chs_waveform(p: &ChsParams, t: f64) -> Complex64 {
    let (env, phase) = chs_envelope_phase(p, t);
    Complex64::from_polar(env, phase)
}

/// Real lab-frame field, for plotting only.
pub fn chs_lab_field(p: &ChsParams, t: f64) -> f64 {
    let (env, phase) = chs_envelope_phase(p, t);
    env * (p.carrier * t + phase).cos()
}

/// Instantaneous detuning `-mu beta tanh(beta t)` in rad/s.
pub fn instantaneous_detuning(p: &ChsParams, t: f64) -> f64 {
    -p.mu * p.beta * (p.beta * t).tanh()
}

/// Rotation-axis phase of an adiabatic rapid passage pulse.
///
/// Returns `pi/2 - 1/2 int sqrt(Omega^2 + Delta^2) dt + (phi(-T/2) + phi(T/2))/2`
/// reduced to `[0, 2 pi)`.
pub fn arp_axis_phase<E, D>(
    envelope: E,
    detuning: D,
    phase_endpoints: (f64, f64),
    duration: f64,
) -> Result<f64>
where
    E: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    if !(duration > 0.0) {
        return Err(Error::Validation(format!("duration must be positive, got {duration}")));
    }
    let half = 0.5 * duration;
    let integral = quad::integrate(
        |t| {
            let o = envelope(t);
            let d = detuning(t);
            (o * o + d * d).sqrt()
        },
        -half,
        half,
        AXIS_PHASE_REL_TOL,
    )?;
    let raw = PI / 2.0 - 0.5 * integral + 0.5 * (phase_endpoints.0 + phase_endpoints.1);
    if !raw.is_finite() {
        return Err(Error::NonFinite("axis phase".into()));
    }
    Ok(raw.rem_euclid(TAU))
}

/// Axis phase of a CHS pulse, reduced to `[0, 2 pi)`.
pub fn chs_axis_phase(p: &ChsParams) -> f64 {
    let half = 0.5 * p.duration;
    let integral = quad::integrate(
        |t| {
            let o = p.omega0 * sech(p.beta * t);
            let d = p.mu * p.beta * (p.beta * t).tanh();
            (o * o + d * d).sqrt()
        },
        -half,
        half,
        AXIS_PHASE_REL_TOL,
    )
    .expect("CHS integrand is finite for validated parameters");
    let boundary = p.mu * neg_ln_sech(p.beta * half) + p.phi0;
    (PI / 2.0 - 0.5 * integral + boundary).rem_euclid(TAU)
}

/// Minimum over the pulse of `(Omega^2 + Delta^2)^(3/2) / |Omega' Delta - Omega Delta'|`.
pub fn adiabaticity_margin(p: &ChsParams) -> f64 {
    const N: usize = 10_000;
    let half = 0.5 * p.duration;
    let mut margin = f64::INFINITY;
    for i in 0..=N {
        let t = -half + p.duration * i as f64 / N as f64;
        let s = sech(p.beta * t);
        let th = (p.beta * t).tanh();
        let om = p.omega0 * s;
        let dom = -p.omega0 * p.beta * s * th;
        let de = -p.mu * p.beta * th;
        let dde = -p.mu * p.beta * p.beta * s * s;
        let den = (dom * de - om * dde).abs();
        if den > 0.0 {
            margin = margin.min((om * om + de * de).powf(1.5) / den);
        }
    }
    margin
}

/// CHS parameters whose chirp spans `bandwidth` Hz and whose envelope is
/// truncated at `sech(beta T/2) = truncation`.
pub fn bandwidth_to_params(
    bandwidth: f64,
    duration: f64,
    truncation: f64,
    omega0: f64,
) -> Result<ChsParams> {
    if !(bandwidth > 0.0) || !(duration > 0.0) {
        return Err(Error::Validation(format!(
            "bandwidth ({bandwidth}) and duration ({duration}) must be positive"
        )));
    }
    if !(truncation > 0.0 && truncation < 1.0) {
        return Err(Error::Validation(format!("truncation {truncation} outside (0, 1)")));
    }
    // asech(x) = acosh(1/x)
    let beta = 2.0 * (1.0 / truncation).acosh() / duration;
    if !(beta * duration > 0.0) || !beta.is_finite() {
        return Err(Error::Validation("inconsistent CHS parameters".into()));
    }
    let p = ChsParams {
        omega0,
        beta,
        mu: PI * bandwidth / beta,
        phi0: 0.0,
        duration,
        carrier: 0.0,
    };
    p.validate()?;
    Ok(p)
}

/// Levels are named by manifold and 1-based index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manifold {
    Ground,
    Excited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Level {
    pub manifold: Manifold,
    pub index: usize,
}

impl Level {
    pub const fn g(index: usize) -> Self {
        Level { manifold: Manifold::Ground, index }
    }
    pub const fn e(index: usize) -> Self {
        Level { manifold: Manifold::Excited, index }
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.manifold {
            Manifold::Ground => 'g',
            Manifold::Excited => 'e',
        };
        write!(f, "{}{}", tag, self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    Optical,
    Spin,
    ExcitedPair,
}

/// A driven pair of levels. The drive couples `lower` to `upper` with
/// `(Omega/2) exp(i phi) |upper><lower| + h.c.`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub lower: Level,
    pub upper: Level,
}

impl Transition {
    pub fn new(lower: Level, upper: Level) -> Self {
        Transition { lower, upper }
    }

    pub fn kind(&self) -> TransitionKind {
        match (self.lower.manifold, self.upper.manifold) {
            (Manifold::Ground, Manifold::Ground) => TransitionKind::Spin,
            (Manifold::Excited, Manifold::Excited) => TransitionKind::ExcitedPair,
            _ => TransitionKind::Optical,
        }
    }
}

/// Pulse envelope families. All amplitudes are peak Rabi frequencies in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum PulseShape {
    Chs(ChsParams),
    Rectangular {
        omega0: f64,
        duration: f64,
    },
    /// Constant envelope with a linear sweep of `bandwidth_hz` across the pulse.
    ChirpedRectangular {
        omega0: f64,
        duration: f64,
        bandwidth_hz: f64,
    },
    TruncatedGaussian {
        omega0: f64,
        duration: f64,
        fwhm: f64,
    },
    /// Instantaneous rotation by `area` about the equatorial axis set by the pulse phase.
    Ideal {
        area: f64,
    },
    /// Two copies of `base`, each at half field, the second delayed by
    /// `splitting` and carrying `relative_phase`.
    Pair {
        base: Box<PulseShape>,
        splitting: f64,
        relative_phase: f64,
    },
}

impl PulseShape {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        match self {
            PulseShape::Chs(p) => p.validate(),
            PulseShape::Rectangular { omega0, duration } => {
                if !(omega0.is_finite() && *omega0 >= 0.0 && *duration > 0.0) {
                    return bad(format!("rectangular pulse omega0={omega0} duration={duration}"));
                }
                Ok(())
            }
            PulseShape::ChirpedRectangular {
                omega0,
                duration,
                bandwidth_hz,
            } => {
                if !(omega0.is_finite() && *omega0 >= 0.0 && *duration > 0.0 && *bandwidth_hz >= 0.0) {
                    return bad(format!(
                        "chirped pulse omega0={omega0} duration={duration} bandwidth={bandwidth_hz}"
                    ));
                }
                Ok(())
            }
            PulseShape::TruncatedGaussian {
                omega0,
                duration,
                fwhm,
            } => {
                if !(omega0.is_finite() && *omega0 >= 0.0 && *duration > 0.0 && *fwhm > 0.0) {
                    return bad(format!("gaussian pulse omega0={omega0} duration={duration} fwhm={fwhm}"));
                }
                if fwhm >= duration {
                    return bad(format!("gaussian FWHM {fwhm} must be shorter than duration {duration}"));
                }
                Ok(())
            }
            PulseShape::Ideal { area } => {
                if !area.is_finite() {
                    return bad("non-finite ideal pulse area".into());
                }
                Ok(())
            }
            PulseShape::Pair {
                base,
                splitting,
                relative_phase,
            } => {
                if matches!(**base, PulseShape::Pair { .. }) {
                    return bad("nested pulse pairs are not supported".into());
                }
                if !(*splitting >= 0.0 && relative_phase.is_finite()) {
                    return bad(format!("pair splitting {splitting} must be non-negative"));
                }
                base.validate()
            }
        }
    }

    /// Length of the support of a single (non-pair) envelope.
    fn base_duration(&self) -> f64 {
        match self {
            PulseShape::Chs(p) => p.duration,
            PulseShape::Rectangular { duration, .. }
            | PulseShape::ChirpedRectangular { duration, .. }
            | PulseShape::TruncatedGaussian { duration, .. } => *duration,
            PulseShape::Ideal { .. } => 0.0,
            PulseShape::Pair { base, .. } => base.base_duration(),
        }
    }

    /// Support relative to the event time.
    pub fn support(&self) -> (f64, f64) {
        let half = 0.5 * self.base_duration();
        match self {
            PulseShape::Pair { splitting, .. } => (-half, splitting + half),
            _ => (-half, half),
        }
    }

    pub fn duration(&self) -> f64 {
        let (a, b) = self.support();
        b - a
    }

    pub fn is_instantaneous(&self) -> bool {
        self.base_duration() == 0.0
    }

    /// Complex Rabi amplitude at time `t` from the event time.
    pub fn drive(&self, t: f64) -> Complex64 {
        match self {
            PulseShape::Chs(p) => chs_waveform(p, t),
            PulseShape::Rectangular { omega0, duration } => {
                if t.abs() <= 0.5 * duration {
                    Complex64::new(*omega0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            PulseShape::ChirpedRectangular {
                omega0,
                duration,
                bandwidth_hz,
            } => {
                if t.abs() <= 0.5 * duration {
                    Complex64::from_polar(*omega0, PI * bandwidth_hz / duration * t * t)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            PulseShape::TruncatedGaussian {
                omega0,
                duration,
                fwhm,
            } => {
                if t.abs() <= 0.5 * duration {
                    let a = 4.0 * std::f64::consts::LN_2 / (fwhm * fwhm);
                    Complex64::new(omega0 * (-a * t * t).exp(), 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            PulseShape::Ideal { .. } => Complex64::new(0.0, 0.0),
            PulseShape::Pair {
                base,
                splitting,
                relative_phase,
            } => {
                0.5 * (base.drive(t) + Complex64::from_polar(1.0, *relative_phase) * base.drive(t - splitting))
            }
        }
    }

    /// Upper bound on `|Omega| + |d phi/dt|` in rad/s.
    pub fn max_rate(&self) -> f64 {
        match self {
            PulseShape::Chs(p) => p.omega0 + p.mu * p.beta,
            PulseShape::Rectangular { omega0, .. } | PulseShape::TruncatedGaussian { omega0, .. } => *omega0,
            PulseShape::ChirpedRectangular {
                omega0, bandwidth_hz, ..
            } => omega0 + PI * bandwidth_hz,
            PulseShape::Ideal { .. } => 0.0,
            PulseShape::Pair { base, .. } => base.max_rate(),
        }
    }

    /// Pulse area `int |Omega(t)| dt`, or the rotation angle of an ideal pulse.
    pub fn area(&self) -> f64 {
        match self {
            PulseShape::Ideal { area } => *area,
            PulseShape::Pair { base, .. } => base.area(),
            _ => {
                let (a, b) = self.support();
                quad::integrate(|t| self.drive(t).norm(), a, b, 1e-10).unwrap_or(f64::NAN)
            }
        }
    }

    /// Same shape with every Rabi amplitude multiplied by `s`.
    pub fn scaled(&self, s: f64) -> PulseShape {
        let mut out = self.clone();
        match &mut out {
            PulseShape::Chs(p) => p.omega0 *= s,
            PulseShape::Rectangular { omega0, .. }
            | PulseShape::ChirpedRectangular { omega0, .. }
            | PulseShape::TruncatedGaussian { omega0, .. } => *omega0 *= s,
            PulseShape::Ideal { area } => *area *= s,
            PulseShape::Pair { base, .. } => **base = base.scaled(s),
        }
        out
    }
}

/// Role of a pulse in a protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseRole {
    Input,
    Control,
    Rf,
    Pump,
}

/// One timed drive pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub label: String,
    pub role: PulseRole,
    #[serde(flatten)]
    pub shape: PulseShape,
    /// Event time (s): the pulse center, or the first member's center for a pair.
    pub time: f64,
    pub target: Transition,
    /// Constant phase added to the waveform (rad).
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "one")]
    pub amplitude_scale: f64,
    /// Carrier offset from the nominal transition frequency (Hz).
    #[serde(default)]
    pub frequency_offset_hz: f64,
}

fn one() -> f64 {
    1.0
}

impl PulseSpec {
    pub fn new(label: &str, role: PulseRole, shape: PulseShape, time: f64, target: Transition) -> Self {
        PulseSpec {
            label: label.to_string(),
            role,
            shape,
            time,
            target,
            phase: 0.0,
            amplitude_scale: 1.0,
            frequency_offset_hz: 0.0,
        }
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        if !(self.time.is_finite() && self.time >= 0.0) {
            return Err(Error::Validation(format!(
                "pulse '{}' time {} must be non-negative",
                self.label, self.time
            )));
        }
        if !(self.amplitude_scale.is_finite() && self.amplitude_scale >= 0.0) {
            return Err(Error::Validation(format!("pulse '{}' amplitude scale", self.label)));
        }
        if self.target.lower == self.target.upper {
            return Err(Error::Validation(format!("pulse '{}' targets a single level", self.label)));
        }
        Ok(())
    }

    /// Absolute support `[start, end]`.
    pub fn support(&self) -> (f64, f64) {
        let (a, b) = self.shape.support();
        (self.time + a, self.time + b)
    }

    /// Drive at absolute time `t` including phase, scale and carrier offset.
    pub fn drive_at(&self, t: f64) -> Complex64 {
        let rel = t - self.time;
        let extra = self.phase + TAU * self.frequency_offset_hz * rel;
        self.amplitude_scale * self.shape.drive(rel) * Complex64::from_polar(1.0, extra)
    }

    pub fn max_rate(&self) -> f64 {
        self.amplitude_scale * self.shape.max_rate() + TAU * self.frequency_offset_hz.abs()
    }

    /// Nominal rotation angle (rad).
    pub fn nominal_area(&self) -> f64 {
        self.amplitude_scale * self.shape.area()
    }
}

/// Named pulse definition as written in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum PulsePreset {
    Chs {
        duration: f64,
        /// Nominal bandwidth the pulse is quoted with (Hz).
        bandwidth_hz: f64,
        /// Chirp range actually programmed; defaults to `bandwidth_hz`.
        #[serde(default)]
        sweep_hz: Option<f64>,
        #[serde(default = "default_truncation")]
        truncation: f64,
        /// Peak Rabi frequency `Omega0 / 2 pi` (Hz).
        omega0_hz: f64,
    },
    Rectangular {
        duration: f64,
        omega0_hz: f64,
    },
    ChirpedRectangular {
        duration: f64,
        bandwidth_hz: f64,
        omega0_hz: f64,
    },
    TruncatedGaussian {
        duration: f64,
        fwhm: f64,
        /// Pulse area in rad.
        area: f64,
    },
    Ideal {
        area: f64,
    },
}

fn default_truncation() -> f64 {
    DEFAULT_TRUNCATION
}

impl PulsePreset {
    pub fn to_shape(&self) -> Result<PulseShape> {
        let shape = match *self {
            PulsePreset::Chs {
                duration,
                bandwidth_hz,
                sweep_hz,
                truncation,
                omega0_hz,
            } => PulseShape::Chs(bandwidth_to_params(
                sweep_hz.unwrap_or(bandwidth_hz),
                duration,
                truncation,
                TAU * omega0_hz,
            )?),
            PulsePreset::Rectangular { duration, omega0_hz } => PulseShape::Rectangular {
                omega0: TAU * omega0_hz,
                duration,
            },
            PulsePreset::ChirpedRectangular {
                duration,
                bandwidth_hz,
                omega0_hz,
            } => PulseShape::ChirpedRectangular {
                omega0: TAU * omega0_hz,
                duration,
                bandwidth_hz,
            },
            PulsePreset::TruncatedGaussian { duration, fwhm, area } => {
                let unit = PulseShape::TruncatedGaussian {
                    omega0: 1.0,
                    duration,
                    fwhm,
                };
                unit.validate()?;
                unit.scaled(area / unit.area())
            }
            PulsePreset::Ideal { area } => PulseShape::Ideal { area },
        };
        shape.validate()?;
        Ok(shape)
    }

    /// Nominal bandwidth used when sizing detuning ranges (Hz).
    pub fn bandwidth_hz(&self) -> Option<f64> {
        match self {
            PulsePreset::Chs { bandwidth_hz, .. } | PulsePreset::ChirpedRectangular { bandwidth_hz, .. } => {
                Some(*bandwidth_hz)
            }
            _ => None,
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            PulsePreset::Chs { duration, .. }
            | PulsePreset::Rectangular { duration, .. }
            | PulsePreset::ChirpedRectangular { duration, .. }
            | PulsePreset::TruncatedGaussian { duration, .. } => *duration,
            PulsePreset::Ideal { .. } => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rf() -> ChsParams {
        bandwidth_to_params(22e3, 3.9e-3, 0.01, TAU * 40e3).unwrap()
    }

    #[test]
    fn waveform_center_and_edges() {
        let p = rf().with_phi0(0.7);
        let (env, ph) = chs_envelope_phase(&p, 0.0);
        assert_eq!(env, p.omega0);
        assert_eq!(ph, 0.7);
        let h = p.duration / 2.0;
        let a = chs_envelope_phase(&p, -h);
        let b = chs_envelope_phase(&p, h);
        assert_relative_eq!(a.0, b.0, max_relative = 1e-14);
        assert_relative_eq!(a.0, 0.01 * p.omega0, max_relative = 1e-10);
        assert_eq!(chs_waveform(&p, 1.01 * h).norm(), 0.0);
    }

    #[test]
    fn even_phase() {
        let p = rf();
        for k in 0..50 {
            let t = k as f64 * p.duration / 100.0;
            assert_relative_eq!(chs_envelope_phase(&p, t).1, chs_envelope_phase(&p, -t).1, epsilon = 1e-12);
        }
    }

    #[test]
    fn neg_ln_sech_stable() {
        for x in [0.0, 0.3, 5.0, 20.0] {
            assert_relative_eq!(neg_ln_sech(x), (x as f64).cosh().ln(), epsilon = 1e-12);
        }
        assert!((neg_ln_sech(1000.0) - (1000.0 - std::f64::consts::LN_2)).abs() < 1e-9);
    }

    #[test]
    fn detuning_limits_and_sweep() {
        let p = bandwidth_to_params(0.8e6, 4.1e-6, 0.01, 1.0).unwrap();
        assert_eq!(instantaneous_detuning(&p, 0.0), 0.0);
        assert_relative_eq!(p.mu * p.beta, TAU * 0.4e6, max_relative = 1e-12);
        // Sweep measured far out on the tanh asymptotes.
        let far = 50.0 / p.beta;
        let sweep = (instantaneous_detuning(&p, -far) - instantaneous_detuning(&p, far)) / TAU;
        assert_relative_eq!(sweep, 0.8e6, max_relative = 1e-6);
        assert_relative_eq!(p.beta * p.duration / 2.0, (100.0f64).acosh(), max_relative = 1e-12);
    }

    #[test]
    fn bandwidth_to_params_rejects_bad_input() {
        assert!(bandwidth_to_params(0.0, 1.0, 0.01, 1.0).is_err());
        assert!(bandwidth_to_params(1.0, -1.0, 0.01, 1.0).is_err());
        assert!(bandwidth_to_params(1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn arp_constant_drive_closed_form() {
        let w0 = 2.0e5;
        let t = 3.0e-6;
        let v = arp_axis_phase(|_| w0, |_| 0.0, (0.0, 0.0), t).unwrap();
        assert_relative_eq!(v, (PI / 2.0 - w0 * t / 2.0).rem_euclid(TAU), epsilon = 1e-10);
    }

    #[test]
    fn arp_endpoint_linearity() {
        let p = rf();
        let env = |t: f64| p.omega0 * sech(p.beta * t);
        let det = |t: f64| instantaneous_detuning(&p, t);
        let a = arp_axis_phase(env, det, (0.1, 0.1), p.duration).unwrap();
        let b = arp_axis_phase(env, det, (0.4, 0.4), p.duration).unwrap();
        assert_relative_eq!((b - a).rem_euclid(TAU), 0.3, epsilon = 1e-10);
    }

    #[test]
    fn chs_axis_matches_generic_formula() {
        let p = rf().with_phi0(0.25);
        let h = p.duration / 2.0;
        let ph = chs_envelope_phase(&p, h).1;
        let generic = arp_axis_phase(
            |t| p.omega0 * sech(p.beta * t),
            |t| instantaneous_detuning(&p, t),
            (ph, ph),
            p.duration,
        )
        .unwrap();
        assert!((generic - chs_axis_phase(&p)).abs() < 1e-8);
    }

    #[test]
    fn chs_axis_phase_shift() {
        let p = rf();
        for c in [0.3, 2.0, 5.5] {
            let d = chs_axis_phase(&p.with_phi0(c)) - chs_axis_phase(&p);
            assert!((d - c).rem_euclid(TAU).min((c - d).rem_euclid(TAU)) < 1e-10);
        }
    }

    #[test]
    fn chs_unchirped_is_plain_sech() {
        let mut p = rf();
        p.mu = 0.0;
        let plain = arp_axis_phase(|t| p.omega0 * sech(p.beta * t), |_| 0.0, (0.0, 0.0), p.duration).unwrap();
        assert!((plain - chs_axis_phase(&p)).abs() < 1e-9);
    }

    #[test]
    fn margin_infinite_for_constant_fields() {
        let mut p = rf();
        p.mu = 0.0;
        p.beta = 1e-300;
        assert!(adiabaticity_margin(&p).is_infinite());
    }

    #[test]
    fn margin_monotone_in_amplitude() {
        let p = bandwidth_to_params(2.0e6, 4.1e-6, 0.01, TAU * 2.5e6).unwrap();
        let m: Vec<f64> = [1.0, 0.7, 0.4]
            .iter()
            .map(|s| adiabaticity_margin(&p.with_omega0(p.omega0 * s)))
            .collect();
        assert!(m[0] > m[1] && m[1] > m[2], "{m:?}");
    }

    #[test]
    fn gaussian_preset_area() {
        let shape = PulsePreset::TruncatedGaussian {
            duration: 3e-6,
            fwhm: 1.5e-6,
            area: 0.1,
        }
        .to_shape()
        .unwrap();
        assert_relative_eq!(shape.area(), 0.1, max_relative = 1e-9);
        let bad = PulsePreset::TruncatedGaussian {
            duration: 1e-6,
            fwhm: 1.5e-6,
            area: 0.1,
        };
        assert!(bad.to_shape().is_err());
    }

    #[test]
    fn pair_with_zero_splitting_is_base() {
        let base = PulseShape::Chs(rf());
        let pair = PulseShape::Pair {
            base: Box::new(base.clone()),
            splitting: 0.0,
            relative_phase: 0.0,
        };
        for k in -10..=10 {
            let t = k as f64 * 1.9e-4;
            assert!((pair.drive(t) - base.drive(t)).norm() < 1e-9);
        }
        assert_eq!(pair.support(), base.support());
    }

    #[test]
    fn negative_time_rejected() {
        let p = PulseSpec::new(
            "x",
            PulseRole::Control,
            PulseShape::Ideal { area: PI },
            -1.0,
            Transition::new(Level::g(3), Level::e(3)),
        );
        assert!(p.validate().is_err());
    }

    #[test]
    fn shape_serde_roundtrip() {
        let s = PulseShape::Pair {
            base: Box::new(PulseShape::Chs(rf())),
            splitting: 3e-6,
            relative_phase: 0.5,
        };
        let text = serde_json::to_string(&s).unwrap();
        let back: PulseShape = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
    }
}
