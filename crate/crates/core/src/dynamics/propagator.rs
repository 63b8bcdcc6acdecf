//! Pulse propagators on a driven level pair.
//!
//! The drive couples one pair of levels, so within that pair the evolution is
//! an SU(2) rotation times a phase. Rotations are stored as unit quaternions
//! `U = a0 I - i a . sigma` in the `(lower, upper)` basis and built with a
//! fourth-order Magnus integrator on an adaptive grid.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use super::state::{CMatrix, Detunings, Subsystem};
use crate::error::{Error, Result};
use crate::pulses::{PulseShape, PulseSpec};

/// Default local error budget per pulse, operator norm.
pub const PULSE_TOLERANCE: f64 = 1e-8;

/// Minimum samples per period of the fastest phase.
pub const SAMPLES_PER_PERIOD: f64 = 40.0;

const SQRT3_6: f64 = 0.288_675_134_594_812_9;

/// Unit quaternion representation of an SU(2) element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Su2 {
    pub a0: f64,
    pub a: [f64; 3],
}

impl Su2 {
    pub const IDENTITY: Su2 = Su2 { a0: 1.0, a: [0.0; 3] };

    /// `exp(-i v . sigma)`.
    pub fn exp(v: [f64; 3]) -> Su2 {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n < 1e-300 {
            return Su2::IDENTITY;
        }
        let (s, c) = n.sin_cos();
        let k = s / n;
        Su2 {
            a0: c,
            a: [k * v[0], k * v[1], k * v[2]],
        }
    }

    /// Rotation by `angle` about the equatorial axis at azimuth `phase`.
    pub fn rotation(angle: f64, phase: f64) -> Su2 {
        Su2::exp([0.5 * angle * phase.cos(), 0.5 * angle * phase.sin(), 0.0])
    }

    /// Product `self * rhs` (apply `rhs` first).
    #[inline]
    pub fn mul(&self, rhs: &Su2) -> Su2 {
        let (a0, a) = (self.a0, self.a);
        let (b0, b) = (rhs.a0, rhs.a);
        Su2 {
            a0: a0 * b0 - (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]),
            a: [
                a0 * b[0] + b0 * a[0] + a[1] * b[2] - a[2] * b[1],
                a0 * b[1] + b0 * a[1] + a[2] * b[0] - a[0] * b[2],
                a0 * b[2] + b0 * a[2] + a[0] * b[1] - a[1] * b[0],
            ],
        }
    }

    pub fn inverse(&self) -> Su2 {
        Su2 {
            a0: self.a0,
            a: [-self.a[0], -self.a[1], -self.a[2]],
        }
    }

    /// Operator-norm distance (equal to the quaternion Euclidean distance).
    pub fn distance(&self, other: &Su2) -> f64 {
        let d0 = self.a0 - other.a0;
        let d: f64 = (0..3).map(|i| (self.a[i] - other.a[i]).powi(2)).sum();
        (d0 * d0 + d).sqrt()
    }

    /// Distance modulo the global sign.
    pub fn distance_projective(&self, other: &Su2) -> f64 {
        let neg = Su2 {
            a0: -other.a0,
            a: [-other.a[0], -other.a[1], -other.a[2]],
        };
        self.distance(other).min(self.distance(&neg))
    }

    /// Conjugation by a z rotation: the propagator of the same pulse with its
    /// phase advanced by `phi`.
    pub fn rotate_phase(&self, phi: f64) -> Su2 {
        let (s, c) = phi.sin_cos();
        Su2 {
            a0: self.a0,
            a: [c * self.a[0] - s * self.a[1], s * self.a[0] + c * self.a[1], self.a[2]],
        }
    }

    /// Transfer probability `|U_10|^2`.
    pub fn inversion(&self) -> f64 {
        self.a[0] * self.a[0] + self.a[1] * self.a[1]
    }

    /// Equatorial azimuth of the rotation, defined modulo pi.
    pub fn axis_phase(&self) -> f64 {
        self.a[1].atan2(self.a[0])
    }

    /// 2x2 matrix in the `(lower, upper)` basis.
    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        let [x, y, z] = self.a;
        [
            [Complex64::new(self.a0, -z), Complex64::new(-y, -x)],
            [Complex64::new(y, -x), Complex64::new(self.a0, z)],
        ]
    }
}

/// Cached drive samples for one Magnus step; `hz` is supplied per ion.
#[derive(Debug, Clone, Copy)]
struct Step {
    h: f64,
    sx: f64,
    sy: f64,
    dx: f64,
    dy: f64,
    c: f64,
    /// Constant rotation vector for instantaneous kicks.
    kick: [f64; 3],
}

impl Step {
    fn magnus(h: f64, d1: Complex64, d2: Complex64) -> Step {
        // h(t) = (Omega/2)(cos phi, sin phi, hz)
        let (x1, y1) = (0.5 * d1.re, 0.5 * d1.im);
        let (x2, y2) = (0.5 * d2.re, 0.5 * d2.im);
        Step {
            h,
            sx: x1 + x2,
            sy: y1 + y2,
            dx: x1 - x2,
            dy: y2 - y1,
            c: x2 * y1 - y2 * x1,
            kick: [0.0; 3],
        }
    }

    fn kick(v: [f64; 3]) -> Step {
        Step {
            h: 0.0,
            sx: 0.0,
            sy: 0.0,
            dx: 0.0,
            dy: 0.0,
            c: 0.0,
            kick: v,
        }
    }

    #[inline]
    fn propagator(&self, hz: f64) -> Su2 {
        let s = 0.5 * self.h;
        let k = SQRT3_6 * self.h * self.h;
        Su2::exp([
            s * self.sx + k * hz * self.dy + self.kick[0],
            s * self.sy + k * hz * self.dx + self.kick[1],
            s * 2.0 * hz + k * self.c + self.kick[2],
        ])
    }
}

fn gauss_points(t: f64, h: f64) -> (f64, f64) {
    (t + (0.5 - SQRT3_6) * h, t + (0.5 + SQRT3_6) * h)
}

fn magnus_step<F: Fn(f64) -> Complex64>(drive: &F, t: f64, h: f64) -> Step {
    let (t1, t2) = gauss_points(t, h);
    Step::magnus(h, drive(t1), drive(t2))
}

/// `hz` for a pair whose upper level sits `delta_hz` above its nominal position
/// relative to the lower one.
#[inline]
pub fn hz_for(delta_hz: f64) -> f64 {
    -PI * delta_hz
}

/// Precomputed step grid for one pulse shape, reusable across ions.
///
/// The grid is built once with step-doubling error control at probe
/// detunings `{-bound, 0, +bound}`; every ion then reuses the cached drive
/// samples with its own detuning.
#[derive(Debug, Clone)]
pub struct PulsePlan {
    spec: PulseSpec,
    /// Absolute support.
    pub start: f64,
    pub end: f64,
    steps: Vec<Step>,
    /// Absolute start time of each step.
    step_starts: Vec<f64>,
}

impl PulsePlan {
    /// Builds the plan for `spec` with its constant phase removed; use
    /// [`PulsePlan::propagator`] to add it back.
    pub fn new(spec: &PulseSpec, probe_bound_hz: f64, tol: f64) -> Result<PulsePlan> {
        spec.validate()?;
        let mut base = spec.clone();
        base.phase = 0.0;
        let (start, end) = base.support();
        let mut plan = PulsePlan {
            spec: spec.clone(),
            start,
            end,
            steps: Vec::new(),
            step_starts: Vec::new(),
        };
        match &base.shape {
            PulseShape::Ideal { area } => {
                let area = area * base.amplitude_scale;
                plan.push_kick(start, area, 0.0);
            }
            PulseShape::Pair {
                base: inner,
                splitting,
                relative_phase,
            } if inner.is_instantaneous() => {
                let area = 0.5 * inner.area() * base.amplitude_scale;
                plan.push_kick(start, area, 0.0);
                if *splitting > 0.0 {
                    plan.steps.push(Step::magnus(*splitting, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)));
                    plan.step_starts.push(start);
                }
                let offset_phase = relative_phase + TAU * base.frequency_offset_hz * splitting;
                plan.push_kick(end, area, offset_phase);
            }
            _ => plan.build_adaptive(&base, probe_bound_hz.abs(), tol)?,
        }
        Ok(plan)
    }

    fn push_kick(&mut self, t: f64, area: f64, phase: f64) {
        let r = Su2::rotation(area, phase);
        // Recover the generator of the rotation.
        let n = (r.a.iter().map(|x| x * x).sum::<f64>()).sqrt();
        let ang = n.atan2(r.a0);
        let v = if n > 0.0 {
            [r.a[0] / n * ang, r.a[1] / n * ang, r.a[2] / n * ang]
        } else {
            [0.0; 3]
        };
        self.steps.push(Step::kick(v));
        self.step_starts.push(t);
    }

    fn build_adaptive(&mut self, base: &PulseSpec, bound: f64, tol: f64) -> Result<()> {
        let total = self.end - self.start;
        if total <= 0.0 {
            return Ok(());
        }
        let drive = |t: f64| base.drive_at(t);
        let fastest = base.max_rate() + TAU * bound;
        let h_max = if fastest > 0.0 {
            (TAU / (SAMPLES_PER_PERIOD * fastest)).min(total)
        } else {
            total
        };
        let probes = [hz_for(-bound), 0.0, hz_for(bound)];
        let h_min = 1e-15 * total;
        let mut t = self.start;
        let mut h = h_max;
        while t < self.end {
            let remaining = self.end - t;
            if remaining <= 1e-12 * total {
                break;
            }
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            let full = magnus_step(&drive, t, h);
            let half_a = magnus_step(&drive, t, 0.5 * h);
            let half_b = magnus_step(&drive, t + 0.5 * h, 0.5 * h);
            let mut err: f64 = 0.0;
            for &hz in &probes {
                let u1 = full.propagator(hz);
                let u2 = half_b.propagator(hz).mul(&half_a.propagator(hz));
                err = err.max(u1.distance(&u2));
            }
            if !err.is_finite() {
                return Err(Error::NonFinite(format!("pulse '{}' propagator", base.label)));
            }
            // Rounding in the error estimate sets a floor on what can be resolved.
            let allowed = (tol * h / total).max(64.0 * f64::EPSILON);
            if err <= allowed {
                self.steps.push(full);
                self.step_starts.push(t);
                t = if last { self.end } else { t + h };
                let grow = if err > 0.0 { 0.9 * (allowed / err).powf(0.2) } else { 2.0 };
                h = (h * grow.clamp(0.2, 2.0)).min(h_max);
            } else {
                let shrink = 0.9 * (allowed / err).powf(0.2);
                h *= shrink.clamp(0.1, 0.9);
                if h < h_min {
                    return Err(Error::StepUnderflow { t, h });
                }
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> &PulseSpec {
        &self.spec
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// SU(2) part of the propagator over the full pulse without the pulse's
    /// constant phase.
    pub fn base_propagator(&self, hz: f64) -> Su2 {
        let mut u = Su2::IDENTITY;
        for s in &self.steps {
            u = s.propagator(hz).mul(&u);
        }
        u
    }

    /// SU(2) part of the propagator over the full pulse.
    pub fn propagator(&self, hz: f64) -> Su2 {
        self.base_propagator(hz).rotate_phase(self.spec.phase)
    }

    /// SU(2) part of the propagator from the pulse start up to absolute time `t`.
    pub fn partial_propagator(&self, hz: f64, t: f64) -> Su2 {
        self.partial_propagators(hz, &[t])[0]
    }

    /// Partial propagators up to each of the sorted absolute times `ts`,
    /// computed in a single pass over the step grid.
    pub fn partial_propagators(&self, hz: f64, ts: &[f64]) -> Vec<Su2> {
        let mut out = Vec::with_capacity(ts.len());
        let mut base = self.spec.clone();
        base.phase = 0.0;
        let drive = |x: f64| base.drive_at(x);
        let mut u = Su2::IDENTITY;
        let mut k = 0;
        for &t in ts {
            if t >= self.end {
                out.push(self.propagator(hz));
                continue;
            }
            if t <= self.start {
                out.push(Su2::IDENTITY.rotate_phase(self.spec.phase));
                continue;
            }
            // Whole steps (and kicks) that finish by `t`.
            while k < self.steps.len() {
                let (st, t0) = (&self.steps[k], self.step_starts[k]);
                let done = if st.h == 0.0 { t0 <= t } else { t0 + st.h <= t };
                if !done {
                    break;
                }
                u = st.propagator(hz).mul(&u);
                k += 1;
            }
            let mut v = u;
            if let Some(st) = self.steps.get(k) {
                let t0 = self.step_starts[k];
                if st.h > 0.0 && t > t0 {
                    let part = if base.shape.is_instantaneous() {
                        Step::magnus(t - t0, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
                    } else {
                        magnus_step(&drive, t0, t - t0)
                    };
                    v = part.propagator(hz).mul(&v);
                }
            }
            out.push(v.rotate_phase(self.spec.phase));
        }
        out
    }
}

/// Full d-level unitary for a pulse of duration `duration` whose driven pair
/// sits at positions `(lo, up)` and evolves by `su2`.
pub fn embed_unitary(
    su2: &Su2,
    lo: usize,
    up: usize,
    energies: &[f64],
    duration: f64,
) -> CMatrix {
    let d = energies.len();
    let mut u = CMatrix::zeros(d, d);
    for k in 0..d {
        if k != lo && k != up {
            u[(k, k)] = Complex64::from_polar(1.0, -energies[k] * duration);
        }
    }
    let mean = 0.5 * (energies[lo] + energies[up]);
    let g = Complex64::from_polar(1.0, -mean * duration);
    let m = su2.matrix();
    u[(lo, lo)] = g * m[0][0];
    u[(lo, up)] = g * m[0][1];
    u[(up, lo)] = g * m[1][0];
    u[(up, up)] = g * m[1][1];
    u
}

/// `hz` of the driven pair for an ion, from the subsystem offsets.
pub fn pair_hz(sub: &Subsystem, spec: &PulseSpec, det: &Detunings) -> f64 {
    hz_for(sub.offset_hz(spec.target.upper, det) - sub.offset_hz(spec.target.lower, det))
}

/// Largest `|offset(upper) - offset(lower)|` expected for a pulse target given
/// per-detuning bounds `(optical, spin, ee)` in Hz.
pub fn pair_bound(sub: &Subsystem, spec: &PulseSpec, bounds: [f64; 3]) -> f64 {
    let cu = sub.offset_coeffs(spec.target.upper);
    let cl = sub.offset_coeffs(spec.target.lower);
    (0..3).map(|i| (cu[i] - cl[i]).abs() * bounds[i]).sum()
}

/// Unitary of a single pulse on a level subset for one ion.
pub fn pulse_propagator(sub: &Subsystem, pulse: &PulseSpec, det: &Detunings) -> Result<CMatrix> {
    let (lo, up) = sub.positions(&pulse.target)?;
    let hz = pair_hz(sub, pulse, det);
    let plan = PulsePlan::new(pulse, (hz / PI).abs(), PULSE_TOLERANCE)?;
    let su2 = plan.propagator(hz);
    Ok(embed_unitary(&su2, lo, up, &sub.energies(det), plan.duration()))
}

/// Two-level rotation of a pulse for an ion whose upper level is offset by
/// `delta_hz`.
pub fn two_level_propagator(pulse: &PulseSpec, delta_hz: f64) -> Result<Su2> {
    let plan = PulsePlan::new(pulse, delta_hz.abs(), PULSE_TOLERANCE)?;
    Ok(plan.propagator(hz_for(delta_hz)))
}

/// Inversion `|U_21|^2` of a pulse on a grid of detunings (Hz, rows) and
/// amplitude scale factors (columns). One step grid is built per scale.
pub fn inversion_map(pulse: &PulseSpec, detunings_hz: &[f64], scales: &[f64]) -> Result<Vec<Vec<f64>>> {
    let bound = detunings_hz.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let columns = scales
        .iter()
        .map(|&s| {
            let mut p = pulse.clone();
            p.amplitude_scale *= s;
            let plan = PulsePlan::new(&p, bound, PULSE_TOLERANCE)?;
            Ok(detunings_hz.iter().map(|&d| plan.propagator(hz_for(d)).inversion()).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..detunings_hz.len()).map(|i| columns.iter().map(|c| c[i]).collect()).collect())
}
