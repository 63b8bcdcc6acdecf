//! Echo emission from ensemble dynamics, storage efficiency, noise from
//! imperfect decoupling, and rate-equation modelling of the spectral
//! initialization.

use std::collections::HashMap;
use std::f64::consts::{LN_2, PI, TAU};
use std::io::Write;

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::ensemble::{pairwise_sum, pairwise_sum_real, par_map_ions};
use crate::dynamics::{CompiledTimeline, DecoherenceSpec, IonState, Subsystem, FWHM_PER_SIGMA};
use crate::error::{Error, Result};
use crate::levels::{LevelScheme, LEVELS_PER_MANIFOLD};
use crate::pulses::{PulseRole, PulseShape, PulseSpec};
use crate::sequences::{MarkerKind, Timeline};

/// Emitted field sampled on a uniform grid, together with an ideal replica of
/// the input rephased at the echo time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoField {
    pub times: Vec<f64>,
    pub amplitude: Vec<Complex64>,
    /// Unit-peak replica of the input centered on `echo_time`; all zeros when
    /// there was no input.
    pub input_reference: Vec<Complex64>,
    pub echo_time: f64,
    /// Factor the raw ensemble coherences were divided by.
    pub scale: f64,
}

impl EchoField {
    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.amplitude.len() || self.times.len() != self.input_reference.len() {
            return Err(Error::Validation("echo grids differ in length".into()));
        }
        Ok(())
    }

    /// Time of the largest `|amplitude|`, refined by a parabola through the
    /// three samples around the maximum.
    pub fn peak_time(&self) -> Option<f64> {
        let mag: Vec<f64> = self.amplitude.iter().map(|a| a.norm()).collect();
        let (i, _) = mag.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
        if i == 0 || i + 1 == mag.len() {
            return Some(self.times[i]);
        }
        let (a, b, c) = (mag[i - 1], mag[i], mag[i + 1]);
        let denom = a - 2.0 * b + c;
        let shift = if denom < 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
        let h = self.times[i + 1] - self.times[i];
        Some(self.times[i] + shift.clamp(-0.5, 0.5) * h)
    }

    pub fn peak_amplitude(&self) -> f64 {
        self.amplitude.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// `sum |A|^2 dt` over the grid.
    pub fn energy(&self) -> f64 {
        grid_energy(&self.times, &self.amplitude)
    }

    pub fn reference_energy(&self) -> f64 {
        grid_energy(&self.times, &self.input_reference)
    }

    /// CSV with columns `t, re, im, abs2, ref_abs2`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "re", "im", "abs2", "ref_abs2"])?;
        for ((t, a), r) in self.times.iter().zip(&self.amplitude).zip(&self.input_reference) {
            out.write_record([
                format!("{t:.12e}"),
                format!("{:.12e}", a.re),
                format!("{:.12e}", a.im),
                format!("{:.12e}", a.norm_sqr()),
                format!("{:.12e}", r.norm_sqr()),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn grid_energy(times: &[f64], values: &[Complex64]) -> f64 {
    if times.len() < 2 {
        return values.iter().map(|v| v.norm_sqr()).sum();
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    let v: Vec<f64> = values.iter().map(|v| v.norm_sqr()).collect();
    pairwise_sum_real(&v) * dt
}

/// Uniform grid covering `[a, b]` with spacing at most `step`.
pub fn time_grid(window: (f64, f64), step: f64) -> Result<Vec<f64>> {
    let (a, b) = window;
    if !(b > a && step > 0.0 && step.is_finite()) {
        return Err(Error::Validation(format!("bad echo window {window:?} / step {step:e}")));
    }
    let n = ((b - a) / step).ceil().max(1.0) as usize;
    Ok((0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect())
}

/// Largest grid step that resolves an optical line of the given FWHM.
pub fn max_grid_step(optical_fwhm: f64) -> f64 {
    if optical_fwhm > 0.0 {
        0.1 / optical_fwhm
    } else {
        f64::INFINITY
    }
}

fn input_pulse(timeline: &Timeline) -> Result<&PulseSpec> {
    timeline
        .pulses()
        .find(|p| p.role == PulseRole::Input)
        .ok_or_else(|| Error::Timeline("timeline has no input pulse".into()))
}

/// Readout window of a storage timeline.
pub fn readout_window(timeline: &Timeline) -> Result<(f64, f64)> {
    let m = timeline
        .marker(MarkerKind::ReadoutWindow)
        .ok_or_else(|| Error::Timeline("timeline has no readout window".into()))?;
    Ok((m.time - 0.5 * m.width, m.time + 0.5 * m.width))
}

/// Emitted field over `window` on a grid of spacing `grid_step`.
///
/// The amplitude is the ensemble mean of the optical coherence of the input
/// transition in the common rotating frame, so only ions that have rephased
/// contribute. The reference is what a lossless memory would return: each
/// ion's coherence at the end of the input, with the precession since the
/// input center undone, propagated freely from the echo time.
///
/// Both fields are divided by the peak of the reference.
pub fn emit_echo(
    sub: &Subsystem,
    timeline: &Timeline,
    ions: &[IonState],
    dec: &DecoherenceSpec,
    window: (f64, f64),
    grid_step: f64,
) -> Result<EchoField> {
    if ions.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    dec.validate()?;
    let fwhm = FWHM_PER_SIGMA * optical_spread(ions);
    if grid_step > max_grid_step(fwhm) * (1.0 + 1e-9) {
        return Err(Error::Validation(format!(
            "grid step {grid_step:e} s does not resolve the {fwhm:e} Hz optical line"
        )));
    }
    let input = input_pulse(timeline)?;
    let (sig_lo, sig_up) = sub.positions(&input.target)?;
    let t0 = input.time;
    let t_in = input.support().1;
    let te = timeline.echo_time.unwrap_or(0.5 * (window.0 + window.1));
    let grid = time_grid(window, grid_step)?;
    if window.0 < t_in {
        return Err(Error::Validation("echo window starts before the input has ended".into()));
    }

    let bounds = ensemble_bounds(ions);
    let ct = CompiledTimeline::new(sub, timeline, bounds)?;
    let mut probes = Vec::with_capacity(grid.len() + 1);
    probes.push(t_in);
    probes.extend_from_slice(&grid);

    let per_ion: Vec<(Vec<Complex64>, Vec<Complex64>)> = par_map_ions(ions.len(), |i| {
        let ion = &ions[i];
        let mut coh = vec![Complex64::new(0.0, 0.0); probes.len()];
        ct.evolve_visit(ion, dec, &probes, Some(window.1), |k, _, s| {
            coh[k] = s.rho[(sig_up, sig_lo)];
        })?;
        let w = TAU * sub.offset_hz(input.target.upper, &ion.detunings())
            - TAU * sub.offset_hz(input.target.lower, &ion.detunings());
        let a = coh[0] * Complex64::from_polar(1.0, w * (t_in - t0));
        let reference = grid
            .iter()
            .map(|&t| a * Complex64::from_polar(1.0, -w * (t - te)))
            .collect();
        Ok((coh[1..].to_vec(), reference))
    })?;

    let n = ions.len() as f64;
    let column_mean = |pick: &dyn Fn(&(Vec<Complex64>, Vec<Complex64>)) -> &Vec<Complex64>, k: usize| {
        let col: Vec<Complex64> = per_ion.iter().map(|r| pick(r)[k]).collect();
        pairwise_sum(&col) / n
    };
    let mut amplitude: Vec<Complex64> = (0..grid.len()).map(|k| column_mean(&|r| &r.0, k)).collect();
    let mut reference: Vec<Complex64> = (0..grid.len()).map(|k| column_mean(&|r| &r.1, k)).collect();
    let peak = reference.iter().map(|r| r.norm()).fold(0.0, f64::max);
    let scale = if peak > 0.0 { peak } else { 1.0 };
    for v in amplitude.iter_mut().chain(reference.iter_mut()) {
        *v /= scale;
    }
    if amplitude.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
        return Err(Error::NonFinite("echo amplitude".into()));
    }
    Ok(EchoField {
        times: grid,
        amplitude,
        input_reference: reference,
        echo_time: te,
        scale,
    })
}

fn optical_spread(ions: &[IonState]) -> f64 {
    let n = ions.len() as f64;
    let mean = ions.iter().map(|i| i.optical_detuning).sum::<f64>() / n;
    let var = ions.iter().map(|i| (i.optical_detuning - mean).powi(2)).sum::<f64>() / n;
    var.sqrt()
}

/// Largest absolute detunings present, used as the pulse error-control range.
pub fn ensemble_bounds(ions: &[IonState]) -> [f64; 3] {
    ions.iter().fold([0.0; 3], |b, i| {
        [
            b[0].max(i.optical_detuning.abs()),
            b[1].max(i.spin_detuning.abs()),
            b[2].max(i.ee_detuning.abs()),
        ]
    })
}

/// Ratio of echo energy to reference energy: the fraction of the stored
/// coherence recovered by the rephasing, before absorption factors.
pub fn microscopic_efficiency(echo: &EchoField) -> Result<f64> {
    echo.validate()?;
    let input = echo.reference_energy();
    if !(input > 0.0) {
        return Err(Error::Validation("reference field carries no energy".into()));
    }
    Ok(echo.energy() / input)
}

/// Parameters of the analytic storage-efficiency model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyBudget {
    /// Effective optical depth.
    pub d: f64,
    /// Transfer efficiency of one control pulse.
    pub eta_control: f64,
    /// Optical decoherence rate (1/s).
    pub gamma: f64,
    /// Spin inhomogeneous FWHM (Hz).
    pub gamma34: f64,
    /// Excited-pair inhomogeneous FWHM (Hz).
    pub gamma23bar: f64,
    /// Time from the first to the third control pulse (s).
    pub t31: f64,
    /// Time from the second to the fourth control pulse (s).
    pub t42: f64,
    pub heating_penalty: f64,
}

impl EfficiencyBudget {
    pub fn validate(&self) -> Result<()> {
        let ok = self.d >= 0.0
            && (0.0..=1.0).contains(&self.eta_control)
            && self.heating_penalty > 0.0
            && self.heating_penalty <= 1.0
            && self.gamma >= 0.0
            && self.gamma34 >= 0.0
            && self.gamma23bar >= 0.0
            && self.t31 >= 0.0
            && self.t42 >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid efficiency budget {self:?}")))
        }
    }

    /// Control-pulse intervals taken from the protocol times of a storage
    /// timeline (`t1..t4` are the centers of the four control pulses).
    pub fn with_protocol_times(mut self, times: &[f64; 5]) -> Self {
        self.t31 = times[3] - times[1];
        self.t42 = times[4] - times[2];
        self
    }
}

/// Re-absorption limited emission of a forward echo, `d^2 exp(-d)`.
pub fn absorption_factor(d: f64) -> f64 {
    d * d * (-d).exp()
}

/// Intensity loss from Gaussian inhomogeneous dephasing of FWHM `fwhm` (Hz)
/// over `t` seconds: `exp(-fwhm^2 t^2 pi^2 / (2 ln 2))`.
pub fn gaussian_intensity_factor(fwhm: f64, t: f64) -> f64 {
    (-(PI * fwhm * t).powi(2) / (2.0 * LN_2)).exp()
}

pub fn analytic_efficiency(b: &EfficiencyBudget) -> f64 {
    absorption_factor(b.d)
        * b.eta_control.powi(4)
        * gaussian_intensity_factor(b.gamma34, b.t31)
        * gaussian_intensity_factor(b.gamma23bar, b.t42)
        * (-2.0 * b.gamma * b.t42).exp()
        * b.heating_penalty
}

/// Expected noise photons per trial from population that the second `pi43`
/// pulse promotes into the signal excited level.
///
/// `states` are the ions right after that pulse; `excited_pos` is the
/// position of the signal excited level in their subsystem.
pub fn dd_noise_rate(states: &[IonState], excited_pos: usize, branching: f64, collection_efficiency: f64) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let d = states[0].rho.nrows();
    if excited_pos >= d {
        return Err(Error::IndexOutOfRange {
            index: excited_pos,
            max: d - 1,
        });
    }
    let pops: Vec<f64> = states.iter().map(|s| s.population(excited_pos)).collect();
    Ok(pairwise_sum_real(&pops) / states.len() as f64 * branching * collection_efficiency)
}

const NL: usize = 2 * LEVELS_PER_MANIFOLD;
type RateMatrix = SMatrix<f64, NL, NL>;
type Populations = SVector<f64, NL>;

/// Optical pumping rates of the initialization model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpModel {
    /// Pump rate per unit branching ratio while a pair is inside a pulse's
    /// chirp range (1/s).
    pub pump_rate: f64,
    pub excited_lifetime: f64,
    /// Spacing of the optical-detuning classes (Hz).
    pub class_step_hz: f64,
    /// Half width of the reported absorption profile around the signal line (Hz).
    pub probe_half_width_hz: f64,
}

impl PumpModel {
    pub fn validate(&self) -> Result<()> {
        if self.pump_rate >= 0.0 && self.excited_lifetime > 0.0 && self.class_step_hz > 0.0 && self.probe_half_width_hz > 0.0 {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid pump model {self:?}")))
        }
    }
}

/// Absorption profile around the signal line after initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionProfile {
    /// Offset from the signal transition (Hz).
    pub detuning_hz: Vec<f64>,
    /// Absorption relative to a thermal, unprepared crystal.
    pub alpha: Vec<f64>,
    /// Absorption with every class in thermal equilibrium (1 in the bulk).
    pub alpha_unprepared: Vec<f64>,
    /// Ground populations of the class resonant with the signal line.
    pub center_class_populations: [f64; LEVELS_PER_MANIFOLD],
    /// Largest population change over the final repetition of the pulse
    /// pattern, across all classes.
    pub final_change: f64,
    pub converged: bool,
    pub n_classes: usize,
}

impl AbsorptionProfile {
    /// CSV with columns `detuning_hz, alpha, alpha_unprepared`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["detuning_hz", "alpha", "alpha_unprepared"])?;
        for i in 0..self.alpha.len() {
            out.write_record([
                format!("{:.1}", self.detuning_hz[i]),
                format!("{:.9e}", self.alpha[i]),
                format!("{:.9e}", self.alpha_unprepared[i]),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    fn center_index(&self) -> usize {
        let mut best = 0;
        for (i, x) in self.detuning_hz.iter().enumerate() {
            if x.abs() < self.detuning_hz[best].abs() {
                best = i;
            }
        }
        best
    }

    /// Summary of the spectral feature at the signal line.
    pub fn feature(&self) -> FeatureSummary {
        let c = self.center_index();
        let peak = self.alpha[c];
        let step = if self.detuning_hz.len() > 1 {
            self.detuning_hz[1] - self.detuning_hz[0]
        } else {
            0.0
        };
        let n = self.alpha.len();
        // Feature: contiguous run around the center at or above half its height.
        let mut lo = c;
        while lo > 0 && self.alpha[lo - 1] >= 0.5 * peak {
            lo -= 1;
        }
        let mut hi = c;
        while hi + 1 < n && self.alpha[hi + 1] >= 0.5 * peak {
            hi += 1;
        }
        // Transparency window: continues outward while below half the bulk
        // absorption, once past the feature's half-height run.
        let bulk = 0.5 * self.alpha_unprepared[c];
        let mut wlo = lo;
        while wlo > 0 && self.alpha[wlo - 1] < bulk.max(0.5 * peak) {
            wlo -= 1;
        }
        let mut whi = hi;
        while whi + 1 < n && self.alpha[whi + 1] < bulk.max(0.5 * peak) {
            whi += 1;
        }
        FeatureSummary {
            center_alpha: peak,
            fwhm_hz: (hi - lo + 1) as f64 * step,
            center_hz: 0.5 * (self.detuning_hz[lo] + self.detuning_hz[hi]),
            window_hz: (whi - wlo + 1) as f64 * step,
            unprepared_alpha: self.alpha_unprepared[c],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub center_alpha: f64,
    pub center_hz: f64,
    pub fwhm_hz: f64,
    /// Width of the low-absorption region containing the feature.
    pub window_hz: f64,
    pub unprepared_alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PumpKind {
    center_hz: f64,
    half_range_hz: f64,
    duration: f64,
}

fn pump_kind(scheme: &LevelScheme, p: &PulseSpec) -> Result<PumpKind> {
    let f = scheme.transition_frequency(p.target.lower.index, p.target.upper.index)? + p.frequency_offset_hz;
    let half = match &p.shape {
        PulseShape::ChirpedRectangular { bandwidth_hz, .. } => 0.5 * bandwidth_hz,
        PulseShape::Chs(c) => 0.5 * c.sweep_hz(),
        other => 0.5 / other.duration(),
    };
    Ok(PumpKind {
        center_hz: f,
        half_range_hz: half,
        duration: p.shape.duration(),
    })
}

/// Populations of optical-detuning classes driven by the pump pulses of an
/// initialization timeline, followed by full relaxation of the excited
/// levels.
///
/// A class at optical offset `nu` is pumped on pair `(g, e)` during a pulse
/// centered at `f_c` when `|f(g, e) + nu - f_c|` is within half the pulse's
/// chirp range; the pump moves population between `g` and `e` at rate
/// `pump_rate * R(g, e)`. Excited levels decay with the branching table.
/// The absorption at offset `x` from the signal line sums `pop_g R(g, e)` over
/// every class and pair with `f(g, e) + nu - f_signal = x`.
pub fn run_initialization_rate_equations(
    scheme: &LevelScheme,
    timeline: &Timeline,
    model: &PumpModel,
    signal: (usize, usize),
) -> Result<AbsorptionProfile> {
    model.validate()?;
    let step = model.class_step_hz;
    let half = model.probe_half_width_hz;
    let f = |g: usize, e: usize| scheme.transition_frequency(g + 1, e + 1).expect("index in range");
    let f_sig = scheme.transition_frequency(signal.0, signal.1)?;
    let r = |g: usize, e: usize| scheme.branching(g + 1, e + 1).expect("index in range");

    // Distinct pump pulse kinds, in timeline order, plus gaps.
    let pulses: Vec<&PulseSpec> = timeline.pulses().filter(|p| p.role == PulseRole::Pump).collect();
    let mut kinds: Vec<PumpKind> = Vec::new();
    let mut sequence: Vec<(usize, f64)> = Vec::with_capacity(pulses.len());
    let mut t_prev = pulses.first().map_or(0.0, |p| p.support().0);
    for p in &pulses {
        let k = pump_kind(scheme, p)?;
        let idx = match kinds.iter().position(|q| *q == k) {
            Some(i) => i,
            None => {
                kinds.push(k);
                kinds.len() - 1
            }
        };
        let (s, e) = p.support();
        sequence.push((idx, (s - t_prev).max(0.0)));
        t_prev = e;
    }
    let period = repeat_period(&sequence.iter().map(|s| s.0).collect::<Vec<_>>());

    // Decay generator.
    let t1 = model.excited_lifetime;
    let mut decay = RateMatrix::zeros();
    for e in 0..LEVELS_PER_MANIFOLD {
        decay[(6 + e, 6 + e)] -= 1.0 / t1;
        for g in 0..LEVELS_PER_MANIFOLD {
            decay[(g, 6 + e)] += r(g, e) / t1;
        }
    }
    let mut gens: HashMap<(u64, u64), RateMatrix> = HashMap::new();
    let mut propagator = |mask: u64, dt: f64| -> RateMatrix {
        *gens.entry((mask, dt.to_bits())).or_insert_with(|| {
            let mut a = decay;
            for g in 0..LEVELS_PER_MANIFOLD {
                for e in 0..LEVELS_PER_MANIFOLD {
                    if mask >> (g * 6 + e) & 1 == 1 {
                        let w = model.pump_rate * r(g, e);
                        a[(g, g)] -= w;
                        a[(6 + e, g)] += w;
                        a[(6 + e, 6 + e)] -= w;
                        a[(g, 6 + e)] += w;
                    }
                }
            }
            (a * dt).exp()
        })
    };

    // Classes: every offset that places some pair inside the probed band.
    let mut classes: Vec<i64> = Vec::new();
    for g in 0..LEVELS_PER_MANIFOLD {
        for e in 0..LEVELS_PER_MANIFOLD {
            let c = f_sig - f(g, e);
            let lo = ((c - half) / step).round() as i64;
            let hi = ((c + half) / step).round() as i64;
            classes.extend(lo..=hi);
        }
    }
    classes.sort_unstable();
    classes.dedup();

    let thermal = {
        let mut p = Populations::zeros();
        for g in 0..LEVELS_PER_MANIFOLD {
            p[g] = 1.0 / LEVELS_PER_MANIFOLD as f64;
        }
        p
    };
    // Memoized by which pairs each pulse kind drives.
    let mut memo: HashMap<Vec<u64>, (Populations, f64)> = HashMap::new();
    let nb = (2.0 * half / step).round() as usize + 1;
    let mut alpha = vec![0.0; nb];
    let mut alpha0 = vec![0.0; nb];
    let mut center = [0.0; LEVELS_PER_MANIFOLD];
    let mut worst_change: f64 = 0.0;
    for &k in &classes {
        let nu = k as f64 * step;
        let masks: Vec<u64> = kinds
            .iter()
            .map(|q| {
                let mut m = 0u64;
                for g in 0..LEVELS_PER_MANIFOLD {
                    for e in 0..LEVELS_PER_MANIFOLD {
                        if (f(g, e) + nu - q.center_hz).abs() <= q.half_range_hz {
                            m |= 1 << (g * 6 + e);
                        }
                    }
                }
                m
            })
            .collect();
        let (p, change) = match memo.get(&masks) {
            Some(v) => *v,
            None => {
                let mut p = thermal;
                let mut before_last = thermal;
                let n = sequence.len();
                for (i, &(kind, gap)) in sequence.iter().enumerate() {
                    if i + period == n {
                        before_last = p;
                    }
                    if gap > 0.0 {
                        p = propagator(0, gap) * p;
                    }
                    p = propagator(masks[kind], kinds[kind].duration) * p;
                }
                let change = if n > 0 { (p - before_last).amax() } else { 0.0 };
                memo.insert(masks.clone(), (p, change));
                (p, change)
            }
        };
        worst_change = worst_change.max(change);
        let mut ground = [0.0; LEVELS_PER_MANIFOLD];
        for g in 0..LEVELS_PER_MANIFOLD {
            ground[g] = p[g];
            for e in 0..LEVELS_PER_MANIFOLD {
                ground[g] += r(g, e) * p[6 + e];
            }
        }
        if k == 0 {
            center = ground;
        }
        for g in 0..LEVELS_PER_MANIFOLD {
            for e in 0..LEVELS_PER_MANIFOLD {
                let x = f(g, e) + nu - f_sig;
                let i = ((x + half) / step).round();
                if i >= 0.0 && (i as usize) < nb {
                    alpha[i as usize] += ground[g] * r(g, e);
                    alpha0[i as usize] += r(g, e) / LEVELS_PER_MANIFOLD as f64;
                }
            }
        }
    }
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("absorption profile".into()));
    }
    Ok(AbsorptionProfile {
        detuning_hz: (0..nb).map(|i| -half + i as f64 * step).collect(),
        alpha,
        alpha_unprepared: alpha0,
        center_class_populations: center,
        final_change: worst_change,
        converged: worst_change < CONVERGENCE_TOLERANCE,
        n_classes: classes.len(),
    })
}

/// Population change over the last pattern repetition below which the
/// initialization is considered converged.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-3;

/// Length of the shortest block that the tail of `ids` repeats at least twice.
fn repeat_period(ids: &[usize]) -> usize {
    let n = ids.len();
    (1..=n / 2)
        .find(|&p| ids[n - p..] == ids[n - 2 * p..n - p])
        .unwrap_or(n)
}
