//! Photon-counting statistics: Monte Carlo histograms, signal-to-noise,
//! time-bin qubit fidelities and the classical prepare-and-measure bound.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Named detection gate `[start, start + width)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub name: String,
    pub start: f64,
    pub width: f64,
}

impl Window {
    pub fn new(name: &str, start: f64, width: f64) -> Self {
        Window {
            name: name.into(),
            start,
            width,
        }
    }

    /// Gate of width `width` centered on `center`.
    pub fn centered(name: &str, center: f64, width: f64) -> Self {
        Window::new(name, center - 0.5 * width, width)
    }

    pub fn end(&self) -> f64 {
        self.start + self.width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_trials: u64,
    pub windows: Vec<Window>,
    pub seed: u64,
}

impl CountHistogram {
    pub fn validate(&self) -> Result<()> {
        if self.bin_edges.len() != self.counts.len() + 1 {
            return Err(Error::Validation("histogram needs one more edge than bins".into()));
        }
        if self.bin_edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("bin edges must increase".into()));
        }
        let (lo, hi) = (self.bin_edges[0], self.bin_edges[self.bin_edges.len() - 1]);
        for w in &self.windows {
            if w.start < lo - 1e-12 * hi.abs() || w.end() > hi + 1e-12 * hi.abs() {
                return Err(Error::Validation(format!("window '{}' outside histogram span", w.name)));
            }
        }
        Ok(())
    }

    pub fn window(&self, name: &str) -> Result<&Window> {
        self.windows
            .iter()
            .find(|w| w.name == name)
            .ok_or_else(|| Error::Validation(format!("no window named '{name}'")))
    }

    /// Counts in bins whose centers fall inside the window.
    pub fn counts_in(&self, w: &Window) -> u64 {
        self.bin_centers()
            .zip(&self.counts)
            .filter(|(c, _)| *c >= w.start && *c < w.end())
            .map(|(_, n)| n)
            .sum()
    }

    pub fn bin_centers(&self) -> impl Iterator<Item = f64> + '_ {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1]))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// CSV with columns `bin_start, bin_end, counts`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["bin_start", "bin_end", "counts"])?;
        for (e, c) in self.bin_edges.windows(2).zip(&self.counts) {
            out.write_record([format!("{:.9e}", e[0]), format!("{:.9e}", e[1]), c.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Time-bin qubit states used as inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QubitState {
    /// Early bin.
    E,
    /// Late bin.
    L,
    /// Equal superposition, relative phase 0.
    Plus,
    /// Equal superposition, relative phase pi/2.
    PlusI,
}

impl QubitState {
    pub const ALL: [QubitState; 4] = [QubitState::E, QubitState::L, QubitState::Plus, QubitState::PlusI];

    pub fn is_basis(self) -> bool {
        matches!(self, QubitState::E | QubitState::L)
    }

    /// Relative phase between the late and early components.
    pub fn phase(self) -> f64 {
        match self {
            QubitState::PlusI => std::f64::consts::FRAC_PI_2,
            _ => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            QubitState::E => "e",
            QubitState::L => "l",
            QubitState::Plus => "plus",
            QubitState::PlusI => "plus_i",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitRun {
    pub input_state: QubitState,
    /// Mean photon number per qubit.
    pub mu_q: f64,
    /// Memory efficiency.
    pub efficiency: f64,
    /// Expected noise counts per detection window per trial.
    pub noise_per_window: f64,
    pub n_trials: u64,
}

impl QubitRun {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_q >= 0.0 && (0.0..=1.0).contains(&self.efficiency) && self.noise_per_window >= 0.0) {
            return Err(Error::Validation(format!("invalid qubit run {self:?}")));
        }
        Ok(())
    }
}

/// Expected counts per trial in each bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountModel {
    pub bin_edges: Vec<f64>,
    pub signal: Vec<f64>,
    pub noise: Vec<f64>,
    pub windows: Vec<Window>,
}

impl CountModel {
    pub fn validate(&self) -> Result<()> {
        let n = self.bin_edges.len().saturating_sub(1);
        if n == 0 || self.signal.len() != n || self.noise.len() != n {
            return Err(Error::Validation("count model arrays do not match the bins".into()));
        }
        if self.signal.iter().chain(&self.noise).any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Validation("count probabilities must be non-negative".into()));
        }
        Ok(())
    }

    /// Expected counts per trial inside a window.
    pub fn expected_in(&self, w: &Window, noise_only: bool) -> f64 {
        self.bin_edges
            .windows(2)
            .enumerate()
            .filter(|(_, e)| {
                let c = 0.5 * (e[0] + e[1]);
                c >= w.start && c < w.end()
            })
            .map(|(i, _)| if noise_only { self.noise[i] } else { self.signal[i] + self.noise[i] })
            .sum()
    }
}

/// Echo output of a time-bin memory: Gaussian pulses of the given FWHM in
/// the output slots, flat noise at `noise_per_window` per `gate` seconds.
///
/// Basis states put all `mu_q * efficiency` in one slot. Superposition states
/// are read out with a split final pulse carrying `readout_phase`, producing
/// three slots separated by `separation`; the outer two hold a quarter each
/// and the middle one `(1 + cos(phase - readout_phase)) / 4`.
/// Windows: `early`, `middle` (superpositions only) and `late`, plus
/// `noise` ahead of the first slot.
pub fn time_bin_model(
    run: &QubitRun,
    readout_phase: f64,
    separation: f64,
    pulse_fwhm: f64,
    gate: f64,
    bin_width: f64,
) -> Result<CountModel> {
    run.validate()?;
    if !(separation > 0.0 && pulse_fwhm > 0.0 && gate > 0.0 && bin_width > 0.0) {
        return Err(Error::Validation("time-bin geometry must be positive".into()));
    }
    let s = run.mu_q * run.efficiency;
    let sigma = pulse_fwhm / crate::dynamics::FWHM_PER_SIGMA;
    let (slots, weights): (Vec<f64>, Vec<f64>) = match run.input_state {
        QubitState::E => (vec![0.0], vec![1.0]),
        QubitState::L => (vec![separation], vec![1.0]),
        QubitState::Plus | QubitState::PlusI => {
            let mid = 0.25 * (1.0 + (run.input_state.phase() - readout_phase).cos());
            (vec![0.0, separation, 2.0 * separation], vec![0.25, mid, 0.25])
        }
    };
    let lo = -2.0 * separation;
    let hi = 4.0 * separation;
    let n = ((hi - lo) / bin_width).round() as usize;
    let edges: Vec<f64> = (0..=n).map(|i| lo + i as f64 * bin_width).collect();
    // Normalize so each slot delivers its full share inside its gate.
    let in_gate = erf_fraction(0.5 * gate / (sigma * std::f64::consts::SQRT_2));
    let mut signal = vec![0.0; n];
    for (c, w) in slots.iter().zip(&weights) {
        for (i, e) in edges.windows(2).enumerate() {
            let a = (e[0] - c) / (sigma * std::f64::consts::SQRT_2);
            let b = (e[1] - c) / (sigma * std::f64::consts::SQRT_2);
            signal[i] += s * w * 0.5 * (erf_fraction(b) - erf_fraction(a)) / in_gate;
        }
    }
    let noise = vec![run.noise_per_window * bin_width / gate; n];
    let mut windows = vec![
        Window::centered("early", 0.0, gate),
        Window::centered("late", if run.input_state.is_basis() { separation } else { 2.0 * separation }, gate),
        Window::centered("noise", -1.5 * separation, gate),
    ];
    if !run.input_state.is_basis() {
        windows.push(Window::centered("middle", separation, gate));
    }
    Ok(CountModel {
        bin_edges: edges,
        signal,
        noise,
        windows,
    })
}

fn erf_fraction(x: f64) -> f64 {
    statrs::function::erf::erf(x)
}

/// Poisson counts for `n_trials` repetitions of `model`, seeded per bin.
pub fn simulate_counts(run: &QubitRun, model: &CountModel, seed: u64) -> Result<CountHistogram> {
    run.validate()?;
    model.validate()?;
    let counts = model
        .signal
        .iter()
        .zip(&model.noise)
        .enumerate()
        .map(|(i, (s, n))| {
            let lambda = run.n_trials as f64 * (s + n);
            if lambda <= 0.0 {
                return Ok(0);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let d = Poisson::new(lambda).map_err(|e| Error::Validation(e.to_string()))?;
            Ok(d.sample(&mut rng) as u64)
        })
        .collect::<Result<Vec<u64>>>()?;
    let h = CountHistogram {
        bin_edges: model.bin_edges.clone(),
        counts,
        n_trials: run.n_trials,
        windows: model.windows.clone(),
        seed,
    };
    h.validate()?;
    Ok(h)
}

/// How the noise level for an SNR is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseReference {
    /// Expected noise counts per trial in the signal window.
    Expected(f64),
    /// Counts in a signal-free window of the same width.
    Measured(String),
    /// Noise known to be absent.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrResult {
    pub snr: f64,
    pub sigma: f64,
    /// Noise-subtracted counts in the signal window.
    pub signal: f64,
    pub noise: f64,
    /// Set when the subtraction went negative and the signal was clamped to 0.
    pub clamped: bool,
}

/// Signal-to-noise from raw window counts and a noise estimate.
///
/// `noise_var` is the variance of the noise estimate (0 for a known
/// expectation, the counts themselves for a measured reference).
pub fn snr_from_counts(in_window: f64, noise: f64, noise_var: f64) -> SnrResult {
    let raw = in_window - noise;
    let clamped = raw < 0.0;
    let signal = raw.max(0.0);
    if noise <= 0.0 {
        return SnrResult {
            snr: f64::INFINITY,
            sigma: f64::INFINITY,
            signal,
            noise: 0.0,
            clamped,
        };
    }
    let snr = signal / noise;
    // S = C - N with C ~ Poisson; d(S/N)/dN = -C/N^2.
    let sigma = (in_window / (noise * noise) + noise_var * (in_window / (noise * noise)).powi(2)).sqrt();
    SnrResult {
        snr,
        sigma,
        signal,
        noise,
        clamped,
    }
}

pub fn snr(h: &CountHistogram, signal_window: &str, noise: &NoiseReference) -> Result<SnrResult> {
    h.validate()?;
    let w = h.window(signal_window)?;
    let c = h.counts_in(w) as f64;
    Ok(match noise {
        NoiseReference::Expected(per_trial) => {
            if *per_trial < 0.0 {
                return Err(Error::Validation("expected noise must be non-negative".into()));
            }
            snr_from_counts(c, per_trial * h.n_trials as f64, 0.0)
        }
        NoiseReference::Measured(name) => {
            let r = h.window(name)?;
            if (r.width - w.width).abs() > 1e-9 * w.width {
                return Err(Error::Validation("noise window must match the signal window width".into()));
            }
            let n = h.counts_in(r) as f64;
            if n == 0.0 {
                return Err(Error::Validation(
                    "noise reference window is empty; use NoiseReference::Zero".into(),
                ));
            }
            snr_from_counts(c, n, n)
        }
        NoiseReference::Zero => snr_from_counts(c, 0.0, 0.0),
    })
}

/// Signal-to-noise per photon of input, for comparing runs at different `mu_q`.
pub fn single_photon_snr(snr: f64, mu_q: f64) -> Result<f64> {
    if !(mu_q > 0.0) {
        return Err(Error::Validation("mu_q must be positive".into()));
    }
    Ok(snr / mu_q)
}

/// SNR implied by an efficiency and a noise level both quoted as fractions
/// of the input: `(efficiency / noise, (efficiency - noise) / noise)`, the
/// second treating the quoted efficiency as still containing the noise.
pub fn snr_from_fractions(efficiency: f64, noise: f64) -> Result<(f64, f64)> {
    if !(noise > 0.0) {
        return Err(Error::Validation("noise fraction must be positive".into()));
    }
    Ok((efficiency / noise, (efficiency - noise) / noise))
}

/// `(S + N) / (S + 2N)`.
pub fn basis_fidelity(s: f64, n: f64) -> Result<f64> {
    if !(s >= 0.0 && n >= 0.0) {
        return Err(Error::Validation("counts must be non-negative".into()));
    }
    if s == 0.0 && n == 0.0 {
        return Err(Error::Validation("no counts".into()));
    }
    Ok((s + n) / (s + 2.0 * n))
}

/// `(V + 1) / 2` with `V = (c_max - c_min) / (c_max + c_min)`.
pub fn visibility_fidelity(c_max: f64, c_min: f64) -> Result<f64> {
    if !(c_max >= 0.0 && c_min >= 0.0) {
        return Err(Error::Validation("counts must be non-negative".into()));
    }
    if c_max + c_min == 0.0 {
        return Err(Error::Validation("no counts".into()));
    }
    if c_max < c_min {
        return Err(Error::Validation("c_max is below c_min".into()));
    }
    let v = (c_max - c_min) / (c_max + c_min);
    Ok(0.5 * (v + 1.0))
}

/// Visibility matching a fidelity.
pub fn visibility_from_fidelity(f: f64) -> f64 {
    2.0 * f - 1.0
}

/// Weighted average: one third basis states, two thirds superpositions.
pub fn total_fidelity(f_e: f64, f_l: f64, f_plus: f64, f_plus_i: f64) -> Result<f64> {
    for f in [f_e, f_l, f_plus, f_plus_i] {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Validation(format!("fidelity {f} outside [0, 1]")));
        }
    }
    Ok((f_e + f_l) / 6.0 + (f_plus + f_plus_i) / 3.0)
}

/// Tail mass below which the Poisson series is truncated.
pub const SERIES_TAIL: f64 = 1e-12;

fn ln_poisson(n: u64, mu: f64) -> f64 {
    n as f64 * mu.ln() - mu - ln_gamma(n as f64 + 1.0)
}

/// Best fidelity a classical device can reach while reporting a fraction
/// `eta` of weak coherent inputs with mean photon number `mu_q`.
///
/// The device keeps the highest photon-number events first (a class of `n`
/// photons allows qubit estimation with fidelity `(n+1)/(n+2)`), taking the
/// marginal class fractionally until the accepted probability equals
/// `eta`. Vacuum events, if needed, score 1/2.
pub fn classical_bound(mu_q: f64, eta: f64) -> Result<f64> {
    if !(mu_q > 0.0 && mu_q.is_finite()) {
        return Err(Error::Validation("mu_q must be positive".into()));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Validation("eta must lie in (0, 1]".into()));
    }
    // Highest class with non-negligible tail.
    let mut n_max = mu_q.ceil() as u64;
    let mut tail = 1.0;
    let mut cum = 0.0;
    let mut n = 0u64;
    while tail > SERIES_TAIL || n <= n_max {
        cum += ln_poisson(n, mu_q).exp();
        tail = 1.0 - cum;
        n += 1;
        n_max = n_max.max(n);
        if n > 100_000 {
            break;
        }
    }
    let mut accepted = 0.0;
    let mut score = 0.0;
    for k in (0..=n_max).rev() {
        if accepted >= eta {
            break;
        }
        let take = ln_poisson(k, mu_q).exp().min(eta - accepted);
        let f = if k == 0 { 0.5 } else { (k as f64 + 1.0) / (k as f64 + 2.0) };
        score += take * f;
        accepted += take;
    }
    if !(accepted > 0.0) {
        return Err(Error::NonFinite("classical bound acceptance".into()));
    }
    Ok(score / accepted)
}

/// Per-state expected fidelities `(e, l, plus, plus_i)` for a memory with
/// efficiency `eta` and noise `noise_per_window`. Basis states use the full
/// retrieved signal; superpositions interfere half of it in the middle bin.
pub fn expected_state_fidelities(mu_q: f64, eta: f64, noise_per_window: f64) -> Result<[f64; 4]> {
    if !(mu_q >= 0.0 && (0.0..=1.0).contains(&eta) && noise_per_window >= 0.0) {
        return Err(Error::Validation("invalid expected-fidelity inputs".into()));
    }
    let s = mu_q * eta;
    let n = noise_per_window;
    if n == 0.0 {
        return Ok([1.0; 4]);
    }
    let fb = basis_fidelity(s, n)?;
    let fs = visibility_fidelity(0.5 * s + n, n)?;
    Ok([fb, fb, fs, fs])
}

pub fn expected_fidelity(mu_q: f64, eta: f64, noise_per_window: f64) -> Result<f64> {
    let [a, b, c, d] = expected_state_fidelities(mu_q, eta, noise_per_window)?;
    total_fidelity(a, b, c, d)
}

/// Search range for the crossover.
pub const CROSSOVER_RANGE: (f64, f64) = (1e-9, 10.0);
pub const CROSSOVER_TOLERANCE: f64 = 1e-4;

/// Smallest `mu_q` at which the expected memory fidelity reaches the
/// classical bound.
pub fn crossover_mu(eta: f64, noise_per_window: f64) -> Result<f64> {
    let gap = |mu: f64| -> Result<f64> { Ok(expected_fidelity(mu, eta, noise_per_window)? - classical_bound(mu, eta)?) };
    let (lo, hi) = CROSSOVER_RANGE;
    let n = 400;
    let grid: Vec<f64> = (0..=n).map(|i| lo * (hi / lo).powf(i as f64 / n as f64)).collect();
    let mut prev = (grid[0], gap(grid[0])?);
    if prev.1 >= 0.0 {
        return Ok(grid[0]);
    }
    for &mu in &grid[1..] {
        let g = gap(mu)?;
        if g >= 0.0 {
            let (mut a, mut b) = (prev.0, mu);
            while b - a > 0.01 * CROSSOVER_TOLERANCE {
                let m = 0.5 * (a + b);
                if gap(m)? >= 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            return Ok(0.5 * (a + b));
        }
        prev = (mu, g);
    }
    Err(Error::NoCrossing(format!(
        "expected fidelity stays below the classical bound on (0, {hi}] (eta = {eta}, noise = {noise_per_window})"
    )))
}

/// One row of the bound comparison curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub mu_q: f64,
    pub classical_bound: f64,
    pub expected_fidelity: f64,
}

pub fn bound_curve(mus: &[f64], eta: f64, noise_per_window: f64) -> Result<Vec<BoundRow>> {
    mus.iter()
        .map(|&mu| {
            Ok(BoundRow {
                mu_q: mu,
                classical_bound: classical_bound(mu, eta)?,
                expected_fidelity: expected_fidelity(mu, eta, noise_per_window)?,
            })
        })
        .collect()
}

/// Time-bin layout of the detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBinGeometry {
    pub separation: f64,
    pub pulse_fwhm: f64,
    pub gate: f64,
    pub bin_width: f64,
}

/// Fidelities estimated from simulated counts for the four input states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitReport {
    pub mu_q: f64,
    pub efficiency: f64,
    pub noise_per_window: f64,
    pub n_trials: u64,
    pub f_e: f64,
    pub f_l: f64,
    pub f_plus: f64,
    pub f_plus_i: f64,
    pub total: f64,
    /// SNR of the early-bin input, against the expected noise.
    pub snr: SnrResult,
    pub expected_fidelity: f64,
    pub classical_bound: f64,
}

/// One simulated histogram of a qubit run.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledHistogram {
    pub label: String,
    pub histogram: CountHistogram,
}

/// Simulates the four input states and estimates their fidelities from counts.
///
/// Basis states compare the correct bin with the wrong one. Superpositions
/// are measured twice, with the readout phase matching the state and
/// shifted by pi, giving `c_max` and `c_min` in the middle bin.
pub fn analyze_qubits(
    mu_q: f64,
    efficiency: f64,
    noise_per_window: f64,
    n_trials: u64,
    geometry: &TimeBinGeometry,
    seed: u64,
) -> Result<(QubitReport, Vec<LabeledHistogram>)> {
    let g = geometry;
    let mut hists = Vec::new();
    let mut sample = |state: QubitState, readout_phase: f64, label: String| -> Result<(CountHistogram, CountModel)> {
        let run = QubitRun {
            input_state: state,
            mu_q,
            efficiency,
            noise_per_window,
            n_trials,
        };
        let model = time_bin_model(&run, readout_phase, g.separation, g.pulse_fwhm, g.gate, g.bin_width)?;
        let h = simulate_counts(&run, &model, seed.wrapping_add(hists.len() as u64))?;
        hists.push(LabeledHistogram { label, histogram: h.clone() });
        Ok((h, model))
    };
    let basis = |h: &CountHistogram, right: &str, wrong: &str| -> Result<f64> {
        let c = h.counts_in(h.window(right)?) as f64;
        let n = h.counts_in(h.window(wrong)?) as f64;
        if c + n == 0.0 {
            return Ok(0.5);
        }
        basis_fidelity((c - n).max(0.0), n)
    };
    let (he, model_e) = sample(QubitState::E, 0.0, "e".into())?;
    let f_e = basis(&he, "early", "late")?;
    let early = he.window("early")?.clone();
    let snr = snr(&he, "early", &NoiseReference::Expected(model_e.expected_in(&early, true)))?;
    let (hl, _) = sample(QubitState::L, 0.0, "l".into())?;
    let f_l = basis(&hl, "late", "early")?;
    let mut sup = |state: QubitState| -> Result<f64> {
        let (hmax, _) = sample(state, state.phase(), format!("{}_max", state.name()))?;
        let (hmin, _) = sample(state, state.phase() + std::f64::consts::PI, format!("{}_min", state.name()))?;
        let c_max = hmax.counts_in(hmax.window("middle")?) as f64;
        let c_min = hmin.counts_in(hmin.window("middle")?) as f64;
        if c_max + c_min == 0.0 {
            return Ok(0.5);
        }
        visibility_fidelity(c_max.max(c_min), c_min)
    };
    let f_plus = sup(QubitState::Plus)?;
    let f_plus_i = sup(QubitState::PlusI)?;
    let report = QubitReport {
        mu_q,
        efficiency,
        noise_per_window,
        n_trials,
        f_e,
        f_l,
        f_plus,
        f_plus_i,
        total: total_fidelity(f_e, f_l, f_plus, f_plus_i)?,
        snr,
        expected_fidelity: expected_fidelity(mu_q, efficiency, noise_per_window)?,
        classical_bound: classical_bound(mu_q.max(f64::MIN_POSITIVE), efficiency.max(f64::MIN_POSITIVE))?,
    };
    Ok((report, hists))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn basis_and_visibility_fidelity_values() {
        assert_eq!(basis_fidelity(5.0, 0.0).unwrap(), 1.0);
        assert_eq!(basis_fidelity(0.0, 3.0).unwrap(), 0.5);
        assert_relative_eq!(basis_fidelity(11.3, 1.0).unwrap(), 12.3 / 13.3, epsilon = 1e-15);
        assert!((basis_fidelity(11.3, 1.0).unwrap() - 0.9248).abs() < 5e-5);
        assert!(basis_fidelity(0.0, 0.0).is_err());
        assert_eq!(visibility_fidelity(4.0, 0.0).unwrap(), 1.0);
        assert_eq!(visibility_fidelity(2.0, 2.0).unwrap(), 0.5);
        assert!(visibility_fidelity(0.0, 0.0).is_err());
        assert!(visibility_fidelity(1.0, 2.0).is_err());
        assert_relative_eq!(visibility_from_fidelity(0.858), 0.716, epsilon = 1e-12);
    }

    #[test]
    fn total_fidelity_values() {
        let f = total_fidelity(0.927, 0.927, 0.858, 0.856).unwrap();
        assert!((f - 0.8803).abs() < 5e-5, "{f}");
        assert_eq!(total_fidelity(1.0, 1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(total_fidelity(0.5, 0.5, 0.5, 0.5).unwrap(), 0.5, epsilon = 1e-15);
        assert!(total_fidelity(1.1, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn snr_arithmetic() {
        let r = snr_from_counts(123.0, 10.0, 0.0);
        assert_relative_eq!(r.snr, 11.3, epsilon = 1e-12);
        assert!(!r.clamped);
        let z = snr_from_counts(5.0, 0.0, 0.0);
        assert!(z.snr.is_infinite());
        let c = snr_from_counts(5.0, 10.0, 0.0);
        assert!(c.clamped && c.snr == 0.0);
        assert!((single_photon_snr(5.54, 4.14).unwrap() - 1.34).abs() < 0.005);
    }

    #[test]
    fn basis_and_visibility_views_agree() {
        for i in 0..50 {
            let s = 0.05 + 0.7 * i as f64;
            let fb = basis_fidelity(s, 1.0).unwrap();
            let v = s / (s + 2.0);
            assert_relative_eq!(fb, 0.5 * (v + 1.0), epsilon = 1e-14);
            assert_relative_eq!(fb, (s + 1.0) / (s + 2.0), epsilon = 1e-14);
        }
    }

    #[test]
    fn bound_limits() {
        // Series with vacuum at 1/2.
        let mu: f64 = 1.16;
        let direct: f64 = (0..60)
            .map(|n| {
                let p = (n as f64 * mu.ln() - mu - ln_gamma(n as f64 + 1.0)).exp();
                p * if n == 0 { 0.5 } else { (n as f64 + 1.0) / (n as f64 + 2.0) }
            })
            .sum();
        assert_relative_eq!(classical_bound(mu, 1.0).unwrap(), direct, epsilon = 1e-12);
        let small = classical_bound(1e-4, 1e-5).unwrap();
        assert!((small - 2.0 / 3.0).abs() < 1e-3, "{small}");
        let b = classical_bound(1.16, 0.082).unwrap();
        assert!((b - 0.8146).abs() < 5e-4, "{b}");
        assert!(classical_bound(0.0, 0.5).is_err());
        assert!(classical_bound(1.0, 0.0).is_err());
    }

    #[test]
    fn bound_monotonicity() {
        let mut last = 0.0;
        for i in 1..60 {
            let b = classical_bound(0.05 * i as f64, 0.082).unwrap();
            assert!(b >= last - 1e-12);
            last = b;
        }
        let mut last = 1.0;
        for i in 1..=20 {
            let b = classical_bound(1.16, 0.05 * i as f64).unwrap();
            assert!(b <= last + 1e-12);
            last = b;
        }
    }

    #[test]
    fn expected_fidelity_behaviour() {
        assert_eq!(expected_fidelity(0.3, 0.082, 0.0).unwrap(), 1.0);
        let noise = 1.16 * 0.082 / 11.3;
        let f = expected_fidelity(1.16, 0.082, noise).unwrap();
        assert!((f - 0.880).abs() <= 0.021, "{f}");
        let mut last = 0.0;
        for i in 1..40 {
            let v = expected_fidelity(0.1 * i as f64, 0.082, noise).unwrap();
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn crossover_limits() {
        let tiny = crossover_mu(0.082, 1e-12).unwrap();
        assert!(tiny < 1e-6);
        assert!(matches!(crossover_mu(0.082, 10.0), Err(Error::NoCrossing(_))));
        let noise = 1.16 * 0.082 / 11.3;
        let mu = crossover_mu(0.082, noise).unwrap();
        let gap = expected_fidelity(mu, 0.082, noise).unwrap() - classical_bound(mu, 0.082).unwrap();
        assert!(gap.abs() < 1e-4);
    }

    fn fig3_run(n_trials: u64, state: QubitState) -> QubitRun {
        QubitRun {
            input_state: state,
            mu_q: 1.18,
            efficiency: 0.082,
            noise_per_window: 1.18 * 0.082 / 11.3,
            n_trials,
        }
    }

    #[test]
    fn empty_model_gives_empty_histogram() {
        let mut run = fig3_run(1000, QubitState::E);
        run.mu_q = 0.0;
        run.noise_per_window = 0.0;
        let m = time_bin_model(&run, 0.0, 3e-6, 1.5e-6, 2.1e-6, 0.1e-6).unwrap();
        let h = simulate_counts(&run, &m, 1).unwrap();
        assert_eq!(h.total(), 0);
    }

    #[test]
    fn simulated_snr_matches_expectation() {
        let run = fig3_run(35_000, QubitState::E);
        let m = time_bin_model(&run, 0.0, 3e-6, 1.5e-6, 2.1e-6, 0.1e-6).unwrap();
        let h = simulate_counts(&run, &m, 2024).unwrap();
        let w = h.window("early").unwrap().clone();
        let noise = m.expected_in(&w, true);
        let r = snr(&h, "early", &NoiseReference::Expected(noise)).unwrap();
        assert!((r.snr - 11.3).abs() < 3.0 * r.sigma, "{r:?}");
        assert_eq!(h, simulate_counts(&run, &m, 2024).unwrap());
    }

    #[test]
    fn doubling_trials_doubles_expected_counts() {
        let a = fig3_run(10_000, QubitState::Plus);
        let b = QubitRun { n_trials: 20_000, ..a };
        let m = time_bin_model(&a, 0.0, 3e-6, 1.5e-6, 2.1e-6, 0.1e-6).unwrap();
        let mean = |run: &QubitRun| -> f64 {
            (0..50).map(|s| simulate_counts(run, &m, s).unwrap().total() as f64).sum::<f64>() / 50.0
        };
        let ratio = mean(&b) / mean(&a);
        assert!((ratio - 2.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn snr_pipeline_statistics() {
        let run = fig3_run(35_000, QubitState::E);
        let m = time_bin_model(&run, 0.0, 3e-6, 1.5e-6, 2.1e-6, 0.1e-6).unwrap();
        let w = Window::centered("early", 0.0, 2.1e-6);
        let noise = m.expected_in(&w, true);
        let expect_counts = m.expected_in(&w, false) * run.n_trials as f64;
        let n_noise = noise * run.n_trials as f64;
        let analytic = (expect_counts - n_noise) / n_noise;
        let analytic_var = expect_counts / (n_noise * n_noise);
        let snrs: Vec<f64> = (0..200)
            .map(|s| snr(&simulate_counts(&run, &m, 100 + s).unwrap(), "early", &NoiseReference::Expected(noise)).unwrap().snr)
            .collect();
        let mean = snrs.iter().sum::<f64>() / 200.0;
        let var = snrs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 199.0;
        assert!((mean / analytic - 1.0).abs() < 0.02, "{mean} {analytic}");
        assert!((var / analytic_var - 1.0).abs() < 0.2, "{var} {analytic_var}");
    }

    #[test]
    fn measured_noise_reference() {
        let run = fig3_run(35_000, QubitState::E);
        let m = time_bin_model(&run, 0.0, 3e-6, 1.5e-6, 2.1e-6, 0.1e-6).unwrap();
        let h = simulate_counts(&run, &m, 5).unwrap();
        let r = snr(&h, "early", &NoiseReference::Measured("noise".into())).unwrap();
        assert!(r.snr > 5.0 && r.snr < 20.0, "{r:?}");
        assert!(snr(&h, "early", &NoiseReference::Measured("late".into())).is_ok());
        assert!(snr(&h, "missing", &NoiseReference::Zero).is_err());
    }

    #[test]
    fn superposition_model_visibility() {
        let run = fig3_run(1, QubitState::Plus);
        let m = time_bin_model(&run, 0.0, 3e-6, 1.5e-6, 2.1e-6, 0.1e-6).unwrap();
        let mid = m.windows.iter().find(|w| w.name == "middle").unwrap().clone();
        let c_max = m.expected_in(&mid, false);
        let n = m.expected_in(&mid, true);
        let s = 1.18 * 0.082;
        assert!((c_max - n - 0.5 * s).abs() < 0.01 * s);
    }

    #[test]
    fn counted_fidelities_track_expectation() {
        let g = TimeBinGeometry {
            separation: 3e-6,
            pulse_fwhm: 1.5e-6,
            gate: 2.1e-6,
            bin_width: 0.1e-6,
        };
        let noise = 1.16 * 0.082 / 11.3;
        let (r, hists) = analyze_qubits(1.16, 0.082, noise, 200_000, &g, 3).unwrap();
        assert_eq!(hists.len(), 6);
        assert!((r.total - r.expected_fidelity).abs() < 0.01, "{r:?}");
        assert!((r.f_e - basis_fidelity(11.3, 1.0).unwrap()).abs() < 0.01, "{r:?}");
    }

    #[test]
    fn fraction_conventions() {
        let (a, b) = snr_from_fractions(0.0965, 0.0017).unwrap();
        assert!((a - 56.76).abs() < 0.01 && (b - 55.76).abs() < 0.01);
    }
}
