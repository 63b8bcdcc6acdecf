//! Experiment pipelines behind the subcommands. Each returns typed results;
//! file emission lives in the parent module.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::dynamics::{inversion_map, sample_ensemble, CompiledTimeline, IonState, Subsystem};
use crate::echo::{
    absorption_factor, analytic_efficiency, dd_noise_rate, emit_echo, ensemble_bounds, max_grid_step, microscopic_efficiency,
    readout_window, run_initialization_rate_equations, AbsorptionProfile, EchoField, EfficiencyBudget, FeatureSummary,
};
use crate::error::{Error, Result};
use crate::models::{self, DecayFit, MimsPower, NlpeFit, SurfaceFixed};
use crate::photonstats::{self, BoundRow, LabeledHistogram, QubitReport, TimeBinGeometry};
use crate::pulses::{adiabaticity_margin, Level, PulseRole, PulseShape, PulseSpec, Transition};
use crate::sequences::{build_chs_ur4, build_initialization, build_nlpe, build_nlpe_dd, spin_target, Timeline, DETECTION_GATE};

/// Finest echo sampling step used by the memory pipeline (s).
pub const ECHO_GRID_STEP: f64 = 50e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseRequest {
    pub preset: String,
    /// Half-range of the detuning sweep (Hz); defaults to 0.4 x bandwidth.
    pub detuning_hz: Option<f64>,
    /// Half-range of the relative amplitude error.
    pub amplitude_error: f64,
    pub points: usize,
    /// Overall amplitude factor applied before the error sweep.
    pub amplitude: f64,
}

impl Default for PulseRequest {
    fn default() -> Self {
        PulseRequest {
            preset: "pi43".into(),
            detuning_hz: None,
            amplitude_error: 0.1,
            points: 100,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionRow {
    pub detuning_hz: f64,
    pub amplitude_scale: f64,
    pub inversion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseReport {
    pub preset: String,
    pub duration: f64,
    pub detuning_range_hz: f64,
    pub amplitude_error: f64,
    pub n_points: usize,
    pub min_inversion: f64,
    pub mean_inversion: f64,
    /// CHS presets only.
    pub adiabaticity_margin: Option<f64>,
    /// Set when no population moves anywhere on the grid.
    pub identity: bool,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (a + b)],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Inversion of a preset over a detuning by amplitude-error grid.
pub fn pulse_sweep(cfg: &Config, req: &PulseRequest) -> Result<(PulseReport, Vec<InversionRow>)> {
    let preset = cfg.preset(&req.preset)?;
    let shape = cfg.shape(&req.preset)?;
    if req.points == 0 || !(req.amplitude >= 0.0) || !(req.amplitude_error >= 0.0 && req.amplitude_error < 1.0) {
        return Err(Error::Config("sweep needs points > 0, amplitude >= 0 and amplitude error in [0, 1)".into()));
    }
    let range = match (req.detuning_hz, preset.bandwidth_hz()) {
        (Some(d), _) => d.abs(),
        (None, Some(bw)) => 0.4 * bw,
        (None, None) => 0.0,
    };
    let half = 0.5 * shape.duration();
    let spec = PulseSpec::new(
        &req.preset,
        PulseRole::Control,
        shape.clone(),
        half,
        Transition::new(Level::g(1), Level::e(1)),
    );
    let detunings = linspace(-range, range, req.points);
    let scales: Vec<f64> = linspace(1.0 - req.amplitude_error, 1.0 + req.amplitude_error, req.points)
        .into_iter()
        .map(|s| s * req.amplitude)
        .collect();
    let map = inversion_map(&spec, &detunings, &scales)?;
    let mut rows = Vec::with_capacity(detunings.len() * scales.len());
    for (i, d) in detunings.iter().enumerate() {
        for (j, s) in scales.iter().enumerate() {
            rows.push(InversionRow {
                detuning_hz: *d,
                amplitude_scale: *s,
                inversion: map[i][j],
            });
        }
    }
    let inv: Vec<f64> = rows.iter().map(|r| r.inversion).collect();
    let min = inv.iter().copied().fold(f64::INFINITY, f64::min);
    let max = inv.iter().copied().fold(0.0, f64::max);
    let margin = match &shape {
        PulseShape::Chs(p) if req.amplitude > 0.0 => Some(adiabaticity_margin(&p.with_omega0(p.omega0 * req.amplitude))),
        _ => None,
    };
    let report = PulseReport {
        preset: req.preset.clone(),
        duration: shape.duration(),
        detuning_range_hz: range,
        amplitude_error: req.amplitude_error,
        n_points: rows.len(),
        min_inversion: min,
        mean_inversion: inv.iter().sum::<f64>() / inv.len() as f64,
        adiabaticity_margin: margin,
        identity: max < 1e-12,
    };
    Ok((report, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Nlpe,
    NlpeDd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRequest {
    pub protocol: Protocol,
    pub seed: u64,
    pub n_ions: Option<usize>,
    pub tau: Option<f64>,
    pub n_pulses: Option<usize>,
    pub delta: Option<f64>,
    pub mu_q: Option<f64>,
    pub eta: Option<f64>,
    /// Run the rate-equation initialization and report its feature.
    pub initialization: bool,
    /// Simulate photon counts for the four qubit states.
    pub counts: bool,
}

impl MemoryRequest {
    pub fn new(protocol: Protocol, seed: u64) -> Self {
        MemoryRequest {
            protocol,
            seed,
            n_ions: None,
            tau: None,
            n_pulses: None,
            delta: None,
            mu_q: None,
            eta: None,
            initialization: true,
            counts: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub protocol: Protocol,
    pub n_ions: usize,
    pub protocol_times: [f64; 5],
    pub echo_time: f64,
    pub peak_time: Option<f64>,
    pub peak_offset: Option<f64>,
    pub microscopic_efficiency: f64,
    /// Absorption factor times the microscopic efficiency.
    pub storage_efficiency: f64,
    pub analytic_efficiency: f64,
    pub budget: EfficiencyBudget,
    /// Expected noise photons per trial from population promoted by the second pi43.
    pub noise_per_trial: f64,
    pub tau: Option<f64>,
    pub n_dd_pulses: usize,
    pub initialization: Option<FeatureSummary>,
    pub qubits: Option<QubitReport>,
}

#[derive(Debug, Clone)]
pub struct MemoryOutcome {
    pub report: MemoryReport,
    pub timeline: Timeline,
    pub echo: EchoField,
    pub histograms: Vec<LabeledHistogram>,
    pub absorption: Option<AbsorptionProfile>,
}

/// Storage timeline for a request.
pub fn memory_timeline(cfg: &Config, req: &MemoryRequest) -> Result<Timeline> {
    let four = cfg.four_level()?;
    let pulses = cfg.nlpe_pulses()?;
    let t = &cfg.timings;
    let tl = match req.protocol {
        Protocol::Nlpe => build_nlpe(t.nlpe, &pulses, &four)?,
        Protocol::NlpeDd => {
            let n = req.n_pulses.unwrap_or(t.n_pulses);
            let dd = if n == 0 {
                Timeline::empty()
            } else {
                build_chs_ur4(
                    req.tau.unwrap_or(t.tau),
                    n,
                    &cfg.shape("rf_pi")?,
                    req.delta.unwrap_or(t.delta),
                    spin_target(&four),
                )?
            };
            build_nlpe_dd(t.nlpe_dd, &pulses, &four, &dd)?
        }
    };
    if t.clock_jitter > 0.0 {
        return tl.with_jitter(t.clock_jitter).realize_jitter(req.seed);
    }
    Ok(tl)
}

fn ensemble(cfg: &Config, sub: &Subsystem, n_ions: usize, seed: u64) -> Result<Vec<IonState>> {
    let mut spec = cfg.ensemble_spec(seed);
    spec.n_ions = n_ions;
    let four = cfg.four_level()?;
    sample_ensemble(&spec, &sub.pure_population(Level::g(four.ground_pair.0))?)
}

fn promoted_noise(cfg: &Config, sub: &Subsystem, tl: &Timeline, ions: &[IonState]) -> Result<f64> {
    let four = cfg.four_level()?;
    let pulse = tl
        .pulses()
        .find(|p| p.label == "pi43_b")
        .ok_or_else(|| Error::Timeline("storage timeline has no second pi43".into()))?;
    let after = pulse.support().1;
    let ct = CompiledTimeline::new(sub, tl, ensemble_bounds(ions))?;
    let states = crate::dynamics::ensemble::par_map_ions(ions.len(), |i| ct.state_at(&ions[i], &cfg.decoherence, after))?;
    let pos = sub.position(Level::e(four.signal_excited))?;
    let branching = cfg.scheme()?.branching(four.ground_pair.0, four.signal_excited)?;
    dd_noise_rate(&states, pos, branching, cfg.photon.collection_efficiency)
}

/// Noise per trial for a decoupled storage run whose RF pulses carry a
/// relative amplitude error.
pub fn dd_noise(cfg: &Config, tau: f64, n_pulses: usize, rf_amplitude_error: f64, n_ions: usize, seed: u64) -> Result<f64> {
    let four = cfg.four_level()?;
    let sub = Subsystem::nlpe(&four, &cfg.scheme()?)?;
    let rf = cfg.shape("rf_pi")?.scaled(1.0 + rf_amplitude_error);
    let dd = build_chs_ur4(tau, n_pulses, &rf, cfg.timings.delta, spin_target(&four))?;
    let tl = build_nlpe_dd(cfg.timings.nlpe_dd, &cfg.nlpe_pulses()?, &four, &dd)?;
    let ions = ensemble(cfg, &sub, n_ions, seed)?;
    promoted_noise(cfg, &sub, &tl, &ions)
}

/// Rate-equation initialization of the configured crystal.
pub fn initialization_profile(cfg: &Config) -> Result<AbsorptionProfile> {
    let scheme = cfg.scheme()?;
    let four = cfg.four_level()?;
    let r = cfg.init.reps;
    let tl = build_initialization(&scheme, (r[0], r[1], r[2]), &cfg.init.pumps())?;
    run_initialization_rate_equations(&scheme, &tl, &cfg.init.pump_model(), (four.ground_pair.0, four.signal_excited))
}

/// Time-bin layout derived from the configuration.
pub fn geometry(cfg: &Config) -> Result<TimeBinGeometry> {
    let fwhm = match cfg.shape("input")? {
        PulseShape::TruncatedGaussian { fwhm, .. } => fwhm,
        other => other.duration() / 2.0,
    };
    Ok(TimeBinGeometry {
        separation: cfg.timings.readout_splitting,
        pulse_fwhm: fwhm,
        gate: DETECTION_GATE,
        bin_width: cfg.photon.bin_width,
    })
}

pub fn memory_run(cfg: &Config, req: &MemoryRequest) -> Result<MemoryOutcome> {
    let four = cfg.four_level()?;
    let sub = Subsystem::nlpe(&four, &cfg.scheme()?)?;
    let tl = memory_timeline(cfg, req)?;
    let n_ions = req.n_ions.unwrap_or(cfg.ensemble.n_ions);
    let ions = ensemble(cfg, &sub, n_ions, req.seed)?;
    let step = ECHO_GRID_STEP.min(max_grid_step(cfg.ensemble.optical_fwhm_hz));
    let echo = emit_echo(&sub, &tl, &ions, &cfg.decoherence, readout_window(&tl)?, step)?;
    let micro = microscopic_efficiency(&echo)?;
    let times = tl
        .protocol_times
        .ok_or_else(|| Error::Timeline("storage timeline lacks protocol times".into()))?;
    let te = tl.echo_time.unwrap_or(times[4]);
    // The decoupling block refocuses the spin inhomogeneity accumulated
    // across it, so the budget uses the skeleton times.
    let budget_times = match req.protocol {
        Protocol::Nlpe => times,
        Protocol::NlpeDd => cfg.timings.nlpe_dd,
    };
    let budget = EfficiencyBudget {
        d: cfg.budget.d,
        eta_control: cfg.budget.eta_control,
        gamma: cfg.decoherence.optical_dephasing_rate,
        gamma34: cfg.ensemble.spin_fwhm_hz,
        gamma23bar: cfg.ensemble.ee_fwhm_hz,
        t31: 0.0,
        t42: 0.0,
        heating_penalty: cfg.budget.heating_penalty,
    }
    .with_protocol_times(&budget_times);
    budget.validate()?;
    let noise = promoted_noise(cfg, &sub, &tl, &ions)?;
    let absorption = if req.initialization {
        Some(initialization_profile(cfg)?)
    } else {
        None
    };
    let (qubits, histograms) = if req.counts {
        let mu = req.mu_q.unwrap_or(cfg.photon.mu_q);
        let eta = req.eta.unwrap_or(cfg.photon.eta);
        let (r, h) = photonstats::analyze_qubits(mu, eta, cfg.photon.noise_per_window, cfg.photon.n_trials, &geometry(cfg)?, req.seed)?;
        (Some(r), h)
    } else {
        (None, Vec::new())
    };
    let peak = echo.peak_time();
    let n_dd = tl.pulses().filter(|p| p.role == PulseRole::Rf).count();
    let report = MemoryReport {
        protocol: req.protocol,
        n_ions,
        protocol_times: times,
        echo_time: te,
        peak_time: peak,
        peak_offset: peak.map(|p| p - te),
        microscopic_efficiency: micro,
        storage_efficiency: absorption_factor(cfg.budget.d) * micro,
        analytic_efficiency: analytic_efficiency(&budget),
        budget,
        noise_per_trial: noise,
        tau: (n_dd > 0).then(|| req.tau.unwrap_or(cfg.timings.tau)),
        n_dd_pulses: n_dd,
        initialization: absorption.as_ref().map(|a| a.feature()),
        qubits,
    };
    if !report.microscopic_efficiency.is_finite() {
        return Err(Error::NonFinite("storage efficiency".into()));
    }
    Ok(MemoryOutcome {
        report,
        timeline: tl,
        echo,
        histograms,
        absorption,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    Mims,
    MimsTail,
    NlpeSurface,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRequest {
    pub model: FitModel,
    pub data: PathBuf,
    /// Lower time limit of the tail fit (s).
    pub t_min: f64,
    pub power: MimsPower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FitReport {
    Mims { fit: DecayFit, std_errors: [f64; 3], t_min: Option<f64> },
    NlpeSurface { fit: NlpeFit, std_errors: [f64; 4], d: f64 },
}

/// Data, weight and model value per input row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub x: f64,
    pub y: f64,
    pub value: f64,
    pub sigma: f64,
    pub model: f64,
}

pub fn fit_run(cfg: &Config, req: &FitRequest) -> Result<(FitReport, Vec<CurveRow>)> {
    if !req.data.is_file() {
        return Err(Error::Config(format!("cannot read data file {}", req.data.display())));
    }
    match req.model {
        FitModel::Mims | FitModel::MimsTail => {
            let pts = models::read_decay_csv(&req.data)?;
            let (fit, t_min) = if req.model == FitModel::Mims {
                (models::fit_mims(&pts, req.power)?, None)
            } else {
                (models::fit_tail(&pts, req.t_min)?, Some(req.t_min))
            };
            let rows = pts
                .iter()
                .map(|p| CurveRow {
                    x: p.t,
                    y: 0.0,
                    value: p.value,
                    sigma: p.sigma,
                    model: fit.eval(p.t),
                })
                .collect();
            Ok((
                FitReport::Mims {
                    std_errors: fit.std_errors(),
                    fit,
                    t_min,
                },
                rows,
            ))
        }
        FitModel::NlpeSurface => {
            let pts = models::read_surface_csv(&req.data)?;
            let fixed = SurfaceFixed {
                d: cfg.budget.d,
                measured: None,
                polish: true,
            };
            let fit = models::fit_nlpe_surface(&pts, &fixed)?;
            let rows = pts
                .iter()
                .map(|p| CurveRow {
                    x: p.t31,
                    y: p.t42,
                    value: p.value,
                    sigma: p.sigma,
                    model: models::nlpe_surface(p.t31, p.t42, fit.gamma34, fit.gamma23bar, fit.gamma_opt, fit.eta_control, fixed.d),
                })
                .collect();
            Ok((
                FitReport::NlpeSurface {
                    std_errors: fit.std_errors(),
                    fit,
                    d: fixed.d,
                },
                rows,
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRequest {
    pub mu_min: f64,
    pub mu_max: f64,
    pub mu_points: usize,
    pub eta: f64,
    pub noise_per_window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub eta: f64,
    pub noise_per_window: f64,
    pub n_points: usize,
    pub crossover_found: bool,
    pub crossover_mu: Option<f64>,
    pub message: Option<String>,
}

pub fn bounds_run(req: &BoundsRequest) -> Result<(BoundsReport, Vec<BoundRow>)> {
    if req.mu_points == 0 || !(req.mu_min > 0.0 && req.mu_max >= req.mu_min) {
        return Err(Error::Config("mu grid needs 0 < mu_min <= mu_max and at least one point".into()));
    }
    if !(req.eta > 0.0 && req.eta <= 1.0) || !(req.noise_per_window >= 0.0) {
        return Err(Error::Config("eta must lie in (0, 1] and noise must be non-negative".into()));
    }
    let mus = linspace(req.mu_min, req.mu_max, req.mu_points);
    let mus = if req.mu_points == 1 { vec![req.mu_min] } else { mus };
    let rows = photonstats::bound_curve(&mus, req.eta, req.noise_per_window)?;
    let (found, mu, message) = match photonstats::crossover_mu(req.eta, req.noise_per_window) {
        Ok(m) => (true, Some(m), None),
        Err(Error::NoCrossing(msg)) => (false, None, Some(msg)),
        Err(e) => return Err(e),
    };
    Ok((
        BoundsReport {
            eta: req.eta,
            noise_per_window: req.noise_per_window,
            n_points: rows.len(),
            crossover_found: found,
            crossover_mu: mu,
            message,
        },
        rows,
    ))
}
