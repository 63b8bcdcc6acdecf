//! Executable pulse timelines for every protocol: storage, decoupling,
//! spin echoes, time-bin readout and initialization.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::{FourLevelSystem, LevelScheme};
use crate::pulses::{Level, PulseRole, PulseShape, PulseSpec, Transition};

/// Width of the photon detection gate around each echo (s).
pub const DETECTION_GATE: f64 = 2.1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerKind {
    InputSignal,
    ReadoutWindow,
    DetectionGate,
    Probe,
}

/// A non-driving event occupying `[time - width/2, time + width/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub kind: MarkerKind,
    pub time: f64,
    #[serde(default)]
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Pulse(PulseSpec),
    Marker(Marker),
}

impl Event {
    fn sort_key(&self) -> f64 {
        match self {
            Event::Pulse(p) => p.support().0,
            Event::Marker(m) => m.time - 0.5 * m.width,
        }
    }
}

/// Ordered list of timed events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub events: Vec<Event>,
    /// Time at which the timeline ends (s).
    pub total_span: f64,
    /// Standard deviation of pulse timing errors (s); applied by [`Timeline::realize_jitter`].
    #[serde(default)]
    pub clock_jitter: f64,
    /// Expected echo emission time, for storage protocols.
    #[serde(default)]
    pub echo_time: Option<f64>,
    /// The five protocol times `t0..t4` after any decoupling shift.
    #[serde(default)]
    pub protocol_times: Option<[f64; 5]>,
}

impl Timeline {
    /// Sorts and validates events; `total_span` becomes the latest event end.
    pub fn new(mut events: Vec<Event>) -> Result<Timeline> {
        events.sort_by(|a, b| a.sort_key().total_cmp(&b.sort_key()));
        let mut end: f64 = 0.0;
        let mut last_pulse: Option<&PulseSpec> = None;
        for ev in &events {
            match ev {
                Event::Pulse(p) => {
                    p.validate()?;
                    let (s, e) = p.support();
                    if let Some(prev) = last_pulse {
                        let prev_end = prev.support().1;
                        // Allow for rounding in back-to-back pulse centers.
                        if s < prev_end - 1e-12 * prev_end.abs() {
                            return Err(Error::Timeline(format!(
                                "pulse '{}' overlaps '{}' ({s:e} < {:e})",
                                p.label,
                                prev.label,
                                prev.support().1
                            )));
                        }
                    }
                    last_pulse = Some(p);
                    end = end.max(e);
                }
                Event::Marker(m) => {
                    if !(m.time.is_finite() && m.width >= 0.0) {
                        return Err(Error::Timeline(format!("invalid marker {m:?}")));
                    }
                    end = end.max(m.time + 0.5 * m.width);
                }
            }
        }
        Ok(Timeline {
            events,
            total_span: end,
            clock_jitter: 0.0,
            echo_time: None,
            protocol_times: None,
        })
    }

    pub fn empty() -> Timeline {
        Timeline {
            events: Vec::new(),
            total_span: 0.0,
            clock_jitter: 0.0,
            echo_time: None,
            protocol_times: None,
        }
    }

    pub fn pulses(&self) -> impl Iterator<Item = &PulseSpec> {
        self.events.iter().filter_map(|e| match e {
            Event::Pulse(p) => Some(p),
            _ => None,
        })
    }

    pub fn markers(&self) -> impl Iterator<Item = &Marker> {
        self.events.iter().filter_map(|e| match e {
            Event::Marker(m) => Some(m),
            _ => None,
        })
    }

    pub fn marker(&self, kind: MarkerKind) -> Option<&Marker> {
        self.markers().find(|m| m.kind == kind)
    }

    /// Earliest event start (never after zero).
    pub fn start(&self) -> f64 {
        self.events.iter().map(|e| e.sort_key()).fold(0.0, f64::min)
    }

    pub fn end(&self) -> f64 {
        self.total_span
    }

    pub fn n_pulses(&self) -> usize {
        self.pulses().count()
    }

    /// Copy with every event shifted by `dt`.
    pub fn shifted(&self, dt: f64) -> Result<Timeline> {
        let events = self
            .events
            .iter()
            .cloned()
            .map(|mut e| {
                match &mut e {
                    Event::Pulse(p) => p.time += dt,
                    Event::Marker(m) => m.time += dt,
                }
                e
            })
            .collect();
        let mut out = Timeline::new(events)?;
        out.clock_jitter = self.clock_jitter;
        out.echo_time = self.echo_time.map(|t| t + dt);
        out.protocol_times = self.protocol_times.map(|ts| ts.map(|t| t + dt));
        Ok(out)
    }

    pub fn with_jitter(mut self, sigma: f64) -> Timeline {
        self.clock_jitter = sigma;
        self
    }

    /// One random realization of the clock jitter: every pulse time receives
    /// an independent Gaussian error. Markers stay at their nominal times.
    pub fn realize_jitter(&self, seed: u64) -> Result<Timeline> {
        if self.clock_jitter == 0.0 {
            return Ok(self.clone());
        }
        let mut events = self.events.clone();
        for (i, e) in events.iter_mut().enumerate() {
            if let Event::Pulse(p) = e {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let z: f64 = StandardNormal.sample(&mut rng);
                p.time = (p.time + self.clock_jitter * z).max(0.0);
            }
        }
        let mut out = Timeline::new(events)?;
        out.clock_jitter = 0.0;
        out.echo_time = self.echo_time;
        out.protocol_times = self.protocol_times;
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Timeline> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Echo time of the four-pulse storage sequence.
pub fn echo_time(t: &[f64; 5]) -> f64 {
    t[4] + t[3] - t[2] - t[1] + t[0]
}

/// Pulse shapes used by the optical storage sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct NlpePulses {
    pub input: PulseShape,
    pub pi43: PulseShape,
    pub pi32: PulseShape,
}

/// Transitions of the storage protocol.
pub fn nlpe_targets(four: &FourLevelSystem) -> (Transition, Transition, Transition) {
    let (lo, hi) = four.ground_pair;
    (
        Transition::new(Level::g(lo), Level::e(four.signal_excited)),
        Transition::new(Level::g(hi), Level::e(four.signal_excited)),
        Transition::new(Level::g(lo), Level::e(four.auxiliary_excited)),
    )
}

/// Spin transition of the storage ground pair.
pub fn spin_target(four: &FourLevelSystem) -> Transition {
    Transition::new(Level::g(four.ground_pair.0), Level::g(four.ground_pair.1))
}

/// Input at `t0`, then pi43, pi32, pi43, pi32 at `t1..t4`, and a readout
/// window centered on the echo.
pub fn build_nlpe(times: [f64; 5], pulses: &NlpePulses, four: &FourLevelSystem) -> Result<Timeline> {
    build_nlpe_with_dd(times, pulses, four, &Timeline::empty())
}

fn build_nlpe_with_dd(
    times: [f64; 5],
    pulses: &NlpePulses,
    four: &FourLevelSystem,
    dd: &Timeline,
) -> Result<Timeline> {
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Timeline(format!("protocol times must be strictly increasing: {times:?}")));
    }
    let shift = dd.total_span;
    let t = [times[0], times[1], times[2] + shift, times[3] + shift, times[4] + shift];
    let te = echo_time(&t);
    let (sig, c43, c32) = nlpe_targets(four);
    let mut events = vec![
        Event::Pulse(PulseSpec::new("input", PulseRole::Input, pulses.input.clone(), t[0], sig)),
        Event::Marker(Marker {
            kind: MarkerKind::InputSignal,
            time: t[0],
            width: pulses.input.duration(),
        }),
        Event::Pulse(PulseSpec::new("pi43_a", PulseRole::Control, pulses.pi43.clone(), t[1], c43)),
        Event::Pulse(PulseSpec::new("pi32_a", PulseRole::Control, pulses.pi32.clone(), t[2], c32)),
        Event::Pulse(PulseSpec::new("pi43_b", PulseRole::Control, pulses.pi43.clone(), t[3], c43)),
        Event::Pulse(PulseSpec::new("pi32_b", PulseRole::Control, pulses.pi32.clone(), t[4], c32)),
        Event::Marker(Marker {
            kind: MarkerKind::ReadoutWindow,
            time: te,
            width: pulses.input.duration().max(DETECTION_GATE),
        }),
        Event::Marker(Marker {
            kind: MarkerKind::DetectionGate,
            time: te,
            width: DETECTION_GATE,
        }),
    ];
    for p in dd.pulses() {
        let mut p = p.clone();
        p.time += t[1];
        events.push(Event::Pulse(p));
    }
    let tl = Timeline::new(events)?;
    for p in tl.pulses() {
        let (s, e) = p.support();
        if te >= s && te <= e {
            return Err(Error::Timeline(format!(
                "echo time {te:e} s falls inside pulse '{}' [{s:e}, {e:e}]",
                p.label
            )));
        }
    }
    Ok(Timeline {
        echo_time: Some(te),
        protocol_times: Some(t),
        ..tl
    })
}

/// Phases of one UR4 block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ur4Phases {
    pub phi2: f64,
    pub delta: f64,
    pub phases: [f64; 4],
    pub n_blocks: usize,
}

/// UR4 phases `(0, pi/2 + delta, 2 delta, pi/2 + 3 delta) mod 2 pi`.
pub fn ur4_phases(delta: f64, n_blocks: usize) -> Result<Ur4Phases> {
    if n_blocks == 0 {
        return Err(Error::Validation("UR4 needs at least one block".into()));
    }
    if !delta.is_finite() {
        return Err(Error::Validation("non-finite UR4 delta".into()));
    }
    let phi2 = FRAC_PI_2 + delta;
    let phases = [0.0, phi2, PI + 2.0 * phi2, 3.0 * PI + 3.0 * phi2].map(|p: f64| p.rem_euclid(TAU));
    Ok(Ur4Phases {
        phi2,
        delta,
        phases,
        n_blocks,
    })
}

/// CHS-UR4 decoupling block starting at time 0: pulse `k` is centered at
/// `tau/2 + k tau` and carries UR4 phase `k mod 4`.
pub fn build_chs_ur4(
    tau: f64,
    n_pulses: usize,
    rf: &PulseShape,
    delta: f64,
    target: Transition,
) -> Result<Timeline> {
    if n_pulses < 4 || n_pulses % 4 != 0 {
        return Err(Error::Timeline(format!("UR4 pulse count {n_pulses} must be a positive multiple of 4")));
    }
    let dur = rf.duration();
    if !(tau > dur) {
        return Err(Error::Timeline(format!("tau {tau:e} s must exceed the RF pulse duration {dur:e} s")));
    }
    let ph = ur4_phases(delta, n_pulses / 4)?;
    let events = (0..n_pulses)
        .map(|k| {
            Event::Pulse(
                PulseSpec::new(&format!("rf_{k}"), PulseRole::Rf, rf.clone(), 0.5 * tau + k as f64 * tau, target)
                    .with_phase(ph.phases[k % 4]),
            )
        })
        .collect();
    let mut tl = Timeline::new(events)?;
    tl.total_span = n_pulses as f64 * tau;
    Ok(tl)
}

/// Storage sequence with a decoupling block inserted after the first pi43.
///
/// The block (built from time 0, spanning `dd.total_span`) is moved to start
/// at `t1`; `t2`, `t3` and `t4` are delayed by the block span. An empty block
/// gives [`build_nlpe`].
pub fn build_nlpe_dd(
    times: [f64; 5],
    pulses: &NlpePulses,
    four: &FourLevelSystem,
    dd: &Timeline,
) -> Result<Timeline> {
    build_nlpe_with_dd(times, pulses, four, dd)
}

/// Replaces the final pi32 by two half-field copies separated by `splitting`,
/// the second carrying `relative_phase`, and widens the readout window to
/// cover the three output time bins.
pub fn build_superposition_readout(base: &Timeline, splitting: f64, relative_phase: f64) -> Result<Timeline> {
    let te = base
        .echo_time
        .ok_or_else(|| Error::Timeline("base timeline has no echo time".into()))?;
    if !(splitting >= 0.0) {
        return Err(Error::Timeline(format!("splitting {splitting} must be non-negative")));
    }
    let mut replaced = false;
    let mut events = Vec::with_capacity(base.events.len());
    for ev in &base.events {
        match ev {
            Event::Pulse(p) if p.label == "pi32_b" => {
                let mut q = p.clone();
                q.label = "pi32_pair".into();
                q.shape = PulseShape::Pair {
                    base: Box::new(p.shape.clone()),
                    splitting,
                    relative_phase,
                };
                let (s, e) = p.support();
                if te >= s && te <= e {
                    return Err(Error::Timeline("echo overlaps the first readout pulse".into()));
                }
                events.push(Event::Pulse(q));
                replaced = true;
            }
            Event::Marker(m) if m.kind == MarkerKind::ReadoutWindow => {
                events.push(Event::Marker(Marker {
                    kind: MarkerKind::ReadoutWindow,
                    time: te + splitting,
                    width: m.width + 2.0 * splitting,
                }));
            }
            other => events.push(other.clone()),
        }
    }
    if !replaced {
        return Err(Error::Timeline("base timeline has no final pi32 pulse".into()));
    }
    for k in 1..=2 {
        events.push(Event::Marker(Marker {
            kind: MarkerKind::DetectionGate,
            time: te + k as f64 * splitting,
            width: DETECTION_GATE,
        }));
    }
    let tl = Timeline::new(events)?;
    Ok(Timeline {
        clock_jitter: base.clock_jitter,
        echo_time: base.echo_time,
        protocol_times: base.protocol_times,
        ..tl
    })
}

/// Replaces the input pulse by a time-bin pair: early at `t0`, late at
/// `t0 + separation` with phase `relative_phase`, each at half field.
pub fn with_time_bin_input(base: &Timeline, separation: f64, relative_phase: f64) -> Result<Timeline> {
    let events = base
        .events
        .iter()
        .cloned()
        .map(|ev| match ev {
            Event::Pulse(mut p) if p.role == PulseRole::Input => {
                p.shape = PulseShape::Pair {
                    base: Box::new(p.shape),
                    splitting: separation,
                    relative_phase,
                };
                Event::Pulse(p)
            }
            other => other,
        })
        .collect();
    let tl = Timeline::new(events)?;
    Ok(Timeline {
        clock_jitter: base.clock_jitter,
        echo_time: base.echo_time,
        protocol_times: base.protocol_times,
        ..tl
    })
}

/// Pump settings for the initialization sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitPumps {
    /// Chirp range of the cleaning and polarization pulses (Hz).
    pub wide_bandwidth_hz: f64,
    /// Chirp range of the back-burning pulses (Hz).
    pub narrow_bandwidth_hz: f64,
    pub pulse_duration: f64,
    /// Peak Rabi frequency `Omega/2 pi` (Hz), carried for completeness.
    pub rabi_hz: f64,
}

impl Default for InitPumps {
    fn default() -> Self {
        InitPumps {
            wide_bandwidth_hz: 3.0e6,
            narrow_bandwidth_hz: 0.8e6,
            pulse_duration: 1e-3,
            rabi_hz: 10e3,
        }
    }
}

/// Pump transitions `(g, e)` of the three initialization stages.
pub fn initialization_sets() -> [Vec<(usize, usize)>; 3] {
    [
        vec![(1, 2), (2, 2), (3, 3), (4, 3), (5, 5), (6, 4), (3, 2)],
        vec![(1, 2), (2, 2), (3, 3), (4, 3), (5, 5), (3, 2)],
        vec![(1, 2), (2, 2), (4, 3), (5, 5), (6, 4)],
    ]
}

/// Class cleaning, spin polarization and back-burning stages, repeated
/// `reps` times each; pulses follow one another without gaps.
pub fn build_initialization(scheme: &LevelScheme, reps: (usize, usize, usize), pumps: &InitPumps) -> Result<Timeline> {
    if !(pumps.pulse_duration > 0.0) {
        return Err(Error::Validation("pump duration must be positive".into()));
    }
    let sets = initialization_sets();
    let counts = [reps.0, reps.1, reps.2];
    let mut events = Vec::new();
    let mut t = 0.0;
    let mut k = 0usize;
    for (stage, set) in sets.iter().enumerate() {
        let bw = if stage == 2 {
            pumps.narrow_bandwidth_hz
        } else {
            pumps.wide_bandwidth_hz
        };
        for _ in 0..counts[stage] {
            for &(g, e) in set {
                scheme.transition_frequency(g, e)?;
                let shape = PulseShape::ChirpedRectangular {
                    omega0: TAU * pumps.rabi_hz,
                    duration: pumps.pulse_duration,
                    bandwidth_hz: bw,
                };
                // Exact multiples avoid accumulated rounding between pulses.
                let center = (k as f64 + 0.5) * pumps.pulse_duration;
                events.push(Event::Pulse(PulseSpec::new(
                    &format!("s{}_f{}{}", stage + 1, g, e),
                    PulseRole::Pump,
                    shape,
                    center,
                    Transition::new(Level::g(g), Level::e(e)),
                )));
                k += 1;
                t = center + 0.5 * pumps.pulse_duration;
            }
        }
    }
    let mut tl = Timeline::new(events)?;
    tl.total_span = t;
    Ok(tl)
}

/// Half-area version of a pulse, as used for the first pulse of a spin echo.
pub fn half_pulse(shape: &PulseShape) -> PulseShape {
    shape.scaled(0.5)
}

/// pi/2 at 0, pi at `tau`, probe at `2 tau`.
pub fn build_two_pulse_echo(tau: f64, rf: &PulseShape, target: Transition) -> Result<Timeline> {
    let dur = rf.duration();
    if !(tau > 0.0) || !(tau > dur) {
        return Err(Error::Timeline(format!("tau {tau:e} s must exceed the pulse duration {dur:e} s")));
    }
    let events = vec![
        Event::Pulse(PulseSpec::new("half_pi", PulseRole::Rf, half_pulse(rf), 0.0, target)),
        Event::Pulse(PulseSpec::new("pi", PulseRole::Rf, rf.clone(), tau, target)),
        Event::Marker(Marker {
            kind: MarkerKind::Probe,
            time: 2.0 * tau,
            width: 0.0,
        }),
    ];
    let mut tl = Timeline::new(events)?;
    tl.echo_time = Some(2.0 * tau);
    Ok(tl)
}
