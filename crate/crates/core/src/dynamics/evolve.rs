//! Time evolution of one ion through a timeline: closed-form free evolution
//! between pulses and cached pulse propagators during them.

use std::collections::HashMap;

use num_complex::Complex64;

use super::propagator::{embed_unitary, pair_bound, pair_hz, PulsePlan, Su2, PULSE_TOLERANCE};
use super::state::{CMatrix, DecoherenceSpec, IonState, Subsystem};
use crate::error::{Error, Result};
use crate::sequences::Timeline;

/// Free evolution over `t` seconds: phase accrual from the level energies
/// (rad/s), exponential damping of coherences and excited-state decay with
/// branching into the ground levels of the subsystem.
pub fn free_evolve(
    rho: &mut CMatrix,
    sub: &Subsystem,
    energies: &[f64],
    dec: &DecoherenceSpec,
    t: f64,
    with_phase: bool,
) {
    if t == 0.0 {
        return;
    }
    let d = sub.dim();
    let half_decay = dec.excited_lifetime.map_or(0.0, |t1| 0.5 / t1);
    for j in 0..d {
        for k in 0..d {
            if j == k {
                continue;
            }
            let (ej, ek) = (sub.is_excited(j), sub.is_excited(k));
            let mut rate = if ej || ek {
                dec.optical_dephasing_rate
            } else {
                dec.spin_dephasing_rate
            };
            rate += half_decay * (ej as u8 + ek as u8) as f64;
            let mut f = Complex64::new((-rate * t).exp(), 0.0);
            if with_phase {
                f *= Complex64::from_polar(1.0, -(energies[j] - energies[k]) * t);
            }
            rho[(j, k)] *= f;
        }
    }
    if let Some(t1) = dec.excited_lifetime {
        let keep = (-t / t1).exp();
        for e in 0..d {
            if !sub.is_excited(e) {
                continue;
            }
            let p = rho[(e, e)].re;
            let lost = p * (1.0 - keep);
            rho[(e, e)] = Complex64::new(p * keep, 0.0);
            for g in 0..d {
                let w = sub.decay_weight(g, e);
                if w > 0.0 {
                    rho[(g, g)] += Complex64::new(w * lost, 0.0);
                }
            }
        }
    }
}

/// Damping-only half step used around pulse unitaries.
fn damp(rho: &mut CMatrix, sub: &Subsystem, dec: &DecoherenceSpec, t: f64) {
    if !dec.is_none() {
        free_evolve(rho, sub, &[], dec, t, false);
    }
}

fn conjugate(u: &CMatrix, rho: &CMatrix) -> CMatrix {
    u * rho * u.adjoint()
}

#[derive(Debug, Clone)]
struct CompiledPulse {
    plan: usize,
    lo: usize,
    up: usize,
    start: f64,
    end: f64,
    /// Offset between this pulse's absolute times and its plan's.
    time_shift: f64,
    phase: f64,
}

/// A timeline prepared for repeated evolution of many ions on one subsystem.
///
/// Pulses that differ only by time and constant phase share one
/// [`PulsePlan`], and each ion computes every plan's propagator at most once.
#[derive(Debug, Clone)]
pub struct CompiledTimeline {
    sub: Subsystem,
    start: f64,
    end: f64,
    pulses: Vec<CompiledPulse>,
    plans: Vec<PulsePlan>,
}

impl CompiledTimeline {
    /// `bounds` are the detuning ranges `(optical, spin, ee)` in Hz over which
    /// pulse step grids are error-controlled.
    pub fn new(sub: &Subsystem, timeline: &Timeline, bounds: [f64; 3]) -> Result<Self> {
        Self::with_tolerance(sub, timeline, bounds, PULSE_TOLERANCE)
    }

    pub fn with_tolerance(sub: &Subsystem, timeline: &Timeline, bounds: [f64; 3], tol: f64) -> Result<Self> {
        let mut keys: HashMap<String, usize> = HashMap::new();
        let mut plans = Vec::new();
        let mut pulses = Vec::new();
        for p in timeline.pulses() {
            let (lo, up) = sub.positions(&p.target)?;
            let mut key_spec = p.clone();
            key_spec.phase = 0.0;
            key_spec.time = 0.0;
            key_spec.label.clear();
            let key = serde_json::to_string(&key_spec)?;
            let idx = match keys.get(&key) {
                Some(&i) => i,
                None => {
                    let plan = PulsePlan::new(p, pair_bound(sub, p, bounds), tol)?;
                    plans.push(plan);
                    keys.insert(key, plans.len() - 1);
                    plans.len() - 1
                }
            };
            let (start, end) = p.support();
            pulses.push(CompiledPulse {
                plan: idx,
                lo,
                up,
                start,
                end,
                time_shift: p.time - plans[idx].spec().time,
                phase: p.phase,
            });
        }
        Ok(CompiledTimeline {
            sub: sub.clone(),
            start: timeline.start(),
            end: timeline.end(),
            pulses,
            plans,
        })
    }

    pub fn subsystem(&self) -> &Subsystem {
        &self.sub
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    /// Number of distinct pulse plans.
    pub fn n_plans(&self) -> usize {
        self.plans.len()
    }

    /// End time of the last pulse (or the timeline start when there is none).
    pub fn last_pulse_end(&self) -> f64 {
        self.pulses.last().map_or(self.start, |p| p.end)
    }

    /// Evolves `ion` from the timeline start, calling `visit(t, state)` at
    /// each probe time (sorted ascending). Returns the state at `until`
    /// (defaults to the timeline end).
    pub fn evolve_visit<F>(
        &self,
        ion: &IonState,
        dec: &DecoherenceSpec,
        probes: &[f64],
        until: Option<f64>,
        mut visit: F,
    ) -> Result<IonState>
    where
        F: FnMut(usize, f64, &IonState),
    {
        let until = until.unwrap_or(self.end);
        for w in probes.windows(2) {
            if w[1] < w[0] {
                return Err(Error::Validation("probe times must be sorted".into()));
            }
        }
        let tol = 1e-12 * (self.end - self.start).abs().max(1e-12);
        for &p in probes.iter().chain(std::iter::once(&until)) {
            if !(p >= self.start - tol && p <= self.end + tol) {
                return Err(Error::Validation(format!(
                    "time {p:e} s outside timeline span [{:e}, {:e}]",
                    self.start, self.end
                )));
            }
        }
        let det = ion.detunings();
        let energies = self.sub.energies(&det);
        let mut cache: Vec<Option<Su2>> = vec![None; self.plans.len()];
        let mut state = ion.clone();
        let mut t = self.start;
        let mut next_probe = 0;

        let snapshot_free = |state: &IonState, t_from: f64, t_to: f64| {
            let mut s = state.clone();
            free_evolve(&mut s.rho, &self.sub, &energies, dec, t_to - t_from, true);
            s
        };

        for cp in &self.pulses {
            if cp.start >= until {
                break;
            }
            while next_probe < probes.len() && probes[next_probe] < cp.start {
                let s = snapshot_free(&state, t, probes[next_probe]);
                visit(next_probe, probes[next_probe], &s);
                next_probe += 1;
            }
            free_evolve(&mut state.rho, &self.sub, &energies, dec, cp.start - t, true);
            let plan = &self.plans[cp.plan];
            let hz = pair_hz(&self.sub, plan.spec(), &det);
            let inside = probes[next_probe..].iter().take_while(|&&tp| tp < cp.end).count();
            if inside > 0 {
                let local: Vec<f64> = probes[next_probe..next_probe + inside]
                    .iter()
                    .map(|tp| tp - cp.time_shift)
                    .collect();
                for (k, u) in plan.partial_propagators(hz, &local).into_iter().enumerate() {
                    let tp = probes[next_probe + k];
                    let su2 = u.rotate_phase(cp.phase - plan.spec().phase);
                    let s = self.apply_pulse(&state, cp, &su2, &energies, dec, tp - cp.start);
                    visit(next_probe + k, tp, &s);
                }
                next_probe += inside;
            }
            let base = *cache[cp.plan].get_or_insert_with(|| plan.base_propagator(hz));
            let su2 = base.rotate_phase(cp.phase);
            if until < cp.end {
                let part = plan
                    .partial_propagator(hz, until - cp.time_shift)
                    .rotate_phase(cp.phase - plan.spec().phase);
                return Ok(self.apply_pulse(&state, cp, &part, &energies, dec, until - cp.start));
            }
            state = self.apply_pulse(&state, cp, &su2, &energies, dec, cp.end - cp.start);
            t = cp.end;
        }
        while next_probe < probes.len() {
            let s = snapshot_free(&state, t, probes[next_probe]);
            visit(next_probe, probes[next_probe], &s);
            next_probe += 1;
        }
        free_evolve(&mut state.rho, &self.sub, &energies, dec, until - t, true);
        if state.rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("density matrix".into()));
        }
        Ok(state)
    }

    fn apply_pulse(
        &self,
        state: &IonState,
        cp: &CompiledPulse,
        su2: &Su2,
        energies: &[f64],
        dec: &DecoherenceSpec,
        duration: f64,
    ) -> IonState {
        let mut s = state.clone();
        damp(&mut s.rho, &self.sub, dec, 0.5 * duration);
        let u = embed_unitary(su2, cp.lo, cp.up, energies, duration);
        s.rho = conjugate(&u, &s.rho);
        damp(&mut s.rho, &self.sub, dec, 0.5 * duration);
        s
    }

    /// Snapshots of `ion` at each (sorted) probe time.
    pub fn evolve(&self, ion: &IonState, dec: &DecoherenceSpec, probes: &[f64]) -> Result<Vec<IonState>> {
        let mut out = Vec::with_capacity(probes.len());
        self.evolve_visit(ion, dec, probes, None, |_, _, s| out.push(s.clone()))?;
        Ok(out)
    }

    /// State at time `t`.
    pub fn state_at(&self, ion: &IonState, dec: &DecoherenceSpec, t: f64) -> Result<IonState> {
        self.evolve_visit(ion, dec, &[], Some(t), |_, _, _| {})
    }
}

/// Evolves a single ion through `timeline`, returning snapshots at `record`
/// (sorted probe times within the timeline span).
pub fn evolve(
    sub: &Subsystem,
    ion: &IonState,
    timeline: &Timeline,
    dec: &DecoherenceSpec,
    record: &[f64],
) -> Result<Vec<IonState>> {
    dec.validate()?;
    let det = ion.detunings();
    let bounds = [det.optical.abs(), det.spin.abs(), det.ee.abs()];
    CompiledTimeline::new(sub, timeline, bounds)?.evolve(ion, dec, record)
}
