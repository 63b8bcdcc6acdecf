//! Single-ion density-matrix dynamics under timed pulses with static
//! inhomogeneous detunings, and ensemble sampling.

pub mod ensemble;
pub mod evolve;
pub mod propagator;
pub mod state;

pub use ensemble::{
    ensemble_mean_coherence, gaussian_coherence_decay, pairwise_sum, sample_detunings, sample_ensemble,
    EnsembleSpec, FWHM_PER_SIGMA,
};
pub use evolve::{evolve, free_evolve, CompiledTimeline};
pub use propagator::{inversion_map, pulse_propagator, two_level_propagator, PulsePlan, Su2, PULSE_TOLERANCE};
pub use state::{CMatrix, DecoherenceSpec, Detunings, IonState, Subsystem};
