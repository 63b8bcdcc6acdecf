//! Monte Carlo photon-counting histogram of a retrieved time-bin and its
//! noise-subtracted signal-to-noise ratio.

use qmemsim::photonstats::{simulate_counts, single_photon_snr, snr, time_bin_model, NoiseReference, QubitRun, QubitState};

fn main() -> qmemsim::Result<()> {
    let run = QubitRun {
        input_state: QubitState::E,
        mu_q: 1.18,
        efficiency: 0.082,
        noise_per_window: 1.18 * 0.082 / 11.3,
        n_trials: 35_000,
    };
    let model = time_bin_model(&run, 0.0, 3e-6, 1.5e-6, 2.1e-6, 0.1e-6)?;
    let h = simulate_counts(&run, &model, 11)?;
    let gate = h.window("early")?.clone();
    let r = snr(&h, "early", &NoiseReference::Expected(model.expected_in(&gate, true)))?;
    println!("{} counts in the gate over {} trials", h.counts_in(&gate), h.n_trials);
    println!("SNR {:.2} +- {:.2}; per input photon {:.2}", r.snr, r.sigma, single_photon_snr(r.snr, run.mu_q)?);
    let measured = snr(&h, "early", &NoiseReference::Measured("noise".into()))?;
    println!("with the noise taken from an empty gate: {:.2} +- {:.2}", measured.snr, measured.sigma);
    h.write_csv(std::io::stdout().lock())
}
