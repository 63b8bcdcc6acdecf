//! Shapes a complex hyperbolic secant pulse and checks its inversion
//! against detuning and amplitude errors.

use std::f64::consts::TAU;

use qmemsim::cli::{pulse_sweep, PulseRequest};
use qmemsim::config::Config;
use qmemsim::pulses::{adiabaticity_margin, chs_axis_phase, chs_waveform, instantaneous_detuning, PulseShape};

fn main() -> qmemsim::Result<()> {
    let cfg = Config::shipped();
    let PulseShape::Chs(p) = cfg.shape("pi43")? else {
        unreachable!("pi43 is a CHS preset")
    };
    println!("omega0/2pi = {:.2} MHz, beta = {:.3e} 1/s, mu = {:.3}", p.omega0 / TAU / 1e6, p.beta, p.mu);
    for k in 0..=4 {
        let t = -0.5 * p.duration + 0.25 * k as f64 * p.duration;
        let w = chs_waveform(&p, t);
        println!("t = {:+.2} us  |Omega|/2pi = {:.3} MHz  detuning/2pi = {:+.3} MHz", t * 1e6, w.norm() / TAU / 1e6, instantaneous_detuning(&p, t) / TAU / 1e6);
    }
    println!("axis phase {:.4} rad, adiabaticity margin {:.2}", chs_axis_phase(&p), adiabaticity_margin(&p));
    let (report, _) = pulse_sweep(&cfg, &PulseRequest::default())?;
    println!(
        "inversion over +-{:.2} MHz and +-{:.0}% amplitude: min {:.4}, mean {:.4}",
        report.detuning_range_hz / 1e6,
        100.0 * report.amplitude_error,
        report.min_inversion,
        report.mean_inversion
    );
    Ok(())
}
