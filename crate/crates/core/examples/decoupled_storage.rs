//! Inserts a CHS-UR4 decoupling block into the storage sequence and follows
//! the readout time and promoted-population noise.

use qmemsim::cli::{dd_noise, memory_timeline, MemoryRequest, Protocol};
use qmemsim::config::Config;
use qmemsim::sequences::ur4_phases;

fn main() -> qmemsim::Result<()> {
    let cfg = Config::shipped();
    for delta in [0.0, 0.3] {
        let ph = ur4_phases(delta, 1)?;
        println!("delta {delta}: phases {:?}", ph.phases.map(|p| (p * 1e4).round() / 1e4));
    }
    for (tau, n) in [(1.4, 4), (1.4, 8), (10.5, 4)] {
        let mut req = MemoryRequest::new(Protocol::NlpeDd, cfg.seed);
        req.tau = Some(tau);
        req.n_pulses = Some(n);
        let tl = memory_timeline(&cfg, &req)?;
        let noise = dd_noise(&cfg, tau, n, -0.1, 500, cfg.seed)?;
        println!("tau {tau} s, {n} pulses: readout at {:.6} s, noise {:.3e} per trial", tl.echo_time.unwrap(), noise);
    }
    Ok(())
}
