//! Stores a weak pulse with the four-pulse rephasing sequence and reads the
//! echo out of a simulated ensemble.

use qmemsim::cli::{memory_run, MemoryRequest, Protocol};
use qmemsim::config::Config;

fn main() -> qmemsim::Result<()> {
    let cfg = Config::shipped();
    let mut req = MemoryRequest::new(Protocol::Nlpe, cfg.seed);
    req.n_ions = Some(2000);
    req.initialization = false;
    let run = memory_run(&cfg, &req)?;
    let r = &run.report;
    println!("protocol times (us): {:?}", r.protocol_times.map(|t| t * 1e6));
    println!("expected echo at {:.3} us, peak found at {:.3} us", r.echo_time * 1e6, r.peak_time.unwrap_or(f64::NAN) * 1e6);
    println!("recovered fraction {:.3}, storage efficiency {:.3}, model {:.3}", r.microscopic_efficiency, r.storage_efficiency, r.analytic_efficiency);
    let peak = run.echo.amplitude.iter().map(|a| a.norm()).fold(0.0, f64::max);
    println!("peak field {:.3} of the lossless reference", peak);
    Ok(())
}
