//! Fits stretched-exponential decays, including a late-time fit that
//! ignores early points distorted by heating.

use qmemsim::models::{fit_mims, fit_tail, synthetic_decay, MimsPower};

fn main() -> qmemsim::Result<()> {
    let ts: Vec<f64> = (0..20).map(|i| 1.0 + 68.0 * i as f64 / 19.0).collect();
    let pts = synthetic_decay(&ts, 1.0, 27.6, 1.70, MimsPower::Amplitude, 0.01, 5);
    let f = fit_mims(&pts, MimsPower::Amplitude)?;
    let e = f.std_errors();
    println!("T2 = {:.2} +- {:.2} s, m = {:.3} +- {:.3}", f.t2, e[1], f.m, e[2]);

    let ts: Vec<f64> = (0..30).map(|i| 1.0 + 59.0 * i as f64 / 29.0).collect();
    let mut heated = synthetic_decay(&ts, 1.0, 36.3, 1.25, MimsPower::Intensity, 0.01, 6);
    for p in heated.iter_mut().filter(|p| p.t < 10.0) {
        p.value *= 0.7;
    }
    let full = fit_mims(&heated, MimsPower::Intensity)?;
    let tail = fit_tail(&heated, 15.0)?;
    println!("all points: T2 = {:.1} s, m = {:.2}", full.t2, full.m);
    println!("t > 15 s:   T2 = {:.1} s, m = {:.2}", tail.t2, tail.m);
    Ok(())
}
