//! Loads the shipped level scheme and picks the four storage levels.

use qmemsim::config::Config;

fn main() -> qmemsim::Result<()> {
    let cfg = Config::shipped();
    let scheme = cfg.scheme()?;
    let four = scheme.select_nlpe_levels(cfg.protocol.zefoz_pair)?;
    println!("spin pair |{}>g - |{}>g at {:.3} MHz", four.ground_pair.0, four.ground_pair.1, four.spin_frequency / 1e6);
    println!("signal line |{}>g - |{}>e, branching {:.2}", four.ground_pair.0, four.signal_excited, scheme.branching(four.ground_pair.0, four.signal_excited)?);
    println!("auxiliary excited level |{}>e", four.auxiliary_excited);
    println!("control lines at {:.3} and {:.3} MHz from the optical origin", four.control_frequencies.0 / 1e6, four.control_frequencies.1 / 1e6);
    for g in 1..=6 {
        let row: Vec<String> = (1..=6).map(|e| format!("{:.2}", scheme.branching(g, e).unwrap())).collect();
        println!("  |{g}>g  {}", row.join(" "));
    }
    Ok(())
}
