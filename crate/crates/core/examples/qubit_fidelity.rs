//! Fidelities of the four time-bin qubit states estimated from simulated
//! counts, against the expectation and the classical limit.

use qmemsim::photonstats::{analyze_qubits, TimeBinGeometry};

fn main() -> qmemsim::Result<()> {
    let g = TimeBinGeometry {
        separation: 3e-6,
        pulse_fwhm: 1.5e-6,
        gate: 2.1e-6,
        bin_width: 0.1e-6,
    };
    let (r, _) = analyze_qubits(1.16, 0.082, 0.008418, 35_000, &g, 4)?;
    println!("F_e {:.3}  F_l {:.3}  F_+ {:.3}  F_+i {:.3}", r.f_e, r.f_l, r.f_plus, r.f_plus_i);
    println!("total {:.3} (expected {:.3}), classical limit {:.3}", r.total, r.expected_fidelity, r.classical_bound);
    Ok(())
}
