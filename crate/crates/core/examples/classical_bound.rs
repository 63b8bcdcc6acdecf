//! Classical prepare-and-measure limit versus mean photon number and the
//! crossover where a noisy memory first beats it.

use qmemsim::photonstats::{bound_curve, crossover_mu};

fn main() -> qmemsim::Result<()> {
    let (eta, noise) = (0.082, 0.008418);
    let mus: Vec<f64> = (1..=12).map(|i| 0.25 * i as f64).collect();
    println!("mu_q  bound   expected");
    for row in bound_curve(&mus, eta, noise)? {
        println!("{:4.2}  {:.4}  {:.4}", row.mu_q, row.classical_bound, row.expected_fidelity);
    }
    match crossover_mu(eta, noise) {
        Ok(mu) => println!("memory beats the classical limit above mu_q = {mu:.3}"),
        Err(e) => println!("{e}"),
    }
    Ok(())
}
