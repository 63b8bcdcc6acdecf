//! Free evolution of a spin coherence in an inhomogeneous ensemble compared
//! with the Gaussian decay law.

use num_complex::Complex64;
use qmemsim::config::Config;
use qmemsim::dynamics::{ensemble_mean_coherence, free_evolve, gaussian_coherence_decay, sample_ensemble, CMatrix, DecoherenceSpec, Subsystem};

fn main() -> qmemsim::Result<()> {
    let cfg = Config::shipped();
    let sub = Subsystem::spin_pair(3, 4)?;
    let rho0 = CMatrix::from_element(2, 2, Complex64::new(0.5, 0.0));
    let ions = sample_ensemble(&cfg.ensemble_spec(cfg.seed), &rho0)?;
    let dec = DecoherenceSpec::none();
    for t in [0.0, 25e-6, 50e-6, 75e-6, 100e-6] {
        let evolved: Vec<_> = ions
            .iter()
            .map(|ion| {
                let mut s = ion.clone();
                free_evolve(&mut s.rho, &sub, &sub.energies(&ion.detunings()), &dec, t, true);
                s
            })
            .collect();
        let c = ensemble_mean_coherence(&evolved, (0, 1))?.norm() / 0.5;
        let exact = gaussian_coherence_decay(cfg.ensemble.spin_fwhm_hz, t);
        println!("t = {:5.1} us  simulated {:.5}  Gaussian {:.5}", t * 1e6, c * c, exact * exact);
    }
    Ok(())
}
