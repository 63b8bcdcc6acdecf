//! Fits the storage-efficiency model to efficiencies measured along two
//! slices of the control-pulse delays.

use qmemsim::echo::{analytic_efficiency, EfficiencyBudget};
use qmemsim::models::{fit_nlpe_surface, surface_slices, synthetic_surface, SurfaceFixed};

fn main() -> qmemsim::Result<()> {
    let sweep: Vec<f64> = (0..12).map(|i| 10e-6 + 80e-6 * i as f64 / 11.0).collect();
    let at = surface_slices(&sweep, 13e-6, &sweep, 15.1e-6);
    let data = synthetic_surface(&at, [7.7e3, 8.4e3, 5.9e3, 0.82], 1.0, 0.02, 8);
    let fit = fit_nlpe_surface(&data, &SurfaceFixed { d: 1.0, measured: None, polish: true })?;
    let e = fit.std_errors();
    println!("Gamma34    = {:.2} +- {:.2} kHz", fit.gamma34 / 1e3, e[0] / 1e3);
    println!("Gamma23bar = {:.2} +- {:.2} kHz", fit.gamma23bar / 1e3, e[1] / 1e3);
    println!("gamma      = {:.2} +- {:.2} kHz", fit.gamma_opt / 1e3, e[2] / 1e3);
    println!("eta_c      = {:.3} +- {:.3}", fit.eta_control, e[3]);
    let b = EfficiencyBudget {
        d: 1.0,
        eta_control: fit.eta_control,
        gamma: fit.gamma_opt,
        gamma34: fit.gamma34,
        gamma23bar: fit.gamma23bar,
        t31: 15.1e-6,
        t42: 13e-6,
        heating_penalty: 1.0,
    };
    println!("predicted efficiency at the shortest delays: {:.4}", analytic_efficiency(&b));
    Ok(())
}
