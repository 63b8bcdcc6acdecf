//! Rate-equation model of the class-cleaning, polarization and back-burning
//! initialization; writes the absorption profile to stdout as CSV.

use qmemsim::cli::initialization_profile;
use qmemsim::config::Config;

fn main() -> qmemsim::Result<()> {
    let profile = initialization_profile(&Config::shipped())?;
    let f = profile.feature();
    eprintln!(
        "feature: FWHM {:.2} MHz at {:+.1} kHz, transparency window {:.2} MHz, center absorption {:.3} (converged: {})",
        f.fwhm_hz / 1e6,
        f.center_hz / 1e3,
        f.window_hz / 1e6,
        f.center_alpha,
        profile.converged
    );
    profile.write_csv(std::io::stdout().lock())
}
