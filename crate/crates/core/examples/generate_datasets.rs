//! Regenerates the synthetic datasets shipped in `data/`.

use std::path::Path;

use qmemsim::models::{surface_slices, synthetic_decay, synthetic_surface, DataPoint, MimsPower};

fn write_decay(path: &Path, pts: &[DataPoint]) -> qmemsim::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "value", "sigma"])?;
    for p in pts {
        w.write_record([p.t, p.value, p.sigma].map(|x| format!("{x:.9e}")))?;
    }
    w.flush()?;
    Ok(())
}

fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn main() -> qmemsim::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    std::fs::create_dir_all(&dir)?;
    for (name, t2, m, seed) in [("decay_a.csv", 18.7, 1.05, 1), ("decay_b.csv", 27.6, 1.70, 2), ("decay_c.csv", 33.1, 1.25, 3)] {
        let pts = synthetic_decay(&grid(1.0, 2.5 * t2, 20), 1.0, t2, m, MimsPower::Amplitude, 0.01, seed);
        write_decay(&dir.join(name), &pts)?;
    }
    let mut tail = synthetic_decay(&grid(1.0, 60.0, 30), 1.0, 36.3, 1.25, MimsPower::Intensity, 0.01, 4);
    for p in tail.iter_mut().filter(|p| p.t < 10.0) {
        p.value *= 0.7;
    }
    write_decay(&dir.join("decay_heated.csv"), &tail)?;

    let sweep = grid(10e-6, 90e-6, 12);
    let pts = synthetic_surface(&surface_slices(&sweep, 13e-6, &sweep, 15.1e-6), [7.7e3, 8.4e3, 5.9e3, 0.82], 1.0, 0.02, 5);
    let mut w = csv::Writer::from_path(dir.join("efficiency_surface.csv"))?;
    w.write_record(["t31", "t42", "value", "sigma"])?;
    for p in &pts {
        w.write_record([p.t31, p.t42, p.value, p.sigma].map(|x| format!("{x:.9e}")))?;
    }
    w.flush()?;
    println!("wrote datasets to {}", dir.display());
    Ok(())
}
