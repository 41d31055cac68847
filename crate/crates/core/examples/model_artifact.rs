//! Saving a trained model and reloading it for online use.

use rcm::harness::{train, ModelArtifact, StudyConfig};
use rcm::ParameterPoint;

fn main() -> rcm::Result<()> {
    let mut cfg = StudyConfig::default();
    cfg.set("method", "lsrcm")?;
    cfg.set("nx", "20")?;
    cfg.set("train_grid", "8x8")?;
    cfg.n_max = 8;
    let art = train(&cfg, None)?;

    let path = std::env::temp_dir().join(format!("rcm-example-{}.rcm", std::process::id()));
    art.save(&path)?;
    let size = std::fs::metadata(&path)?.len();
    let back = ModelArtifact::load(&path)?;
    std::fs::remove_file(&path)?;

    let mu = ParameterPoint::from([2.0, 1.0]);
    let before = art.model.reduced().solve(&mu)?;
    let after = back.model.reduced().solve(&mu)?;
    let identical = before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits());
    println!("{} bytes on disk; online coefficients identical after reload: {identical}", size);
    println!("coefficients: {after:.6?}");
    Ok(())
}
