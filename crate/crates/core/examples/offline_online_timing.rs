//! Offline cost, online cost and a truth solve, side by side.

use rcm::harness::{study_timing, train, StudyConfig};

fn main() -> rcm::Result<()> {
    for nx in [24, 36] {
        for method in ["lsrcm", "ercm"] {
            let mut cfg = StudyConfig::default();
            cfg.set("method", method)?;
            cfg.set("nx", &nx.to_string())?;
            cfg.set("train_grid", "10x10")?;
            cfg.n_max = 15;
            let art = train(&cfg, None)?;
            let t = study_timing(art.model.reduced(), art.offline_seconds, 500, 1)?;
            println!(
                "{method:5} nx={nx}: offline {:.2} s, online {:.2e} s, truth {:.2e} s, online/truth {:.1e}",
                t.offline_seconds, t.online_seconds, t.truth_seconds, t.online_over_truth
            );
        }
    }
    Ok(())
}
