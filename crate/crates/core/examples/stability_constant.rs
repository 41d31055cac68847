//! The stability constant `β(μ)` over a training lattice.

use rcm::problem::build_anisotropic;
use rcm::ParameterPoint;

fn main() -> rcm::Result<()> {
    let p = build_anisotropic(16)?.with_training_grid(vec![8, 6])?;
    let table = p.stability_table()?;
    let (imin, bmin) = table
        .values()
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &b)| if b < acc.1 { (i, b) } else { acc });
    let bmax = table.values().iter().copied().fold(0.0, f64::max);
    println!("{} lattice points, β from {bmin:.4e} (at {:?}) to {bmax:.4e}", table.len(), table.points()[imin].0);

    // off-lattice values are computed on demand and cached
    let mu = ParameterPoint::from([1.234, 0.567]);
    println!("β at {:?} = {:.6e}", mu.0, table.beta(&p, &mu)?);
    println!("cached afterwards: {}", table.lookup(&mu).is_some());
    Ok(())
}
