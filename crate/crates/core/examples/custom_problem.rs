//! A problem described in configuration text rather than code.

use rcm::harness::{online, train, StudyConfig};
use rcm::ParameterPoint;

const CONFIG: &str = "
problem    = shifted-helmholtz
method     = ercm
nx         = 20
train_grid = 10x10
nmax       = 10
tol        = 1e-9
domain     = 0.5:2, 0:3
op.1       = dxx      | -1
op.2       = dyy      | -mu1
op.3       = identity | mu2
rhs.1      = math::cos(3.0 * x) * (1.0 - y * y) | 1
rhs.2      = x * y                             | mu1 * mu2
";

fn main() -> rcm::Result<()> {
    let cfg = StudyConfig::from_str_config(CONFIG)?;
    let art = train(&cfg, None)?;
    let m = art.model.reduced();
    println!(
        "trained {} basis functions in {:.2} s; last max bound {:.2e}",
        m.size(),
        art.offline_seconds,
        m.log().last().unwrap().max_delta
    );
    let mu = ParameterPoint::from([1.3, 2.1]);
    let r = online(m, &mu)?;
    let truth = m.problem().truth_solve(&mu)?.values;
    let err = r
        .values
        .iter()
        .zip(&truth)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("at {:?}: max error {err:.2e}, bound {:.2e}", mu.0, r.estimate.delta);
    Ok(())
}
