//! Residual operators evaluated on closed-form fields that satisfy them.

use ltpinn::geometry::Roi;
use ltpinn::oracle::manufactured_suite;
use ltpinn::pde::{FlowParams, MaterialParams, PdeProblem};
use ltpinn::sampling::random_points;

fn main() -> ltpinn::Result<()> {
    let points = random_points(&Roi::new(-2.0, 2.0, -2.0, 2.0)?, 100, 3);
    for problem in [
        PdeProblem::Laplace,
        PdeProblem::Elastic(MaterialParams::new(1.0, 0.33)?),
        PdeProblem::SteadyNs(FlowParams::new(1.0)?),
        PdeProblem::PressurePoisson,
    ] {
        for case in manufactured_suite(&problem) {
            println!("{:<16} {:<12} max |R| = {:.1e}", problem.name(), case.name, case.max_residual(&points)?);
        }
    }
    let m = MaterialParams::new(1.0, 0.33)?;
    println!("σ for unit ε_xx: {:?}", m.stress(1.0, 0.0, 0.0));
    Ok(())
}
