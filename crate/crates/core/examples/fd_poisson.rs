//! Second-order convergence of the finite-difference Poisson solver used to
//! produce reference data.

use std::f64::consts::PI;

use ltpinn::geometry::Roi;
use ltpinn::oracle::fd_poisson_dirichlet;

fn main() -> ltpinn::Result<()> {
    let roi = Roi::new(0.0, 1.0, 0.0, 1.0)?;
    let exact = |p: [f64; 2]| (PI * p[0]).sin() * (PI * p[1]).sinh() + p[0] * p[1] * p[1];
    let f = |p: [f64; 2]| 2.0 * p[0];
    let mut last = None;
    for n in [9, 17, 33, 65, 129] {
        let err = fd_poisson_dirichlet(n, n, &roi, f, exact)?.max_error(exact);
        match last {
            Some(prev) => println!("n = {n:>3}: max error {err:.3e}, ratio {:.3}", prev / err),
            None => println!("n = {n:>3}: max error {err:.3e}"),
        }
        last = Some(err);
    }
    Ok(())
}
