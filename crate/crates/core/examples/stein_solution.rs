//! Solve the Stein equation for the standard test functions and check the sup-norm bounds.

use stein_indep::measure::{centered_gamma, GridSpec};
use stein_indep::stein::{family, verify_bounds, SteinSolver};

fn main() -> stein_indep::Result<()> {
    let m = centered_gamma();
    let grid = GridSpec::new(500);
    let sup = m.sup_s(&grid)?.0;
    for h in family(&m)? {
        let s = SteinSolver::new(&m, h.as_ref());
        let y = vec![0.5; h.dim_y()];
        let p = s.point(m.median(), &y)?;
        println!("{}: f = {:.6}, f' = {:.6}, residual {:.1e}", h.name(), p.f, p.dfx, p.residual);
        for b in verify_bounds(&m, h.as_ref(), &grid, Some(sup))? {
            println!("    {:<12} lhs {:.4e} <= rhs {:.4e}: {}", b.name, b.lhs_max, b.rhs, b.pass);
        }
    }
    Ok(())
}
