//! Bound terms for the Gamma pair as N grows with m = sqrt(N).

use stein_indep::estimators::gamma_pair_terms;
use stein_indep::measure::{centered_gamma, GridSpec};

fn main() -> stein_indep::Result<()> {
    let g = centered_gamma();
    let sup_s = g.sup_s(&GridSpec::new(400))?.0;
    let c = g.cross_constant()?;
    println!("sup S = {sup_s:.4}, 2/(a p) at the median = {c:.4}");
    println!(
        "{:>5} {:>4} {:>12} {:>12} {:>12} {:>9}",
        "N", "m", "discrepancy", "cross", "rhs", "outside"
    );
    for n in [50, 100, 200, 400] {
        let m = (n as f64).sqrt() as usize;
        let t = gamma_pair_terms(n, m, 20_000, 1)?;
        let rhs = sup_s * t.discrepancy.abs.estimate + c * t.cross.abs.estimate;
        println!(
            "{n:>5} {m:>4} {:>12.5} {:>12.5} {:>12.5} {:>9.4}",
            t.discrepancy.abs.estimate,
            t.cross.abs.estimate,
            rhs,
            t.outside as f64 / t.total as f64
        );
    }
    Ok(())
}
