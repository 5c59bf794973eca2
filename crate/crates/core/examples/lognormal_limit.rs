//! The normalized lognormal cross term and its limit constant.

use stein_indep::estimators::{lognormal_cross, lognormal_limit_constant, lognormal_swapped_bound};

fn main() -> stein_indep::Result<()> {
    let c0 = lognormal_limit_constant();
    println!("limit constant {c0:.10}");
    for n in [250, 500, 1000, 2000] {
        let t = lognormal_cross(n, 20_000, 9)?;
        let scale = (2.0 * n as f64).sqrt();
        println!(
            "N {n:>5}: sqrt(2N) cross {:.4} +/- {:.4}",
            scale * t.abs.estimate,
            scale * t.abs.std_error
        );
    }
    for i in [1, 4, 16] {
        let s = lognormal_swapped_bound(2000, i, 10_000, 9)?;
        println!("I {i:>3}: swapped total {:.5}", s.total.estimate);
    }
    Ok(())
}
