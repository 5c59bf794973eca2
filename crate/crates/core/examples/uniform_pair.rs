//! Cross term for the exp-quadratic pair, specialized against the generic Mehler path.

use stein_indep::estimators::{uniform_cross_checked, MehlerQuadrature};

fn main() -> stein_indep::Result<()> {
    let q = MehlerQuadrature::new(16, 16)?;
    for rho in [0.4, 0.2, 0.1, 0.05, 0.0] {
        let c = uniform_cross_checked(rho, 20_000, 3, &q)?;
        let s = c.specialized.abs.estimate;
        let ratio = if rho == 0.0 { f64::NAN } else { s / rho };
        println!(
            "rho {rho:<5} cross {s:.5} +/- {:.1e}   generic {:.5}   cross/rho {ratio:.4}   ({:.1} SE apart)",
            c.specialized.abs.std_error, c.generic.abs.estimate, c.sigmas
        );
    }
    Ok(())
}
