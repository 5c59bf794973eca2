//! Second-chaos algebra on the Gamma pair: moments, contractions and <DU, DV>.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stein_indep::chaos::{build_gamma_kernels, contract1, dudv_identity, gamma_pair_moments};
use stein_indep::mc::fill_standard_normal;

fn main() -> stein_indep::Result<()> {
    println!("{:>5} {:>4} {:>12} {:>14} {:>14}", "N", "m", "E[UV]", "|AB|^2", "E<DU,DV>^2");
    for (n, m) in [(3, 3), (10, 5), (50, 7), (200, 14)] {
        let g = gamma_pair_moments(n, m)?;
        println!(
            "{n:>5} {m:>4} {:>12.6} {:>14.6e} {:>14.6e}",
            g.cross_moment, g.contraction_norm, g.second_moment_dudv
        );
    }

    let (a, b, dim) = build_gamma_kernels(10, 5)?;
    let q = contract1(&a, &b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut xi = vec![0.0; dim];
    fill_standard_normal(&mut rng, &mut xi);
    let (lhs, rhs) = dudv_identity(&q, &a, &b, &xi)?;
    println!("<DU, DV> = {lhs:.12}, 4 (xi' Q xi - tr Q) + 4 tr Q = {rhs:.12}");
    Ok(())
}
