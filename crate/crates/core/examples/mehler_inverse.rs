//! D(-L)^{-1} through the Mehler formula, against the exact chaos answer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stein_indep::chaos::{ChaosVariable, FirstChaosVector, SecondChaosKernel};
use stein_indep::estimators::{d_inverse_l_mehler, uniform_pair, MehlerQuadrature, SmoothFunctional};
use stein_indep::mc::fill_standard_normal;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn main() -> stein_indep::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let k = SecondChaosKernel::diag(&[1.0, -0.5, 0.25]);
    let x = ChaosVariable::new(0.0, FirstChaosVector::new(vec![0.2, 0.0, -0.3])?, k)?;
    let mut xi = vec![0.0; 3];
    fill_standard_normal(&mut rng, &mut xi);
    let exact = x.d_inverse_l(&xi)?;
    let q = MehlerQuadrature::default();
    println!("chaos variable: exact {exact:?}");
    println!(
        "                Mehler error {:.2e} ({})",
        dist(&d_inverse_l_mehler(&x, &xi, &q, &mut rng)?, &exact),
        q.describe()
    );

    // exp(-|w|^2/2) has a closed form for D(-L)^{-1}; the generic path must approach it.
    let (u, _) = uniform_pair(0.3)?;
    let mut xi = vec![0.0; u.dim()];
    fill_standard_normal(&mut rng, &mut xi);
    let exact = u.exact_d_inverse_l(&xi).expect("closed form");
    for (nodes, inner) in [(8, 8), (32, 64), (64, 256)] {
        let q = MehlerQuadrature::new(nodes, inner)?;
        let g = d_inverse_l_mehler(&u, &xi, &q, &mut rng)?;
        println!("exp-quadratic, {}: error {:.2e}", q.describe(), dist(&g, &exact));
    }
    Ok(())
}
