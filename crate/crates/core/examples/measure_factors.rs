//! Diffusion coefficient and Stein factors for the built-in measures and a user density.

use stein_indep::measure::{by_name, DensityConfig, GridSpec, BUILTIN_NAMES};

fn main() -> stein_indep::Result<()> {
    let grid = GridSpec::new(400);
    println!(
        "{:<16} {:>12} {:>12} {:>14} {:>12}",
        "measure", "a(median)", "sup S", "argmax S", "2/(a p)"
    );
    for name in BUILTIN_NAMES {
        let m = by_name(name)?;
        let med = m.median();
        let (sup, at) = m.sup_s(&grid)?;
        println!(
            "{:<16} {:>12.6} {:>12.6} {:>14.6} {:>12.6}",
            name,
            m.diffusion_coefficient(med)?,
            sup,
            at,
            m.cross_constant()?
        );
    }

    // A half-normal given only through its density.
    let cfg = DensityConfig::parse(
        r#"
name = "half-normal"
lower = 0.0
upper = inf
density = "2 * exp(-x^2 / 2) / sqrt(2 * pi)"
"#,
    )?;
    let m = cfg.build()?;
    for q in [0.1, 0.5, 0.9] {
        let x = m.quantile(q)?;
        println!(
            "half-normal q={q}: x={x:.6} a(x)={:.6} S(x)={:.6}",
            m.diffusion_coefficient(x)?,
            m.stein_factor_s(x)?
        );
    }
    Ok(())
}
