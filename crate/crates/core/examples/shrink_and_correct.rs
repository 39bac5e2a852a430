//! Pulse shrinkage at 600 MHz and its correction, scored against the same
//! sweep captured by a delay line without rise/fall asymmetry.

use wcd::recipe::{evaluate_correction, Recipe};

fn main() -> wcd::error::Result<()> {
    let recipe = Recipe::preset("fig6")?;
    let data = recipe.acquire()?;
    let shrink = recipe.shrink(&data[0])?;
    println!("shrink rate {:.4} ± {:.4}", shrink.rate, shrink.rate_err);
    for b in shrink.bins.iter().step_by(8) {
        println!("  tail {:>4}..{:<4} width {:6.1} ± {:4.1} carries", b.lo, b.hi, b.mean, b.std);
    }
    let spec = recipe.correction_spec(Some(shrink.rate))?;
    let outcome = evaluate_correction(&data[0], &recipe.acquire_truth()?, &spec)?;
    println!(
        "mean |width error| {:.2} -> {:.2} carries ({:.0}% better)",
        outcome.raw_mean_abs_error,
        outcome.corrected_mean_abs_error,
        100.0 * outcome.improvement()
    );
    Ok(())
}
