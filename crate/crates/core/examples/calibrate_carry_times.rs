//! Carry-time calibration over eight channels, compared with the delays
//! the simulated chains were built with.

use wcd::recipe::Recipe;

fn main() -> wcd::error::Result<()> {
    let recipe = Recipe::preset("fig4")?;
    let cal = recipe.calibrate(&recipe.acquire()?)?;
    let (rise, fall) = recipe.realized_carry_times()?;
    println!("rising  {:.4} ± {:.4} ps (built {rise:.4})", cal.tau_rise_ps.value, cal.tau_rise_ps.std_err);
    println!("falling {:.4} ± {:.4} ps (built {fall:.4})", cal.tau_fall_ps.value, cal.tau_fall_ps.std_err);
    println!("single-shot precision {:.2} ps", cal.precision_ps());
    let tf = &cal.transfer.rising;
    for x in [tf.first, tf.first + 5, tf.first + 10, 500, 1000] {
        if let Some(t) = tf.time_at(x) {
            println!("  tap {x:>4}: {t:8.1} ps");
        }
    }
    Ok(())
}
