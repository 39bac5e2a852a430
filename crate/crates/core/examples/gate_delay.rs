//! Per-inverter delay of a 19-gate ring from captured pulse widths, with
//! carry times from a calibration sweep of the same delay line.

use wcd::recipe::Recipe;

fn main() -> wcd::error::Result<()> {
    let recipe = Recipe::preset("appendix-ro19")?;
    let cal = recipe.calibrate(&recipe.acquire()?)?;
    let m = recipe.measure_ring(cal.tau_rise_ps, cal.tau_fall_ps)?;
    println!("{} pulses, mean width {:.1} ± {:.1} ps", m.pulses, m.width_ps, m.width_std_ps);
    println!("per gate: {:.2} ± {:.2} ps", m.per_node_ps, m.per_node_err_ps);
    Ok(())
}
