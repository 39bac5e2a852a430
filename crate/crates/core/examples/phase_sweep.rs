//! The fig3a sweep: a 100 MHz pulse train stepped in 78 ps increments.
//! Saves the dataset (pass a directory, default a temporary one) and prints
//! a coarse view of every 32nd frame, one character per 16 taps.

use wcd::recipe::Recipe;
use wcd::storage::save_dataset;

fn main() -> wcd::error::Result<()> {
    let recipe = Recipe::preset("fig3a")?;
    let data = recipe.acquire()?.remove(0);
    let dir = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("wcd-fig3a"), Into::into);
    let manifest = save_dataset(&data, &dir)?;
    println!("saved {} files to {}", manifest.files.len(), dir.display());
    for f in data.frames.iter().step_by(32) {
        let row: String = f.bits.chunks(16).map(|c| if c.iter().filter(|b| **b).count() > 8 { '#' } else { '.' }).collect();
        println!("{:>4} {row}", f.phase_index.unwrap_or(0));
    }
    Ok(())
}
