//! Save a dataset, reload it, then show how tampering is reported.

use wcd::recipe::Recipe;
use wcd::storage::{load_dataset, save_dataset, FRAMES_CSV, SPEC_FILE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut recipe = Recipe::preset("fig3a")?;
    recipe.sweep.as_mut().expect("fig3a sweeps").n_steps = 32;
    let data = recipe.acquire()?.remove(0);
    let dir = std::env::temp_dir().join("wcd-storage-example");
    save_dataset(&data, &dir)?;
    assert_eq!(load_dataset(&dir)?, data);
    println!("round trip ok, spec has {} keys", std::fs::read_to_string(dir.join(SPEC_FILE))?.lines().count());

    let csv = std::fs::read_to_string(dir.join(FRAMES_CSV))?;
    std::fs::write(dir.join(FRAMES_CSV), &csv[..csv.len() / 2])?;
    println!("truncated: {}", load_dataset(&dir).unwrap_err());

    save_dataset(&data, &dir)?;
    let spec = std::fs::read_to_string(dir.join(SPEC_FILE))?.replace("chain.k = 1300", "chain.k = 1299");
    std::fs::write(dir.join(SPEC_FILE), spec)?;
    println!("edited:    {}", load_dataset(&dir).unwrap_err());
    Ok(())
}
