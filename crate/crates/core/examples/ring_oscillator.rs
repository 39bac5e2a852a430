//! Three inverters released from the all-low state. Prints the edge count
//! per round trip of node 1 and a stretch of each stitched capture.

use wcd::recipe::Recipe;

fn main() -> wcd::error::Result<()> {
    let recipe = Recipe::preset("fig7")?;
    let (trace, series) = recipe.stitch(None)?;
    let counts = trace.edges_per_round_trip(0);
    println!("edges per round trip: {:?}", &counts[..12.min(counts.len())]);
    for (i, s) in series.iter().enumerate() {
        let strip: String = s.bits[..4_000].chunks(40).map(|c| if c.iter().filter(|b| **b).count() * 2 > c.len() { '#' } else { '_' }).collect();
        println!("node {} {strip}", i + 1);
    }
    Ok(())
}
