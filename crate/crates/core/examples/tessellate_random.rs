//! Tile areas of a random 7-neighbour disc scenario.

use crowdtopo::scenario::generate_random_scenario;
use crowdtopo::tessellation::{canonical_order, estimate_tessellation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = generate_random_scenario(7, 1.0, 42);
    let measure = estimate_tessellation(&scenario, 1_000_000, 1)?;
    let se = measure.std_err().unwrap();
    for tile in canonical_order(7) {
        let m = measure.mass(tile);
        if m > 0.0 {
            println!("{tile:<20} {m:.5} ± {:.5}", se[tile.index()]);
        }
    }
    Ok(())
}
