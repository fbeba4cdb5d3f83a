//! δ-knowledge: stop once the known tiles cover a fraction δ of the area.

use crowdtopo::experiments::{delta_points_csv, run_delta_sweep};
use crowdtopo::scenario::generate_random_scenario;
use crowdtopo::tessellation::estimate_tessellation;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = generate_random_scenario(6, 1.0, 5);
    let measure = estimate_tessellation(&scenario, 500_000, 5)?;
    let deltas: Vec<f64> = (1..=20).map(|i| i as f64 / 20.0).collect();
    print!("{}", delta_points_csv(&run_delta_sweep(&measure, &deltas)?));
    Ok(())
}
