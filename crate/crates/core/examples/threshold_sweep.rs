//! Full-knowledge time on a synthetic indoor power map as the detection
//! threshold drops from -60 dBm to -100 dBm.

use crowdtopo::experiments::{run_threshold_sweep, synthetic_power_map, threshold_points_csv};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let map = synthetic_power_map();
    let thresholds: Vec<f64> = (0..=8).map(|i| -60.0 - 5.0 * i as f64).collect();
    let points = run_threshold_sweep(&map, &thresholds, 200_000, 11)?;
    print!("{}", threshold_points_csv(&points));
    Ok(())
}
