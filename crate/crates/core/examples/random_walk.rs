//! One walker in a 50 m cell: time to 0.9-knowledge at several report periods.

use crowdtopo::experiments::{run_walk_vs_teleport, WalkSweepConfig};
use crowdtopo::scenario::generate_random_scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = generate_random_scenario(7, 50.0, 7);
    let cfg = WalkSweepConfig::default();
    let periods = [60.0, 360.0, 1800.0, 3600.0, 7200.0];
    println!("period_s  walk_h  teleport_h");
    for p in run_walk_vs_teleport(&scenario, &periods, &cfg)? {
        println!(
            "{:>8}  {:>6.2}  {:>10.2}",
            p.inter_report_time,
            p.walk_mean_time / 3600.0,
            p.teleport_time / 3600.0
        );
    }
    Ok(())
}
