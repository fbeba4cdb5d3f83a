//! Simulated teleport users against the exact chain solution.

use crowdtopo::chain::{solve_fk, AbsorbingSet};
use crowdtopo::mobility::{mean_reports, run_trajectories, teleport_stream, DEFAULT_MAX_REPORTS};
use crowdtopo::tessellation::TileMeasure;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let measure = TileMeasure::new(3, vec![0.1, 0.15, 0.1, 0.2, 0.05, 0.1, 0.1, 0.2])?;
    let exact = solve_fk(&measure).expected();
    let absorbing = AbsorbingSet::full_knowledge(3);
    let records = run_trajectories(100_000, 9, &absorbing, DEFAULT_MAX_REPORTS, |s| teleport_stream(&measure, s));
    let (mean, se) = mean_reports(&records).unwrap();
    println!("exact     {exact:?}");
    println!("simulated {mean:.4} ± {se:.4}");
    Ok(())
}
