//! Distribution of E[tau_0.9] and S(0.9) over random 7-neighbour scenarios.

use crowdtopo::experiments::{run_random_ensemble, EnsembleConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = EnsembleConfig {
        n_configs: 100,
        samples: 100_000,
        ..EnsembleConfig::default()
    };
    let report = run_random_ensemble(&cfg)?;
    let e = report.summary.expected_steps.as_ref().unwrap();
    let s = report.summary.report_bound.as_ref().unwrap();
    println!("configs {} excluded {}", report.summary.configs, report.summary.excluded);
    println!("E[tau]  mode bin {}  median {:.2}  p95 {:.2}", e.mode_bin, e.p50, e.p95);
    println!("S(0.9)  mode bin {}  median {:.2}  p95 {:.2}", s.mode_bin, s.p50, s.p95);
    Ok(())
}
