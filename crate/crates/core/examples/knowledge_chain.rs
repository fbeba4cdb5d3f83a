//! Expected reports to full knowledge for the two-neighbour example, with
//! the spectral tail bound.

use crowdtopo::chain::{solve_fk, tail_bound};
use crowdtopo::tessellation::TileMeasure;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // mass of tiles {}, {1}, {2}, {1,2}
    let measure = TileMeasure::new(2, vec![0.4, 0.2, 0.2, 0.2])?;
    let sol = solve_fk(&measure);
    println!("E[tau]      = {:?}", sol.expected());
    println!("Var[tau]    = {:?}", sol.variance());
    println!("lambda      = {}", sol.second_largest());
    println!("S(0.9)      = {:?}", sol.report_bound(0.1));
    for t in [1, 5, 10] {
        println!("P(tau > {t:>2}) <= {:.5}", tail_bound(sol.second_largest(), t));
    }
    Ok(())
}
