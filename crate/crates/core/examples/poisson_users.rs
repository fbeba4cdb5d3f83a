//! Converting expected report counts to wall-clock time for a user population.

use crowdtopo::chain::solve_fk;
use crowdtopo::mobility::{poisson_wallclock, PoissonUsers};
use crowdtopo::tessellation::TileMeasure;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let measure = TileMeasure::new(2, vec![0.4, 0.2, 0.2, 0.2])?;
    let reports = solve_fk(&measure).expected().value().unwrap();
    for n_users in [10, 100, 1000] {
        let users = PoissonUsers::new(n_users, 0.001)?;
        println!("{n_users:>5} users: {:.1} s", poisson_wallclock(reports, &users));
    }
    Ok(())
}
