//! A few acceptance checks run from code, with a reduced trial budget.

use benign_lab::harness::verify::{run_many, DEFAULT_SEED};
use benign_lab::harness::Tolerances;

fn main() -> benign_lab::Result<()> {
    let mut tol = Tolerances::builtin();
    tol.interpolation.instances = 20;
    tol.ranks.samples = 1000;
    let outcomes = run_many(&["1", "4", "7", "9"], &tol, DEFAULT_SEED, |o| println!("{o}"))?;
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed}/{} passed", outcomes.len());
    Ok(())
}
