//! Runs the acceptance suite and prints one line per criterion.

use std::process::ExitCode;

fn main() -> ExitCode {
    memlab::init_threads();
    let results = memlab::acceptance::run_all(|r| println!("{r}"));
    let failed = results.iter().filter(|r| !r.passed).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
