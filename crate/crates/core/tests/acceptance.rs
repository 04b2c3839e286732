//! Acceptance gate: one line per check, non-zero exit if any check fails.
//!
//! Set `OMS_ACCEPT_QUICK=1` for a reduced workload.

use std::process::ExitCode;

use oms_core::acceptance::{run_all, AcceptanceOptions};

fn main() -> ExitCode {
    let opts = if std::env::var_os("OMS_ACCEPT_QUICK").is_some() {
        AcceptanceOptions::quick()
    } else {
        AcceptanceOptions::default()
    };
    let outcomes = run_all(&opts);
    for o in &outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
