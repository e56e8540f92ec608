//! Acceptance suite: one PASS/FAIL line per criterion, then the logs of
//! failing criteria. Exits nonzero when any criterion fails.
//!
//! `FPF_CRITERIA=2,5` restricts the run; `FPF_VERBOSE=1` prints every log.

use fpf_core::selftest::{run, CRITERIA};

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("FPF_CRITERIA").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let verbose = std::env::var("FPF_VERBOSE").is_ok_and(|v| v != "0");
    let mut failed = Vec::new();
    for (id, ..) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let out = run(id);
        println!("{}", out.line());
        if verbose || !out.pass {
            for l in &out.log {
                println!("    {l}");
            }
        }
        if !out.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
