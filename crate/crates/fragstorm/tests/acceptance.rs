//! Acceptance suite: one line per criterion.
//!
//! Numeric arguments select criteria (`cargo test --test acceptance -- 1 4`).
//! Criteria listed in `KNOWN_DEVIATIONS` are still run and printed; their
//! failure is expected and does not fail the suite.

use std::process::ExitCode;

use fragstorm::checks::{criteria, evaluate};

const KNOWN_DEVIATIONS: &[u32] = &[7];

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = 0;
    let mut ran = 0;
    for c in criteria() {
        if !selected.is_empty() && !selected.contains(&c.id) {
            continue;
        }
        let report = evaluate(&c);
        ran += 1;
        let known = KNOWN_DEVIATIONS.contains(&c.id);
        let note = if !report.passed() && known { " (known deviation)" } else { "" };
        println!("{}{note}", report.line());
        if !report.passed() && !known {
            unexpected += 1;
        }
    }
    println!("acceptance: {ran} criteria run, {unexpected} unexpected failures");
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
