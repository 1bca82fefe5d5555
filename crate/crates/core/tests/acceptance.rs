//! Prints one PASS/FAIL line per acceptance criterion and fails if any
//! criterion does.

mod support;

use std::io::Write;
use std::time::Instant;

use support::checks::{self, Outcome};

fn report(name: &str, f: impl FnOnce() -> Outcome, failures: &mut Vec<String>) {
    let start = Instant::now();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
        .unwrap_or_else(|_| Err("panicked".into()));
    let elapsed = start.elapsed();
    let line = match outcome {
        Ok(detail) => format!("PASS {name} [{elapsed:.1?}]: {detail}"),
        Err(detail) => {
            failures.push(name.to_string());
            format!("FAIL {name} [{elapsed:.1?}]: {detail}")
        }
    };
    // straight to the process stdout so the line shows without --nocapture
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

#[test]
fn acceptance() {
    let mut failures = Vec::new();
    report("formula suite", checks::formula_suite, &mut failures);
    report("scheme arithmetic", checks::scheme_arithmetic, &mut failures);
    report("gabor suite", checks::gabor_suite, &mut failures);
    report("distance and ranking suite", checks::distance_suite, &mut failures);
    report("self-retrieval", checks::self_retrieval, &mut failures);
    let dataset = checks::acceptance_dataset();
    report("directional complete-query replica", || checks::exp2_directional(&dataset), &mut failures);
    report("directional partial-query replica", || checks::exp4_directional(&dataset), &mut failures);
    report("metric oracle", checks::metric_oracle, &mut failures);
    report("round trip", checks::round_trip, &mut failures);
    assert!(failures.is_empty(), "failed: {failures:?}");
}
