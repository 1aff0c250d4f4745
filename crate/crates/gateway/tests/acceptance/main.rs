//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Run a subset by passing name fragments.

mod community;
mod ledger;
mod network;
mod signatures;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

/// `Ok(detail)` passes; `Err(detail)` fails.
pub type Verdict = Result<String, String>;

/// Fails the criterion with a formatted message unless `cond` holds.
#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

type Criterion = (&'static str, fn() -> Verdict);

const CRITERIA: &[Criterion] = &[
    ("rss_properties", signatures::rss_properties),
    ("size_scaling_law", signatures::size_scaling_law),
    ("hiding", signatures::hiding),
    ("lifecycle_end_to_end", ledger::lifecycle_end_to_end),
    ("immutability_audit", ledger::immutability_audit),
    ("auditor_selection_uniformity", ledger::auditor_selection_uniformity),
    ("dispute_resolution", ledger::dispute_resolution),
    ("deletion_accountability", network::deletion_accountability),
    ("duplicate_priority_oracles", community::duplicate_priority_oracles),
];

fn panic_text(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, run) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| Err(panic_text(p)));
        let secs = t.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
