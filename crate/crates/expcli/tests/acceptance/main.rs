//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers to run a subset:
//! `cargo test -p mbppol-cli --test acceptance -- 2 3`.

mod experiments;
mod properties;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use experiments::HazardRuns;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: String) -> Self {
        Outcome { pass, detail }
    }
}

const NAMES: [&str; 10] = [
    "oracle feasibility and optimality",
    "GAE equivalence",
    "gradient correctness",
    "multiplier dynamics",
    "ensemble fidelity",
    "performance ratio semantics",
    "tightening trend",
    "sample efficiency",
    "violation reduction",
    "end-to-end determinism",
];

fn main() {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .filter(|n| (1..=10).contains(n))
        .collect();
    let wanted = |n: usize| selected.is_empty() || selected.contains(&n);

    let mut hazard: Option<HazardRuns> = None;
    let mut failed = 0;
    for n in (1..=10).filter(|&n| wanted(n)) {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| match n {
            1 => experiments::oracle_feasibility(),
            2 => properties::gae_equivalence(),
            3 => properties::gradient_correctness(),
            4 => properties::lambda_dynamics(),
            5 => properties::ensemble_fidelity(),
            6 => properties::pr_semantics(),
            7..=9 => {
                let runs = hazard.get_or_insert_with(HazardRuns::run);
                match n {
                    7 => experiments::beta_trend(runs),
                    8 => experiments::sample_efficiency(&experiments::matched_points(runs)),
                    _ => experiments::violation_reduction(&experiments::matched_points(runs)),
                }
            }
            _ => experiments::determinism(),
        }));
        let outcome = result.unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Outcome::new(false, format!("panicked: {msg}"))
        });
        failed += !outcome.pass as usize;
        println!(
            "criterion {n:>2} [{}] {}: {} ({:.1}s)",
            if outcome.pass { "PASS" } else { "FAIL" },
            NAMES[n - 1],
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
