//! Reporting helpers for the acceptance suite in `tests/acceptance.rs`.
//!
//! The suite lives in its own package so that `cargo test --workspace` runs
//! it after every other test target: a failing criterion stops cargo, and it
//! should not hide the results of the unit and integration suites.

use std::time::{Duration, Instant};

/// Outcome of one criterion: whether it held, and the measured numbers.
pub type Check = anyhow::Result<(bool, String)>;

/// Runs one criterion and prints its PASS/FAIL line. A criterion that
/// errors or overruns `limit` fails.
pub fn run_criterion(id: usize, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let (mut passed, mut detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e:#}")),
    };
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        if elapsed > limit {
            passed = false;
            detail.push_str(&format!(
                "; runtime {:.1}s exceeds {:.0}s",
                elapsed.as_secs_f64(),
                limit.as_secs_f64()
            ));
        }
    }
    println!("{}", format_line(id, name, passed, &detail, elapsed));
    passed
}

pub fn format_line(id: usize, name: &str, passed: bool, detail: &str, elapsed: Duration) -> String {
    format!(
        "criterion {id:>2}: {} {name} | {detail} [{:.2}s]",
        if passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format() {
        let line = format_line(3, "batch invariance", true, "ok", Duration::from_millis(1500));
        assert_eq!(line, "criterion  3: PASS batch invariance | ok [1.50s]");
    }

    #[test]
    fn errors_and_overruns_fail() {
        assert!(!run_criterion(1, "err", None, || anyhow::bail!("boom")));
        assert!(!run_criterion(2, "slow", Some(Duration::ZERO), || {
            std::thread::sleep(Duration::from_millis(2));
            Ok((true, String::new()))
        }));
        assert!(run_criterion(3, "ok", None, || Ok((true, String::new()))));
    }
}
