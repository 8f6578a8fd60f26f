//! Reporting harness for the acceptance suite in `tests/acceptance.rs`.
//!
//! Each criterion is a named check with a wall-clock budget. A criterion passes only if
//! its check passes within budget. Every criterion prints one line, pass or fail.

use std::time::{Duration, Instant};

pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

pub fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

pub struct Criterion {
    pub name: &'static str,
    pub budget: Duration,
    pub check: fn() -> Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub index: usize,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl Outcome {
    pub fn in_time(&self) -> bool {
        self.elapsed <= self.budget
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {}: {} ({:.2} s, budget {} s{})",
            if self.pass { "PASS" } else { "FAIL" },
            self.index,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs(),
            if self.in_time() { "" } else { ", over budget" }
        )
    }
}

pub fn evaluate(index: usize, c: &Criterion) -> Outcome {
    let start = Instant::now();
    let v = (c.check)();
    let elapsed = start.elapsed();
    Outcome { index, name: c.name, pass: v.pass && elapsed <= c.budget, detail: v.detail, elapsed, budget: c.budget }
}

/// Runs every criterion in order, printing one line each and a summary. Returns the
/// number of failures.
pub fn run_all(criteria: &[Criterion]) -> usize {
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let outcome = evaluate(i + 1, c);
        println!("{}", outcome.line());
        failed += usize::from(!outcome.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    failed
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok() -> Verdict {
        verdict(true, "fine")
    }

    fn bad() -> Verdict {
        verdict(false, "off by 2")
    }

    fn slow() -> Verdict {
        std::thread::sleep(Duration::from_millis(20));
        verdict(true, "late")
    }

    #[test]
    fn failing_check_fails() {
        let o = evaluate(3, &Criterion { name: "x", budget: Duration::from_secs(1), check: bad });
        assert!(!o.pass);
        assert!(o.line().starts_with("[FAIL]  3 x: off by 2 ("));
    }

    #[test]
    fn over_budget_fails_even_if_the_check_passes() {
        let o = evaluate(1, &Criterion { name: "y", budget: Duration::from_millis(1), check: slow });
        assert!(!o.pass);
        assert!(o.line().ends_with(", over budget)"));
    }

    #[test]
    fn counts_failures() {
        let cs = [
            Criterion { name: "a", budget: Duration::from_secs(1), check: ok },
            Criterion { name: "b", budget: Duration::from_secs(1), check: bad },
            Criterion { name: "c", budget: Duration::from_secs(1), check: ok },
        ];
        assert_eq!(run_all(&cs), 1);
        assert!(evaluate(10, &cs[0]).line().starts_with("[PASS] 10 a: fine"));
    }
}
