//! Verification checks and the JSON report.

use serde::Serialize;

/// How a measured value is compared against its prediction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Comparison {
    /// `|measured − predicted| ≤ tolerance`.
    Absolute,
    /// `|measured − predicted| ≤ tolerance·|predicted|`.
    Relative,
    /// `|measured − predicted| ≤ max(tolerance·|predicted|, floor)`.
    RelativeWithFloor { floor: f64 },
    /// `measured ≤ tolerance`; the prediction is informative only.
    UpperBound,
}

/// One comparison of a numerical result against an independent oracle.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Where the prediction comes from.
    pub oracle: String,
    pub predicted: f64,
    pub measured: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub passed: bool,
    /// Non-gating records are contrasts whose outcome does not affect the
    /// exit status.
    pub gating: bool,
}

impl Check {
    pub fn new(
        name: impl Into<String>,
        oracle: impl Into<String>,
        predicted: f64,
        measured: f64,
        tolerance: f64,
        comparison: Comparison,
    ) -> Self {
        let diff = (measured - predicted).abs();
        let passed = measured.is_finite()
            && match comparison {
                Comparison::Absolute => diff <= tolerance,
                Comparison::Relative => diff <= tolerance * predicted.abs(),
                Comparison::RelativeWithFloor { floor } => {
                    diff <= (tolerance * predicted.abs()).max(floor)
                }
                Comparison::UpperBound => measured <= tolerance,
            };
        Self {
            name: name.into(),
            oracle: oracle.into(),
            predicted,
            measured,
            tolerance,
            comparison,
            passed,
            gating: true,
        }
    }

    pub fn contrast(mut self) -> Self {
        self.gating = false;
        self
    }

    pub fn prefixed(mut self, prefix: &str) -> Self {
        self.name = format!("{prefix}/{}", self.name);
        self
    }

    pub fn blocks(&self) -> bool {
        self.gating && !self.passed
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Totals {
    pub checks: usize,
    pub passed: usize,
    pub failed: usize,
    pub gating_failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub engine_version: String,
    pub config_hash: String,
    pub scenario: String,
    /// `axis=start:stop:count` for sweeps.
    pub sweep: Option<String>,
    pub tolerance_scale: f64,
    pub checks: Vec<Check>,
    pub totals: Totals,
}

impl VerificationReport {
    pub fn new(
        config_hash: String,
        scenario: String,
        sweep: Option<String>,
        tolerance_scale: f64,
        checks: Vec<Check>,
    ) -> Self {
        let passed = checks.iter().filter(|c| c.passed).count();
        let totals = Totals {
            checks: checks.len(),
            passed,
            failed: checks.len() - passed,
            gating_failed: checks.iter().filter(|c| c.blocks()).count(),
        };
        Self {
            engine_version: stirfcs::export::ENGINE_VERSION.to_string(),
            config_hash,
            scenario,
            sweep,
            tolerance_scale,
            checks,
            totals,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.totals.gating_failed == 0
    }

    pub fn to_json(&self) -> Vec<u8> {
        stirfcs::export::json_bytes(&serde_json::to_value(self).expect("reports always serialize"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparisons() {
        assert!(Check::new("a", "o", 1.0, 1.04, 0.05, Comparison::Relative).passed);
        assert!(!Check::new("a", "o", 1.0, 1.06, 0.05, Comparison::Relative).passed);
        assert!(Check::new("a", "o", 0.0, 1e-9, 1e-8, Comparison::Absolute).passed);
        let floor = Comparison::RelativeWithFloor { floor: 1e-4 };
        assert!(Check::new("a", "o", 1e-6, 5e-5, 0.05, floor).passed);
        assert!(!Check::new("a", "o", 1e-6, 2e-4, 0.05, floor).passed);
        assert!(Check::new("a", "o", 1.0, 2.9, 3.0, Comparison::UpperBound).passed);
        assert!(!Check::new("a", "o", 1.0, f64::NAN, 3.0, Comparison::UpperBound).passed);
    }

    #[test]
    fn contrasts_do_not_gate() {
        let checks = vec![
            Check::new("ok", "o", 1.0, 1.0, 0.1, Comparison::Relative),
            Check::new("off", "o", 1.0, 2.0, 0.1, Comparison::Relative).contrast(),
        ];
        let r = VerificationReport::new("h".into(), "s".into(), None, 1.0, checks);
        assert_eq!(r.totals.failed, 1);
        assert_eq!(r.totals.gating_failed, 0);
        assert!(r.all_passed());
    }
}
