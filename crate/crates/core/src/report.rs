//! Report schema: per-check records, the curvature fit, run configuration
//! and the full verification report. Serialization is stable (fixed field
//! order, versioned) so reports with identical configs are byte-identical.

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

/// Result of one named check over a set of sample points.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check_id: String,
    /// What the check verifies, by content.
    pub theorem: String,
    pub points_tested: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub details: Vec<String>,
}

impl CheckRecord {
    pub fn from_residual(
        check_id: &str,
        theorem: &str,
        points: usize,
        max_residual: f64,
        tolerance: f64,
    ) -> Self {
        let verdict = if max_residual <= tolerance { Verdict::Pass } else { Verdict::Fail };
        CheckRecord {
            check_id: check_id.to_string(),
            theorem: theorem.to_string(),
            points_tested: points,
            max_residual,
            tolerance,
            verdict,
            details: Vec::new(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.details.push(detail.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Least-squares fit of the constant-curvature relation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvatureFit {
    pub c_hat: f64,
    /// sup over points and index pairs of the scaled fit residual
    pub residual: f64,
    /// shell the sample was projected to
    pub shell: f64,
    /// max |angular curvature| on the shell `1/sqrt(-c_hat)` when the
    /// fitted constant is negative
    pub ang_on_matched_shell: Option<f64>,
    pub points: usize,
}

/// Run configuration; mirrors the CLI and the JSON config file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    /// builtin name or inline DSL text
    pub metric: String,
    /// whether `metric` names a builtin
    pub builtin: bool,
    pub dim: usize,
    pub kind: crate::metric::MetricKind,
    pub seed: u64,
    pub num_points: usize,
    /// per-coordinate sampling box for `x`
    pub coordinate_box: Vec<(f64, f64)>,
    /// K-levels for level-set checks
    pub shells: Vec<f64>,
    /// check ids to run (empty = all)
    pub checks: Vec<String>,
    /// optional tolerance overrides keyed by check id
    pub tolerances: std::collections::BTreeMap<String, f64>,
    /// rerun frame-dependent checks with an alternate admissible frame and
    /// compare verdicts
    pub alternate_frame: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            metric: "euclidean-2d".into(),
            builtin: true,
            dim: 2,
            kind: crate::metric::MetricKind::KSquared,
            seed: 42,
            num_points: 50,
            coordinate_box: vec![(-1.0, 1.0), (-1.0, 1.0)],
            shells: vec![1.0],
            checks: Vec::new(),
            tolerances: std::collections::BTreeMap::new(),
            alternate_frame: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub verdict: Verdict,
    pub failed_checks: Vec<String>,
    /// for builtins: whether the outcome matches the declared expectations
    pub expected_match: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub config: RunConfig,
    /// stable hash of the canonical metric AST
    pub metric_fingerprint: String,
    pub checks: Vec<CheckRecord>,
    pub curvature_fit: Option<CurvatureFit>,
    pub summary: Summary,
    /// wall-clock milliseconds; `None` by default so reports stay
    /// byte-identical across reruns
    pub timing_ms: Option<f64>,
}

impl VerificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Flattened per-check CSV view.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("check_id,theorem,points_tested,max_residual,tolerance,verdict\n");
        for c in &self.checks {
            let verdict = match c.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "fail",
                Verdict::NotApplicable => "not-applicable",
            };
            out.push_str(&format!(
                "{},{},{},{:e},{:e},{}\n",
                c.check_id,
                c.theorem.replace(',', ";"),
                c.points_tested,
                c.max_residual,
                c.tolerance,
                verdict
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_verdict_follows_tolerance() {
        let r = CheckRecord::from_residual("x", "t", 10, 1e-9, 1e-8);
        assert!(r.passed());
        let r = CheckRecord::from_residual("x", "t", 10, 2e-8, 1e-8);
        assert!(!r.passed());
    }

    #[test]
    fn json_roundtrip_stable() {
        let rep = VerificationReport {
            schema_version: SCHEMA_VERSION,
            config: RunConfig::default(),
            metric_fingerprint: "abcd".into(),
            checks: vec![CheckRecord::from_residual("a", "b", 5, 0.0, 1e-9)],
            curvature_fit: None,
            summary: Summary { verdict: Verdict::Pass, failed_checks: vec![], expected_match: None },
            timing_ms: None,
        };
        let s1 = rep.to_json();
        let s2 = rep.to_json();
        assert_eq!(s1, s2);
        let back: VerificationReport = serde_json::from_str(&s1).unwrap();
        assert_eq!(back.to_json(), s1);
    }
}
