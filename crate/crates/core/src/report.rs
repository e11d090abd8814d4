//! Machine-readable run reports.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::verifier::{ConvergenceReport, Order};

/// Order estimate attached to a convergence check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderInfo {
    /// Mean of the pairwise orders, or `null` when every residual is at the
    /// round-off floor.
    pub value: Option<f64>,
    pub exact: bool,
    pub pairwise: Vec<f64>,
    pub ratios: Vec<f64>,
    pub target: f64,
    pub band: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub anchor: String,
    pub max: f64,
    pub mean: f64,
    pub samples: usize,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub order: Option<OrderInfo>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub steps: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub residuals: Option<Vec<f64>>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl Check {
    /// Residual statistics against a tolerance; passes when `max <= tol`.
    pub fn from_values(name: &str, anchor: &str, values: &[f64], tolerance: f64) -> Self {
        let finite = values.iter().all(|v| v.is_finite());
        let (max, mean) = if !finite {
            (f64::MAX, f64::MAX)
        } else if values.is_empty() {
            (0.0, 0.0)
        } else {
            (
                values.iter().copied().fold(0.0, f64::max),
                values.iter().sum::<f64>() / values.len() as f64,
            )
        };
        let check = Check {
            name: name.into(),
            anchor: anchor.into(),
            max,
            mean,
            samples: values.len(),
            tolerance,
            order: None,
            steps: None,
            residuals: None,
            pass: finite && max <= tolerance,
            note: None,
        };
        if finite {
            check
        } else {
            check.with_note("non-finite residual encountered")
        }
    }

    pub fn from_convergence(
        c: &ConvergenceReport,
        anchor: &str,
        cap: f64,
        target: f64,
        band: f64,
        mean: f64,
    ) -> Self {
        let (value, exact) = match c.estimate.order {
            Order::Exact => (None, true),
            Order::Value(v) => (Some(v), false),
        };
        Check {
            name: c.name.clone(),
            anchor: anchor.into(),
            max: c.residuals.last().copied().unwrap_or(0.0),
            mean,
            samples: c.residuals.len(),
            tolerance: cap,
            order: Some(OrderInfo {
                value,
                exact,
                pairwise: c.estimate.orders.clone(),
                ratios: c.estimate.ratios.clone(),
                target,
                band,
            }),
            steps: Some(c.steps.clone()),
            residuals: Some(c.residuals.clone()),
            pass: c.pass,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

impl From<&Error> for RunError {
    fn from(e: &Error) -> Self {
        let kind = match e {
            Error::Config(_) => "config",
            Error::InvalidRank(_) | Error::InvalidGrading(_) | Error::UnsupportedExact(_) => {
                "config"
            }
            Error::Singular(_) => "singular",
            Error::Breakdown(_) => "breakdown",
            Error::Convention(_) => "convention",
            _ => "numerical",
        };
        RunError {
            kind: kind.into(),
            message: e.to_string(),
            exit_code: exit_code(e),
        }
    }
}

/// Process exit code for an error: 2 for configuration problems, 3 for
/// numerical breakdown.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidRank(_)
        | Error::InvalidGrading(_)
        | Error::UnsupportedExact(_) => 2,
        _ => 3,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub mode: String,
    pub n: usize,
    pub grading: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub pass: bool,
    pub error: Option<RunError>,
}

impl Report {
    pub fn push(&mut self, check: Check) {
        debug_assert!(
            self.checks.iter().all(|c| c.name != check.name),
            "duplicate check {}",
            check.name
        );
        self.checks.push(check);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        let note = note.into();
        if !self.notes.contains(&note) {
            self.notes.push(note);
        }
    }

    /// Records a fatal error; the report keeps the checks gathered so far.
    pub fn fail(&mut self, e: &Error) {
        self.error = Some(e.into());
    }

    pub fn finish(mut self) -> Self {
        self.pass = self.error.is_none() && self.checks.iter().all(|c| c.pass);
        self
    }

    pub fn exit_code(&self) -> i32 {
        match &self.error {
            Some(e) => e.exit_code,
            None if self.pass => 0,
            None => 1,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_is_conjunction_and_exit_codes() {
        let mut r = Report {
            tool: "lieflow".into(),
            version: "0".into(),
            command: "verify".into(),
            config_hash: String::new(),
            seed: 0,
            mode: "float".into(),
            n: 1,
            grading: "1".into(),
            m: 1,
            checks: vec![],
            notes: vec![],
            pass: false,
            error: None,
        };
        r.push(Check::from_values("a", "x", &[0.0, 1e-12], 1e-9));
        let ok = r.clone().finish();
        assert!(ok.pass);
        assert_eq!(ok.exit_code(), 0);
        r.push(Check::from_values("b", "x", &[1.0], 1e-9));
        assert_eq!(r.clone().finish().exit_code(), 1);
        r.fail(&Error::Breakdown("y".into()));
        assert_eq!(r.clone().finish().exit_code(), 3);
        r.fail(&Error::Config("z".into()));
        assert_eq!(r.finish().exit_code(), 2);
        let nan = Check::from_values("c", "x", &[f64::NAN, 0.0], 1.0);
        assert!(!nan.pass);
    }
}
