//! Machine-readable report types shared by the CLI and the verification
//! suites. Reports serialize with a stable field order; `wall_time_ms` is
//! the only run-dependent field.

use serde::Serialize;
use std::collections::BTreeMap;

pub const REPORT_VERSION: &str = "1";

/// |a − b| / (1 + max(|a|, |b|)): absolute for small values, relative for
/// large ones.
pub fn hybrid_residual(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

/// One named identity check with the residual it produced and the
/// tolerance it was judged against.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, residual: f64, tol: f64) -> Check {
        Check {
            name: name.into(),
            residual,
            tol,
            pass: residual.is_finite() && residual <= tol,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

impl Summary {
    pub fn of(checks: &[Check]) -> Summary {
        let passed = checks.iter().filter(|c| c.pass).count();
        Summary {
            total: checks.len(),
            passed,
            failed: checks.len() - passed,
        }
    }
}

/// Report for `verify` and `integrate` runs.
#[derive(Debug, Serialize)]
pub struct SuiteReport {
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub checks: Vec<Check>,
    pub summary: Summary,
    pub wall_time_ms: u64,
}

/// Per-point record of an `eval` run.
#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    pub point: Vec<f64>,
    pub q_holographic: f64,
    pub q_direct: f64,
    /// v^(0), v^(2), …, v^(n)
    pub v: Vec<f64>,
    pub divergence_term: f64,
    pub divergence_dual: f64,
    pub r: f64,
    pub j: f64,
    /// hybrid residual between the two Q paths
    pub consistency_residual: f64,
}

/// Report for `eval` runs.
#[derive(Debug, Serialize)]
pub struct QReport {
    pub version: &'static str,
    pub command: String,
    pub metric: String,
    pub params: BTreeMap<String, f64>,
    pub n: usize,
    pub order: usize,
    pub points: Vec<PointRecord>,
    pub checks: Vec<Check>,
    pub summary: Summary,
    pub wall_time_ms: u64,
}
