//! Run manifest and the shared report envelope.

use crate::output::Artifact;
use neumann_core::geometry::DomainSpec;
use neumann_core::report::Verdict;
use serde::{Deserialize, Serialize};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One verified property: what was checked, the statement it checks, and
/// the outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub check: String,
    pub reference: String,
    pub verdict: Verdict,
    pub detail: String,
}

impl Check {
    pub fn new(check: &str, reference: &str, verdict: Verdict, detail: String) -> Check {
        Check {
            check: check.to_string(),
            reference: reference.to_string(),
            verdict,
            detail,
        }
    }
}

/// Deterministic report: no timings, paths or host data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report<T> {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub domain_id: String,
    pub domain: DomainSpec,
    pub verdict: Verdict,
    pub checks: Vec<Check>,
    pub data: T,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepTiming {
    pub step: String,
    pub seconds: f64,
}

/// Run metadata; unlike the reports it records wall-clock timings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub jobs: usize,
    pub cache_hits: usize,
    pub steps: Vec<StepTiming>,
    pub artifacts: Vec<Artifact>,
    pub verdict: Verdict,
    pub exit_code: i32,
}

pub fn exit_code(v: Verdict) -> i32 {
    match v {
        Verdict::Pass => 0,
        Verdict::Fail => 1,
        Verdict::Inconclusive => 2,
    }
}
