//! Machine-readable run reports and the CSV summary emitted by sweeps.
//!
//! A report is self-contained: it embeds the scenario hash, the seed, the
//! resolved (possibly shrunk) penalty weights, the optimality certificate,
//! the equilibrium audits, and per-start dynamics results. Everything except
//! `timing_ms` is a pure function of the scenario file and the seed, so two
//! runs of the same scenario agree byte-for-byte once that field is dropped.

use ratemech::game::{EquilibriumReport, EtaCertificate, Mechanism};
use ratemech::solver::KktCertificate;
use serde::Serialize;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Every asserted property held.
    Pass,
    /// At least one asserted property failed; details in `failures`.
    Fail,
    /// The welfare optimum leaves some link with fewer than two active
    /// agents, so the peer price averages the mechanisms rely on are
    /// degenerate there. Not a failure: the instance is outside the
    /// supported class.
    OutOfScope,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::OutOfScope => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::OutOfScope => "out_of_scope",
        }
    }
}

/// One best-response dynamics run from a perturbed start.
#[derive(Debug, Clone, Serialize)]
pub struct DynamicsReport {
    pub start: usize,
    /// Seed that drew the perturbation and the dynamics' agent order.
    pub start_seed: u64,
    pub converged: bool,
    pub rounds: usize,
    /// Allocation realized by the final profile.
    pub x: Vec<f64>,
    /// Max-norm gap between that allocation and the welfare optimum.
    pub x_gap_inf: f64,
    /// Full equilibrium audit of the final profile (converged runs only).
    pub audit: Option<EquilibriumReport>,
}

/// Headline numbers, also the source of the sweep CSV columns.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    /// Worst allocation gap across the constructed equilibrium and every
    /// converged dynamics run.
    pub x_gap_inf: f64,
    /// Budget residual at the constructed equilibrium: negative revenue for
    /// the weak mechanism, |total tax| for the balanced one.
    pub budget_residual: f64,
    /// Total tax collected at the constructed equilibrium.
    pub revenue: f64,
    /// Largest payoff any sampled unilateral deviation gained, across all
    /// audits.
    pub max_deviation_gain: f64,
    /// Most rounds any dynamics run needed.
    pub br_rounds: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Timing {
    pub total_ms: f64,
    pub solve_ms: f64,
    pub dynamics_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub report_schema_version: u32,
    pub scenario: String,
    pub scenario_id: String,
    /// SHA-256 of the scenario file bytes.
    pub scenario_hash: String,
    pub seed: u64,
    pub mechanism: Mechanism,
    /// Penalty weights actually used (after any certificate shrink).
    pub eta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    pub status: Status,
    /// Asserted properties that did not hold.
    pub failures: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_of_scope: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<KktCertificate>,
    /// Concavity certificate for the penalty weights.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_certificate: Option<EtaCertificate>,
    /// Audit of the equilibrium constructed from the certificate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constructed: Option<EquilibriumReport>,
    pub dynamics: Vec<DynamicsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<Summary>,
    /// Wall-clock figures; the only field excluded from determinism.
    pub timing_ms: Timing,
}

pub const CSV_HEADER: &str =
    "scenario_id,mechanism,x_gap_inf,budget_residual,max_deviation_gain,br_rounds,status";

impl RunReport {
    /// One sweep summary row. Missing figures (failed or out-of-scope rows)
    /// print as `NaN` so the CSV stays rectangular.
    pub fn csv_row(&self) -> String {
        let (gap, budget, gain, rounds) = match &self.summary {
            Some(s) => (
                s.x_gap_inf,
                s.budget_residual,
                s.max_deviation_gain,
                s.br_rounds,
            ),
            None => (f64::NAN, f64::NAN, f64::NAN, 0),
        };
        format!(
            "{},{},{:e},{:e},{:e},{},{}",
            self.scenario_id,
            self.mechanism,
            gap,
            budget,
            gain,
            rounds,
            self.status.label()
        )
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
