//! The message game induced by a mechanism: utilities, analytic gradients,
//! best-response search, equilibrium construction from a welfare
//! certificate, and the audit that decides whether a profile is an
//! (approximate) equilibrium.

mod best_response;
mod construct;
mod gradient;
mod hessian;
mod probe;
mod verify;

pub use best_response::{
    best_response, iterate_best_response, perturbed_start, BestResponse, BrConfig, DynamicsOutcome,
    RoundTrace,
};
pub use construct::construct_ne_from_kkt;
pub use gradient::{utility_gradient, Gradient};
pub use hessian::{
    numeric_hessian, symmetric_eigenvalues, validate_eta, EtaCertificate, EtaConfig, Side,
};
pub use probe::{extraneous_equilibria_probe, ProbeCase, ProbeReport};
pub use verify::{
    verify_equilibrium, Check, DeviationCertificate, EquilibriumChecks, EquilibriumReport,
    Thresholds,
};

use crate::model::{AgentId, NetworkSpec, ValuationProfile};
use crate::sbb::{self, SbbMessage, SbbParams};
use crate::wbb::{self, MechanismParams, Outcome, WbbMessage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// An agent counts as active on a link when its rate clears this threshold.
/// Links with fewer than two active agents leave peer averages degenerate.
pub(crate) const ACTIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Wbb,
    Sbb,
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mechanism::Wbb => write!(f, "wbb"),
            Mechanism::Sbb => write!(f, "sbb"),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(untagged)]
pub enum GameParams {
    Wbb(MechanismParams),
    Sbb(SbbParams),
}

impl GameParams {
    pub fn mechanism(&self) -> Mechanism {
        match self {
            GameParams::Wbb(_) => Mechanism::Wbb,
            GameParams::Sbb(_) => Mechanism::Sbb,
        }
    }

    pub fn eta(&self) -> f64 {
        match self {
            GameParams::Wbb(p) => p.eta,
            GameParams::Sbb(p) => p.eta,
        }
    }

    pub fn zeta(&self) -> Option<f64> {
        match self {
            GameParams::Wbb(_) => None,
            GameParams::Sbb(p) => Some(p.zeta),
        }
    }

    /// Same mechanism with both weights scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> GameParams {
        match self {
            GameParams::Wbb(p) => GameParams::Wbb(MechanismParams {
                eta: p.eta * factor,
            }),
            GameParams::Sbb(p) => GameParams::Sbb(SbbParams {
                eta: p.eta * factor,
                zeta: p.zeta * factor,
            }),
        }
    }
}

/// A full message profile, one message per agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Profile {
    Wbb(Vec<WbbMessage>),
    Sbb(Vec<SbbMessage>),
}

impl Profile {
    pub fn mechanism(&self) -> Mechanism {
        match self {
            Profile::Wbb(_) => Mechanism::Wbb,
            Profile::Sbb(_) => Mechanism::Sbb,
        }
    }

    pub fn n_agents(&self) -> usize {
        match self {
            Profile::Wbb(m) => m.len(),
            Profile::Sbb(m) => m.len(),
        }
    }

    pub fn zero(spec: &NetworkSpec, mechanism: Mechanism) -> Profile {
        match mechanism {
            Mechanism::Wbb => Profile::Wbb(
                (0..spec.n_agents())
                    .map(|i| WbbMessage::zero(spec, i))
                    .collect(),
            ),
            Mechanism::Sbb => Profile::Sbb(
                (0..spec.n_agents())
                    .map(|i| SbbMessage::zero(spec, i))
                    .collect(),
            ),
        }
    }

    pub fn demands(&self) -> Vec<f64> {
        match self {
            Profile::Wbb(m) => m.iter().map(|msg| msg.y).collect(),
            Profile::Sbb(m) => m.iter().map(|msg| msg.y).collect(),
        }
    }

    pub fn demand(&self, i: AgentId) -> f64 {
        match self {
            Profile::Wbb(m) => m[i].y,
            Profile::Sbb(m) => m[i].y,
        }
    }

    pub fn price(&self, i: AgentId, l: crate::model::LinkId) -> f64 {
        match self {
            Profile::Wbb(m) => m[i].price(l),
            Profile::Sbb(m) => m[i].price(l),
        }
    }

    pub fn rho(&self, i: AgentId) -> Option<f64> {
        match self {
            Profile::Wbb(_) => None,
            Profile::Sbb(m) => Some(m[i].rho),
        }
    }

    /// Flat coordinate view of agent `i`'s message: demand, then the scale
    /// report when present, then prices in route order.
    pub fn coords(&self, spec: &NetworkSpec, i: AgentId) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim(spec, i));
        out.push(self.demand(i));
        if let Some(rho) = self.rho(i) {
            out.push(rho);
        }
        for &l in spec.route(i) {
            out.push(self.price(i, l));
        }
        out
    }

    pub fn set_coords(&mut self, spec: &NetworkSpec, i: AgentId, coords: &[f64]) {
        assert_eq!(coords.len(), self.dim(spec, i));
        match self {
            Profile::Wbb(m) => {
                m[i].y = coords[0];
                for (k, &l) in spec.route(i).iter().enumerate() {
                    m[i].prices.insert(l, coords[1 + k]);
                }
            }
            Profile::Sbb(m) => {
                m[i].y = coords[0];
                m[i].rho = coords[1];
                for (k, &l) in spec.route(i).iter().enumerate() {
                    m[i].prices.insert(l, coords[2 + k]);
                }
            }
        }
    }

    pub fn dim(&self, spec: &NetworkSpec, i: AgentId) -> usize {
        let rho = match self {
            Profile::Wbb(_) => 0,
            Profile::Sbb(_) => 1,
        };
        1 + rho + spec.route(i).len()
    }
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error("optimal allocation leaves link {link} with fewer than two active agents; instance out of scope")]
    DegenerateOptimum { link: crate::model::LinkId },
    #[error("payoff weights admit no concavity certificate even after {shrinks} shrinks (worst eigenvalue {worst:.3e})")]
    NoConcavityCertificate { shrinks: usize, worst: f64 },
    #[error("profile mechanism {profile} does not match parameter mechanism {params}")]
    MechanismMismatch {
        profile: Mechanism,
        params: Mechanism,
    },
}

/// Bundles the pieces every game computation needs. Utilities panic on a
/// profile/parameter mechanism mismatch; construct profiles through this
/// module to keep them consistent.
#[derive(Debug, Clone, Copy)]
pub struct Game<'a> {
    pub spec: &'a NetworkSpec,
    pub vals: &'a ValuationProfile,
    pub params: GameParams,
}

impl<'a> Game<'a> {
    pub fn new(spec: &'a NetworkSpec, vals: &'a ValuationProfile, params: GameParams) -> Self {
        assert_eq!(vals.len(), spec.n_agents(), "one valuation per agent");
        Game { spec, vals, params }
    }

    pub fn mechanism(&self) -> Mechanism {
        self.params.mechanism()
    }

    pub fn outcome(&self, profile: &Profile) -> Outcome {
        match (profile, &self.params) {
            (Profile::Wbb(msgs), GameParams::Wbb(p)) => {
                wbb::outcome_wbb(self.spec, self.vals, msgs, p)
            }
            (Profile::Sbb(msgs), GameParams::Sbb(p)) => {
                sbb::outcome_sbb(self.spec, self.vals, msgs, p)
            }
            _ => panic!(
                "profile mechanism {} does not match parameters {}",
                profile.mechanism(),
                self.params.mechanism()
            ),
        }
    }

    /// Quasi-linear payoff of agent `i`: valuation minus tax.
    pub fn utility(&self, profile: &Profile, i: AgentId) -> f64 {
        self.outcome(profile).utilities[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_round_trip() {
        let spec = NetworkSpec::single_link(1.0, &[1.0, 1.0]);
        let mut profile = Profile::zero(&spec, Mechanism::Sbb);
        profile.set_coords(&spec, 0, &[0.4, 1.1, 2.2]);
        assert_eq!(profile.coords(&spec, 0), vec![0.4, 1.1, 2.2]);
        assert_eq!(profile.demand(0), 0.4);
        assert_eq!(profile.rho(0), Some(1.1));
        assert_eq!(profile.price(0, 0), 2.2);
        let mut wp = Profile::zero(&spec, Mechanism::Wbb);
        wp.set_coords(&spec, 1, &[0.7, 3.0]);
        assert_eq!(wp.coords(&spec, 1), vec![0.7, 3.0]);
        assert_eq!(wp.rho(1), None);
    }

    #[test]
    #[should_panic(expected = "does not match")]
    fn mismatched_params_panic() {
        let spec = NetworkSpec::single_link(1.0, &[1.0, 1.0]);
        let vals = ValuationProfile::from_params(&[(2.0, 1.0), (1.5, 1.0)]).unwrap();
        let game = Game::new(&spec, &vals, GameParams::Wbb(MechanismParams::default()));
        let profile = Profile::zero(&spec, Mechanism::Sbb);
        game.utility(&profile, 0);
    }
}
