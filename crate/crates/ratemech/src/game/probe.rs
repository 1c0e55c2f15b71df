//! Shows why the allocation rule subtracts a vanishing term when an agent is
//! alone on the binding link. Under the naive proportional fill the lone
//! agent's rate is pinned at the link capacity no matter its demand, so the
//! demand derivative of its payoff collapses to zero and wildly suboptimal
//! profiles masquerade as stationary. The corrected rule keeps that
//! derivative strictly positive-definite in the marginal-value gap, so the
//! same profiles fail the first-order test.

use super::gradient::own_rate_response;
use crate::model::{AgentId, NetworkSpec, ValuationProfile};
use crate::wbb::{allocate_with_rule, AllocationRule};
use serde::Serialize;

/// A run with demand derivatives this small counts as first-order
/// stationary for the probe's purposes.
const STATIONARY_TOL: f64 = 1e-9;

/// One lone-agent scenario evaluated under both allocation rules.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeCase {
    pub agent: AgentId,
    /// The lone agent's demand; everyone else demands zero.
    pub demand: f64,
    /// Common quote used by every agent in the scenario.
    pub quoted_price: f64,
    /// Rate received under the naive proportional fill.
    pub rate_pure: f64,
    /// Rate received under the corrected rule.
    pub rate_corrected: f64,
    /// d(own rate)/d(own demand) under the naive fill: identically zero.
    pub response_pure: f64,
    /// The same derivative under the corrected rule: strictly positive.
    pub response_corrected: f64,
    /// Demand derivative of the payoff under the naive fill. With equal
    /// quotes the quadratic and slack penalty terms contribute nothing, so
    /// this is exactly (marginal value - price sum) x rate response.
    pub foc_pure: f64,
    /// Demand derivative of the payoff under the corrected rule.
    pub foc_corrected: f64,
    /// Whether each rule would accept the profile as first-order stationary.
    pub pure_looks_stationary: bool,
    pub corrected_looks_stationary: bool,
}

/// Probe outcome over all agents and demand levels.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub cases: Vec<ProbeCase>,
    /// True when every case looked stationary under the naive fill: the
    /// extraneous equilibria exist.
    pub all_pure_stationary: bool,
    /// True when no case looked stationary under the corrected rule: the
    /// correction removes them.
    pub none_corrected_stationary: bool,
}

/// For each agent and each demand level, build the profile where that agent
/// demands alone (everyone quotes the same price, chosen away from the
/// agent's marginal value so the first-order condition has teeth) and
/// compare the payoff's demand derivative under the two allocation rules.
pub fn extraneous_equilibria_probe(
    spec: &NetworkSpec,
    vals: &ValuationProfile,
    demand_levels: &[f64],
) -> ProbeReport {
    assert!(
        demand_levels.iter().all(|d| *d > 0.0),
        "the probe needs strictly positive demands"
    );
    let mut cases = Vec::new();
    for i in 0..spec.n_agents() {
        for &demand in demand_levels {
            let mut y = vec![0.0; spec.n_agents()];
            y[i] = demand;
            let x_pure = allocate_with_rule(spec, &y, AllocationRule::PureProportional);
            let x_corr = allocate_with_rule(spec, &y, AllocationRule::Corrected);

            // Price the agent's route at half its marginal value under the
            // naive fill: the gap (v' - price sum) is then bounded away
            // from zero for both rules.
            let v = vals.agent(i);
            let alpha_sum: f64 = spec.route(i).iter().map(|&l| spec.alpha(l, i)).sum();
            let price = 0.5 * v.d1(x_pure[i]) / alpha_sum;

            let (_, response_pure) =
                own_rate_response(spec, &y, i, AllocationRule::PureProportional)
                    .expect("demand is positive");
            let (_, response_corrected) = own_rate_response(spec, &y, i, AllocationRule::Corrected)
                .expect("demand is positive");

            // With every quote equal, the payoff's demand derivative
            // reduces to the marginal-value gap times the rate response.
            let foc_pure = (v.d1(x_pure[i]) - alpha_sum * price) * response_pure;
            let foc_corrected = (v.d1(x_corr[i]) - alpha_sum * price) * response_corrected;

            cases.push(ProbeCase {
                agent: i,
                demand,
                quoted_price: price,
                rate_pure: x_pure[i],
                rate_corrected: x_corr[i],
                response_pure,
                response_corrected,
                foc_pure,
                foc_corrected,
                pure_looks_stationary: foc_pure.abs() <= STATIONARY_TOL,
                corrected_looks_stationary: foc_corrected.abs() <= STATIONARY_TOL,
            });
        }
    }
    let all_pure = cases.iter().all(|c| c.pure_looks_stationary);
    let none_corr = !cases.iter().any(|c| c.corrected_looks_stationary);
    ProbeReport {
        cases,
        all_pure_stationary: all_pure,
        none_corrected_stationary: none_corr,
    }
}
