//! Strongly budget-balanced variant. Messages gain a scale report `rho_i`;
//! taxes gain a redistribution credit built only from the *other* agents'
//! messages and a penalty `zeta * (rho_i - r)^2` that pins the report to the
//! realized scale. At price agreement with truthful scale reports the taxes
//! sum to zero identically, for any demand profile.

use crate::model::{AgentId, LinkId, NetworkSpec, ValuationProfile};
use crate::wbb::{
    self, mean_over_others, scale_factors, LinkScale, MechanismParams, Outcome, WbbError,
    WbbMessage,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SbbParams {
    pub eta: f64,
    /// Weight of the scale-report penalty.
    pub zeta: f64,
}

impl Default for SbbParams {
    fn default() -> Self {
        SbbParams {
            eta: 1e-3,
            zeta: 1e-3,
        }
    }
}

impl SbbParams {
    pub fn price_part(&self) -> MechanismParams {
        MechanismParams { eta: self.eta }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbbMessage {
    pub y: f64,
    pub prices: BTreeMap<LinkId, f64>,
    /// The agent's report of the common scale factor.
    pub rho: f64,
}

impl SbbMessage {
    pub fn zero(spec: &NetworkSpec, i: AgentId) -> Self {
        SbbMessage {
            y: 0.0,
            prices: spec.route(i).iter().map(|&l| (l, 0.0)).collect(),
            rho: 0.0,
        }
    }

    pub fn price(&self, l: LinkId) -> f64 {
        *self
            .prices
            .get(&l)
            .unwrap_or_else(|| panic!("message quotes no price for link {l}"))
    }

    pub fn price_part(&self) -> WbbMessage {
        WbbMessage {
            y: self.y,
            prices: self.prices.clone(),
        }
    }
}

/// Mean scale report of all agents other than `i` (the whole population,
/// not a per-link set).
pub fn avg_rho_excluding(messages: &[SbbMessage], i: AgentId) -> f64 {
    let members: Vec<AgentId> = (0..messages.len()).collect();
    mean_over_others(&members, i, |j| messages[j].rho)
}

/// The common scale, with the convention `r = 0` at the all-zero profile
/// (nothing is scaled there; the penalty then pins reports at zero).
pub fn scale_factor_or_zero(spec: &NetworkSpec, y: &[f64]) -> f64 {
    match scale_factors(spec, y) {
        Ok(sf) => sf.r,
        Err(WbbError::AllZeroDemand) => 0.0,
        Err(e) => panic!("allocation failed: {e}"),
    }
}

/// Per-agent redistribution credit: for each link on the agent's route,
/// `avg_rho_excluding * avg_price_excluding / (n_l - 1)` times the other
/// agents' coefficient-weighted demands. Built entirely from the other
/// agents' messages, so it never distorts the agent's own incentives.
pub fn redistribution_terms(spec: &NetworkSpec, messages: &[SbbMessage]) -> Vec<f64> {
    (0..spec.n_agents())
        .map(|i| {
            let rho_bar = avg_rho_excluding(messages, i);
            spec.route(i)
                .iter()
                .map(|&l| {
                    let members = spec.members(l);
                    let pbar = mean_over_others(members, i, |j| messages[j].price(l));
                    let others_demand: f64 = members
                        .iter()
                        .filter(|&&j| j != i)
                        .map(|&j| spec.alpha(l, j) * messages[j].y)
                        .sum();
                    rho_bar * pbar / (members.len() - 1) as f64 * others_demand
                })
                .sum()
        })
        .collect()
}

pub fn tax_sbb(spec: &NetworkSpec, messages: &[SbbMessage], params: &SbbParams) -> Vec<f64> {
    let y: Vec<f64> = messages.iter().map(|m| m.y).collect();
    let x = wbb::allocate(spec, &y);
    tax_given_allocation(spec, messages, &x, params)
}

pub(crate) fn tax_given_allocation(
    spec: &NetworkSpec,
    messages: &[SbbMessage],
    x: &[f64],
    params: &SbbParams,
) -> Vec<f64> {
    let price_msgs: Vec<WbbMessage> = messages.iter().map(SbbMessage::price_part).collect();
    let base = wbb::tax_given_allocation(spec, &price_msgs, x, &params.price_part());
    let credits = redistribution_terms(spec, messages);
    let y: Vec<f64> = messages.iter().map(|m| m.y).collect();
    let r = scale_factor_or_zero(spec, &y);
    (0..spec.n_agents())
        .map(|i| {
            let miss = messages[i].rho - r;
            base[i] - credits[i] + params.zeta * miss * miss
        })
        .collect()
}

pub fn outcome_sbb(
    spec: &NetworkSpec,
    vals: &ValuationProfile,
    messages: &[SbbMessage],
    params: &SbbParams,
) -> Outcome {
    assert_eq!(messages.len(), spec.n_agents());
    assert_eq!(vals.len(), spec.n_agents());
    let y: Vec<f64> = messages.iter().map(|m| m.y).collect();
    let (x, r, link_scales) = match scale_factors(spec, &y) {
        Ok(sf) => {
            let x: Vec<f64> = y
                .iter()
                .map(|&yi| if yi > 0.0 { sf.r * yi } else { 0.0 })
                .collect();
            (x, sf.r, sf.per_link)
        }
        Err(WbbError::AllZeroDemand) => (
            vec![0.0; y.len()],
            0.0,
            vec![LinkScale::Unbounded; spec.n_links()],
        ),
        Err(e) => panic!("allocation failed: {e}"),
    };
    let taxes = tax_given_allocation(spec, messages, &x, params);
    let utilities: Vec<f64> = (0..spec.n_agents())
        .map(|i| vals.agent(i).value(x[i]) - taxes[i])
        .collect();
    let total_tax = taxes.iter().sum();
    Outcome {
        x,
        taxes,
        utilities,
        total_tax,
        r,
        link_scales,
    }
}

pub fn message_well_formed(
    spec: &NetworkSpec,
    i: AgentId,
    msg: &SbbMessage,
) -> Result<(), WbbError> {
    wbb::message_well_formed(spec, i, &msg.price_part())?;
    if msg.rho < 0.0 || !msg.rho.is_finite() {
        return Err(WbbError::NegativeComponent {
            agent: i,
            field: "scale report",
            value: msg.rho,
        });
    }
    Ok(())
}
