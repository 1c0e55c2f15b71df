//! Weakly budget-balanced mechanism. Agents post a demand `y_i` and one
//! price per link on their route; the mechanism scales demands by a common
//! factor `r` chosen so the allocation is feasible for every message
//! profile, and charges each agent at the average of the *others'* prices
//! plus quadratic penalties that vanish exactly at price agreement.

use crate::model::{active_set, AgentId, LinkId, NetworkSpec, ValuationProfile};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MechanismParams {
    /// Weight of the price-disagreement tax term tied to link slack. Small
    /// values keep each agent's payoff locally concave in its own message.
    pub eta: f64,
}

impl Default for MechanismParams {
    fn default() -> Self {
        MechanismParams { eta: 1e-3 }
    }
}

/// One agent's message: a demand and a price quote for every link on the
/// agent's route (exactly those links, no others).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WbbMessage {
    pub y: f64,
    pub prices: BTreeMap<LinkId, f64>,
}

impl WbbMessage {
    pub fn zero(spec: &NetworkSpec, i: AgentId) -> Self {
        WbbMessage {
            y: 0.0,
            prices: spec.route(i).iter().map(|&l| (l, 0.0)).collect(),
        }
    }

    pub fn price(&self, l: LinkId) -> f64 {
        *self
            .prices
            .get(&l)
            .unwrap_or_else(|| panic!("message quotes no price for link {l}"))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WbbError {
    #[error("scale factors are undefined at the all-zero demand profile")]
    AllZeroDemand,
    #[error("agent {agent}: message quotes links {quoted:?} but the route is {route:?}")]
    WrongLinkSet {
        agent: AgentId,
        quoted: Vec<LinkId>,
        route: Vec<LinkId>,
    },
    #[error("agent {agent}: negative component {value} in {field}")]
    NegativeComponent {
        agent: AgentId,
        field: &'static str,
        value: f64,
    },
}

/// Per-link scale bound. A link with no active agent imposes no bound at
/// all; that is an explicit state, never a float sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LinkScale {
    Bounded(f64),
    Unbounded,
}

impl LinkScale {
    pub fn bound(&self) -> Option<f64> {
        match self {
            LinkScale::Bounded(v) => Some(*v),
            LinkScale::Unbounded => None,
        }
    }
}

/// How the per-link bound treats a link whose only active agent is `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocationRule {
    /// Production rule: the single-active bound is lowered by
    /// `c / (alpha * y * (y + 1))`, which keeps the allocation responsive to
    /// the lone demand.
    Corrected,
    /// Plain proportional scaling in every case. Kept only to demonstrate
    /// the stationarity blind spot it creates; see the game probe.
    PureProportional,
}

#[derive(Debug, Clone)]
pub struct ScaleFactors {
    /// Common scale: the smallest per-link bound.
    pub r: f64,
    pub per_link: Vec<LinkScale>,
    /// Links attaining the minimum, ascending. Ties are legal.
    pub argmin: Vec<LinkId>,
    /// Whether the single-active floor at zero ever fired. Algebraically it
    /// cannot; a property test keeps this dead.
    pub floored: bool,
}

pub fn scale_factors(spec: &NetworkSpec, y: &[f64]) -> Result<ScaleFactors, WbbError> {
    scale_factors_with_rule(spec, y, AllocationRule::Corrected)
}

pub fn scale_factors_with_rule(
    spec: &NetworkSpec,
    y: &[f64],
    rule: AllocationRule,
) -> Result<ScaleFactors, WbbError> {
    assert_eq!(y.len(), spec.n_agents(), "demand vector length mismatch");
    for (i, &yi) in y.iter().enumerate() {
        assert!(
            yi >= 0.0 && yi.is_finite(),
            "demand y[{i}] = {yi} out of domain"
        );
    }
    let active = active_set(spec, y);
    if active.global.is_empty() {
        return Err(WbbError::AllZeroDemand);
    }
    let mut per_link = Vec::with_capacity(spec.n_links());
    let mut floored = false;
    for l in 0..spec.n_links() {
        let s = &active.per_link[l];
        if s.is_empty() {
            per_link.push(LinkScale::Unbounded);
            continue;
        }
        let demand: f64 = spec
            .members(l)
            .iter()
            .map(|&j| spec.alpha(l, j) * y[j])
            .sum();
        let c = spec.capacity(l);
        let bound = if s.len() >= 2 || rule == AllocationRule::PureProportional {
            c / demand
        } else {
            let i = s[0];
            let correction = c / (spec.alpha(l, i) * y[i] * (y[i] + 1.0));
            let raw = c / demand - correction;
            if raw < 0.0 {
                floored = true;
            }
            raw.max(0.0)
        };
        per_link.push(LinkScale::Bounded(bound));
    }
    let r = per_link
        .iter()
        .filter_map(LinkScale::bound)
        .fold(f64::INFINITY, f64::min);
    // Some agent has positive demand and a nonempty route, so at least one
    // link bounds the scale.
    assert!(
        r.is_finite(),
        "no link bounds the scale despite active demand"
    );
    let argmin = per_link
        .iter()
        .enumerate()
        .filter(|(_, s)| s.bound() == Some(r))
        .map(|(l, _)| l)
        .collect();
    Ok(ScaleFactors {
        r,
        per_link,
        argmin,
        floored,
    })
}

/// Allocation `x_i = r * y_i`; the all-zero profile allocates zero.
pub fn allocate(spec: &NetworkSpec, y: &[f64]) -> Vec<f64> {
    allocate_with_rule(spec, y, AllocationRule::Corrected)
}

pub fn allocate_with_rule(spec: &NetworkSpec, y: &[f64], rule: AllocationRule) -> Vec<f64> {
    match scale_factors_with_rule(spec, y, rule) {
        Ok(sf) => y
            .iter()
            .map(|&yi| if yi > 0.0 { sf.r * yi } else { 0.0 })
            .collect(),
        Err(WbbError::AllZeroDemand) => vec![0.0; y.len()],
        Err(e) => panic!("allocation failed: {e}"),
    }
}

pub(crate) fn mean_over_others<F: Fn(AgentId) -> f64>(
    members: &[AgentId],
    i: AgentId,
    value: F,
) -> f64 {
    assert!(
        members.len() >= 2,
        "need at least two agents to average over the others"
    );
    assert!(members.contains(&i), "agent {i} is not among {members:?}");
    let sum: f64 = members.iter().filter(|&&j| j != i).map(|&j| value(j)).sum();
    sum / (members.len() - 1) as f64
}

/// Mean price quoted for link `l` by the agents on it other than `i`.
pub fn avg_price_excluding(
    spec: &NetworkSpec,
    messages: &[WbbMessage],
    i: AgentId,
    l: LinkId,
) -> f64 {
    mean_over_others(spec.members(l), i, |j| messages[j].price(l))
}

/// Taxes for every agent at a message profile. Per link on the agent's
/// route: payment at the others' average price, a quadratic penalty for
/// deviating from that average, and a slack-weighted disagreement term.
pub fn tax_wbb(spec: &NetworkSpec, messages: &[WbbMessage], params: &MechanismParams) -> Vec<f64> {
    let y: Vec<f64> = messages.iter().map(|m| m.y).collect();
    let x = allocate(spec, &y);
    tax_given_allocation(spec, messages, &x, params)
}

pub(crate) fn tax_given_allocation(
    spec: &NetworkSpec,
    messages: &[WbbMessage],
    x: &[f64],
    params: &MechanismParams,
) -> Vec<f64> {
    let slack: Vec<f64> = (0..spec.n_links())
        .map(|l| spec.capacity(l) - spec.load(l, x))
        .collect();
    (0..spec.n_agents())
        .map(|i| {
            spec.route(i)
                .iter()
                .map(|&l| {
                    let p = messages[i].price(l);
                    let pbar = avg_price_excluding(spec, messages, i, l);
                    x[i] * spec.alpha(l, i) * pbar
                        + (p - pbar) * (p - pbar)
                        + params.eta * pbar * (p - pbar) * slack[l]
                })
                .sum()
        })
        .collect()
}

/// Joint outcome of a message profile: allocation, taxes, quasi-linear
/// payoffs, and the scale diagnostics. `r` is reported as zero at the
/// all-zero profile, where no scaling happens.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub taxes: Vec<f64>,
    pub utilities: Vec<f64>,
    /// Sum of taxes: seller revenue here, budget residual for the
    /// strongly balanced variant.
    pub total_tax: f64,
    pub r: f64,
    pub link_scales: Vec<LinkScale>,
}

pub fn outcome_wbb(
    spec: &NetworkSpec,
    vals: &ValuationProfile,
    messages: &[WbbMessage],
    params: &MechanismParams,
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

/// Checks that a message quotes exactly the route's links with nonnegative
/// components.
pub fn message_well_formed(
    spec: &NetworkSpec,
    i: AgentId,
    msg: &WbbMessage,
) -> Result<(), WbbError> {
    let quoted: Vec<LinkId> = msg.prices.keys().copied().collect();
    if quoted != spec.route(i) {
        return Err(WbbError::WrongLinkSet {
            agent: i,
            quoted,
            route: spec.route(i).to_vec(),
        });
    }
    if msg.y < 0.0 || !msg.y.is_finite() {
        return Err(WbbError::NegativeComponent {
            agent: i,
            field: "demand",
            value: msg.y,
        });
    }
    for &p in msg.prices.values() {
        if p < 0.0 || !p.is_finite() {
            return Err(WbbError::NegativeComponent {
                agent: i,
                field: "price",
                value: p,
            });
        }
    }
    Ok(())
}
