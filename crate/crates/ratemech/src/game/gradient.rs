//! Analytic payoff gradients in an agent's own message. The only delicate
//! coordinate is the demand: the common scale is a minimum over per-link
//! bounds, so its derivative is one-sided wherever the binding link switches.
//! Both one-sided values are reported; smooth points simply repeat one value.

use super::{Game, GameParams, Profile};
use crate::model::{AgentId, NetworkSpec};
use crate::wbb::{self, AllocationRule, LinkScale};

/// Payoff gradient of one agent, in the same coordinate layout as
/// [`Profile::coords`]: demand (both one-sided values), then the scale
/// report when present, then one entry per route link.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub y_left: f64,
    pub y_right: f64,
    pub rho: Option<f64>,
    pub prices: Vec<f64>,
}

impl Gradient {
    /// Flat vector using the right demand derivative.
    pub fn right_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 + self.prices.len());
        out.push(self.y_right);
        if let Some(rho) = self.rho {
            out.push(rho);
        }
        out.extend_from_slice(&self.prices);
        out
    }

    pub fn left_vec(&self) -> Vec<f64> {
        let mut out = self.right_vec();
        out[0] = self.y_left;
        out
    }
}

/// One-sided derivatives of the common scale in agent `i`'s demand, together
/// with the scale itself. `None` at the all-zero profile, where no scale
/// exists.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScaleDerivs {
    pub r: f64,
    pub left: f64,
    pub right: f64,
}

fn link_slope(
    spec: &NetworkSpec,
    y: &[f64],
    i: AgentId,
    l: crate::model::LinkId,
    bound: f64,
    rule: AllocationRule,
) -> f64 {
    if !spec.on_link(l, i) {
        return 0.0;
    }
    let active: Vec<AgentId> = spec
        .members(l)
        .iter()
        .copied()
        .filter(|&j| y[j] > 0.0)
        .collect();
    let alpha = spec.alpha(l, i);
    let c = spec.capacity(l);
    if active.len() >= 2 || rule == AllocationRule::PureProportional {
        if active.len() == 1 && active[0] != i {
            // Lone-active link held by someone else: the bound ignores y_i
            // until this agent activates, which is a branch change, not a
            // derivative.
            return 0.0;
        }
        // bound = c / demand, so d bound / d y_i = -bound^2 * alpha / c.
        -bound * bound * alpha / c
    } else if active == [i] {
        let d = y[i] + 1.0;
        -c / (alpha * d * d)
    } else {
        0.0
    }
}

/// Derivative of the common scale in `y_i`, split by side. At a tie the
/// right derivative is the smallest slope among binding links and the left
/// derivative the largest; at a smooth point both coincide.
pub(crate) fn scale_derivs_with_rule(
    spec: &NetworkSpec,
    y: &[f64],
    i: AgentId,
    rule: AllocationRule,
) -> Option<ScaleDerivs> {
    let sf = wbb::scale_factors_with_rule(spec, y, rule).ok()?;
    let mut left = f64::NEG_INFINITY;
    let mut right = f64::INFINITY;
    for &q in &sf.argmin {
        let LinkScale::Bounded(bound) = sf.per_link[q] else {
            continue;
        };
        let s = link_slope(spec, y, i, q, bound, rule);
        left = left.max(s);
        right = right.min(s);
    }
    Some(ScaleDerivs {
        r: sf.r,
        left,
        right,
    })
}

pub(crate) fn scale_derivs(spec: &NetworkSpec, y: &[f64], i: AgentId) -> Option<ScaleDerivs> {
    scale_derivs_with_rule(spec, y, i, AllocationRule::Corrected)
}

/// Own-demand response of the allocation, `d x_i / d y_i`, per side and
/// rule. Exposed for the stationarity probe.
pub(crate) fn own_rate_response(
    spec: &NetworkSpec,
    y: &[f64],
    i: AgentId,
    rule: AllocationRule,
) -> Option<(f64, f64)> {
    let sd = scale_derivs_with_rule(spec, y, i, rule)?;
    Some((sd.r + y[i] * sd.left, sd.r + y[i] * sd.right))
}

/// Analytic gradient of agent `i`'s payoff in its own message, everyone
/// else's message held fixed.
///
/// At the all-zero profile only the upward demand direction is meaningful;
/// the scale and its derivative are taken at their activation limits and the
/// left value repeats the right one.
pub fn utility_gradient(game: &Game<'_>, profile: &Profile, i: AgentId) -> Gradient {
    let spec = game.spec;
    let y = profile.demands();
    let x = wbb::allocate(spec, &y);
    let eta = game.params.eta();

    let route = spec.route(i);
    let mut pbar = Vec::with_capacity(route.len());
    let mut pown = Vec::with_capacity(route.len());
    let mut slack = Vec::with_capacity(route.len());
    let mut others_demand = Vec::with_capacity(route.len());
    for &l in route {
        let members = spec.members(l);
        pbar.push(wbb::mean_over_others(members, i, |j| profile.price(j, l)));
        pown.push(profile.price(i, l));
        slack.push(spec.capacity(l) - spec.load(l, &x));
        others_demand.push(
            members
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| spec.alpha(l, j) * y[j])
                .sum::<f64>(),
        );
    }

    let prices: Vec<f64> = (0..route.len())
        .map(|k| -2.0 * (pown[k] - pbar[k]) - eta * pbar[k] * slack[k])
        .collect();

    let slope_sum: f64 = route
        .iter()
        .zip(&pbar)
        .map(|(&l, &pb)| spec.alpha(l, i) * pb)
        .sum();
    let vx = game.vals.agent(i).d1(x[i]);

    let y_dir = |dr: f64, r: f64| -> f64 {
        let dxi = r + y[i] * dr;
        let mut g = (vx - slope_sum) * dxi;
        for k in 0..route.len() {
            let l = route[k];
            let flow = spec.alpha(l, i) * dxi + dr * others_demand[k];
            g += eta * pbar[k] * (pown[k] - pbar[k]) * flow;
        }
        if let (GameParams::Sbb(p), Some(rho)) = (&game.params, profile.rho(i)) {
            g += 2.0 * p.zeta * (rho - r) * dr;
        }
        g
    };

    let (y_left, y_right, r_for_rho) = match scale_derivs(spec, &y, i) {
        Some(sd) => {
            let right = y_dir(sd.right, sd.r);
            let left = if y[i] > 0.0 {
                y_dir(sd.left, sd.r)
            } else {
                right
            };
            (left, right, sd.r)
        }
        None => {
            // All-zero profile. Activating alone, x_i = y * min_l c/(alpha (y+1)),
            // which is differentiable from the right with slope min_l c/alpha.
            // The scale report penalty is held at the r = 0 convention.
            let beta: f64 = route
                .iter()
                .map(|&l| spec.capacity(l) / spec.alpha(l, i))
                .fold(f64::INFINITY, f64::min);
            let mut g = (vx - slope_sum) * beta;
            for k in 0..route.len() {
                let l = route[k];
                g += eta * pbar[k] * (pown[k] - pbar[k]) * spec.alpha(l, i) * beta;
            }
            (g, g, 0.0)
        }
    };

    let rho = match (&game.params, profile.rho(i)) {
        (GameParams::Sbb(p), Some(rho)) => Some(-2.0 * p.zeta * (rho - r_for_rho)),
        _ => None,
    };

    Gradient {
        y_left,
        y_right,
        rho,
        prices,
    }
}
