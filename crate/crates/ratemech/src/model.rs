//! Problem instances: link-constrained networks, per-agent routes, and the
//! logarithmic valuation family used throughout.
//!
//! An instance is a set of links with capacities `c_l`, per-agent capacity
//! coefficients `alpha`, routes assigning each agent the links it consumes,
//! and one strictly increasing, strictly concave valuation per agent.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub type AgentId = usize;
pub type LinkId = usize;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("valuation parameters must be positive and finite (a = {a}, b = {b})")]
    InvalidValuation { a: f64, b: f64 },
    #[error("expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// One capacity constraint: sum over agents on the link of `alpha_i * x_i <= capacity`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkSpec {
    pub id: LinkId,
    pub capacity: f64,
    /// Keys must be exactly the agents whose routes contain this link.
    pub coefficients: BTreeMap<AgentId, f64>,
}

/// Immutable network instance. Routes are stored sorted and deduplicated so
/// every iteration order downstream is deterministic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkSpec {
    n_agents: usize,
    links: Vec<LinkSpec>,
    routes: Vec<Vec<LinkId>>,
    /// Derived: agents on each link, from the routes, sorted.
    members: Vec<Vec<AgentId>>,
}

impl NetworkSpec {
    pub fn new(n_agents: usize, links: Vec<LinkSpec>, mut routes: Vec<Vec<LinkId>>) -> Self {
        for route in &mut routes {
            route.sort_unstable();
            route.dedup();
        }
        let mut members = vec![Vec::new(); links.len()];
        for (agent, route) in routes.iter().enumerate() {
            for &l in route {
                if l < members.len() {
                    members[l].push(agent);
                }
            }
        }
        NetworkSpec {
            n_agents,
            links,
            routes,
            members,
        }
    }

    /// All agents share every link; coefficients given per agent.
    pub fn single_link(capacity: f64, alphas: &[f64]) -> Self {
        let coefficients = alphas.iter().copied().enumerate().collect();
        let links = vec![LinkSpec {
            id: 0,
            capacity,
            coefficients,
        }];
        let routes = vec![vec![0]; alphas.len()];
        NetworkSpec::new(alphas.len(), links, routes)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn link(&self, l: LinkId) -> &LinkSpec {
        &self.links[l]
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn capacity(&self, l: LinkId) -> f64 {
        self.links[l].capacity
    }

    pub fn route(&self, i: AgentId) -> &[LinkId] {
        &self.routes[i]
    }

    pub fn routes(&self) -> &[Vec<LinkId>] {
        &self.routes
    }

    /// Agents on link `l`, sorted. Derived from the routes.
    pub fn members(&self, l: LinkId) -> &[AgentId] {
        &self.members[l]
    }

    pub fn on_link(&self, l: LinkId, i: AgentId) -> bool {
        self.members[l].binary_search(&i).is_ok()
    }

    /// Capacity coefficient of agent `i` on link `l`. The network must have
    /// passed [`validate_spec`]; a missing coefficient is a caller bug.
    pub fn alpha(&self, l: LinkId, i: AgentId) -> f64 {
        *self.links[l]
            .coefficients
            .get(&i)
            .unwrap_or_else(|| panic!("no coefficient for agent {i} on link {l}"))
    }

    /// Largest value of `x_i` feasible in isolation: `min_l capacity_l / alpha_i_l`.
    pub fn solo_cap(&self, i: AgentId) -> f64 {
        self.routes[i]
            .iter()
            .map(|&l| self.capacity(l) / self.alpha(l, i))
            .fold(f64::INFINITY, f64::min)
    }

    /// Per-link load `sum_j alpha_j * x_j` for an allocation.
    pub fn load(&self, l: LinkId, x: &[f64]) -> f64 {
        self.members[l]
            .iter()
            .map(|&j| self.alpha(l, j) * x[j])
            .sum()
    }
}

/// A structural defect in a [`NetworkSpec`]. Validation reports all defects
/// instead of failing on the first one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    /// Every link needs at least two agents for the price averages to exist.
    TooFewAgentsOnLink {
        link: LinkId,
        count: usize,
    },
    NonPositiveCapacity {
        link: LinkId,
        capacity: f64,
    },
    NonPositiveCoefficient {
        link: LinkId,
        agent: AgentId,
        alpha: f64,
    },
    EmptyRoute {
        agent: AgentId,
    },
    UnknownLinkInRoute {
        agent: AgentId,
        link: LinkId,
    },
    /// Link appears in no route at all.
    UnusedLink {
        link: LinkId,
    },
    /// Coefficient present for an agent whose route skips the link.
    CoefficientWithoutRoute {
        link: LinkId,
        agent: AgentId,
    },
    /// Agent routes through the link but has no coefficient there.
    MissingCoefficient {
        link: LinkId,
        agent: AgentId,
    },
    LinkIdMismatch {
        index: usize,
        id: LinkId,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::TooFewAgentsOnLink { link, count } => {
                write!(
                    f,
                    "link {link} has {count} agent(s); every link needs at least two"
                )
            }
            Violation::NonPositiveCapacity { link, capacity } => {
                write!(f, "link {link} has non-positive capacity {capacity}")
            }
            Violation::NonPositiveCoefficient { link, agent, alpha } => {
                write!(
                    f,
                    "link {link} has non-positive coefficient {alpha} for agent {agent}"
                )
            }
            Violation::EmptyRoute { agent } => write!(f, "agent {agent} has an empty route"),
            Violation::UnknownLinkInRoute { agent, link } => {
                write!(f, "agent {agent} routes through unknown link {link}")
            }
            Violation::UnusedLink { link } => write!(f, "link {link} is on no route"),
            Violation::CoefficientWithoutRoute { link, agent } => {
                write!(
                    f,
                    "link {link} has a coefficient for agent {agent} who does not route through it"
                )
            }
            Violation::MissingCoefficient { link, agent } => {
                write!(
                    f,
                    "agent {agent} routes through link {link} but has no coefficient there"
                )
            }
            Violation::LinkIdMismatch { index, id } => {
                write!(f, "link at index {index} carries id {id}")
            }
        }
    }
}

/// Structural validation. Empty result means the network is well formed.
pub fn validate_spec(spec: &NetworkSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    for (idx, link) in spec.links.iter().enumerate() {
        if link.id != idx {
            out.push(Violation::LinkIdMismatch {
                index: idx,
                id: link.id,
            });
        }
        if link.capacity <= 0.0 || !link.capacity.is_finite() {
            out.push(Violation::NonPositiveCapacity {
                link: idx,
                capacity: link.capacity,
            });
        }
        for (&agent, &alpha) in &link.coefficients {
            if alpha <= 0.0 || !alpha.is_finite() {
                out.push(Violation::NonPositiveCoefficient {
                    link: idx,
                    agent,
                    alpha,
                });
            }
            if agent >= spec.n_agents || !spec.routes[agent].contains(&idx) {
                out.push(Violation::CoefficientWithoutRoute { link: idx, agent });
            }
        }
        let count = spec.members[idx].len();
        if count < 2 {
            out.push(Violation::TooFewAgentsOnLink { link: idx, count });
        }
        if count == 0 {
            out.push(Violation::UnusedLink { link: idx });
        }
        for &agent in &spec.members[idx] {
            if !link.coefficients.contains_key(&agent) {
                out.push(Violation::MissingCoefficient { link: idx, agent });
            }
        }
    }
    for (agent, route) in spec.routes.iter().enumerate() {
        if route.is_empty() {
            out.push(Violation::EmptyRoute { agent });
        }
        for &l in route {
            if l >= spec.links.len() {
                out.push(Violation::UnknownLinkInRoute { agent, link: l });
            }
        }
    }
    out
}

/// `v(x) = a * ln(1 + b * x)`: strictly increasing, strictly concave, with a
/// finite slope `a * b` at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogValuation {
    pub a: f64,
    pub b: f64,
}

impl LogValuation {
    pub fn new(a: f64, b: f64) -> Result<Self, ModelError> {
        if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
            Ok(LogValuation { a, b })
        } else {
            Err(ModelError::InvalidValuation { a, b })
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        assert!(x >= 0.0, "valuation evaluated at negative rate {x}");
        self.a * (1.0 + self.b * x).ln()
    }

    pub fn d1(&self, x: f64) -> f64 {
        assert!(x >= 0.0, "valuation slope evaluated at negative rate {x}");
        self.a * self.b / (1.0 + self.b * x)
    }

    pub fn d2(&self, x: f64) -> f64 {
        assert!(
            x >= 0.0,
            "valuation curvature evaluated at negative rate {x}"
        );
        let d = 1.0 + self.b * x;
        -self.a * self.b * self.b / (d * d)
    }

    /// Solves `d1(x) = target` for `x`; the result is negative when the
    /// target slope exceeds `d1(0)`. Callers clamp to their own domain.
    pub fn d1_inverse(&self, target: f64) -> f64 {
        assert!(target > 0.0, "slope target must be positive, got {target}");
        self.a / target - 1.0 / self.b
    }
}

/// One valuation per agent, indexed by agent id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValuationProfile(Vec<LogValuation>);

impl ValuationProfile {
    pub fn new(vals: Vec<LogValuation>) -> Self {
        ValuationProfile(vals)
    }

    pub fn from_params(params: &[(f64, f64)]) -> Result<Self, ModelError> {
        params
            .iter()
            .map(|&(a, b)| LogValuation::new(a, b))
            .collect::<Result<_, _>>()
            .map(ValuationProfile)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn agent(&self, i: AgentId) -> &LogValuation {
        &self.0[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &LogValuation> {
        self.0.iter()
    }

    /// Social welfare `sum_i v_i(x_i)`.
    pub fn welfare(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(v, &xi)| v.value(xi)).sum()
    }
}

/// Agents with strictly positive demand, per link and overall. Positivity is
/// exact: demands are message fields, not measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    pub per_link: Vec<Vec<AgentId>>,
    pub global: Vec<AgentId>,
}

pub fn active_set(spec: &NetworkSpec, y: &[f64]) -> ActiveSet {
    assert_eq!(y.len(), spec.n_agents(), "demand vector length mismatch");
    let per_link = (0..spec.n_links())
        .map(|l| {
            spec.members(l)
                .iter()
                .copied()
                .filter(|&j| y[j] > 0.0)
                .collect()
        })
        .collect();
    let global = (0..spec.n_agents()).filter(|&j| y[j] > 0.0).collect();
    ActiveSet { per_link, global }
}
