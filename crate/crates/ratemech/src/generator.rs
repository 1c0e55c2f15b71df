//! Seeded random instances for experiments and test suites. Every draw goes
//! through the caller's RNG, so a fixed seed reproduces the instance.

use crate::model::{LinkSpec, LogValuation, NetworkSpec, ValuationProfile};
use rand::Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaRule {
    /// All coefficients exactly one.
    Unit,
    /// Uniform in a range.
    Range(f64, f64),
}

#[derive(Debug, Clone)]
pub struct InstanceConfig {
    pub n_agents: usize,
    pub n_links: usize,
    pub alpha: AlphaRule,
    /// Capacity per agent on the link; the link capacity scales with its
    /// member count so crowded links stay generous.
    pub capacity_per_agent: (f64, f64),
    /// Snap capacities to this grid when set (keeps grid-search oracles
    /// honest about their own resolution).
    pub capacity_grid: Option<f64>,
    pub a_range: (f64, f64),
    pub b_range: (f64, f64),
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig {
            n_agents: 3,
            n_links: 2,
            alpha: AlphaRule::Range(0.5, 2.0),
            capacity_per_agent: (0.3, 0.8),
            capacity_grid: None,
            a_range: (0.5, 3.0),
            b_range: (0.5, 2.5),
        }
    }
}

fn uniform<R: Rng>(rng: &mut R, range: (f64, f64)) -> f64 {
    range.0 + (range.1 - range.0) * rng.random::<f64>()
}

/// Draws a valid instance: every link carries at least two agents, every
/// agent routes through at least one link.
pub fn random_instance<R: Rng>(
    cfg: &InstanceConfig,
    rng: &mut R,
) -> (NetworkSpec, ValuationProfile) {
    assert!(cfg.n_agents >= 2, "instances need at least two agents");
    assert!(cfg.n_links >= 1);
    let n = cfg.n_agents;
    loop {
        // Member sets first: each link picks 2..=n agents.
        let mut members: Vec<Vec<usize>> = Vec::with_capacity(cfg.n_links);
        for _ in 0..cfg.n_links {
            let size = rng.random_range(2..=n);
            let mut pool: Vec<usize> = (0..n).collect();
            for k in 0..size {
                let pick = rng.random_range(k..n);
                pool.swap(k, pick);
            }
            let mut set: Vec<usize> = pool[..size].to_vec();
            set.sort_unstable();
            members.push(set);
        }
        // Agents off every link join a random one.
        for agent in 0..n {
            if !members.iter().any(|m| m.contains(&agent)) {
                let l = rng.random_range(0..cfg.n_links);
                members[l].push(agent);
                members[l].sort_unstable();
            }
        }

        let mut routes = vec![Vec::new(); n];
        let mut links = Vec::with_capacity(cfg.n_links);
        for (l, set) in members.iter().enumerate() {
            let mut coefficients = BTreeMap::new();
            for &agent in set {
                let alpha = match cfg.alpha {
                    AlphaRule::Unit => 1.0,
                    AlphaRule::Range(lo, hi) => uniform(rng, (lo, hi)),
                };
                coefficients.insert(agent, alpha);
                routes[agent].push(l);
            }
            let mut capacity = uniform(rng, cfg.capacity_per_agent) * set.len() as f64;
            if let Some(grid) = cfg.capacity_grid {
                capacity = (capacity / grid).round().max(1.0) * grid;
            }
            links.push(LinkSpec {
                id: l,
                capacity,
                coefficients,
            });
        }
        let spec = NetworkSpec::new(n, links, routes);
        let vals = ValuationProfile::new(
            (0..n)
                .map(|_| {
                    LogValuation::new(uniform(rng, cfg.a_range), uniform(rng, cfg.b_range))
                        .expect("ranges are positive")
                })
                .collect(),
        );
        if crate::model::validate_spec(&spec).is_empty() {
            return (spec, vals);
        }
    }
}
