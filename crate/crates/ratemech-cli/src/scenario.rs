//! Scenario files: the versioned JSON schema, loading with diagnostics,
//! structural validation, and command-line overrides.
//!
//! A scenario describes one experiment: a network (explicit or a seeded
//! random recipe), one valuation per agent, the mechanism and its penalty
//! weights, and optional solver/best-response tuning. The exact schema is
//! documented in the repository README; `schema_version` gates breaking
//! changes.

use anyhow::{anyhow, bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ratemech::game::{BrConfig, GameParams, Mechanism};
use ratemech::generator::{random_instance, AlphaRule, InstanceConfig};
use ratemech::model::{validate_spec, LinkSpec, NetworkSpec, ValuationProfile, Violation};
use ratemech::sbb::SbbParams;
use ratemech::solver::SolverConfig;
use ratemech::wbb::MechanismParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// One agent's valuation `v(x) = a * ln(1 + b * x)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub a: f64,
    pub b: f64,
}

/// One link: capacity and the per-agent rate weights. Keys are agent
/// indices (JSON object keys, so written as strings: `"0": 1.0`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkEntry {
    pub capacity: f64,
    pub coefficients: BTreeMap<usize, f64>,
}

/// Recipe for a seeded random network, drawn when the scenario carries no
/// explicit one. The draw is a pure function of the scenario seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomNetwork {
    pub n_agents: usize,
    pub n_links: usize,
    /// Force all rate weights to exactly one.
    #[serde(default)]
    pub unit_alpha: bool,
    #[serde(default)]
    pub alpha_range: Option<(f64, f64)>,
    /// Per-member capacity range; the link capacity scales with how many
    /// agents share it.
    #[serde(default)]
    pub capacity_per_agent: Option<(f64, f64)>,
    /// Snap capacities to this grid (useful when cross-checking against
    /// grid-search oracles).
    #[serde(default)]
    pub capacity_grid: Option<f64>,
    #[serde(default)]
    pub a_range: Option<(f64, f64)>,
    #[serde(default)]
    pub b_range: Option<(f64, f64)>,
}

impl RandomNetwork {
    fn instance_config(&self) -> InstanceConfig {
        let defaults = InstanceConfig::default();
        InstanceConfig {
            n_agents: self.n_agents,
            n_links: self.n_links,
            alpha: if self.unit_alpha {
                AlphaRule::Unit
            } else {
                match self.alpha_range {
                    Some((lo, hi)) => AlphaRule::Range(lo, hi),
                    None => defaults.alpha,
                }
            },
            capacity_per_agent: self
                .capacity_per_agent
                .unwrap_or(defaults.capacity_per_agent),
            capacity_grid: self.capacity_grid,
            a_range: self.a_range.unwrap_or(defaults.a_range),
            b_range: self.b_range.unwrap_or(defaults.b_range),
        }
    }
}

/// Mechanism penalty weights as written in the file. Either may be omitted;
/// defaults are filled in during resolution and `zeta` is ignored by the
/// weak mechanism (so one file can be run under both via `--mechanism`).
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightEntry {
    pub eta: Option<f64>,
    pub zeta: Option<f64>,
}

/// The on-disk scenario document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub seed: u64,
    pub mechanism: Mechanism,
    #[serde(default)]
    pub params: WeightEntry,
    #[serde(default)]
    pub agents: Option<Vec<AgentEntry>>,
    #[serde(default)]
    pub links: Option<Vec<LinkEntry>>,
    #[serde(default)]
    pub routes: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub random: Option<RandomNetwork>,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default)]
    pub best_response: Option<BrConfig>,
    /// Relative size of the demand jiggle applied before each dynamics run.
    #[serde(default)]
    pub perturbation: Option<f64>,
    /// How many perturbed starts the `run` pipeline iterates from.
    #[serde(default)]
    pub perturbed_starts: Option<usize>,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub mechanism: Option<Mechanism>,
    pub eta: Option<f64>,
    pub zeta: Option<f64>,
    pub seed: Option<u64>,
}

/// A fully resolved, validated scenario ready for the pipeline.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    /// Distinguishes sweep rows; equals `name` outside sweeps.
    pub id: String,
    pub seed: u64,
    pub params: GameParams,
    pub spec: NetworkSpec,
    pub vals: ValuationProfile,
    pub solver: SolverConfig,
    pub br: BrConfig,
    pub perturbation: f64,
    pub perturbed_starts: usize,
    /// SHA-256 of the scenario file bytes, hex-encoded.
    pub hash: String,
}

/// Human sentence for each structural violation.
pub fn describe(v: &Violation) -> String {
    match v {
        Violation::TooFewAgentsOnLink { link, count } => format!(
            "link {link} carries {count} agent(s); every link needs at least two for peer price averages to exist"
        ),
        Violation::NonPositiveCapacity { link, capacity } => {
            format!("link {link} has non-positive or non-finite capacity {capacity}")
        }
        Violation::NonPositiveCoefficient { link, agent, alpha } => {
            format!("agent {agent} has non-positive or non-finite weight {alpha} on link {link}")
        }
        Violation::EmptyRoute { agent } => format!("agent {agent} has an empty route"),
        Violation::UnknownLinkInRoute { agent, link } => {
            format!("agent {agent} routes through unknown link {link}")
        }
        Violation::UnusedLink { link } => format!("link {link} appears in no route"),
        Violation::CoefficientWithoutRoute { link, agent } => {
            format!("link {link} lists agent {agent}, whose route skips it")
        }
        Violation::MissingCoefficient { link, agent } => {
            format!("agent {agent} routes through link {link} but has no weight there")
        }
        Violation::LinkIdMismatch { index, id } => {
            format!("link at position {index} carries id {id}")
        }
    }
}

/// Read, parse, and resolve a scenario file, applying `overrides`.
pub fn load_scenario(path: &Path, overrides: &Overrides) -> Result<Scenario> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("cannot read scenario file {}", path.display()))?;
    let hash = hex_digest(&bytes);
    let file: ScenarioFile = serde_json::from_slice(&bytes)
        .with_context(|| format!("cannot parse scenario file {}", path.display()))?;
    let fallback = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string());
    resolve(&file, overrides, &fallback, hash)
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Turn a parsed document into a validated [`Scenario`].
pub fn resolve(
    file: &ScenarioFile,
    overrides: &Overrides,
    fallback_name: &str,
    hash: String,
) -> Result<Scenario> {
    if file.schema_version != SCHEMA_VERSION {
        bail!(
            "unsupported schema_version {} (this build reads version {SCHEMA_VERSION})",
            file.schema_version
        );
    }
    let mechanism = overrides.mechanism.unwrap_or(file.mechanism);
    if mechanism == Mechanism::Wbb && overrides.zeta.is_some() {
        bail!("--zeta applies only to the balanced mechanism (sbb)");
    }
    let eta = overrides.eta.or(file.params.eta).unwrap_or(1e-3);
    let zeta = overrides.zeta.or(file.params.zeta).unwrap_or(1e-3);
    if !(eta > 0.0 && eta.is_finite()) {
        bail!("eta must be positive and finite, got {eta}");
    }
    if mechanism == Mechanism::Sbb && !(zeta > 0.0 && zeta.is_finite()) {
        bail!("zeta must be positive and finite, got {zeta}");
    }
    let params = match mechanism {
        Mechanism::Wbb => GameParams::Wbb(MechanismParams { eta }),
        Mechanism::Sbb => GameParams::Sbb(SbbParams { eta, zeta }),
    };
    let seed = overrides.seed.unwrap_or(file.seed);

    let (spec, vals) = build_network(file, seed)?;

    let perturbation = file.perturbation.unwrap_or(0.05);
    if !(0.0..1.0).contains(&perturbation) {
        bail!("perturbation must lie in [0, 1), got {perturbation}");
    }
    let name = file
        .name
        .clone()
        .unwrap_or_else(|| fallback_name.to_string());
    Ok(Scenario {
        id: name.clone(),
        name,
        seed,
        params,
        spec,
        vals,
        solver: file.solver.clone().unwrap_or_default(),
        br: file.best_response.clone().unwrap_or_default(),
        perturbation,
        perturbed_starts: file.perturbed_starts.unwrap_or(3),
        hash,
    })
}

fn build_network(file: &ScenarioFile, seed: u64) -> Result<(NetworkSpec, ValuationProfile)> {
    let explicit = file.agents.is_some() || file.links.is_some() || file.routes.is_some();
    match (&file.random, explicit) {
        (Some(_), true) => bail!(
            "scenario mixes an explicit network (agents/links/routes) with a random recipe; pick one"
        ),
        (Some(recipe), false) => {
            if recipe.n_agents < 2 {
                bail!("random networks need at least two agents");
            }
            if recipe.n_links < 1 {
                bail!("random networks need at least one link");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(random_instance(&recipe.instance_config(), &mut rng))
        }
        (None, _) => build_explicit(file),
    }
}

fn build_explicit(file: &ScenarioFile) -> Result<(NetworkSpec, ValuationProfile)> {
    let agents = file
        .agents
        .as_ref()
        .ok_or_else(|| anyhow!("scenario needs an `agents` section (or a `random` recipe)"))?;
    let links = file
        .links
        .as_ref()
        .ok_or_else(|| anyhow!("scenario needs a `links` section (or a `random` recipe)"))?;
    let routes = file
        .routes
        .as_ref()
        .ok_or_else(|| anyhow!("scenario needs a `routes` section (or a `random` recipe)"))?;
    let n = agents.len();
    if n < 2 {
        bail!("scenarios need at least two agents, got {n}");
    }
    if routes.len() != n {
        let agent = routes.len().min(n);
        bail!(
            "`routes` has {} entries for {n} agents; agent {agent} has no route",
            routes.len()
        );
    }
    for (idx, link) in links.iter().enumerate() {
        for &agent in link.coefficients.keys() {
            if agent >= n {
                bail!("link {idx} references unknown agent {agent} (only {n} agents declared)");
            }
        }
    }
    let link_specs: Vec<LinkSpec> = links
        .iter()
        .enumerate()
        .map(|(id, link)| LinkSpec {
            id,
            capacity: link.capacity,
            coefficients: link.coefficients.clone(),
        })
        .collect();
    let spec = NetworkSpec::new(n, link_specs, routes.clone());
    let violations = validate_spec(&spec);
    if !violations.is_empty() {
        let lines: Vec<String> = violations.iter().map(describe).collect();
        bail!("invalid network:\n  - {}", lines.join("\n  - "));
    }
    let params: Vec<(f64, f64)> = agents.iter().map(|ag| (ag.a, ag.b)).collect();
    let vals =
        ValuationProfile::from_params(&params).map_err(|e| anyhow!("invalid valuation: {e}"))?;
    Ok((spec, vals))
}
