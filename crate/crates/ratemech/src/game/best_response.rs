//! Single-agent best responses and sequential best-response dynamics.
//!
//! A best response runs a projected gradient phase from several starts and
//! then a coordinate polish that is exact in every coordinate but the
//! demand: price and scale-report maxima have closed forms, the demand is
//! bisected on the sign of its one-sided derivative. The polish is what lets
//! converged profiles hit the tight budget and deviation tolerances.

use super::gradient::{utility_gradient, Gradient};
use super::{Game, Mechanism, Profile};
use crate::model::{AgentId, NetworkSpec};
use crate::sbb::scale_factor_or_zero;
use crate::wbb;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Tuning for best responses, dynamics, and deviation sampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BrConfig {
    /// No-profitable-deviation slack: a profile counts as an equilibrium
    /// when no examined deviation gains more than this.
    pub epsilon: f64,
    /// Stop the gradient phase once the projected gradient is this small.
    pub gradient_tol: f64,
    pub max_gradient_iterations: usize,
    /// Maximum coordinate-polish sweeps per best-response call.
    pub polish_rounds: usize,
    /// Best-response rounds before the dynamics give up.
    pub max_rounds: usize,
    /// The dynamics have converged when no message coordinate moves more
    /// than this within a full round.
    pub profile_tol: f64,
    /// A best response is adopted only when it beats the incumbent payoff
    /// by more than this. Payoffs are O(1), so recomputing one carries a
    /// rounding noise of a few 1e-16; the default sits just above that
    /// noise floor. Anything larger trades positional accuracy for earlier
    /// termination: a threshold g freezes agents within ~sqrt(2g/|u''|) of
    /// their true best response.
    pub min_gain: f64,
    /// Random deviations sampled per agent by the equilibrium certifier, on
    /// top of the structured ones.
    pub deviation_samples: usize,
    /// Relative radii used for the sampled deviations.
    pub deviation_radii: Vec<f64>,
    /// Relative size of the randomized extra start of each best response.
    pub perturbation: f64,
    /// Visit agents in a seeded random order each round instead of `0..n`.
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for BrConfig {
    fn default() -> Self {
        BrConfig {
            epsilon: 1e-6,
            gradient_tol: 1e-11,
            max_gradient_iterations: 120,
            polish_rounds: 50,
            max_rounds: 200,
            profile_tol: 1e-11,
            min_gain: 1e-15,
            deviation_samples: 1000,
            deviation_radii: vec![1e-4, 1e-2, 0.1, 1.0],
            perturbation: 1e-3,
            shuffle: false,
            seed: 0x5eed,
        }
    }
}

impl BrConfig {
    pub(crate) fn assert_valid(&self) {
        assert!(self.epsilon > 0.0, "epsilon must be positive");
        assert!(
            self.gradient_tol > 0.0,
            "gradient tolerance must be positive"
        );
        assert!(self.profile_tol > 0.0, "profile tolerance must be positive");
        assert!(
            self.min_gain >= 0.0,
            "adoption threshold must be non-negative"
        );
        assert!(self.max_rounds >= 1, "dynamics need at least one round");
        assert!(
            !self.deviation_radii.is_empty() && self.deviation_radii.iter().all(|r| *r > 0.0),
            "deviation radii must be positive"
        );
        assert!(self.perturbation >= 0.0, "perturbation must be nonnegative");
    }
}

/// Result of a single-agent search: the maximizing coordinates (layout of
/// [`Profile::coords`]) and the payoff they achieve.
#[derive(Debug, Clone)]
pub struct BestResponse {
    pub coords: Vec<f64>,
    pub utility: f64,
}

/// Ascent component along the demand, honoring the one-sided derivatives:
/// at a kink maximum there is nothing to gain, at a kink minimum the steeper
/// side wins, and at the lower bound only upward movement counts.
fn demand_step(g: &Gradient, at_lower_bound: bool) -> f64 {
    if at_lower_bound {
        return g.y_right.max(0.0);
    }
    let up = g.y_right > 0.0;
    let down = g.y_left < 0.0;
    match (up, down) {
        (true, true) => {
            if g.y_right.abs() >= g.y_left.abs() {
                g.y_right
            } else {
                g.y_left
            }
        }
        (true, false) => g.y_right,
        (false, true) => g.y_left,
        (false, false) => 0.0,
    }
}

/// Projected gradient ascent followed by coordinate polish, from one start.
/// `scratch` must differ from the ambient profile only in agent `i`'s
/// message; it is left holding the refined coordinates.
fn refine_from(
    game: &Game<'_>,
    scratch: &mut Profile,
    i: AgentId,
    mut coords: Vec<f64>,
    cfg: &BrConfig,
) -> BestResponse {
    let spec = game.spec;
    scratch.set_coords(spec, i, &coords);
    let mut util = game.utility(scratch, i);

    let mut step = 1.0f64;
    for _ in 0..cfg.max_gradient_iterations {
        let g = utility_gradient(game, scratch, i);
        let mut dir = g.right_vec();
        dir[0] = demand_step(&g, coords[0] == 0.0);
        for (k, d) in dir.iter_mut().enumerate() {
            if coords[k] == 0.0 && *d < 0.0 {
                *d = 0.0;
            }
        }
        let norm = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if norm <= cfg.gradient_tol {
            break;
        }
        step = (step * 4.0).min(1e4);
        let mut moved = false;
        while step > 1e-16 {
            let cand: Vec<f64> = coords
                .iter()
                .zip(&dir)
                .map(|(c, d)| (c + step * d).max(0.0))
                .collect();
            let dist2: f64 = cand
                .iter()
                .zip(&coords)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist2 == 0.0 {
                break;
            }
            scratch.set_coords(spec, i, &cand);
            let u = game.utility(scratch, i);
            if u >= util + 1e-4 * dist2 / step {
                coords = cand;
                util = u;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    scratch.set_coords(spec, i, &coords);

    let route = spec.route(i);
    let eta = game.params.eta();
    let price_off = coords.len() - route.len();
    let has_rho = price_off == 2;
    for _ in 0..cfg.polish_rounds {
        let mut change = 0.0f64;

        // Exact unilateral price maxima: the payoff is an isolated downward
        // parabola in each quote, with vertex pbar - eta * pbar * slack / 2.
        let y = scratch.demands();
        let x = wbb::allocate(spec, &y);
        for (k, &l) in route.iter().enumerate() {
            let pbar = wbb::mean_over_others(spec.members(l), i, |j| scratch.price(j, l));
            let slack = spec.capacity(l) - spec.load(l, &x);
            let opt = (pbar - 0.5 * eta * pbar * slack).max(0.0);
            change = change.max((coords[price_off + k] - opt).abs());
            coords[price_off + k] = opt;
        }

        // Exact scale report: only the quadratic penalty involves it.
        if has_rho {
            let opt = scale_factor_or_zero(spec, &y);
            change = change.max((coords[1] - opt).abs());
            coords[1] = opt;
        }
        scratch.set_coords(spec, i, &coords);

        // Demand: bisect the sign of the one-sided derivative, then keep the
        // best of the incumbent, the bisected point, and zero.
        let mut grad_at = |yv: f64| -> f64 {
            let mut c = coords.clone();
            c[0] = yv;
            scratch.set_coords(spec, i, &c);
            utility_gradient(game, scratch, i).y_right
        };
        let y_star = if grad_at(0.0) <= 0.0 {
            0.0
        } else {
            let mut hi = (coords[0] * 2.0).max(1.0);
            let mut expansions = 0;
            while grad_at(hi) > 0.0 && expansions < 60 {
                hi *= 2.0;
                expansions += 1;
            }
            if expansions == 60 {
                hi
            } else {
                let mut lo = 0.0;
                for _ in 0..90 {
                    let mid = 0.5 * (lo + hi);
                    if grad_at(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        };
        let mut best = (coords[0], f64::NEG_INFINITY);
        for yv in [coords[0], y_star, 0.0] {
            let mut c = coords.clone();
            c[0] = yv;
            scratch.set_coords(spec, i, &c);
            let u = game.utility(scratch, i);
            if u > best.1 {
                best = (yv, u);
            }
        }
        change = change.max((coords[0] - best.0).abs());
        coords[0] = best.0;
        util = best.1;
        scratch.set_coords(spec, i, &coords);

        if change <= 1e-15 {
            break;
        }
    }

    BestResponse {
        coords,
        utility: util,
    }
}

/// Approximate best response of agent `i` against the rest of `profile`:
/// the search runs from the incumbent message, the zero message, and a
/// randomized copy of the incumbent, and keeps the best refined result. The
/// incumbent start guarantees the returned payoff is at least the current
/// one.
pub fn best_response(
    game: &Game<'_>,
    profile: &Profile,
    i: AgentId,
    cfg: &BrConfig,
    rng: &mut ChaCha8Rng,
) -> BestResponse {
    cfg.assert_valid();
    let spec = game.spec;
    let current = profile.coords(spec, i);

    let mut perturbed = current.clone();
    for c in &mut perturbed {
        *c = (*c * (1.0 + cfg.perturbation * (rng.random::<f64>() * 2.0 - 1.0))).max(0.0);
    }
    let starts = [current.clone(), vec![0.0; current.len()], perturbed];

    let mut scratch = profile.clone();
    let mut best: Option<BestResponse> = None;
    for start in starts {
        let refined = refine_from(game, &mut scratch, i, start, cfg);
        if best.as_ref().is_none_or(|b| refined.utility > b.utility) {
            best = Some(refined);
        }
    }
    best.expect("at least one start")
}

/// One recorded round of the dynamics.
#[derive(Debug, Clone, Serialize)]
pub struct RoundTrace {
    pub round: usize,
    /// Largest coordinate movement across agents in this round.
    pub max_change: f64,
    /// Largest payoff improvement any agent realized in this round.
    pub max_gain: f64,
}

/// Where the sequential dynamics ended up.
#[derive(Debug, Clone)]
pub struct DynamicsOutcome {
    pub profile: Profile,
    pub converged: bool,
    pub rounds: usize,
    pub trace: Vec<RoundTrace>,
}

/// Sequential (round-robin) best-response dynamics from `start`. Each agent
/// in turn adopts its best response when it strictly improves its payoff;
/// the run stops once a full round moves no coordinate by more than
/// `cfg.profile_tol`, or after `cfg.max_rounds` rounds.
pub fn iterate_best_response(game: &Game<'_>, start: &Profile, cfg: &BrConfig) -> DynamicsOutcome {
    cfg.assert_valid();
    assert_eq!(
        start.mechanism(),
        game.mechanism(),
        "profile and game disagree on the mechanism"
    );
    let spec = game.spec;
    let n = spec.n_agents();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut profile = start.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut rounds = 0;

    for round in 0..cfg.max_rounds {
        rounds = round + 1;
        let mut order: Vec<AgentId> = (0..n).collect();
        if cfg.shuffle {
            for k in (1..n).rev() {
                let j = rng.random_range(0..=k);
                order.swap(k, j);
            }
        }
        let mut max_change = 0.0f64;
        let mut max_gain = 0.0f64;
        for &i in &order {
            let before = profile.coords(spec, i);
            let base = game.utility(&profile, i);
            let br = best_response(game, &profile, i, cfg, &mut rng);
            if br.utility > base + cfg.min_gain {
                max_gain = max_gain.max(br.utility - base);
                let change = before
                    .iter()
                    .zip(&br.coords)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                max_change = max_change.max(change);
                profile.set_coords(spec, i, &br.coords);
            }
            // The scale report has a unique closed-form maximizer that is
            // independent of everything else the agent controls and of what
            // anyone else does, so it is synced unconditionally. Gating it on
            // the payoff comparison above would freeze stale reports: the
            // gain from fixing one scales with its square and falls below
            // float resolution long before the report agrees to the budget
            // tolerance.
            if let Some(old) = profile.rho(i) {
                let rho_star = scale_factor_or_zero(spec, &profile.demands());
                if old != rho_star {
                    max_change = max_change.max((old - rho_star).abs());
                    let mut c = profile.coords(spec, i);
                    c[1] = rho_star;
                    profile.set_coords(spec, i, &c);
                }
            }
        }
        trace.push(RoundTrace {
            round,
            max_change,
            max_gain,
        });
        if max_change <= cfg.profile_tol {
            converged = true;
            break;
        }
    }

    DynamicsOutcome {
        profile,
        converged,
        rounds,
        trace,
    }
}

/// A start profile for re-convergence experiments: every agent's demand (and,
/// in the balanced variant, its scale report) is jiggled multiplicatively by
/// up to `rel`, while quoted prices are left at their equilibrium values.
///
/// Price quotes are pure consensus coordinates: no unilateral best response
/// ever raises a quote above the peer average, so once a common quote drifts
/// off the market-clearing level the dynamics cannot pull it back up and the
/// demand race never terminates. Demand-side perturbations are the regime in
/// which re-convergence to the optimal allocation actually holds, and are
/// what this harness tests.
pub fn perturbed_start(
    spec: &NetworkSpec,
    equilibrium: &Profile,
    rel: f64,
    rng: &mut ChaCha8Rng,
) -> Profile {
    assert!(
        (0.0..1.0).contains(&rel),
        "relative jiggle must lie in [0, 1)"
    );
    let lead = match equilibrium.mechanism() {
        Mechanism::Wbb => 1,
        Mechanism::Sbb => 2,
    };
    let mut start = equilibrium.clone();
    for i in 0..spec.n_agents() {
        let mut c = start.coords(spec, i);
        for v in c.iter_mut().take(lead) {
            *v *= 1.0 + rel * (rng.random::<f64>() * 2.0 - 1.0);
        }
        start.set_coords(spec, i, &c);
    }
    start
}
