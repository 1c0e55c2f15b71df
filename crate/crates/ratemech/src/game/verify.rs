//! Decides whether a message profile is an (approximate) equilibrium that
//! implements a welfare optimum: analytic first-order checks plus a
//! certificate built from structured and randomly sampled unilateral
//! deviations, including a full best-response search per agent.

use super::best_response::{best_response, BrConfig};
use super::{Game, Mechanism, Profile, ACTIVE_TOL};
use crate::sbb::scale_factor_or_zero;
use crate::wbb;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Pass thresholds for the analytic equilibrium checks. Each is an upper
/// bound on the corresponding nonnegative residual.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Thresholds {
    /// Spread of quotes around the per-link mean.
    pub equal_prices: f64,
    /// Negative part of any quote.
    pub dual_feasibility: f64,
    /// |mean price x slack| per link.
    pub comp_slackness: f64,
    /// Marginal-value versus price-sum gap (hinged for inactive agents).
    pub stationarity: f64,
    /// Negative part of any equilibrium payoff.
    pub individual_rationality: f64,
    /// Negative total tax (weak mechanism) or |total tax| (balanced one).
    pub budget: f64,
    /// Spread of scale reports around the realized scale.
    pub rho_agreement: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            equal_prices: 1e-6,
            dual_feasibility: 1e-12,
            comp_slackness: 1e-8,
            stationarity: 1e-7,
            individual_rationality: 1e-10,
            budget: 1e-10,
            rho_agreement: 1e-8,
        }
    }
}

/// One residual against its threshold.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Check {
    pub residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn new(residual: f64, threshold: f64) -> Self {
        Check {
            residual,
            threshold,
            pass: residual <= threshold,
        }
    }
}

/// The analytic portion of the audit.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumChecks {
    pub equal_prices: Check,
    pub dual_feasibility: Check,
    pub comp_slackness: Check,
    pub stationarity: Check,
    pub individual_rationality: Check,
    pub budget: Check,
    pub rho_agreement: Option<Check>,
}

impl EquilibriumChecks {
    pub fn all_pass(&self) -> bool {
        self.equal_prices.pass
            && self.dual_feasibility.pass
            && self.comp_slackness.pass
            && self.stationarity.pass
            && self.individual_rationality.pass
            && self.budget.pass
            && self.rho_agreement.is_none_or(|c| c.pass)
    }
}

/// Summary of the unilateral-deviation search.
#[derive(Debug, Clone, Serialize)]
pub struct DeviationCertificate {
    /// Hand-picked deviations tried per agent (price matching, undercuts,
    /// demand nudges, scale-report fixes, and a best-response search).
    pub structured_per_agent: usize,
    /// Random deviations sampled per agent.
    pub random_per_agent: usize,
    /// Total deviations examined per agent.
    pub samples_per_agent: usize,
    /// Largest payoff gain any deviation achieved (can be negative).
    pub max_gain: f64,
    pub worst_agent: usize,
    /// Which deviation family achieved `max_gain`.
    pub worst_kind: String,
    /// Gain bound the certificate was judged against.
    pub epsilon: f64,
    pub pass: bool,
}

/// Full audit result.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub mechanism: Mechanism,
    pub x: Vec<f64>,
    pub taxes: Vec<f64>,
    pub utilities: Vec<f64>,
    pub total_tax: f64,
    pub welfare: f64,
    /// Per-link mean of the members' quotes.
    pub common_prices: Vec<f64>,
    pub checks: EquilibriumChecks,
    pub deviations: DeviationCertificate,
    pub is_equilibrium: bool,
}

fn gain_of(game: &Game<'_>, scratch: &mut Profile, i: usize, coords: &[f64], base: f64) -> f64 {
    scratch.set_coords(game.spec, i, coords);
    game.utility(scratch, i) - base
}

/// Audit `profile` as a candidate equilibrium of `game`. The analytic checks
/// use `thresholds`; the deviation certificate uses `cfg` for its sample
/// counts, radii, seed, and gain bound `cfg.epsilon`.
pub fn verify_equilibrium(
    game: &Game<'_>,
    profile: &Profile,
    thresholds: &Thresholds,
    cfg: &BrConfig,
) -> EquilibriumReport {
    cfg.assert_valid();
    let spec = game.spec;
    let n = spec.n_agents();
    let outcome = game.outcome(profile);
    let x = outcome.x.clone();

    // Per-link mean quotes and price spread.
    let mut common_prices = Vec::with_capacity(spec.n_links());
    let mut equal_prices = 0.0f64;
    let mut neg_price = 0.0f64;
    for l in 0..spec.n_links() {
        let members = spec.members(l);
        let mean = members.iter().map(|&i| profile.price(i, l)).sum::<f64>() / members.len() as f64;
        for &i in members {
            let p = profile.price(i, l);
            equal_prices = equal_prices.max((p - mean).abs());
            neg_price = neg_price.max(-p);
        }
        common_prices.push(mean);
    }

    // Complementary slackness at the mean prices.
    let mut comp = 0.0f64;
    for l in 0..spec.n_links() {
        let slack = spec.capacity(l) - spec.load(l, &x);
        comp = comp.max((common_prices[l] * slack).abs());
    }

    // Stationarity of the realized allocation at the mean prices.
    let mut stationarity = 0.0f64;
    for i in 0..n {
        let price_sum: f64 = spec
            .route(i)
            .iter()
            .map(|&l| spec.alpha(l, i) * common_prices[l])
            .sum();
        let v = game.vals.agent(i);
        let res = if x[i] > ACTIVE_TOL {
            (v.d1(x[i]) - price_sum).abs()
        } else {
            (v.d1(0.0) - price_sum).max(0.0)
        };
        stationarity = stationarity.max(res);
    }

    let ir = outcome.utilities.iter().fold(0.0f64, |m, u| m.max(-u));
    let budget_residual = match game.mechanism() {
        Mechanism::Wbb => (-outcome.total_tax).max(0.0),
        Mechanism::Sbb => outcome.total_tax.abs(),
    };
    let rho_agreement = match profile {
        Profile::Wbb(_) => None,
        Profile::Sbb(msgs) => {
            let r = scale_factor_or_zero(spec, &profile.demands());
            let res = msgs
                .iter()
                .fold(0.0f64, |m, msg| m.max((msg.rho - r).abs()));
            Some(Check::new(res, thresholds.rho_agreement))
        }
    };

    let checks = EquilibriumChecks {
        equal_prices: Check::new(equal_prices, thresholds.equal_prices),
        dual_feasibility: Check::new(neg_price, thresholds.dual_feasibility),
        comp_slackness: Check::new(comp, thresholds.comp_slackness),
        stationarity: Check::new(stationarity, thresholds.stationarity),
        individual_rationality: Check::new(ir, thresholds.individual_rationality),
        budget: Check::new(budget_residual, thresholds.budget),
        rho_agreement,
    };

    // Deviation certificate.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut scratch = profile.clone();
    let mut max_gain = f64::NEG_INFINITY;
    let mut worst_agent = 0;
    let mut worst_kind = String::from("none");
    let mut structured_per_agent = usize::MAX;
    let y_all = profile.demands();

    for i in 0..n {
        let base = game.utility(profile, i);
        let coords = profile.coords(spec, i);
        let route = spec.route(i);
        let price_off = coords.len() - route.len();
        let has_rho = price_off == 2;

        let mut structured: Vec<(&'static str, Vec<f64>)> = Vec::new();

        // Quote the peer mean on every link.
        let mut c = coords.clone();
        for (k, &l) in route.iter().enumerate() {
            c[price_off + k] = wbb::mean_over_others(spec.members(l), i, |j| profile.price(j, l));
        }
        structured.push(("price-match", c));

        // Exact unilateral price optimum on every link.
        let mut c = coords.clone();
        for (k, &l) in route.iter().enumerate() {
            let pbar = wbb::mean_over_others(spec.members(l), i, |j| profile.price(j, l));
            let slack = spec.capacity(l) - spec.load(l, &x);
            c[price_off + k] = (pbar - 0.5 * game.params.eta() * pbar * slack).max(0.0);
        }
        structured.push(("price-vertex", c));

        // Withdraw the quote on one link at a time (profitable whenever a
        // priced link has slack).
        for k in 0..route.len() {
            let mut c = coords.clone();
            c[price_off + k] = 0.0;
            structured.push(("price-undercut", c));
        }

        // Demand nudges, relative and absolute, plus full withdrawal.
        for delta in [1e-4, 1e-2, 0.1] {
            for sign in [1.0, -1.0] {
                let mut c = coords.clone();
                c[0] = (c[0] * (1.0 + sign * delta)).max(0.0);
                structured.push(("demand-nudge", c));
            }
            let mut c = coords.clone();
            c[0] += delta * (1.0 + c[0]);
            structured.push(("demand-nudge", c));
        }
        let mut c = coords.clone();
        c[0] = 0.0;
        structured.push(("demand-withdraw", c));

        // Scale-report fixes.
        if has_rho {
            let mut c = coords.clone();
            c[1] = scale_factor_or_zero(spec, &y_all);
            structured.push(("scale-report", c));
            for delta in [1e-4, 1e-2] {
                for sign in [1.0, -1.0] {
                    let mut c = coords.clone();
                    c[1] = (c[1] + sign * delta * (1.0 + c[1])).max(0.0);
                    structured.push(("scale-report", c));
                }
            }
        }

        // Routes can differ in length; report the smallest per-agent count.
        structured_per_agent = structured_per_agent.min(structured.len() + 1);
        for (kind, cand) in &structured {
            let gain = gain_of(game, &mut scratch, i, cand, base);
            if gain > max_gain {
                max_gain = gain;
                worst_agent = i;
                worst_kind = (*kind).to_string();
            }
        }

        // Best-response search.
        let br = best_response(game, profile, i, cfg, &mut rng);
        if br.utility - base > max_gain {
            max_gain = br.utility - base;
            worst_agent = i;
            worst_kind = "best-response".to_string();
        }

        // Random deviations at the configured radii.
        for s in 0..cfg.deviation_samples {
            let radius = cfg.deviation_radii[s % cfg.deviation_radii.len()];
            let cand: Vec<f64> = coords
                .iter()
                .map(|&ck| {
                    let u = rng.random::<f64>() * 2.0 - 1.0;
                    (ck + radius * u * (1.0 + ck.abs())).max(0.0)
                })
                .collect();
            let gain = gain_of(game, &mut scratch, i, &cand, base);
            if gain > max_gain {
                max_gain = gain;
                worst_agent = i;
                worst_kind = "random".to_string();
            }
        }

        // Leave the scratch profile consistent with the ambient one.
        scratch.set_coords(spec, i, &coords);
    }
    if structured_per_agent == usize::MAX {
        structured_per_agent = 0;
    }

    let deviations = DeviationCertificate {
        structured_per_agent,
        random_per_agent: cfg.deviation_samples,
        samples_per_agent: structured_per_agent + cfg.deviation_samples,
        max_gain,
        worst_agent,
        worst_kind,
        epsilon: cfg.epsilon,
        pass: max_gain <= cfg.epsilon,
    };

    let is_equilibrium = checks.all_pass() && deviations.pass;
    EquilibriumReport {
        mechanism: game.mechanism(),
        welfare: game.vals.welfare(&x),
        x,
        taxes: outcome.taxes,
        utilities: outcome.utilities,
        total_tax: outcome.total_tax,
        common_prices,
        checks,
        deviations,
        is_equilibrium,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{construct_ne_from_kkt, GameParams};
    use crate::model::{LinkSpec, NetworkSpec, ValuationProfile};
    use crate::sbb::SbbParams;
    use crate::solver::{solve_cp, SolverConfig};
    use crate::wbb::MechanismParams;

    fn reference() -> (NetworkSpec, ValuationProfile) {
        let spec = NetworkSpec::single_link(1.0, &[1.0, 1.0]);
        let vals = ValuationProfile::from_params(&[(2.0, 1.0), (1.5, 1.0)]).unwrap();
        (spec, vals)
    }

    fn cfg_small() -> BrConfig {
        BrConfig {
            deviation_samples: 200,
            ..BrConfig::default()
        }
    }

    #[test]
    fn constructed_profiles_pass_the_audit() {
        let (spec, vals) = reference();
        let cert = solve_cp(&spec, &vals, &SolverConfig::default()).unwrap();
        for (params, mech) in [
            (GameParams::Wbb(MechanismParams::default()), Mechanism::Wbb),
            (GameParams::Sbb(SbbParams::default()), Mechanism::Sbb),
        ] {
            let profile = construct_ne_from_kkt(&spec, &cert, mech).unwrap();
            let game = Game::new(&spec, &vals, params);
            let report = verify_equilibrium(&game, &profile, &Thresholds::default(), &cfg_small());
            assert!(report.checks.all_pass(), "{mech}: {:#?}", report.checks);
            assert!(
                report.deviations.pass,
                "{mech}: gain {} via {} (agent {})",
                report.deviations.max_gain,
                report.deviations.worst_kind,
                report.deviations.worst_agent
            );
            assert!(report.is_equilibrium);
            assert!(report.deviations.samples_per_agent >= 200);
        }
    }

    #[test]
    fn price_disagreement_is_flagged_and_exploited() {
        let (spec, vals) = reference();
        let cert = solve_cp(&spec, &vals, &SolverConfig::default()).unwrap();
        let mut profile = construct_ne_from_kkt(&spec, &cert, Mechanism::Wbb).unwrap();
        let mut c = profile.coords(&spec, 0);
        c[1] += 0.25; // quote well above the shadow price
        profile.set_coords(&spec, 0, &c);
        let game = Game::new(&spec, &vals, GameParams::Wbb(MechanismParams::default()));
        let report = verify_equilibrium(&game, &profile, &Thresholds::default(), &cfg_small());
        assert!(!report.checks.equal_prices.pass);
        assert!(
            report.deviations.max_gain > 1e-6,
            "the overquoting agent should profit by matching, got {}",
            report.deviations.max_gain
        );
        assert!(!report.is_equilibrium);
    }

    #[test]
    fn priced_slack_link_fails_comp_slackness() {
        // Two links, second one far from binding; give it a positive price.
        let links = vec![
            LinkSpec {
                id: 0,
                capacity: 1.0,
                coefficients: [(0, 1.0), (1, 1.0)].into(),
            },
            LinkSpec {
                id: 1,
                capacity: 50.0,
                coefficients: [(0, 1.0), (1, 1.0)].into(),
            },
        ];
        let spec = NetworkSpec::new(2, links, vec![vec![0, 1], vec![0, 1]]);
        let vals = ValuationProfile::from_params(&[(2.0, 1.0), (1.5, 1.0)]).unwrap();
        let cert = solve_cp(&spec, &vals, &SolverConfig::default()).unwrap();
        let mut profile = construct_ne_from_kkt(&spec, &cert, Mechanism::Wbb).unwrap();
        for i in 0..2 {
            let mut c = profile.coords(&spec, i);
            c[2] = 0.4; // both agents price the slack link
            profile.set_coords(&spec, i, &c);
        }
        let game = Game::new(&spec, &vals, GameParams::Wbb(MechanismParams::default()));
        let report = verify_equilibrium(&game, &profile, &Thresholds::default(), &cfg_small());
        assert!(!report.checks.comp_slackness.pass);
        assert!(
            !report.checks.stationarity.pass,
            "price sum no longer matches marginals"
        );
        assert!(
            report.deviations.max_gain > 1e-6,
            "repricing the slack link should profit, got {} via {}",
            report.deviations.max_gain,
            report.deviations.worst_kind
        );
    }

    #[test]
    fn balanced_budget_is_certified_at_the_constructed_profile() {
        let (spec, vals) = reference();
        let cert = solve_cp(&spec, &vals, &SolverConfig::default()).unwrap();
        let profile = construct_ne_from_kkt(&spec, &cert, Mechanism::Sbb).unwrap();
        let game = Game::new(&spec, &vals, GameParams::Sbb(SbbParams::default()));
        let report = verify_equilibrium(&game, &profile, &Thresholds::default(), &cfg_small());
        assert!(report.checks.budget.pass);
        assert!(report.checks.budget.residual <= 1e-10);
        assert!(report.checks.rho_agreement.unwrap().pass);
    }

    #[test]
    fn report_serializes_to_json() {
        let (spec, vals) = reference();
        let cert = solve_cp(&spec, &vals, &SolverConfig::default()).unwrap();
        let profile = construct_ne_from_kkt(&spec, &cert, Mechanism::Wbb).unwrap();
        let game = Game::new(&spec, &vals, GameParams::Wbb(MechanismParams::default()));
        let cfg = BrConfig {
            deviation_samples: 10,
            ..BrConfig::default()
        };
        let report = verify_equilibrium(&game, &profile, &Thresholds::default(), &cfg);
        let text = serde_json::to_string(&report).unwrap();
        assert!(text.contains("\"is_equilibrium\":true"));
        assert!(text.contains("\"mechanism\":\"wbb\""));
    }
}
