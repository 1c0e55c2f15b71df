//! Centralized welfare problem: maximize `sum_i v_i(x_i)` over `x >= 0`
//! subject to every link constraint `sum_j alpha_j x_j <= c_l`.
//!
//! The solver works on the dual: for fixed multipliers `lambda` the
//! Lagrangian separates per agent and the log family inverts its slope in
//! closed form, so each dual evaluation is exact. Multipliers descend the
//! dual with a projected, line-searched gradient step; once the active set
//! settles, a Newton polish on the binding links drives the residuals to
//! tolerance. First-order optimality is certified by [`check_kkt`], a
//! deliberately separate code path from the solver's internal bookkeeping.

use crate::model::{validate_spec, NetworkSpec, ValuationProfile, Violation};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Max-norm residual at which a certificate counts as optimal.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Scales the per-link initial multiplier guess.
    pub initial_lambda: f64,
    /// Line-search parameters for the dual gradient step.
    pub step_init: f64,
    pub step_shrink: f64,
    pub armijo: f64,
    /// A Newton polish on the binding links is attempted this often.
    pub polish_interval: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-8,
            max_iterations: 20_000,
            initial_lambda: 1.0,
            step_init: 0.1,
            step_shrink: 0.5,
            armijo: 1e-4,
            polish_interval: 25,
        }
    }
}

/// First-order optimality residuals, all max-norms over their index sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResiduals {
    /// Constraint violation: link overloads and negative rates.
    pub primal: f64,
    /// Negative multipliers.
    pub dual: f64,
    /// `|lambda_l * (load_l - c_l)|`.
    pub comp_slack: f64,
    /// Gap in `v_i'(x_i) = sum_l lambda_l alpha_i^l` (hinged at `x_i = 0`).
    pub stationarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal
            .max(self.dual)
            .max(self.comp_slack)
            .max(self.stationarity)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KktCertificate {
    pub x_star: Vec<f64>,
    pub lambda_star: Vec<f64>,
    /// Multipliers of the `x >= 0` bounds, recovered from stationarity.
    pub nu_star: Vec<f64>,
    pub residuals: KktResiduals,
    pub iterations: usize,
    pub optimal: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    pub residuals: KktResiduals,
    pub tolerance: f64,
    pub satisfied: bool,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("instance failed validation: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidSpec(Vec<Violation>),
    #[error("expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dual method did not reach tolerance (best residual {:.3e})", best.residuals.max())]
    NotConverged { best: Box<KktCertificate> },
    #[error("grid search supports at most {max} agents, instance has {got}")]
    TooManyAgents { max: usize, got: usize },
}

/// Inner maximizer of the Lagrangian for one agent: `argmax v_i(x) - mu * x`
/// over `0 <= x <= cap`. The cap only guards transient iterates with tiny
/// multipliers; the optimum always sits strictly inside it.
fn inner_rate(val: &crate::model::LogValuation, mu: f64, cap: f64) -> f64 {
    if mu <= 0.0 {
        return cap;
    }
    val.d1_inverse(mu).clamp(0.0, cap)
}

struct DualState {
    mu: Vec<f64>,
    x: Vec<f64>,
}

fn dual_point(
    spec: &NetworkSpec,
    vals: &ValuationProfile,
    lambda: &[f64],
    caps: &[f64],
) -> DualState {
    let n = spec.n_agents();
    let mut mu = vec![0.0; n];
    let mut x = vec![0.0; n];
    for i in 0..n {
        mu[i] = spec
            .route(i)
            .iter()
            .map(|&l| lambda[l] * spec.alpha(l, i))
            .sum();
        x[i] = inner_rate(vals.agent(i), mu[i], caps[i]);
    }
    DualState { mu, x }
}

fn dual_value(
    spec: &NetworkSpec,
    vals: &ValuationProfile,
    lambda: &[f64],
    state: &DualState,
) -> f64 {
    let agents: f64 = (0..spec.n_agents())
        .map(|i| vals.agent(i).value(state.x[i]) - state.mu[i] * state.x[i])
        .sum();
    let links: f64 = (0..spec.n_links())
        .map(|l| lambda[l] * spec.capacity(l))
        .sum();
    agents + links
}

fn dual_gradient(spec: &NetworkSpec, x: &[f64]) -> Vec<f64> {
    (0..spec.n_links())
        .map(|l| spec.capacity(l) - spec.load(l, x))
        .collect()
}

fn residuals_at(
    spec: &NetworkSpec,
    vals: &ValuationProfile,
    x: &[f64],
    lambda: &[f64],
    mu: &[f64],
) -> KktResiduals {
    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for l in 0..spec.n_links() {
        let slack = spec.capacity(l) - spec.load(l, x);
        primal = primal.max(-slack);
        comp = comp.max((lambda[l] * slack).abs());
    }
    let mut dual: f64 = 0.0;
    for &lam in lambda {
        dual = dual.max(-lam);
    }
    let mut stat: f64 = 0.0;
    for i in 0..spec.n_agents() {
        primal = primal.max(-x[i]);
        let gap = vals.agent(i).d1(x[i].max(0.0)) - mu[i];
        stat = stat.max(if x[i] > 0.0 { gap.abs() } else { gap.max(0.0) });
    }
    KktResiduals {
        primal: primal.max(0.0),
        dual: dual.max(0.0),
        comp_slack: comp,
        stationarity: stat,
    }
}

/// Gaussian elimination with partial pivoting; `None` when the system is
/// numerically singular. Matrices here are tiny (one row per binding link).
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut out = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * out[k];
        }
        if a[col][col].abs() < 1e-300 {
            return None;
        }
        out[col] = acc / a[col][col];
    }
    Some(out)
}

/// Newton refinement of the multipliers on a candidate binding set. Keeps
/// `lambda >= 0` by dropping links whose multiplier crosses zero and re-adds
/// links that turn out violated. Returns the refined multipliers.
fn polish(spec: &NetworkSpec, vals: &ValuationProfile, lambda: &[f64], caps: &[f64]) -> Vec<f64> {
    let mut lam = lambda.to_vec();
    let mut active: Vec<usize> = (0..spec.n_links()).filter(|&l| lam[l] > 0.0).collect();
    if active.is_empty() {
        return lam;
    }
    for _outer in 0..spec.n_links() + 1 {
        for _newton in 0..60 {
            let state = dual_point(spec, vals, &lam, caps);
            let gap: Vec<f64> = active
                .iter()
                .map(|&l| spec.capacity(l) - spec.load(l, &state.x))
                .collect();
            let gap_norm = gap.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if gap_norm < 1e-14 {
                break;
            }
            // Jacobian of the slack in the active multipliers: agents with an
            // interior rate contribute alpha_l alpha_m a / mu^2.
            let k = active.len();
            let mut jac = vec![vec![0.0; k]; k];
            for i in 0..spec.n_agents() {
                if state.x[i] <= 0.0 || state.x[i] >= caps[i] {
                    continue;
                }
                let w = vals.agent(i).a / (state.mu[i] * state.mu[i]);
                for (r, &l) in active.iter().enumerate() {
                    if !spec.on_link(l, i) {
                        continue;
                    }
                    let al = spec.alpha(l, i);
                    for (s, &m) in active.iter().enumerate() {
                        if spec.on_link(m, i) {
                            jac[r][s] += al * spec.alpha(m, i) * w;
                        }
                    }
                }
            }
            let Some(delta) = solve_linear(jac, gap.clone()) else {
                // Redundant binding set; drop the newest link and retry.
                if active.len() > 1 {
                    let drop = *active.last().unwrap();
                    lam[drop] = 0.0;
                    active.pop();
                    continue;
                }
                return lam;
            };
            // Damped step, clamped at zero; links pinned at zero leave the set.
            let mut s = 1.0;
            let mut accepted = false;
            while s > 1e-6 {
                let mut cand = lam.clone();
                for (r, &l) in active.iter().enumerate() {
                    cand[l] = (lam[l] - s * delta[r]).max(0.0);
                }
                let cst = dual_point(spec, vals, &cand, caps);
                let cnorm = active
                    .iter()
                    .map(|&l| (spec.capacity(l) - spec.load(l, &cst.x)).abs())
                    .fold(0.0f64, f64::max);
                if cnorm < gap_norm * (1.0 - 1e-4 * s) || cnorm < 1e-14 {
                    lam = cand;
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
            if !accepted {
                break;
            }
            active.retain(|&l| lam[l] > 0.0);
            if active.is_empty() {
                return lam;
            }
        }
        // Re-admit links the refined point violates.
        let state = dual_point(spec, vals, &lam, caps);
        let mut grew = false;
        for l in 0..spec.n_links() {
            if !active.contains(&l) && spec.load(l, &state.x) > spec.capacity(l) {
                lam[l] = f64::MIN_POSITIVE.max(lam[l]);
                active.push(l);
                grew = true;
            }
        }
        if !grew {
            break;
        }
        active.sort_unstable();
    }
    lam
}

fn certificate(
    spec: &NetworkSpec,
    vals: &ValuationProfile,
    lambda: &[f64],
    caps: &[f64],
    iterations: usize,
    tolerance: f64,
) -> KktCertificate {
    let state = dual_point(spec, vals, lambda, caps);
    let residuals = residuals_at(spec, vals, &state.x, lambda, &state.mu);
    let nu = (0..spec.n_agents())
        .map(|i| (state.mu[i] - vals.agent(i).d1(state.x[i])).max(0.0))
        .collect();
    KktCertificate {
        x_star: state.x,
        lambda_star: lambda.to_vec(),
        nu_star: nu,
        residuals,
        iterations,
        optimal: residuals.max() <= tolerance,
    }
}

/// Solves the welfare problem and returns a certificate whose residuals are
/// all at most `config.tolerance`. Non-convergence is an explicit error
/// carrying the best iterate found.
pub fn solve_cp(
    spec: &NetworkSpec,
    vals: &ValuationProfile,
    config: &SolverConfig,
) -> Result<KktCertificate, SolverError> {
    let violations = validate_spec(spec);
    if !violations.is_empty() {
        return Err(SolverError::InvalidSpec(violations));
    }
    if vals.len() != spec.n_agents() {
        return Err(SolverError::DimensionMismatch {
            expected: spec.n_agents(),
            got: vals.len(),
        });
    }

    // Transient cap on the per-agent inner solve; see `inner_rate`.
    let caps: Vec<f64> = (0..spec.n_agents())
        .map(|i| 10.0 * spec.solo_cap(i))
        .collect();
    let mut lambda: Vec<f64> = (0..spec.n_links())
        .map(|l| {
            let scale = spec
                .members(l)
                .iter()
                .map(|&i| vals.agent(i).d1(0.0) / spec.alpha(l, i))
                .fold(0.0f64, f64::max);
            config.initial_lambda * scale
        })
        .collect();

    let mut step = config.step_init;
    let mut best = certificate(spec, vals, &lambda, &caps, 0, config.tolerance);

    for iter in 0..config.max_iterations {
        let state = dual_point(spec, vals, &lambda, &caps);
        let res = residuals_at(spec, vals, &state.x, &lambda, &state.mu);
        if res.max() < best.residuals.max() {
            best = certificate(spec, vals, &lambda, &caps, iter, config.tolerance);
        }
        if res.max() <= config.tolerance {
            return Ok(certificate(
                spec,
                vals,
                &lambda,
                &caps,
                iter,
                config.tolerance,
            ));
        }

        if iter % config.polish_interval == config.polish_interval - 1 {
            let polished = polish(spec, vals, &lambda, &caps);
            let pc = certificate(spec, vals, &polished, &caps, iter + 1, config.tolerance);
            if pc.residuals.max() <= config.tolerance {
                return Ok(pc);
            }
            if pc.residuals.max() < best.residuals.max() {
                best = pc;
                lambda = polished;
                continue;
            }
        }

        // Projected gradient step on the dual with an Armijo backtrack.
        let g0 = dual_value(spec, vals, &lambda, &state);
        let grad = dual_gradient(spec, &state.x);
        let mut t = (step * 4.0).clamp(1e-12, 1e9);
        let mut moved = false;
        while t >= 1e-13 {
            let cand: Vec<f64> = lambda
                .iter()
                .zip(&grad)
                .map(|(&l, &g)| (l - t * g).max(0.0))
                .collect();
            let dist2: f64 = cand
                .iter()
                .zip(&lambda)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist2 == 0.0 {
                break;
            }
            let cst = dual_point(spec, vals, &cand, &caps);
            if dual_value(spec, vals, &cand, &cst) <= g0 - config.armijo / t * dist2 {
                lambda = cand;
                step = t;
                moved = true;
                break;
            }
            t *= config.step_shrink;
        }
        if !moved {
            // Gradient step stalled; the polish is the only way forward.
            let polished = polish(spec, vals, &lambda, &caps);
            let pc = certificate(spec, vals, &polished, &caps, iter + 1, config.tolerance);
            if pc.residuals.max() <= config.tolerance {
                return Ok(pc);
            }
            if pc.residuals.max() < best.residuals.max() {
                best = pc;
                lambda = polished;
            } else {
                break;
            }
        }
    }

    let polished = polish(spec, vals, &lambda, &caps);
    let pc = certificate(
        spec,
        vals,
        &polished,
        &caps,
        config.max_iterations,
        config.tolerance,
    );
    if pc.residuals.max() <= config.tolerance {
        return Ok(pc);
    }
    if pc.residuals.max() < best.residuals.max() {
        best = pc;
    }
    Err(SolverError::NotConverged {
        best: Box::new(best),
    })
}

/// Recomputes the four optimality residuals of `(x, lambda)` from scratch.
/// Kept independent of the solver internals so certificates are audited by a
/// second route, not by the code that produced them.
pub fn check_kkt(
    spec: &NetworkSpec,
    vals: &ValuationProfile,
    x: &[f64],
    lambda: &[f64],
    tolerance: f64,
) -> Result<KktReport, SolverError> {
    if x.len() != spec.n_agents() {
        return Err(SolverError::DimensionMismatch {
            expected: spec.n_agents(),
            got: x.len(),
        });
    }
    if lambda.len() != spec.n_links() {
        return Err(SolverError::DimensionMismatch {
            expected: spec.n_links(),
            got: lambda.len(),
        });
    }
    if vals.len() != spec.n_agents() {
        return Err(SolverError::DimensionMismatch {
            expected: spec.n_agents(),
            got: vals.len(),
        });
    }
    let mut primal: f64 = 0.0;
    let mut dual: f64 = 0.0;
    let mut comp: f64 = 0.0;
    let mut stat: f64 = 0.0;
    for l in 0..spec.n_links() {
        let slack = spec.capacity(l) - spec.load(l, x);
        primal = primal.max(-slack);
        dual = dual.max(-lambda[l]);
        comp = comp.max((lambda[l] * slack).abs());
    }
    for i in 0..spec.n_agents() {
        primal = primal.max(-x[i]);
        let mu: f64 = spec
            .route(i)
            .iter()
            .map(|&l| lambda[l] * spec.alpha(l, i))
            .sum();
        let gap = vals.agent(i).d1(x[i].max(0.0)) - mu;
        stat = stat.max(if x[i] > 0.0 { gap.abs() } else { gap.max(0.0) });
    }
    let residuals = KktResiduals {
        primal: primal.max(0.0),
        dual: dual.max(0.0),
        comp_slack: comp,
        stationarity: stat,
    };
    Ok(KktReport {
        residuals,
        tolerance,
        satisfied: residuals.max() <= tolerance,
    })
}

#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub x: Vec<f64>,
    pub objective: f64,
}

/// Exhaustive search over the feasible grid of step `grid_step`, for up to
/// three agents. The last agent's coordinate is the largest feasible grid
/// value given the others (valuations are increasing, so that is exact grid
/// maximization, not a heuristic). Used as an oracle against [`solve_cp`].
pub fn brute_force_cp(
    spec: &NetworkSpec,
    vals: &ValuationProfile,
    grid_step: f64,
) -> Result<BruteForceResult, SolverError> {
    let n = spec.n_agents();
    if n > 3 {
        return Err(SolverError::TooManyAgents { max: 3, got: n });
    }
    if vals.len() != n {
        return Err(SolverError::DimensionMismatch {
            expected: n,
            got: vals.len(),
        });
    }
    assert!(grid_step > 0.0);
    let h = grid_step;
    let last = n - 1;
    let caps: Vec<f64> = (0..spec.n_links()).map(|l| spec.capacity(l)).collect();

    // Largest feasible grid value for the last agent on top of a base load.
    let best_last = |base: &[f64]| -> Option<f64> {
        let mut m = f64::INFINITY;
        for &l in spec.route(last) {
            m = m.min((caps[l] - base[l]) / spec.alpha(l, last));
        }
        if m < 0.0 {
            if m < -1e-12 {
                return None;
            }
            m = 0.0;
        }
        let mut k = (m / h + 1e-9).floor().max(0.0);
        loop {
            let x = k * h;
            let feasible = spec
                .route(last)
                .iter()
                .all(|&l| base[l] + spec.alpha(l, last) * x <= caps[l] + 1e-12);
            if feasible {
                return Some(x);
            }
            if k == 0.0 {
                return Some(0.0);
            }
            k -= 1.0;
        }
    };

    let grid_count = |i: usize| -> usize { (spec.solo_cap(i) / h + 1e-9).floor() as usize };

    let mut best_x = vec![0.0; n];
    let mut best_obj = f64::NEG_INFINITY;
    let mut consider = |x: &[f64], obj: f64| {
        if obj > best_obj {
            best_obj = obj;
            best_x = x.to_vec();
        }
    };

    match n {
        1 => {
            let base = vec![0.0; spec.n_links()];
            if let Some(x0) = best_last(&base) {
                consider(&[x0], vals.agent(0).value(x0));
            }
        }
        2 => {
            let g0 = grid_count(0);
            for k0 in 0..=g0 {
                let x0 = k0 as f64 * h;
                let mut base = vec![0.0; spec.n_links()];
                let mut ok = true;
                for &l in spec.route(0) {
                    base[l] = spec.alpha(l, 0) * x0;
                    if base[l] > caps[l] + 1e-12 {
                        ok = false;
                    }
                }
                if !ok {
                    break;
                }
                if let Some(x1) = best_last(&base) {
                    let obj = vals.agent(0).value(x0) + vals.agent(1).value(x1);
                    consider(&[x0, x1], obj);
                }
            }
        }
        3 => {
            let (g0, g1) = (grid_count(0), grid_count(1));
            let v0: Vec<f64> = (0..=g0)
                .map(|k| vals.agent(0).value(k as f64 * h))
                .collect();
            let v1: Vec<f64> = (0..=g1)
                .map(|k| vals.agent(1).value(k as f64 * h))
                .collect();
            for k0 in 0..=g0 {
                let x0 = k0 as f64 * h;
                let mut base0 = vec![0.0; spec.n_links()];
                let mut ok = true;
                for &l in spec.route(0) {
                    base0[l] = spec.alpha(l, 0) * x0;
                    if base0[l] > caps[l] + 1e-12 {
                        ok = false;
                    }
                }
                if !ok {
                    break;
                }
                for k1 in 0..=g1 {
                    let x1 = k1 as f64 * h;
                    let mut base = base0.clone();
                    let mut ok = true;
                    for &l in spec.route(1) {
                        base[l] += spec.alpha(l, 1) * x1;
                        if base[l] > caps[l] + 1e-12 {
                            ok = false;
                        }
                    }
                    if !ok {
                        break; // loads grow with k1
                    }
                    if let Some(x2) = best_last(&base) {
                        let obj = v0[k0] + v1[k1] + vals.agent(2).value(x2);
                        consider(&[x0, x1, x2], obj);
                    }
                }
            }
        }
        _ => unreachable!(),
    }

    if best_obj == f64::NEG_INFINITY {
        // The origin is always feasible for a validated spec.
        best_x = vec![0.0; n];
        best_obj = 0.0;
    }
    Ok(BruteForceResult {
        x: best_x,
        objective: best_obj,
    })
}
