//! Certifies that the penalty weights make each agent's payoff strictly
//! concave in its own message near the candidate equilibrium: numeric
//! Hessians are assembled by differencing the analytic gradients, and their
//! eigenvalues (cyclic Jacobi) must all sit strictly below zero. Because the
//! demand derivative is only one-sided where the binding link can switch,
//! the certificate checks a Hessian per side.

use super::construct::construct_ne_from_kkt;
use super::gradient::utility_gradient;
use super::{Game, GameError, GameParams, Profile};
use crate::model::{AgentId, NetworkSpec, ValuationProfile};
use crate::solver::KktCertificate;
use serde::Serialize;

/// Which one-sided demand derivative a Hessian is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Settings for the concavity certificate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EtaConfig {
    /// Finite-difference step for price and scale-report coordinates.
    pub h_price: f64,
    /// Finite-difference step for the demand coordinate.
    pub h_demand: f64,
    /// Certification requires every eigenvalue at or below this (negative)
    /// bound.
    pub eigen_bound: f64,
    /// How many times the weights may be shrunk before giving up.
    pub max_shrinks: usize,
    pub shrink_factor: f64,
    /// The own-quote curvature is exactly -2; its numeric estimate must
    /// reproduce that within this tolerance, as a self-test of the scheme.
    pub price_diag_tol: f64,
}

impl Default for EtaConfig {
    fn default() -> Self {
        EtaConfig {
            h_price: 1e-5,
            h_demand: 1e-5,
            eigen_bound: -1e-8,
            max_shrinks: 6,
            shrink_factor: 0.1,
            price_diag_tol: 1e-9,
        }
    }
}

/// Proof object returned by [`validate_eta`].
#[derive(Debug, Clone, Serialize)]
pub struct EtaCertificate {
    /// The weights that were certified (possibly shrunk from the input).
    pub params: GameParams,
    /// How many shrinks were needed.
    pub shrinks: usize,
    /// Largest Hessian eigenvalue seen across agents and sides.
    pub worst_eigenvalue: f64,
    /// Largest deviation of a numeric own-quote curvature from -2.
    pub price_diag_error: f64,
}

/// Numeric Hessian of agent `i`'s payoff in its own coordinates, formed by
/// differencing the analytic gradient: central differences in the price and
/// scale-report coordinates, a one-sided difference on the chosen `side` in
/// the demand coordinate. The result is symmetrized.
pub fn numeric_hessian(
    game: &Game<'_>,
    profile: &Profile,
    i: AgentId,
    side: Side,
    cfg: &EtaConfig,
) -> Vec<Vec<f64>> {
    let spec = game.spec;
    let coords = profile.coords(spec, i);
    let dim = coords.len();
    let mut scratch = profile.clone();

    let grad_at = |scratch: &mut Profile, c: &[f64]| -> Vec<f64> {
        scratch.set_coords(spec, i, c);
        let g = utility_gradient(game, scratch, i);
        match side {
            Side::Left => g.left_vec(),
            Side::Right => g.right_vec(),
        }
    };

    let mut h = vec![vec![0.0; dim]; dim];
    for k in 0..dim {
        let column = if k == 0 {
            let step = cfg.h_demand;
            match side {
                Side::Right => {
                    let base = grad_at(&mut scratch, &coords);
                    let mut up = coords.clone();
                    up[0] += step;
                    let g_up = grad_at(&mut scratch, &up);
                    g_up.iter()
                        .zip(&base)
                        .map(|(a, b)| (a - b) / step)
                        .collect::<Vec<f64>>()
                }
                Side::Left => {
                    assert!(
                        coords[0] > step,
                        "left-side Hessian needs the demand to exceed the step"
                    );
                    let base = grad_at(&mut scratch, &coords);
                    let mut dn = coords.clone();
                    dn[0] -= step;
                    let g_dn = grad_at(&mut scratch, &dn);
                    base.iter()
                        .zip(&g_dn)
                        .map(|(a, b)| (a - b) / step)
                        .collect::<Vec<f64>>()
                }
            }
        } else {
            let step = cfg.h_price;
            let mut up = coords.clone();
            up[k] += step;
            let mut dn = coords.clone();
            dn[k] -= step;
            let g_up = grad_at(&mut scratch, &up);
            let g_dn = grad_at(&mut scratch, &dn);
            g_up.iter()
                .zip(&g_dn)
                .map(|(a, b)| (a - b) / (2.0 * step))
                .collect::<Vec<f64>>()
        };
        for (r, v) in column.into_iter().enumerate() {
            h[r][k] = v;
        }
    }

    for r in 0..dim {
        for c in (r + 1)..dim {
            let avg = 0.5 * (h[r][c] + h[c][r]);
            h[r][c] = avg;
            h[c][r] = avg;
        }
    }
    h
}

/// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(matrix: &[Vec<f64>]) -> Vec<f64> {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    for (r, row) in a.iter().enumerate() {
        assert_eq!(row.len(), n, "matrix must be square");
        for c in 0..n {
            assert!(
                (row[c] - matrix[c][r]).abs() <= 1e-12 * (1.0 + row[c].abs()),
                "matrix must be symmetric"
            );
        }
    }

    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for r in 0..n {
            for c in (r + 1)..n {
                off = off.max(a[r][c].abs());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }

    let mut eigs: Vec<f64> = (0..n).map(|k| a[k][k]).collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).expect("eigenvalues are finite"));
    eigs
}

/// Certify the penalty weights at the profile constructed from a welfare
/// certificate: every agent's own-message Hessian (both demand sides) must
/// be negative definite with margin `cfg.eigen_bound`. When certification
/// fails the weights are shrunk by `cfg.shrink_factor` and retried, at most
/// `cfg.max_shrinks` times.
pub fn validate_eta(
    spec: &NetworkSpec,
    vals: &ValuationProfile,
    cert: &KktCertificate,
    params: GameParams,
    cfg: &EtaConfig,
) -> Result<EtaCertificate, GameError> {
    let mut current = params;
    let mut worst_seen = f64::INFINITY;
    for shrinks in 0..=cfg.max_shrinks {
        let profile = construct_ne_from_kkt(spec, cert, current.mechanism())?;
        let game = Game::new(spec, vals, current);
        let mut worst = f64::NEG_INFINITY;
        let mut diag_err = 0.0f64;
        for i in 0..spec.n_agents() {
            let price_off = profile.coords(spec, i).len() - spec.route(i).len();
            // Inactive agents sit on the demand boundary, where only the
            // right side exists.
            let sides: &[Side] = if profile.demand(i) > cfg.h_demand {
                &[Side::Right, Side::Left]
            } else {
                &[Side::Right]
            };
            for &side in sides {
                let h = numeric_hessian(&game, &profile, i, side, cfg);
                for k in price_off..h.len() {
                    diag_err = diag_err.max((h[k][k] + 2.0).abs());
                }
                let eigs = symmetric_eigenvalues(&h);
                worst = worst.max(*eigs.last().expect("nonempty spectrum"));
            }
        }
        worst_seen = worst_seen.min(worst);
        if worst <= cfg.eigen_bound && diag_err <= cfg.price_diag_tol {
            return Ok(EtaCertificate {
                params: current,
                shrinks,
                worst_eigenvalue: worst,
                price_diag_error: diag_err,
            });
        }
        current = current.scaled(cfg.shrink_factor);
    }
    Err(GameError::NoConcavityCertificate {
        shrinks: cfg.max_shrinks,
        worst: worst_seen,
    })
}
