//! Builds the message profile that implements a welfare optimum: every agent
//! demands its optimal rate, quotes the shadow price on each of its links,
//! and (in the balanced mechanism) reports the resulting common scale.

use super::{GameError, Mechanism, Profile, ACTIVE_TOL};
use crate::model::NetworkSpec;
use crate::sbb::{scale_factor_or_zero, SbbMessage};
use crate::solver::KktCertificate;
use crate::wbb::WbbMessage;

/// Turn a certified welfare optimum into a message profile. Fails with
/// [`GameError::DegenerateOptimum`] if some link has fewer than two agents
/// receiving a positive rate, since the mechanisms' peer averages need at
/// least one other active participant per link.
pub fn construct_ne_from_kkt(
    spec: &NetworkSpec,
    cert: &KktCertificate,
    mechanism: Mechanism,
) -> Result<Profile, GameError> {
    assert_eq!(
        cert.x_star.len(),
        spec.n_agents(),
        "certificate does not match the network"
    );
    for l in 0..spec.n_links() {
        let active = spec
            .members(l)
            .iter()
            .filter(|&&j| cert.x_star[j] > ACTIVE_TOL)
            .count();
        if active < 2 {
            return Err(GameError::DegenerateOptimum { link: l });
        }
    }

    let quotes = |i: usize| {
        spec.route(i)
            .iter()
            .map(|&l| (l, cert.lambda_star[l]))
            .collect()
    };

    Ok(match mechanism {
        Mechanism::Wbb => Profile::Wbb(
            (0..spec.n_agents())
                .map(|i| WbbMessage {
                    y: cert.x_star[i],
                    prices: quotes(i),
                })
                .collect(),
        ),
        Mechanism::Sbb => {
            let r = scale_factor_or_zero(spec, &cert.x_star);
            Profile::Sbb(
                (0..spec.n_agents())
                    .map(|i| SbbMessage {
                        y: cert.x_star[i],
                        prices: quotes(i),
                        rho: r,
                    })
                    .collect(),
            )
        }
    })
}
