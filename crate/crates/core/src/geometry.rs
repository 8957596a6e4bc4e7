//! World geometry: placing clients and proxies on the map and the normalized
//! distance the utility formulas exponentiate by.

use rand::Rng;

use crate::config::{CensorGeography, SimConfig};
use crate::model::Location;
use crate::rng::RunRng;
use crate::Scalar;

/// What kind of entity a location is sampled for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlacementRole {
    BenignClient,
    CensoringAgent,
    Proxy,
}

/// Samples a map location.
///
/// Benign clients are uniform over the censored square. Proxies are uniform
/// over the world excluding the censored square. Censoring agents follow the
/// benign distribution for an omnipresent censor and are confined to the
/// small agent square for a circumscribed one.
pub fn sample_location(
    rng: &mut RunRng,
    role: PlacementRole,
    geography: CensorGeography,
    cfg: &SimConfig,
) -> Location {
    let g = &cfg.geometry;
    match role {
        PlacementRole::BenignClient => uniform_square(rng, g.censored_region),
        PlacementRole::CensoringAgent => match geography {
            CensorGeography::Omnipresent => uniform_square(rng, g.censored_region),
            CensorGeography::Circumscribed => uniform_square(rng, g.agent_region),
        },
        PlacementRole::Proxy => loop {
            let p = uniform_square(rng, g.world_size / 2.0);
            if p.x.abs() > g.censored_region || p.y.abs() > g.censored_region {
                return p;
            }
        },
    }
}

fn uniform_square(rng: &mut RunRng, half_side: Scalar) -> Location {
    Location::new(
        rng.gen_range(-half_side..half_side),
        rng.gen_range(-half_side..half_side),
    )
}

/// Euclidean distance normalized by the world diagonal and clamped below at
/// `d_min`, so the result is a usable exponent denominator in (0, 1].
pub fn normalized_distance(a: &Location, b: &Location, cfg: &SimConfig) -> Scalar {
    let diagonal = cfg.geometry.world_size * std::f64::consts::SQRT_2;
    (a.euclidean_distance(b) / diagonal).max(cfg.geometry.d_min)
}
