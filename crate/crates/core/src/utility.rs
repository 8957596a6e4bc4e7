//! The ranking formulas: client-side proxy appeal, proxy-side client
//! scoring, the censoring-agent payoff, and order-exact ranking keys.
//!
//! Everything here is a pure function over counters and a distance, generic
//! over the scalar type.

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::model::{ClientRecord, ProxyRecord};
use crate::scalar::Real;

/// Scaling factors consumed by the ranking formulas, extracted verbatim from
/// the configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams<F> {
    pub alphas: [F; 5],
    pub betas: [F; 3],
    pub usage_cap: F,
    pub eta: F,
    pub nu: F,
}

impl<F: Real> UtilityParams<F> {
    pub fn from_config(cfg: &SimConfig) -> Self {
        let f = |v: f64| F::from_f64(v).expect("parameter representable");
        UtilityParams {
            alphas: cfg.utility.alphas.map(f),
            betas: cfg.utility.betas.map(f),
            usage_cap: f(cfg.utility.usage_cap),
            eta: f(cfg.utility.eta),
            nu: f(cfg.utility.nu),
        }
    }
}

/// The client-history counters the proxy-side score is computed from.
/// Extracted from a [`ClientRecord`] or synthesized for hypotheticals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClientCounters {
    /// Total stages of proxy usage, summed over all proxies ever used.
    pub total_usage: u64,
    /// Stages in which the client petitioned the distributor.
    pub requests: u32,
    /// Accumulated idle-request penalties.
    pub idle_unused: u32,
    /// Distinct blocked proxies the client has discarded.
    pub blocked_known: u32,
}

impl From<&ClientRecord> for ClientCounters {
    fn from(c: &ClientRecord) -> Self {
        ClientCounters {
            total_usage: c.total_usage,
            requests: c.request_count,
            idle_unused: c.idle_unused_requests,
            blocked_known: c.blocked_known_count,
        }
    }
}

/// `sign(b) * |b|^e`. Agrees with the plain power for non-negative bases and
/// keeps the power strictly monotone in the base, which is all the rankings
/// consume.
pub fn signed_power<F: Real>(base: F, exponent: F) -> F {
    if base < F::zero() {
        -(-base).powf(exponent)
    } else {
        base.powf(exponent)
    }
}

/// Proxy importance: `beta1*knowers + beta2*connected + beta3*utilization`.
/// Non-negative by construction.
pub fn proxy_appeal_base<F: Real>(
    knowers: u32,
    connected: u32,
    utilization: u64,
    params: &UtilityParams<F>,
) -> F {
    params.betas[0] * F::from_count(knowers as u64)
        + params.betas[1] * F::from_count(connected as u64)
        + params.betas[2] * F::from_count(utilization)
}

/// A client's utility for being assigned `proxy`: the proxy importance
/// raised to `1/distance`, so location dominates the ranking.
pub fn client_utility<F: Real>(proxy: &ProxyRecord, distance: F, params: &UtilityParams<F>) -> F {
    let base = proxy_appeal_base(
        proxy.knower_count(),
        proxy.connected_count(),
        proxy.total_utilization,
        params,
    );
    base.powf(distance.recip())
}

/// The distance-free client score shared by the proxy-side ranking, the
/// acceptance-threshold test, and the censor's per-agent utility:
/// `alpha1*min(total_usage, cap) - alpha2*requests - alpha3*idle
///  - alpha4*blocked + alpha5`.
pub fn client_history_base<F: Real>(counters: ClientCounters, params: &UtilityParams<F>) -> F {
    let usage = F::from_count(counters.total_usage).min(params.usage_cap);
    params.alphas[0] * usage - params.alphas[1] * F::from_count(counters.requests as u64)
        - params.alphas[2] * F::from_count(counters.idle_unused as u64)
        - params.alphas[3] * F::from_count(counters.blocked_known as u64)
        + params.alphas[4]
}

/// Distance-free client score read straight off a record.
pub fn proxy_utility_base<F: Real>(client: &ClientRecord, params: &UtilityParams<F>) -> F {
    client_history_base(ClientCounters::from(client), params)
}

/// A proxy's utility for admitting `client`: the signed power of the
/// distance-free score by `1/distance`.
pub fn proxy_utility<F: Real>(client: &ClientRecord, distance: F, params: &UtilityParams<F>) -> F {
    signed_power(proxy_utility_base(client, params), distance.recip())
}

/// Censoring-agent payoff from a score: the score itself while the agent
/// stays admissible, the flat loss `-nu` once it falls below the threshold.
pub fn payoff_from_base<F: Real>(base: F, params: &UtilityParams<F>) -> F {
    if base >= params.eta {
        base
    } else {
        -params.nu
    }
}

/// Censoring-agent payoff read straight off the agent's record.
pub fn censor_agent_payoff<F: Real>(agent: &ClientRecord, params: &UtilityParams<F>) -> F {
    debug_assert!(agent.is_agent());
    payoff_from_base(proxy_utility_base(agent, params), params)
}

/// Totally ordered stand-in for `signed_power(base, exponent)`.
///
/// Stored as the sign and `exponent * ln|base|`, which orders identically to
/// the literal power but never overflows: the literal value exceeds `f64`
/// range for the small normalized distances this simulator produces.
#[derive(Clone, Copy, Debug)]
pub struct RankKey<F> {
    sign: i8,
    log_magnitude: F,
}

impl<F: Real> RankKey<F> {
    pub fn new(base: F, exponent: F) -> Self {
        assert!(base.is_finite() && exponent.is_finite());
        if base == F::zero() {
            RankKey {
                sign: 0,
                log_magnitude: F::zero(),
            }
        } else {
            RankKey {
                sign: if base > F::zero() { 1 } else { -1 },
                log_magnitude: exponent * base.abs().ln(),
            }
        }
    }

    /// Assembles a key from a precomputed sign and log magnitude, letting
    /// callers hoist the `ln` out of hot pair loops.
    pub fn from_parts(sign: i8, log_magnitude: F) -> Self {
        debug_assert!(log_magnitude.is_finite());
        RankKey {
            sign: sign.signum(),
            log_magnitude,
        }
    }
}

impl<F: Real> PartialEq for RankKey<F> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl<F: Real> Eq for RankKey<F> {}

impl<F: Real> PartialOrd for RankKey<F> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<F: Real> Ord for RankKey<F> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match self.sign.cmp(&other.sign) {
            Ordering::Equal => {}
            ord => return ord,
        }
        let ord = self
            .log_magnitude
            .partial_cmp(&other.log_magnitude)
            .expect("log magnitudes are finite");
        match self.sign {
            1 => ord,
            -1 => ord.reverse(), // larger magnitude means more negative
            _ => Ordering::Equal,
        }
    }
}
