//! Experiment configuration: the full parameterization of a run, its TOML
//! serialization, validation, and dotted-path access used by sweeps and CLI
//! overrides.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("unknown config path `{0}`")]
    UnknownPath(String),
    #[error("config path `{path}`: {message}")]
    BadValue { path: String, message: String },
    #[error("failed to parse config: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

/// World map dimensions. The world is a `world_size` x `world_size` square
/// centered on the origin; the censored region and the circumscribed agent
/// region are concentric squares with the given half-side lengths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub world_size: Scalar,
    /// Half-side of the censored square clients live in.
    pub censored_region: Scalar,
    /// Half-side of the square a circumscribed censor's agents live in.
    pub agent_region: Scalar,
    /// Lower clamp for the normalized distance, keeping `1/d` finite when a
    /// client and a proxy (nearly) coincide.
    pub d_min: Scalar,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Length of the initial growth phase, in stages.
    pub birth_interval: u32,
    pub total_stages: u32,
}

/// Arrival rates. Fractional rates are honored exactly: arrivals at stage `t`
/// total `floor(rate * stages_elapsed)`, accumulated in integer micro-units,
/// so rates are effectively quantized to 1e-6 per stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    /// New clients per stage during the birth interval.
    pub mu_b: Scalar,
    /// New clients per stage afterwards.
    pub mu_s: Scalar,
    /// New proxies per stage during the birth interval.
    pub lambda_b: Scalar,
    /// New proxies per stage afterwards.
    pub lambda_s: Scalar,
    /// Probability that a client arriving during the birth interval is a
    /// censoring agent.
    pub rho_birth: Scalar,
    /// Same, after the birth interval.
    pub rho_stable: Scalar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistributorStrategy {
    /// Preference-list construction plus deferred acceptance.
    GameTheoretic,
    /// Hands each requester `k` uniformly random eligible proxies; ignores
    /// all client history. Stands in for reputation-free prior mechanisms.
    UniformRandomBaseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionConfig {
    /// Proxies granted per request.
    pub k: u32,
    /// Concurrent-connection capacity of every proxy.
    pub capacity: u32,
    pub strategy: DistributorStrategy,
}

/// Scaling factors of the ranking formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityConfig {
    /// Client-history weights: usage, requests, idle requests, blocked count,
    /// plus the additive initial utility.
    pub alphas: [Scalar; 5],
    /// Proxy-importance weights: knowers, connected, total utilization.
    pub betas: [Scalar; 3],
    /// Censor objective weights: agent payoff vs. connected users.
    pub omegas: [Scalar; 2],
    /// Acceptance threshold a requester's distance-free utility must reach.
    pub eta: Scalar,
    /// Censor's cost of losing an agent.
    pub nu: Scalar,
    /// Cap on the usage credit (the `min` in the client-history formula).
    pub usage_cap: Scalar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CensorStrategyKind {
    /// Block every learned proxy immediately.
    Aggressive,
    /// Sit on a learned proxy for `wait` stages, then block it with
    /// probability `block_probability` per stage (probability 1 once the
    /// discovering agent can no longer gain usage credit by waiting).
    Conservative,
    /// Block exactly the proxies with a positive marginal objective gain.
    Optimal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CensorGeography {
    /// Agents are placed like benign clients, across the censored region.
    Omnipresent,
    /// Agents are confined to the small `agent_region` square.
    Circumscribed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CensorConfig {
    pub strategy: CensorStrategyKind,
    /// Conservative only: stages to keep a discovered proxy alive.
    pub wait: u32,
    /// Conservative only: per-stage blocking probability after the wait.
    pub block_probability: Scalar,
    pub geography: CensorGeography,
}

/// Full experiment parameterization. Serializes to a nested TOML document in
/// which every field is addressable by its dotted path (`rates.mu_s`, ...).
/// Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub schedule: ScheduleConfig,
    pub rates: RateConfig,
    pub distribution: DistributionConfig,
    pub utility: UtilityConfig,
    pub censor: CensorConfig,
}

/// The reference parameterization: a 20000-unit world with a 1000-unit
/// censored square and 100-unit agent square, one-year birth interval,
/// 3 proxies per request, capacity 40, and the scaling factors
/// alphas=(1,1,100,5,10), betas=(1,5,5), omegas=(1,100), eta=0, nu=500,
/// usage cap 100. Rates default to the Slow ecosystem.
pub fn default_config() -> SimConfig {
    SimConfig {
        seed: 42,
        geometry: GeometryConfig {
            world_size: 20000.0,
            censored_region: 1000.0,
            agent_region: 100.0,
            d_min: 1e-3,
        },
        schedule: ScheduleConfig {
            birth_interval: 365,
            total_stages: 2000,
        },
        rates: RateConfig {
            mu_b: 25.0,
            mu_s: 5.0,
            lambda_b: 5.0,
            lambda_s: 0.2,
            rho_birth: 0.1,
            rho_stable: 0.1,
        },
        distribution: DistributionConfig {
            k: 3,
            capacity: 40,
            strategy: DistributorStrategy::GameTheoretic,
        },
        utility: UtilityConfig {
            alphas: [1.0, 1.0, 100.0, 5.0, 10.0],
            betas: [1.0, 5.0, 5.0],
            omegas: [1.0, 100.0],
            eta: 0.0,
            nu: 500.0,
            usage_cap: 100.0,
        },
        censor: CensorConfig {
            strategy: CensorStrategyKind::Aggressive,
            wait: 30,
            block_probability: 0.5,
            geography: CensorGeography::Omnipresent,
        },
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        default_config()
    }
}

/// The four stock censorship ecosystems, each a (mu_b, lambda_b, mu_s,
/// lambda_s) profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ecosystem {
    /// No proxy influx after birth.
    Static,
    /// Slow client and proxy growth.
    Slow,
    /// Healthy growth; lambda_s tunable in [0.5, 7.5].
    Alive,
    /// Heavy client growth; lambda_s tunable in [0.5, 10].
    Popular,
}

/// Returns the default config with arrival rates set for the named
/// ecosystem. `lambda_s_override` is only meaningful for Alive and Popular
/// and must stay within their documented ranges.
pub fn ecosystem(name: Ecosystem, lambda_s_override: Option<Scalar>) -> Result<SimConfig, ConfigError> {
    let mut cfg = default_config();
    let (mu_b, lambda_b, mu_s, lambda_s) = match name {
        Ecosystem::Static => (25.0, 5.0, 0.1, 0.0),
        Ecosystem::Slow => (25.0, 5.0, 5.0, 0.2),
        Ecosystem::Alive => (25.0, 5.0, 10.0, 0.5),
        Ecosystem::Popular => (25.0, 5.0, 20.0, 0.5),
    };
    let lambda_s = match (name, lambda_s_override) {
        (_, None) => lambda_s,
        (Ecosystem::Alive, Some(v)) if (0.5..=7.5).contains(&v) => v,
        (Ecosystem::Popular, Some(v)) if (0.5..=10.0).contains(&v) => v,
        (Ecosystem::Alive, Some(v)) | (Ecosystem::Popular, Some(v)) => {
            return Err(invalid(
                "rates.lambda_s",
                format!("override {v} outside the ecosystem's documented range"),
            ));
        }
        (_, Some(v)) => {
            return Err(invalid(
                "rates.lambda_s",
                format!("ecosystem {name:?} does not take a lambda_s override (got {v})"),
            ));
        }
    };
    cfg.rates.mu_b = mu_b;
    cfg.rates.lambda_b = lambda_b;
    cfg.rates.mu_s = mu_s;
    cfg.rates.lambda_s = lambda_s;
    Ok(cfg)
}

impl SimConfig {
    /// Checks every structural invariant, reporting the offending dotted
    /// field path on failure.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.geometry;
        if !(g.world_size > 0.0) {
            return Err(invalid("geometry.world_size", "must be positive"));
        }
        if !(g.censored_region > 0.0) {
            return Err(invalid("geometry.censored_region", "must be positive"));
        }
        if !(g.agent_region > 0.0) {
            return Err(invalid("geometry.agent_region", "must be positive"));
        }
        if !(g.agent_region < g.censored_region) {
            return Err(invalid(
                "geometry.agent_region",
                "must be smaller than the censored region",
            ));
        }
        if !(g.censored_region < g.world_size / 2.0) {
            return Err(invalid(
                "geometry.censored_region",
                "must fit inside the world (less than world_size/2)",
            ));
        }
        if !(g.d_min > 0.0 && g.d_min <= 1.0) {
            return Err(invalid("geometry.d_min", "must lie in (0, 1]"));
        }
        if self.schedule.birth_interval == 0 {
            return Err(invalid("schedule.birth_interval", "must be at least 1"));
        }
        let r = &self.rates;
        for (name, v) in [
            ("rates.mu_b", r.mu_b),
            ("rates.mu_s", r.mu_s),
            ("rates.lambda_b", r.lambda_b),
            ("rates.lambda_s", r.lambda_s),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, "rates must be finite and non-negative"));
            }
        }
        for (name, v) in [
            ("rates.rho_birth", r.rho_birth),
            ("rates.rho_stable", r.rho_stable),
            ("censor.block_probability", self.censor.block_probability),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(name, "probabilities must lie in [0, 1]"));
            }
        }
        if self.distribution.k == 0 {
            return Err(invalid("distribution.k", "must be at least 1"));
        }
        if self.distribution.capacity == 0 {
            return Err(invalid("distribution.capacity", "must be at least 1"));
        }
        let u = &self.utility;
        if !(u.eta < u.alphas[4]) {
            return Err(invalid(
                "utility.eta",
                "acceptance threshold must be below the initial utility alphas[4]",
            ));
        }
        if !(u.usage_cap > 0.0) {
            return Err(invalid("utility.usage_cap", "must be positive"));
        }
        for (i, a) in u.alphas.iter().enumerate() {
            if !a.is_finite() {
                return Err(invalid(&format!("utility.alphas[{i}]"), "must be finite"));
            }
        }
        for (i, b) in u.betas.iter().enumerate() {
            if !b.is_finite() {
                return Err(invalid(&format!("utility.betas[{i}]"), "must be finite"));
            }
        }
        for (i, w) in u.omegas.iter().enumerate() {
            if !w.is_finite() {
                return Err(invalid(&format!("utility.omegas[{i}]"), "must be finite"));
            }
        }
        if !u.nu.is_finite() {
            return Err(invalid("utility.nu", "must be finite"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Parses a TOML document. Unknown keys and type mismatches are hard
    /// errors; structural invariants are validated afterwards.
    pub fn from_toml(text: &str) -> Result<SimConfig, ConfigError> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<SimConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        SimConfig::from_toml(&text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    /// Sets one field by dotted path from a string value, e.g.
    /// `("rates.mu_s", "5.0")` or `("censor.strategy", "optimal")`.
    /// The value must parse as the field's existing TOML type.
    pub fn set_path(&mut self, path: &str, value: &str) -> Result<(), ConfigError> {
        let mut doc = toml::Value::try_from(&*self).expect("config converts to toml value");
        {
            let slot = navigate(&mut doc, path)?;
            let parsed = parse_as(slot, value, path)?;
            *slot = parsed;
        }
        let updated: SimConfig = doc
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::BadValue {
                path: path.to_string(),
                message: e.to_string(),
            })?;
        *self = updated;
        Ok(())
    }

    /// Sets one numeric field by dotted path. Integer fields require an
    /// integral value.
    pub fn set_numeric_path(&mut self, path: &str, value: Scalar) -> Result<(), ConfigError> {
        let mut doc = toml::Value::try_from(&*self).expect("config converts to toml value");
        {
            let slot = navigate(&mut doc, path)?;
            match slot {
                toml::Value::Float(f) => *f = value,
                toml::Value::Integer(i) => {
                    if value.fract() != 0.0 {
                        return Err(ConfigError::BadValue {
                            path: path.to_string(),
                            message: format!("{value} is not an integer"),
                        });
                    }
                    *i = value as i64;
                }
                _ => {
                    return Err(ConfigError::BadValue {
                        path: path.to_string(),
                        message: "field is not numeric".to_string(),
                    });
                }
            }
        }
        let updated: SimConfig = doc
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::BadValue {
                path: path.to_string(),
                message: e.to_string(),
            })?;
        *self = updated;
        Ok(())
    }

    /// Reads one numeric field by dotted path.
    pub fn numeric_path(&self, path: &str) -> Result<Scalar, ConfigError> {
        let mut doc = toml::Value::try_from(self).expect("config converts to toml value");
        let slot = navigate(&mut doc, path)?;
        match slot {
            toml::Value::Float(f) => Ok(*f),
            toml::Value::Integer(i) => Ok(*i as Scalar),
            _ => Err(ConfigError::BadValue {
                path: path.to_string(),
                message: "field is not numeric".to_string(),
            }),
        }
    }
}

/// Walks a dotted path through a TOML document. Array elements are addressed
/// by index segments, e.g. `utility.alphas.2`.
fn navigate<'a>(doc: &'a mut toml::Value, path: &str) -> Result<&'a mut toml::Value, ConfigError> {
    let mut node = doc;
    for segment in path.split('.') {
        node = match node {
            toml::Value::Table(t) => t
                .get_mut(segment)
                .ok_or_else(|| ConfigError::UnknownPath(path.to_string()))?,
            toml::Value::Array(a) => {
                let idx: usize = segment
                    .parse()
                    .map_err(|_| ConfigError::UnknownPath(path.to_string()))?;
                a.get_mut(idx)
                    .ok_or_else(|| ConfigError::UnknownPath(path.to_string()))?
            }
            _ => return Err(ConfigError::UnknownPath(path.to_string())),
        };
    }
    Ok(node)
}

fn parse_as(slot: &toml::Value, value: &str, path: &str) -> Result<toml::Value, ConfigError> {
    let bad = |message: String| ConfigError::BadValue {
        path: path.to_string(),
        message,
    };
    match slot {
        toml::Value::Integer(_) => value
            .parse::<i64>()
            .map(toml::Value::Integer)
            .map_err(|_| bad(format!("`{value}` is not an integer"))),
        toml::Value::Float(_) => value
            .parse::<Scalar>()
            .map(toml::Value::Float)
            .map_err(|_| bad(format!("`{value}` is not a number"))),
        toml::Value::Boolean(_) => value
            .parse::<bool>()
            .map(toml::Value::Boolean)
            .map_err(|_| bad(format!("`{value}` is not a boolean"))),
        toml::Value::String(_) => Ok(toml::Value::String(value.to_string())),
        _ => Err(bad("field is not a scalar".to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_parameterization() {
        let cfg = default_config();
        assert_eq!(cfg.distribution.k, 3);
        assert_eq!(cfg.distribution.capacity, 40);
        assert_eq!(cfg.geometry.world_size, 20000.0);
        assert_eq!(cfg.geometry.censored_region, 1000.0);
        assert_eq!(cfg.geometry.agent_region, 100.0);
        assert_eq!(cfg.schedule.birth_interval, 365);
        assert_eq!(cfg.utility.alphas, [1.0, 1.0, 100.0, 5.0, 10.0]);
        assert_eq!(cfg.utility.betas, [1.0, 5.0, 5.0]);
        assert_eq!(cfg.utility.omegas, [1.0, 100.0]);
        assert_eq!(cfg.utility.eta, 0.0);
        assert_eq!(cfg.utility.nu, 500.0);
        assert_eq!(cfg.utility.usage_cap, 100.0);
        assert!(cfg.utility.eta < cfg.utility.alphas[4]);
        cfg.validate().unwrap();
    }

    #[test]
    fn ecosystems_match_table() {
        let static_w = ecosystem(Ecosystem::Static, None).unwrap();
        assert_eq!(
            (
                static_w.rates.mu_b,
                static_w.rates.lambda_b,
                static_w.rates.mu_s,
                static_w.rates.lambda_s
            ),
            (25.0, 5.0, 0.1, 0.0)
        );
        let slow = ecosystem(Ecosystem::Slow, None).unwrap();
        assert_eq!(slow.rates.mu_s, 5.0);
        assert_eq!(slow.rates.lambda_s, 0.2);
        let alive = ecosystem(Ecosystem::Alive, Some(7.5)).unwrap();
        assert_eq!(alive.rates.mu_s, 10.0);
        assert_eq!(alive.rates.lambda_s, 7.5);
        let popular = ecosystem(Ecosystem::Popular, Some(10.0)).unwrap();
        assert_eq!(popular.rates.mu_s, 20.0);
        assert_eq!(popular.rates.lambda_s, 10.0);
    }

    #[test]
    fn ecosystem_override_range_enforced() {
        assert!(ecosystem(Ecosystem::Alive, Some(8.0)).is_err());
        assert!(ecosystem(Ecosystem::Popular, Some(0.1)).is_err());
        assert!(ecosystem(Ecosystem::Static, Some(1.0)).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = default_config();
        let text = cfg.to_toml();
        let back = SimConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut text = default_config().to_toml();
        text.push_str("\n[bogus]\nx = 1\n");
        assert!(SimConfig::from_toml(&text).is_err());

        let text2 = default_config().to_toml().replace("mu_b", "mu_bee");
        assert!(SimConfig::from_toml(&text2).is_err());
    }

    #[test]
    fn path_set_and_get() {
        let mut cfg = default_config();
        cfg.set_path("rates.mu_s", "12.5").unwrap();
        assert_eq!(cfg.rates.mu_s, 12.5);
        cfg.set_path("censor.strategy", "optimal").unwrap();
        assert_eq!(cfg.censor.strategy, CensorStrategyKind::Optimal);
        cfg.set_path("distribution.k", "5").unwrap();
        assert_eq!(cfg.distribution.k, 5);
        cfg.set_path("utility.alphas.2", "50.0").unwrap();
        assert_eq!(cfg.utility.alphas[2], 50.0);
        cfg.set_numeric_path("rates.lambda_s", 7.5).unwrap();
        assert_eq!(cfg.rates.lambda_s, 7.5);
        assert_eq!(cfg.numeric_path("rates.lambda_s").unwrap(), 7.5);
        assert_eq!(cfg.numeric_path("distribution.k").unwrap(), 5.0);

        assert!(matches!(
            cfg.set_path("rates.nope", "1"),
            Err(ConfigError::UnknownPath(_))
        ));
        assert!(cfg.set_path("distribution.k", "2.5").is_err());
        assert!(cfg.set_path("censor.strategy", "nonsense").is_err());
        assert!(cfg.set_numeric_path("distribution.k", 2.5).is_err());
        assert!(cfg.numeric_path("censor.strategy").is_err());
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut cfg = default_config();
        cfg.utility.eta = 10.0; // equal to alphas[4]
        assert!(cfg.validate().is_err());

        let mut cfg = default_config();
        cfg.geometry.agent_region = 5000.0;
        assert!(cfg.validate().is_err());

        let mut cfg = default_config();
        cfg.rates.rho_birth = 1.5;
        assert!(cfg.validate().is_err());

        let mut cfg = default_config();
        cfg.rates.lambda_s = -0.1;
        assert!(cfg.validate().is_err());

        let mut cfg = default_config();
        cfg.geometry.censored_region = 10000.0;
        assert!(cfg.validate().is_err());
    }
}
