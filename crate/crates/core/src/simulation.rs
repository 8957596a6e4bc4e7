//! The discrete-stage world loop: arrivals, client actions, distribution,
//! censorship, and metric sampling, in a fixed intra-stage order.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rayon::prelude::*;

use crate::censor::{assign_agents, decide_blocks, CensorState};
use crate::clients::{agent_step, benign_step, use_proxy, AgentDirective};
use crate::config::{CensorStrategyKind, ConfigError, DistributorStrategy, SimConfig};
use crate::distributor::{assign, assign_uniform_baseline, RequestBatch};
use crate::geometry::{sample_location, PlacementRole};
use crate::metrics::{sample, StageMetrics};
use crate::model::{ClientId, ClientKind, ClientRecord, ProxyId, ProxyRecord, Stage};
use crate::rng::RngStreams;
use crate::Scalar;

/// Arrival rates are applied exactly by accumulating integer micro-units per
/// stage, so fractional rates like 0.1 spawn on exactly the right stages.
const RATE_UNIT: u64 = 1_000_000;

fn micro_rate(rate: Scalar) -> u64 {
    (rate * RATE_UNIT as Scalar).round() as u64
}

/// Arrivals due after `elapsed` stages under a birth-interval rate schedule.
fn cumulative_due(rate_birth: Scalar, rate_stable: Scalar, birth_interval: u32, elapsed: u32) -> u64 {
    let birth_stages = elapsed.min(birth_interval) as u64;
    let stable_stages = (elapsed as u64).saturating_sub(birth_interval as u64);
    (micro_rate(rate_birth) * birth_stages + micro_rate(rate_stable) * stable_stages) / RATE_UNIT
}

/// The complete mutable state of one simulation run.
#[derive(Clone, Debug)]
pub struct WorldState {
    pub stage: Stage,
    pub clients: BTreeMap<ClientId, ClientRecord>,
    pub proxies: BTreeMap<ProxyId, ProxyRecord>,
    pub censor: CensorState,
    pub rng: RngStreams,
    /// Waiting episodes closed this stage (stages waited, benign only).
    pub fulfilled_waits: Vec<u32>,
    /// Stage at which each blocked proxy was blocked.
    pub blocked_log: BTreeMap<ProxyId, Stage>,
    /// Every proxy ever granted to a censoring agent (invariant bookkeeping).
    granted_to_agents: BTreeSet<ProxyId>,
    next_client_id: u32,
    next_proxy_id: u32,
    spawned_clients: u64,
    spawned_proxies: u64,
}

impl WorldState {
    pub fn new(cfg: &SimConfig) -> Self {
        WorldState {
            stage: Stage(0),
            clients: BTreeMap::new(),
            proxies: BTreeMap::new(),
            censor: CensorState::default(),
            rng: RngStreams::from_seed(cfg.seed),
            fulfilled_waits: Vec::new(),
            blocked_log: BTreeMap::new(),
            granted_to_agents: BTreeSet::new(),
            next_client_id: 0,
            next_proxy_id: 0,
            spawned_clients: 0,
            spawned_proxies: 0,
        }
    }

    pub fn benign_waiting_count(&self) -> usize {
        self.clients
            .values()
            .filter(|c| c.is_benign() && c.waiting_since.is_some())
            .count()
    }

    fn spawn_arrivals(&mut self, cfg: &SimConfig) {
        let elapsed = self.stage.0 + 1;
        let in_birth = self.stage.0 < cfg.schedule.birth_interval;
        let rho = if in_birth {
            cfg.rates.rho_birth
        } else {
            cfg.rates.rho_stable
        };

        let clients_due = cumulative_due(
            cfg.rates.mu_b,
            cfg.rates.mu_s,
            cfg.schedule.birth_interval,
            elapsed,
        );
        while self.spawned_clients < clients_due {
            self.spawned_clients += 1;
            let id = ClientId(self.next_client_id);
            self.next_client_id += 1;
            let is_agent = rho > 0.0 && self.rng.population.gen_bool(rho);
            let (kind, role) = if is_agent {
                (ClientKind::CensoringAgent, PlacementRole::CensoringAgent)
            } else {
                (ClientKind::Benign, PlacementRole::BenignClient)
            };
            let location =
                sample_location(&mut self.rng.population, role, cfg.censor.geography, cfg);
            self.clients
                .insert(id, ClientRecord::new(id, kind, location, self.stage));
            if is_agent {
                self.censor.agents.insert(id);
            }
        }

        let proxies_due = cumulative_due(
            cfg.rates.lambda_b,
            cfg.rates.lambda_s,
            cfg.schedule.birth_interval,
            elapsed,
        );
        while self.spawned_proxies < proxies_due {
            self.spawned_proxies += 1;
            let id = ProxyId(self.next_proxy_id);
            self.next_proxy_id += 1;
            let location = sample_location(
                &mut self.rng.population,
                PlacementRole::Proxy,
                cfg.censor.geography,
                cfg,
            );
            self.proxies.insert(
                id,
                ProxyRecord::new(id, location, cfg.distribution.capacity, self.stage),
            );
        }
    }

    /// All clients act in ascending id order; capacity contention resolves
    /// deterministically in that order.
    fn run_client_steps(&mut self, cfg: &SimConfig) -> BTreeSet<ClientId> {
        let _ = cfg;
        let mut requesters = BTreeSet::new();
        let directives = std::mem::take(&mut self.censor.directives);
        let ids: Vec<ClientId> = self.clients.keys().copied().collect();

        for id in ids {
            let kind = self.clients[&id].kind;
            let outcome = match kind {
                ClientKind::Benign => benign_step(
                    self.clients.get_mut(&id).expect("client exists"),
                    &self.proxies,
                    self.stage,
                ),
                ClientKind::CensoringAgent => {
                    let directive = directives.get(&id).copied().unwrap_or(AgentDirective::Idle);
                    agent_step(
                        self.clients.get_mut(&id).expect("client exists"),
                        directive,
                        &self.proxies,
                    )
                }
            };

            let previous = self.clients[&id].active_proxy;
            match outcome.use_proxy {
                Some(pid) => {
                    if let Some(old) = previous {
                        if old != pid && !self.proxies[&old].blocked {
                            self.proxies
                                .get_mut(&old)
                                .expect("proxy exists")
                                .connected
                                .remove(&id);
                        }
                    }
                    let connected = use_proxy(
                        self.clients.get_mut(&id).expect("client exists"),
                        self.proxies.get_mut(&pid).expect("proxy exists"),
                        self.stage,
                    );
                    debug_assert!(connected, "steps only pick connectable proxies");
                }
                None => {
                    // disconnect cleanly if the client ends the stage idle
                    if let Some(old) = previous {
                        if !self.proxies[&old].blocked {
                            self.proxies
                                .get_mut(&old)
                                .expect("proxy exists")
                                .connected
                                .remove(&id);
                            self.clients.get_mut(&id).expect("client exists").active_proxy = None;
                        }
                    }
                }
            }
            if outcome.request {
                requesters.insert(id);
            }
        }
        requesters
    }

    fn run_distribution(&mut self, requesters: BTreeSet<ClientId>, cfg: &SimConfig) {
        self.fulfilled_waits.clear();
        if requesters.is_empty() {
            return;
        }
        let mut batch = RequestBatch::new(self.stage);
        batch.new_joiners = requesters
            .iter()
            .filter(|id| self.clients[id].joined_at == self.stage)
            .copied()
            .collect();
        batch.requesters = requesters;

        let outcome = match cfg.distribution.strategy {
            DistributorStrategy::GameTheoretic => assign(
                &batch,
                &mut self.clients,
                &mut self.proxies,
                cfg,
                &mut self.rng.tie_break,
            ),
            DistributorStrategy::UniformRandomBaseline => assign_uniform_baseline(
                &batch,
                &mut self.clients,
                &mut self.proxies,
                cfg,
                &mut self.rng.baseline,
            ),
        };
        self.fulfilled_waits = outcome.fulfilled_waits;

        // agents report every grant to the censor
        for (cid, granted) in &outcome.matching.assignments {
            if self.censor.agents.contains(cid) {
                self.granted_to_agents.extend(granted.iter().copied());
                self.censor.ingest_report(*cid, granted, self.stage);
            }
        }
    }

    fn run_censorship(&mut self, cfg: &SimConfig) {
        let blocks = decide_blocks(
            &self.censor,
            &self.clients,
            &self.proxies,
            self.stage,
            cfg,
            &mut self.rng.censor,
        );
        for pid in &blocks {
            let proxy = self.proxies.get_mut(pid).expect("proxy exists");
            debug_assert!(!proxy.blocked);
            proxy.blocked = true;
            proxy.connected.clear();
            self.blocked_log.insert(*pid, self.stage);
        }
        // Only the coordinating censor directs its agents onto proxies to
        // mimic genuine usage; aggressive and conservative censors model
        // independent agents that merely collect addresses, so their agents
        // idle.
        self.censor.directives = match cfg.censor.strategy {
            CensorStrategyKind::Optimal => {
                assign_agents(&self.censor, &self.clients, &self.proxies, &mut self.rng.censor)
            }
            _ => BTreeMap::new(),
        };
    }

    /// Executes one full stage: arrivals, client actions, distribution,
    /// censorship, then sampling. The invariant check runs every stage.
    pub fn step(&mut self, cfg: &SimConfig) -> StageMetrics {
        self.spawn_arrivals(cfg);
        let requesters = self.run_client_steps(cfg);
        self.run_distribution(requesters, cfg);
        self.run_censorship(cfg);
        let metrics = sample(self);
        self.check_invariants();
        self.stage = self.stage.next();
        metrics
    }

    /// The always-on assertion layer: cross-referential integrity,
    /// conservation, capacity, knower consistency, and block monotonicity.
    /// Panics on the first violation.
    pub fn check_invariants(&self) {
        let proxy_slots = self
            .proxies
            .keys()
            .next_back()
            .map_or(0, |p| p.0 as usize + 1);
        let client_slots = self
            .clients
            .keys()
            .next_back()
            .map_or(0, |c| c.0 as usize + 1);
        let mut connection_of: Vec<Option<ProxyId>> = vec![None; client_slots];
        let mut utilization_check: Vec<u64> = vec![0; proxy_slots];
        let mut connections = 0usize;

        for (id, client) in &self.clients {
            assert_eq!(*id, client.id);
            assert!(
                client.known_proxies.is_subset(&client.ever_known),
                "{id}: pool outside ever_known"
            );
            for pid in &client.ever_known {
                assert!(self.proxies.contains_key(pid), "{id} knows unknown proxy {pid}");
            }
            if let Some(active) = client.active_proxy {
                assert!(
                    client.known_proxies.contains(&active),
                    "{id}: active proxy not in pool"
                );
            }
            let mut total = 0u64;
            for (pid, t) in &client.usage_time {
                assert!(
                    client.ever_known.contains(pid),
                    "{id}: usage recorded for never-known proxy {pid}"
                );
                total += *t as u64;
                utilization_check[pid.0 as usize] += *t as u64;
            }
            assert_eq!(client.total_usage, total, "{id}: usage cache out of sync");
            assert!(
                (client.blocked_known_count as usize) <= client.ever_known.len(),
                "{id}: more blocked discards than proxies ever known"
            );
            assert_eq!(
                self.censor.agents.contains(id),
                client.is_agent(),
                "censor agent set out of sync for {id}"
            );
        }

        for (pid, proxy) in &self.proxies {
            assert_eq!(*pid, proxy.id);
            assert!(
                proxy.connected.len() as u32 <= proxy.capacity,
                "{pid}: capacity exceeded"
            );
            assert!(
                proxy.connected.is_subset(&proxy.knowers),
                "{pid}: connected client without the address"
            );
            if proxy.blocked {
                assert!(
                    proxy.connected.is_empty(),
                    "{pid}: blocked proxy still has connections"
                );
                let blocked_at = self.blocked_log.get(pid).expect("blocked proxy logged");
                assert!(*blocked_at <= self.stage);
            } else {
                assert!(!self.blocked_log.contains_key(pid), "{pid}: unblocked but logged");
            }
            for cid in &proxy.knowers {
                assert!(self.clients.contains_key(cid), "{pid} known by unknown client");
            }
            for cid in &proxy.connected {
                let slot = &mut connection_of[cid.0 as usize];
                assert!(slot.is_none(), "{cid} connected to two proxies at once");
                *slot = Some(*pid);
                connections += 1;
                assert_eq!(
                    self.clients[cid].active_proxy,
                    Some(*pid),
                    "{cid} in connected set of {pid} without matching active proxy"
                );
            }
            assert_eq!(
                proxy.total_utilization,
                utilization_check[pid.0 as usize],
                "{pid}: utilization does not match client usage"
            );
        }

        assert!(connections <= self.clients.len());
        for pid in self.censor.known.keys() {
            assert!(
                self.granted_to_agents.contains(pid),
                "censor knows {pid} that was never granted to an agent"
            );
        }
    }
}

/// Runs a full simulation, returning the metric series and the final world.
pub fn run_with_world(cfg: &SimConfig) -> Result<(Vec<StageMetrics>, WorldState), ConfigError> {
    cfg.validate()?;
    let mut world = WorldState::new(cfg);
    let mut series = Vec::with_capacity(cfg.schedule.total_stages as usize);
    for _ in 0..cfg.schedule.total_stages {
        series.push(world.step(cfg));
    }
    Ok((series, world))
}

/// Runs a full simulation: the same seed and config always produce the same
/// series, bit for bit.
pub fn run(cfg: &SimConfig) -> Result<Vec<StageMetrics>, ConfigError> {
    run_with_world(cfg).map(|(series, _)| series)
}

/// Two-phase arrival scenario: the agent ratio switches from `rho_birth` to
/// `rho_stable` at the birth/stable boundary. The stage loop always honors
/// the interval split, so this is [`run`] under a config whose two rho
/// fields differ; it exists as the named entry point for that experiment.
pub fn run_invitation_scenario(cfg: &SimConfig) -> Result<Vec<StageMetrics>, ConfigError> {
    run(cfg)
}

/// Independent runs along one numeric config axis, one per value, all with
/// the same seed. Runs execute in parallel; results keep the input order.
pub fn run_sweep(
    base: &SimConfig,
    axis: &str,
    values: &[Scalar],
) -> Result<Vec<(Scalar, Vec<StageMetrics>)>, ConfigError> {
    base.validate()?;
    base.numeric_path(axis)?; // unknown or non-numeric axes fail fast
    let configs: Result<Vec<(Scalar, SimConfig)>, ConfigError> = values
        .iter()
        .map(|v| {
            let mut cfg = base.clone();
            cfg.set_numeric_path(axis, *v)?;
            Ok((*v, cfg))
        })
        .collect();
    configs?
        .into_par_iter()
        .map(|(v, cfg)| run(&cfg).map(|series| (v, series)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{default_config, ecosystem, CensorStrategyKind, Ecosystem};

    fn small_config() -> SimConfig {
        let mut cfg = default_config();
        cfg.schedule.birth_interval = 30;
        cfg.schedule.total_stages = 90;
        cfg.rates.mu_b = 4.0;
        cfg.rates.mu_s = 1.0;
        cfg.rates.lambda_b = 1.0;
        cfg.rates.lambda_s = 0.2;
        cfg
    }

    #[test]
    fn deterministic_across_runs() {
        let cfg = small_config();
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);

        let mut other_seed = cfg.clone();
        other_seed.seed = 7;
        let c = run(&other_seed).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_stages_empty_series() {
        let mut cfg = small_config();
        cfg.schedule.total_stages = 0;
        assert!(run(&cfg).unwrap().is_empty());
    }

    #[test]
    fn invalid_config_rejected_before_stage_zero() {
        let mut cfg = small_config();
        cfg.utility.eta = 50.0;
        assert!(run(&cfg).is_err());
    }

    #[test]
    fn exact_arrival_schedule() {
        // 25 clients per stage during birth, then 0.1 per stage
        assert_eq!(cumulative_due(25.0, 0.1, 365, 1), 25);
        assert_eq!(cumulative_due(25.0, 0.1, 365, 365), 9125);
        assert_eq!(cumulative_due(25.0, 0.1, 365, 366), 9125);
        assert_eq!(cumulative_due(25.0, 0.1, 365, 365 + 10), 9126);
        assert_eq!(cumulative_due(25.0, 0.1, 365, 365 + 20), 9127);
        // 0.7 per stage would drift under naive float accumulation
        assert_eq!(cumulative_due(0.0, 0.7, 0, 10), 7);
        assert_eq!(cumulative_due(0.0, 0.7, 0, 100), 70);
    }

    #[test]
    fn static_world_stops_growing_proxies() {
        let mut cfg = ecosystem(Ecosystem::Static, None).unwrap();
        cfg.schedule.birth_interval = 20;
        cfg.schedule.total_stages = 60;
        cfg.rates.mu_b = 2.0;
        cfg.rates.mu_s = 0.1;
        cfg.rates.lambda_b = 1.0;
        let series = run(&cfg).unwrap();
        let at_birth_end = series[19].alive_proxies + series[19].blocked_proxies;
        let at_run_end = series[59].alive_proxies + series[59].blocked_proxies;
        assert_eq!(at_birth_end, 20);
        assert_eq!(at_run_end, 20, "static world must not add proxies after birth");
    }

    #[test]
    fn rho_zero_means_no_agents_and_no_blocks() {
        let mut cfg = small_config();
        cfg.rates.rho_birth = 0.0;
        cfg.rates.rho_stable = 0.0;
        let (series, world) = run_with_world(&cfg).unwrap();
        assert!(world.censor.agents.is_empty());
        assert!(series.iter().all(|m| m.blocked_proxies == 0));
        assert!(series.iter().all(|m| m.agent_count == 0));
    }

    #[test]
    fn clients_connect_in_an_uncensored_world() {
        let mut cfg = small_config();
        cfg.rates.rho_birth = 0.0;
        cfg.rates.rho_stable = 0.0;
        let series = run(&cfg).unwrap();
        let last = series.last().unwrap();
        assert!(last.benign_count > 0);
        assert!(
            last.connected_ratio > 0.9,
            "nearly everyone should be served without a censor, got {}",
            last.connected_ratio
        );
        assert!(last.connected_ratio <= 1.0);
    }

    #[test]
    fn connected_never_exceeds_benign() {
        let mut cfg = small_config();
        cfg.censor.strategy = CensorStrategyKind::Optimal;
        let series = run(&cfg).unwrap();
        for m in &series {
            assert!(m.connected_users <= m.benign_count);
        }
    }

    #[test]
    fn sweep_produces_one_series_per_value() {
        let mut cfg = small_config();
        cfg.schedule.total_stages = 25;
        let out = run_sweep(&cfg, "rates.lambda_s", &[0.5, 2.0]).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].0, 0.5);
        assert_eq!(out[1].0, 2.0);
        assert_eq!(out[0].1.len(), 25);

        assert!(run_sweep(&cfg, "rates.lambda_s", &[]).unwrap().is_empty());
        assert!(run_sweep(&cfg, "rates.bogus", &[1.0]).is_err());
        assert!(run_sweep(&cfg, "censor.strategy", &[1.0]).is_err());
    }

    #[test]
    fn sweep_matches_individual_runs() {
        let mut cfg = small_config();
        cfg.schedule.total_stages = 30;
        let out = run_sweep(&cfg, "rates.rho_stable", &[0.05, 0.2]).unwrap();
        let mut lone = cfg.clone();
        lone.rates.rho_stable = 0.2;
        assert_eq!(out[1].1, run(&lone).unwrap());
    }

    #[test]
    fn invitation_degenerates_to_plain_run() {
        let cfg = small_config();
        assert_eq!(run_invitation_scenario(&cfg).unwrap(), run(&cfg).unwrap());
    }

    #[test]
    fn invitation_spawns_no_agents_during_protected_birth() {
        let mut cfg = small_config();
        cfg.rates.rho_birth = 0.0;
        cfg.rates.rho_stable = 0.5;
        let series = run_invitation_scenario(&cfg).unwrap();
        for m in series.iter().take(cfg.schedule.birth_interval as usize) {
            assert_eq!(m.agent_count, 0);
        }
        assert!(series.last().unwrap().agent_count > 0);
    }

    #[test]
    #[should_panic(expected = "utilization does not match")]
    fn invariant_layer_catches_corruption() {
        let cfg = small_config();
        let mut world = WorldState::new(&cfg);
        for _ in 0..5 {
            world.step(&cfg);
        }
        let pid = *world.proxies.keys().next().unwrap();
        world.proxies.get_mut(&pid).unwrap().total_utilization += 1;
        world.check_invariants();
    }
}
