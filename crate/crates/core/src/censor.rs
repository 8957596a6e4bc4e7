//! The central censorship authority: pools its agents' knowledge, decides
//! which discovered proxies to block under the configured strategy, and
//! spreads its agents over the unblocked proxies it knows.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::bipartite::max_bipartite_matching;
use crate::clients::AgentDirective;
use crate::config::{CensorStrategyKind, SimConfig};
use crate::model::{ClientId, ClientRecord, ProxyId, ProxyRecord, Stage};
use crate::rng::RunRng;
use crate::utility::{client_history_base, payoff_from_base, ClientCounters, UtilityParams};
use crate::Scalar;

/// How and through whom the censor learned a proxy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProxyIntel {
    pub discovered_at: Stage,
    pub discovered_by: ClientId,
}

/// Everything the censor knows. Agent histories are not duplicated here: the
/// censor coordinates its own agents, so their counters are by definition the
/// ones in their [`ClientRecord`]s, which the blocking math reads directly.
#[derive(Clone, Debug, Default)]
pub struct CensorState {
    pub agents: BTreeSet<ClientId>,
    /// Proxy addresses reported by agents, with discovery metadata.
    pub known: BTreeMap<ProxyId, ProxyIntel>,
    /// Connection orders for the next stage, refreshed every stage.
    pub directives: BTreeMap<ClientId, AgentDirective>,
}

impl CensorState {
    /// Folds a stage's grants to one agent into the knowledge set.
    pub fn ingest_report(&mut self, agent: ClientId, granted: &BTreeSet<ProxyId>, stage: Stage) {
        debug_assert!(self.agents.contains(&agent));
        for pid in granted {
            self.known.entry(*pid).or_insert(ProxyIntel {
                discovered_at: stage,
                discovered_by: agent,
            });
        }
    }
}

/// Picks the proxies to block this stage.
///
/// Aggressive blocks every known unblocked proxy on sight. Conservative sits
/// on each discovery for `wait` stages, then blocks per-stage with the
/// configured probability, jumping to certainty once the discovering agent is
/// already at the usage cap and gains nothing by waiting. Optimal blocks
/// exactly the proxies whose marginal objective gain is positive.
pub fn decide_blocks(
    censor: &CensorState,
    clients: &BTreeMap<ClientId, ClientRecord>,
    proxies: &BTreeMap<ProxyId, ProxyRecord>,
    stage: Stage,
    cfg: &SimConfig,
    rng: &mut RunRng,
) -> BTreeSet<ProxyId> {
    let mut blocks = BTreeSet::new();
    match cfg.censor.strategy {
        CensorStrategyKind::Aggressive => {
            for pid in censor.known.keys() {
                if !proxies[pid].blocked {
                    blocks.insert(*pid);
                }
            }
        }
        CensorStrategyKind::Conservative => {
            for (pid, intel) in &censor.known {
                if proxies[pid].blocked {
                    continue;
                }
                if stage.since(intel.discovered_at) < cfg.censor.wait {
                    continue;
                }
                let discoverer = &clients[&intel.discovered_by];
                let capped = (discoverer.total_usage as Scalar) >= cfg.utility.usage_cap;
                if capped || rng.gen_bool(cfg.censor.block_probability) {
                    blocks.insert(*pid);
                }
            }
        }
        CensorStrategyKind::Optimal => {
            let params = UtilityParams::from_config(cfg);
            for pid in censor.known.keys() {
                if proxies[pid].blocked {
                    continue;
                }
                if block_gain(censor, clients, proxies, *pid, &params, cfg.utility.omegas) > 0.0 {
                    blocks.insert(*pid);
                }
            }
        }
    }
    blocks
}

/// Marginal objective gain from blocking `target`, holding everything else
/// fixed: the benign connections it strips, minus the weighted losses
/// inflicted on the censor's own agents one stage ahead. The censor directs
/// its own agents' connections, so disconnecting them is no damage; only
/// genuine users count in the connected term.
///
/// Computed incrementally from per-agent counter deltas: a connected agent
/// loses its next usage credit (when still under the cap) and pays one
/// request to replace the proxy; every agent knowing the proxy absorbs one
/// more blocked-proxy mark; an agent pushed below the acceptance threshold
/// by those deltas forfeits its whole score and costs `nu` instead.
pub fn block_gain(
    censor: &CensorState,
    clients: &BTreeMap<ClientId, ClientRecord>,
    proxies: &BTreeMap<ProxyId, ProxyRecord>,
    target: ProxyId,
    params: &UtilityParams<Scalar>,
    omegas: [Scalar; 2],
) -> Scalar {
    let proxy = &proxies[&target];
    debug_assert!(!proxy.blocked);

    let mut agent_losses = 0.0;
    for aid in &censor.agents {
        let agent = &clients[aid];
        let knows = agent.known_proxies.contains(&target);
        if !knows {
            continue;
        }
        let connected_to_target = agent.active_proxy == Some(target);
        let baseline = next_stage_score(agent, proxies, params);

        // usage credit forfeited next stage, zero once the cap absorbs it
        let usage = agent.total_usage as Scalar;
        let usage_gain =
            (usage + 1.0).min(params.usage_cap) - usage.min(params.usage_cap);
        let mut delta = -params.alphas[3]; // one more blocked proxy known
        if connected_to_target {
            delta = delta - params.alphas[0] * usage_gain - params.alphas[1];
        }

        let after = baseline + delta;
        agent_losses += payoff_from_base(after, params) - payoff_from_base(baseline, params);
    }

    omegas[1] * benign_connected(censor, proxy) + omegas[0] * agent_losses
}

/// Connected users of `proxy` that are not the censor's own agents.
fn benign_connected(censor: &CensorState, proxy: &ProxyRecord) -> Scalar {
    proxy
        .connected
        .iter()
        .filter(|cid| !censor.agents.contains(cid))
        .count() as Scalar
}

/// The agent's distance-free score one stage ahead if nothing is blocked:
/// the current counters plus the usage credit it will earn by staying on a
/// live connection.
fn next_stage_score(
    agent: &ClientRecord,
    proxies: &BTreeMap<ProxyId, ProxyRecord>,
    params: &UtilityParams<Scalar>,
) -> Scalar {
    let keeps_using = agent
        .active_proxy
        .is_some_and(|p| !proxies[&p].blocked);
    let counters = ClientCounters {
        total_usage: agent.total_usage + keeps_using as u64,
        requests: agent.request_count,
        idle_unused: agent.idle_unused_requests,
        blocked_known: agent.blocked_known_count,
    };
    client_history_base(counters, params)
}

/// The censor's objective one stage ahead under a hypothetical block set:
/// weighted agent payoffs minus weighted benign connections over the known
/// proxies.
///
/// This is the brute-force oracle for [`block_gain`]: each agent's hit from
/// each blocked proxy is re-derived from scratch by rebuilding the
/// hypothetical counter set and re-evaluating the full score formula. Since
/// every user holds at most one connection, per-proxy effects are treated as
/// independent and summed; cross-proxy interaction of the threshold is
/// deliberately not modeled, matching the per-proxy block rule.
pub fn censor_objective(
    censor: &CensorState,
    clients: &BTreeMap<ClientId, ClientRecord>,
    proxies: &BTreeMap<ProxyId, ProxyRecord>,
    hypothetical_blocks: &BTreeSet<ProxyId>,
    cfg: &SimConfig,
) -> Scalar {
    let params: UtilityParams<Scalar> = UtilityParams::from_config(cfg);
    let omegas = cfg.utility.omegas;

    let mut agent_total = 0.0;
    for aid in &censor.agents {
        let agent = &clients[aid];
        let keeps_using = agent
            .active_proxy
            .is_some_and(|p| !proxies[&p].blocked);
        let baseline_counters = ClientCounters {
            total_usage: agent.total_usage + keeps_using as u64,
            requests: agent.request_count,
            idle_unused: agent.idle_unused_requests,
            blocked_known: agent.blocked_known_count,
        };
        let baseline_payoff =
            payoff_from_base(client_history_base(baseline_counters, &params), &params);

        let mut payoff = baseline_payoff;
        for pid in hypothetical_blocks {
            if proxies[pid].blocked || !agent.known_proxies.contains(pid) {
                continue;
            }
            let connected = agent.active_proxy == Some(*pid);
            let hypothetical = ClientCounters {
                total_usage: agent.total_usage + (keeps_using && !connected) as u64,
                requests: agent.request_count + connected as u32,
                idle_unused: agent.idle_unused_requests,
                blocked_known: agent.blocked_known_count + 1,
            };
            let hit = payoff_from_base(client_history_base(hypothetical, &params), &params);
            payoff += hit - baseline_payoff;
        }
        agent_total += payoff;
    }

    let mut connected_total = 0.0;
    for pid in censor.known.keys() {
        let proxy = &proxies[pid];
        if proxy.blocked || hypothetical_blocks.contains(pid) {
            continue;
        }
        connected_total += benign_connected(censor, proxy);
    }

    omegas[0] * agent_total - omegas[1] * connected_total
}

/// Per-proxy agent tallies behind the blocking rule, reported in the order
/// (connected-and-requesting, of those at the usage cap, knowing, pushed
/// below the threshold). Crossing agents appear only in the last slot.
pub fn blocking_pi_counts(
    censor: &CensorState,
    clients: &BTreeMap<ClientId, ClientRecord>,
    proxies: &BTreeMap<ProxyId, ProxyRecord>,
    target: ProxyId,
    params: &UtilityParams<Scalar>,
) -> [u32; 4] {
    let mut pi = [0u32; 4];
    for aid in &censor.agents {
        let agent = &clients[aid];
        if !agent.known_proxies.contains(&target) {
            continue;
        }
        let connected = agent.active_proxy == Some(target);
        let baseline = next_stage_score(agent, proxies, params);
        if baseline < params.eta {
            continue; // already written off, blocking changes nothing
        }
        let usage = agent.total_usage as Scalar;
        let usage_gain = (usage + 1.0).min(params.usage_cap) - usage.min(params.usage_cap);
        let mut delta = -params.alphas[3];
        if connected {
            delta = delta - params.alphas[0] * usage_gain - params.alphas[1];
        }
        if baseline + delta < params.eta {
            pi[3] += 1;
            continue;
        }
        if connected {
            pi[0] += 1;
            if usage_gain == 0.0 {
                pi[1] += 1;
            }
        }
        pi[2] += 1;
    }
    pi
}

/// The textbook form of the per-proxy blocking gain from pre-tallied counts:
/// `omega2*connected - omega1*((a1+a2)*pi1 - a1*pi2 + a4*pi3 + nu*pi4)`.
pub fn blocking_gain_from_counts(
    connected: u32,
    pi: [u32; 4],
    params: &UtilityParams<Scalar>,
    omegas: [Scalar; 2],
) -> Scalar {
    let [pi1, pi2, pi3, pi4] = pi.map(|v| v as Scalar);
    omegas[1] * connected as Scalar
        - omegas[0]
            * ((params.alphas[0] + params.alphas[1]) * pi1 - params.alphas[0] * pi2
                + params.alphas[3] * pi3
                + params.nu * pi4)
}

/// Decides which known unblocked proxy each agent should connect to next
/// stage, maximizing the number of unique proxies covered. Agents the
/// maximum matching leaves out fall back to a uniformly random proxy from
/// their own pool; agents with nothing left idle.
pub fn assign_agents(
    censor: &CensorState,
    clients: &BTreeMap<ClientId, ClientRecord>,
    proxies: &BTreeMap<ProxyId, ProxyRecord>,
    rng: &mut RunRng,
) -> BTreeMap<ClientId, AgentDirective> {
    let mut pools: BTreeMap<ClientId, Vec<ProxyId>> = BTreeMap::new();
    let mut edges: Vec<(ClientId, ProxyId)> = Vec::new();
    let mut proxy_nodes: BTreeSet<ProxyId> = BTreeSet::new();
    for aid in &censor.agents {
        let pool: Vec<ProxyId> = clients[aid]
            .known_proxies
            .iter()
            .filter(|pid| !proxies[pid].blocked)
            .copied()
            .collect();
        for pid in &pool {
            edges.push((*aid, *pid));
            proxy_nodes.insert(*pid);
        }
        pools.insert(*aid, pool);
    }

    let agent_nodes: Vec<ClientId> = censor.agents.iter().copied().collect();
    let proxy_nodes: Vec<ProxyId> = proxy_nodes.into_iter().collect();
    let matched = max_bipartite_matching(&agent_nodes, &proxy_nodes, &edges);

    let mut directives = BTreeMap::new();
    for aid in &censor.agents {
        let directive = match matched.get(aid) {
            Some(pid) => AgentDirective::Connect(*pid),
            None => {
                let pool = &pools[aid];
                if pool.is_empty() {
                    AgentDirective::Idle
                } else {
                    AgentDirective::Connect(pool[rng.gen_range(0..pool.len())])
                }
            }
        };
        directives.insert(*aid, directive);
    }
    directives
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::config::default_config;
    use crate::model::{ClientKind, Location};
    use rand::SeedableRng;

    fn params() -> UtilityParams<Scalar> {
        UtilityParams::from_config(&default_config())
    }

    #[test]
    fn gain_formula_hand_values() {
        let p = params();
        // three connected users, one agent that loses a request and a usage
        // credit: 100*3 - 1*((1+1)*1) = 298
        assert_eq!(blocking_gain_from_counts(3, [1, 0, 0, 0], &p, [1.0, 100.0]), 298.0);
        // nothing connected, one agent sacrificed: -500
        assert_eq!(blocking_gain_from_counts(0, [0, 0, 0, 1], &p, [1.0, 100.0]), -500.0);
        // a capped agent only loses the request cost
        assert_eq!(
            blocking_gain_from_counts(0, [1, 1, 1, 0], &p, [1.0, 100.0]),
            -(2.0 - 1.0 + 5.0)
        );
    }

    /// Builds the spec'd sacrifice scenario: an agent whose score sits at
    /// exactly the threshold, knowing one unconnected proxy.
    fn sacrifice_world() -> MiniWorld {
        let mut proxies = BTreeMap::new();
        let mut p = ProxyRecord::new(ProxyId(0), Location::new(3000.0, 0.0), 40, Stage(0));
        let mut clients = BTreeMap::new();
        let mut censor = CensorState::default();
        let id = ClientId(0);
        let mut a = ClientRecord::new(id, ClientKind::CensoringAgent, Location::new(0.0, 0.0), Stage(0));
        // score = 10 - 0 - 5*2 = 0, exactly at eta
        a.blocked_known_count = 2;
        a.learn_proxy(ProxyId(0));
        p.knowers.insert(id);
        censor.agents.insert(id);
        censor.known.insert(
            ProxyId(0),
            ProxyIntel { discovered_at: Stage(0), discovered_by: id },
        );
        clients.insert(id, a);
        proxies.insert(ProxyId(0), p);
        MiniWorld { censor, clients, proxies }
    }

    #[test]
    fn optimal_spares_a_pointless_sacrifice() {
        let w = sacrifice_world();
        let gain = block_gain(&w.censor, &w.clients, &w.proxies, ProxyId(0), &params(), [1.0, 100.0]);
        assert_eq!(gain, -500.0);
        let pi = blocking_pi_counts(&w.censor, &w.clients, &w.proxies, ProxyId(0), &params());
        assert_eq!(pi, [0, 0, 0, 1]);

        let mut cfg = default_config();
        cfg.censor.strategy = CensorStrategyKind::Optimal;
        let mut rng = crate::rng::RngStreams::from_seed(0).censor;
        let blocks = decide_blocks(&w.censor, &w.clients, &w.proxies, Stage(1), &cfg, &mut rng);
        assert!(blocks.is_empty());
    }

    #[test]
    fn optimal_blocks_a_loaded_proxy() {
        // three benign users connected, one agent connected alongside: the
        // agent is not damage, so gain = 100*3 - (2 + 5) under defaults
        let mut w = sacrifice_world();
        {
            let p = w.proxies.get_mut(&ProxyId(0)).unwrap();
            for i in 0..3u32 {
                let id = ClientId(100 + i);
                let mut c = ClientRecord::new(id, ClientKind::Benign, Location::new(0.0, 0.0), Stage(0));
                c.learn_proxy(ProxyId(0));
                c.active_proxy = Some(ProxyId(0));
                p.knowers.insert(id);
                p.connected.insert(id);
                w.clients.insert(id, c);
            }
        }
        // make the agent healthy and connected
        {
            let a = w.clients.get_mut(&ClientId(0)).unwrap();
            a.blocked_known_count = 0;
            a.active_proxy = Some(ProxyId(0));
            let p = w.proxies.get_mut(&ProxyId(0)).unwrap();
            p.connected.insert(ClientId(0));
        }
        let gain = block_gain(&w.censor, &w.clients, &w.proxies, ProxyId(0), &params(), [1.0, 100.0]);
        assert_eq!(gain, 100.0 * 3.0 - (1.0 + 1.0 + 5.0));
        let pi = blocking_pi_counts(&w.censor, &w.clients, &w.proxies, ProxyId(0), &params());
        assert_eq!(pi, [1, 0, 1, 0]);
        assert_eq!(
            blocking_gain_from_counts(3, pi, &params(), [1.0, 100.0]),
            gain
        );
    }

    #[test]
    fn aggressive_blocks_on_sight() {
        let w = sacrifice_world();
        let mut cfg = default_config();
        cfg.censor.strategy = CensorStrategyKind::Aggressive;
        let mut rng = crate::rng::RngStreams::from_seed(0).censor;
        let blocks = decide_blocks(&w.censor, &w.clients, &w.proxies, Stage(0), &cfg, &mut rng);
        assert!(blocks.contains(&ProxyId(0)));
    }

    #[test]
    fn conservative_waits_then_flips_coins() {
        let w = sacrifice_world();
        let mut cfg = default_config();
        cfg.censor.strategy = CensorStrategyKind::Conservative;
        cfg.censor.wait = 10;
        cfg.censor.block_probability = 1.0;
        let mut rng = crate::rng::RngStreams::from_seed(0).censor;
        // too early: nothing happens
        let blocks = decide_blocks(&w.censor, &w.clients, &w.proxies, Stage(5), &cfg, &mut rng);
        assert!(blocks.is_empty());
        // past the wait with p=1: blocked
        let blocks = decide_blocks(&w.censor, &w.clients, &w.proxies, Stage(10), &cfg, &mut rng);
        assert!(blocks.contains(&ProxyId(0)));
    }

    #[test]
    fn conservative_blocks_for_sure_once_discoverer_is_capped() {
        let mut w = sacrifice_world();
        w.clients.get_mut(&ClientId(0)).unwrap().total_usage = 100; // at the cap
        let mut cfg = default_config();
        cfg.censor.strategy = CensorStrategyKind::Conservative;
        cfg.censor.wait = 0;
        cfg.censor.block_probability = 0.0; // would never block by coin
        let mut rng = crate::rng::RngStreams::from_seed(0).censor;
        let blocks = decide_blocks(&w.censor, &w.clients, &w.proxies, Stage(3), &cfg, &mut rng);
        assert!(blocks.contains(&ProxyId(0)));
    }

    #[test]
    fn objective_base_cases() {
        let cfg = default_config();
        let empty = MiniWorld {
            censor: CensorState::default(),
            clients: BTreeMap::new(),
            proxies: BTreeMap::new(),
        };
        assert_eq!(
            censor_objective(&empty.censor, &empty.clients, &empty.proxies, &BTreeSet::new(), &cfg),
            0.0
        );

        // one unconnected fresh agent at score 10, nobody connected
        let mut w = sacrifice_world();
        w.clients.get_mut(&ClientId(0)).unwrap().blocked_known_count = 0;
        assert_eq!(
            censor_objective(&w.censor, &w.clients, &w.proxies, &BTreeSet::new(), &cfg),
            10.0
        );
    }

    #[test]
    fn gain_matches_objective_difference_on_random_worlds() {
        let cfg = default_config();
        let p = params();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2024);
        for _ in 0..150 {
            let w = random_mini_world(&mut rng);
            let base = censor_objective(&w.censor, &w.clients, &w.proxies, &BTreeSet::new(), &cfg);
            let candidates: Vec<ProxyId> = w
                .censor
                .known
                .keys()
                .filter(|pid| !w.proxies[pid].blocked)
                .copied()
                .collect();
            let mut sum = 0.0;
            for pid in &candidates {
                let single: BTreeSet<ProxyId> = [*pid].into();
                let objective =
                    censor_objective(&w.censor, &w.clients, &w.proxies, &single, &cfg);
                let gain = block_gain(&w.censor, &w.clients, &w.proxies, *pid, &p, cfg.utility.omegas);
                assert!(
                    (objective - base - gain).abs() < 1e-9,
                    "single-block mismatch: {} vs {}",
                    objective - base,
                    gain
                );
                sum += gain;
            }
            // additivity over the full candidate set
            let all: BTreeSet<ProxyId> = candidates.iter().copied().collect();
            let joint = censor_objective(&w.censor, &w.clients, &w.proxies, &all, &cfg);
            assert!((joint - base - sum).abs() < 1e-9);
        }
    }

    #[test]
    fn agent_spread_maximizes_unique_proxies() {
        let mut w = sacrifice_world();
        // second agent knowing {p0, p1}; first knows only p0
        let mut p1 = ProxyRecord::new(ProxyId(1), Location::new(4000.0, 0.0), 40, Stage(0));
        let id = ClientId(1);
        let mut a = ClientRecord::new(id, ClientKind::CensoringAgent, Location::new(0.0, 0.0), Stage(0));
        a.learn_proxy(ProxyId(0));
        a.learn_proxy(ProxyId(1));
        w.proxies.get_mut(&ProxyId(0)).unwrap().knowers.insert(id);
        p1.knowers.insert(id);
        w.proxies.insert(ProxyId(1), p1);
        w.censor.agents.insert(id);
        w.clients.insert(id, a);

        let mut rng = crate::rng::RngStreams::from_seed(0).censor;
        let directives = assign_agents(&w.censor, &w.clients, &w.proxies, &mut rng);
        assert_eq!(directives[&ClientId(0)], AgentDirective::Connect(ProxyId(0)));
        assert_eq!(directives[&ClientId(1)], AgentDirective::Connect(ProxyId(1)));
    }

    #[test]
    fn unmatched_agent_falls_back_to_its_pool() {
        // both agents know only p0: one is matched, the other lands on p0 anyway
        let mut w = sacrifice_world();
        let id = ClientId(1);
        let mut a = ClientRecord::new(id, ClientKind::CensoringAgent, Location::new(0.0, 0.0), Stage(0));
        a.learn_proxy(ProxyId(0));
        w.proxies.get_mut(&ProxyId(0)).unwrap().knowers.insert(id);
        w.censor.agents.insert(id);
        w.clients.insert(id, a);

        let mut rng = crate::rng::RngStreams::from_seed(0).censor;
        let directives = assign_agents(&w.censor, &w.clients, &w.proxies, &mut rng);
        assert_eq!(directives[&ClientId(0)], AgentDirective::Connect(ProxyId(0)));
        assert_eq!(directives[&ClientId(1)], AgentDirective::Connect(ProxyId(0)));
    }

    #[test]
    fn empty_pool_idles() {
        let mut censor = CensorState::default();
        let id = ClientId(0);
        censor.agents.insert(id);
        let mut clients = BTreeMap::new();
        clients.insert(
            id,
            ClientRecord::new(id, ClientKind::CensoringAgent, Location::new(0.0, 0.0), Stage(0)),
        );
        let proxies = BTreeMap::new();
        let mut rng = crate::rng::RngStreams::from_seed(0).censor;
        let directives = assign_agents(&censor, &clients, &proxies, &mut rng);
        assert_eq!(directives[&id], AgentDirective::Idle);
    }
}
