//! Per-stage behavior of individual clients: the benign probe-and-discard
//! strategy and the mechanical execution of censor directives by agents.

use std::collections::BTreeMap;

use crate::model::{ClientRecord, ProxyId, ProxyRecord, Stage};

/// What a client did this stage. The step functions mutate the client's own
/// pool bookkeeping; the chosen connection is applied by the caller through
/// [`use_proxy`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepOutcome {
    /// Proxy to use for browsing this stage, if any.
    pub use_proxy: Option<ProxyId>,
    /// Whether the client petitions the distributor this stage.
    pub request: bool,
    /// Blocked proxies discarded from the pool during this step.
    pub discarded: u32,
}

/// Directive handed to a censoring agent by its coordinator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgentDirective {
    Connect(ProxyId),
    Idle,
}

/// A benign client's stage strategy: keep using the current proxy if it is
/// still reachable; otherwise discard blocked proxies while scanning the pool
/// for a connectable one. A request goes out whenever a proxy was lost this
/// stage or the pool has run dry; healthy-but-full proxies are kept and
/// retried later.
pub fn benign_step(
    client: &mut ClientRecord,
    proxies: &BTreeMap<ProxyId, ProxyRecord>,
    _stage: Stage,
) -> StepOutcome {
    debug_assert!(client.is_benign());
    let mut discarded = 0u32;

    if let Some(active) = client.active_proxy {
        let proxy = &proxies[&active];
        if !proxy.blocked {
            return StepOutcome {
                use_proxy: Some(active),
                request: false,
                discarded: 0,
            };
        }
        client.discard_blocked(active);
        discarded += 1;
    }

    let mut chosen = None;
    for pid in client.known_proxies.clone() {
        let proxy = &proxies[&pid];
        if proxy.blocked {
            client.discard_blocked(pid);
            discarded += 1;
            continue;
        }
        if proxy.has_free_capacity() || proxy.connected.contains(&client.id) {
            chosen = Some(pid);
            break;
        }
        // full but healthy: keep it in the pool and look further
    }

    let request = discarded > 0 || client.known_proxies.is_empty();
    StepOutcome {
        use_proxy: chosen,
        request,
        discarded,
    }
}

/// Connects `client` through `proxy` for this stage, accruing one stage of
/// usage on both records. Returns false (leaving the client disconnected
/// this stage) when the proxy has no free slot for a new connection.
pub fn use_proxy(client: &mut ClientRecord, proxy: &mut ProxyRecord, _stage: Stage) -> bool {
    assert!(!proxy.blocked, "clients cannot connect to a blocked proxy");
    if !proxy.connected.contains(&client.id) {
        if !proxy.has_free_capacity() {
            return false;
        }
        proxy.connected.insert(client.id);
    }
    *client.usage_time.entry(proxy.id).or_insert(0) += 1;
    client.total_usage += 1;
    proxy.total_utilization += 1;
    client.active_proxy = Some(proxy.id);
    true
}

/// A censoring agent's stage behavior. The agent's pool is synced against
/// the coordinator's block knowledge first (agents do not need to probe),
/// then the directive is executed. Agents petition the distributor only to
/// replace a lost connection or an emptied pool; they never request while
/// idle proxies sit unused.
pub fn agent_step(
    agent: &mut ClientRecord,
    directive: AgentDirective,
    proxies: &BTreeMap<ProxyId, ProxyRecord>,
) -> StepOutcome {
    debug_assert!(agent.is_agent());
    let mut discarded = 0u32;
    let mut lost_connection = false;

    for pid in agent.known_proxies.clone() {
        if proxies[&pid].blocked {
            if agent.active_proxy == Some(pid) {
                lost_connection = true;
            }
            agent.discard_blocked(pid);
            discarded += 1;
        }
    }

    let connectable = |pid: ProxyId| {
        let p = &proxies[&pid];
        !p.blocked && (p.has_free_capacity() || p.connected.contains(&agent.id))
    };

    let use_proxy = match directive {
        AgentDirective::Connect(target) if agent.known_proxies.contains(&target) => {
            if connectable(target) {
                Some(target)
            } else {
                // target full: keep the current connection if it survives
                agent.active_proxy.filter(|p| connectable(*p))
            }
        }
        // unknown target or an explicit idle directive
        _ => None,
    };

    let request = lost_connection || agent.known_proxies.is_empty();
    StepOutcome {
        use_proxy,
        request,
        discarded,
    }
}
