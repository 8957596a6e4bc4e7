//! Domain types shared by every other module: identifiers, stages, world
//! geometry primitives, and the per-client / per-proxy records the game is
//! played over.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::Scalar;

/// One discrete time step of the game (one simulated day). Stage 0 is the
/// first stage; stages only ever move forward.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Stage(pub u32);

impl Stage {
    pub fn next(self) -> Stage {
        Stage(self.0 + 1)
    }

    /// Stages elapsed since `earlier` (saturating).
    pub fn since(self, earlier: Stage) -> u32 {
        self.0.saturating_sub(earlier.0)
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identifier of a client (benign or censoring agent).
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct ClientId(pub u32);

/// Identifier of a circumvention proxy.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct ProxyId(pub u32);

impl std::fmt::Display for ClientId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "c{}", self.0)
    }
}

impl std::fmt::Display for ProxyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Whether a client is a genuine censored user or a Sybil run by the censor.
/// The distributor never sees this field; it only feeds the censor bookkeeping
/// and the evaluation metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClientKind {
    Benign,
    CensoringAgent,
}

/// A point on the square world map. Coordinates live in
/// `[-world_size/2, world_size/2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: Scalar,
    pub y: Scalar,
}

impl Location {
    pub fn new(x: Scalar, y: Scalar) -> Self {
        Location { x, y }
    }

    pub fn euclidean_distance(&self, other: &Location) -> Scalar {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Per-client state. This doubles as the distributor's ledger for the client:
/// every counter the utility formulas consume lives here.
#[derive(Clone, Debug)]
pub struct ClientRecord {
    pub id: ClientId,
    pub kind: ClientKind,
    pub location: Location,
    /// Proxies the client currently holds in its pool. Discarding a blocked
    /// proxy removes it here but never from `ever_known`.
    pub known_proxies: BTreeSet<ProxyId>,
    /// Every proxy the client has ever been granted.
    pub ever_known: BTreeSet<ProxyId>,
    /// Stages of use per proxy, kept for the lifetime of the client even
    /// after the proxy is discarded.
    pub usage_time: BTreeMap<ProxyId, u32>,
    /// Cached sum of `usage_time` values.
    pub total_usage: u64,
    /// Number of stages in which this client petitioned the distributor.
    pub request_count: u32,
    /// Distinct blocked proxies this client has discarded from its pool.
    pub blocked_known_count: u32,
    /// Accumulated count of idle (unprovoked) requests weighted by the
    /// unused, unblocked proxies held at the time. Stays zero for every
    /// behavior shipped here; the distributor's ranking punishes it hard.
    pub idle_unused_requests: u32,
    /// Proxy currently used for browsing, if any.
    pub active_proxy: Option<ProxyId>,
    pub joined_at: Stage,
    /// First stage of the current unserved waiting episode (benign only).
    pub waiting_since: Option<Stage>,
}

impl ClientRecord {
    pub fn new(id: ClientId, kind: ClientKind, location: Location, joined_at: Stage) -> Self {
        ClientRecord {
            id,
            kind,
            location,
            known_proxies: BTreeSet::new(),
            ever_known: BTreeSet::new(),
            usage_time: BTreeMap::new(),
            total_usage: 0,
            request_count: 0,
            blocked_known_count: 0,
            idle_unused_requests: 0,
            active_proxy: None,
            joined_at,
            waiting_since: None,
        }
    }

    pub fn is_benign(&self) -> bool {
        self.kind == ClientKind::Benign
    }

    pub fn is_agent(&self) -> bool {
        self.kind == ClientKind::CensoringAgent
    }

    /// Stages this client has used `proxy`, zero if never.
    pub fn usage_of(&self, proxy: ProxyId) -> u32 {
        self.usage_time.get(&proxy).copied().unwrap_or(0)
    }

    /// Records that `proxy` entered the client's pool.
    pub fn learn_proxy(&mut self, proxy: ProxyId) {
        self.known_proxies.insert(proxy);
        self.ever_known.insert(proxy);
    }

    /// Drops a blocked proxy from the pool, bumping the blocked counter.
    /// Returns true if the proxy was actually in the pool.
    pub fn discard_blocked(&mut self, proxy: ProxyId) -> bool {
        let removed = self.known_proxies.remove(&proxy);
        if removed {
            self.blocked_known_count += 1;
            if self.active_proxy == Some(proxy) {
                self.active_proxy = None;
            }
        }
        removed
    }
}

/// Per-proxy state, including every importance metric the ranking formulas
/// consume.
#[derive(Clone, Debug)]
pub struct ProxyRecord {
    pub id: ProxyId,
    pub location: Location,
    /// Concurrent-connection capacity.
    pub capacity: u32,
    /// Clients that have ever been handed this proxy's address.
    pub knowers: BTreeSet<ClientId>,
    /// Clients currently connected through this proxy.
    pub connected: BTreeSet<ClientId>,
    /// Total stages of use summed over all clients, ever.
    pub total_utilization: u64,
    pub blocked: bool,
    pub created_at: Stage,
}

impl ProxyRecord {
    pub fn new(id: ProxyId, location: Location, capacity: u32, created_at: Stage) -> Self {
        ProxyRecord {
            id,
            location,
            capacity,
            knowers: BTreeSet::new(),
            connected: BTreeSet::new(),
            total_utilization: 0,
            blocked: false,
            created_at,
        }
    }

    pub fn knower_count(&self) -> u32 {
        self.knowers.len() as u32
    }

    pub fn connected_count(&self) -> u32 {
        self.connected.len() as u32
    }

    pub fn has_free_capacity(&self) -> bool {
        (self.connected.len() as u32) < self.capacity
    }

    /// Free concurrent slots right now.
    pub fn free_capacity(&self) -> u32 {
        self.capacity.saturating_sub(self.connected.len() as u32)
    }

    /// True when the distributor may still hand this proxy out.
    pub fn distributable(&self) -> bool {
        !self.blocked && self.has_free_capacity()
    }
}
