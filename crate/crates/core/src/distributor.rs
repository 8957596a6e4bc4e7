//! The central distributor: turns a stage's requests into both sides'
//! preference lists, runs deferred acceptance, and applies the grants to the
//! world, plus the uniform-random baseline used for comparison.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::SimConfig;
use crate::geometry::normalized_distance;
use crate::matching::{
    deferred_acceptance, ApplicantPrefs, Matching, PreferenceTable, ProviderPrefs,
};
use crate::model::{ClientId, ClientRecord, ProxyId, ProxyRecord, Stage};
use crate::rng::RunRng;
use crate::utility::{proxy_utility_base, RankKey, UtilityParams};
use crate::Scalar;

/// The petitions collected during one stage.
#[derive(Clone, Debug, Default)]
pub struct RequestBatch {
    pub stage: Stage,
    /// Every client that petitioned this stage.
    pub requesters: BTreeSet<ClientId>,
    /// The subset that joined the system this stage.
    pub new_joiners: BTreeSet<ClientId>,
    /// Requests submitted without having lost a proxy and with a non-empty
    /// pool. These draw the idle-request penalty. Both shipped client
    /// behaviors only ever request after a loss or with a dry pool, so this
    /// stays empty during simulation.
    pub unprovoked: BTreeSet<ClientId>,
}

impl RequestBatch {
    pub fn new(stage: Stage) -> Self {
        RequestBatch {
            stage,
            ..RequestBatch::default()
        }
    }
}

/// A stage assignment plus the waiting episodes it closed.
#[derive(Clone, Debug)]
pub struct AssignmentOutcome {
    pub matching: Matching<ClientId, ProxyId>,
    /// Stages waited by each benign client served this stage after waiting.
    pub fulfilled_waits: Vec<u32>,
}

/// One scored applicant-candidate pair: both sides' ranking keys plus the
/// pre-drawn coin flips that break indifference.
type ScoredPair = (RankKey<Scalar>, RankKey<Scalar>, u64, u64, ProxyId);

/// All scored pairs for one stage, from which preference tables of any list
/// depth can be materialized without further randomness.
struct ScoredBatch {
    quota: usize,
    /// Per applicant: id and its scored candidates (arbitrary order).
    applicants: Vec<(ClientId, Vec<ScoredPair>)>,
    /// Free seats per candidate proxy.
    provider_quota: BTreeMap<ProxyId, usize>,
}

/// Scores every eligible (requester, candidate proxy) pair.
///
/// Requesters whose distance-free score falls below the acceptance threshold
/// are excluded outright. Candidates are the unblocked, under-capacity
/// proxies the requester does not already know. Each applicant ranks
/// candidates by descending distance-exponentiated proxy appeal; each proxy
/// ranks its applicants by their descending distance-exponentiated score.
/// Indifference is resolved by coin flips drawn here, one per pair and side,
/// so everything downstream is deterministic.
fn score_pairs(
    batch: &RequestBatch,
    clients: &BTreeMap<ClientId, ClientRecord>,
    proxies: &BTreeMap<ProxyId, ProxyRecord>,
    cfg: &SimConfig,
    rng: &mut RunRng,
) -> ScoredBatch {
    let params: UtilityParams<Scalar> = UtilityParams::from_config(cfg);

    struct Candidate {
        id: ProxyId,
        location: crate::model::Location,
        appeal_sign: i8,
        appeal_ln: Scalar,
    }
    let mut provider_quota = BTreeMap::new();
    let candidates: Vec<Candidate> = proxies
        .values()
        .filter(|p| p.distributable())
        .map(|p| {
            let base = crate::utility::proxy_appeal_base(
                p.knower_count(),
                p.connected_count(),
                p.total_utilization,
                &params,
            );
            provider_quota.insert(p.id, p.free_capacity() as usize);
            Candidate {
                id: p.id,
                location: p.location,
                appeal_sign: if base > 0.0 { 1 } else { 0 },
                appeal_ln: if base > 0.0 { base.ln() } else { 0.0 },
            }
        })
        .collect();

    let mut applicants = Vec::new();
    for cid in &batch.requesters {
        let client = &clients[cid];
        let score = proxy_utility_base(client, &params);
        if score < params.eta {
            continue;
        }
        let score_sign = if score > 0.0 {
            1
        } else if score < 0.0 {
            -1
        } else {
            0
        };
        let score_ln = if score_sign == 0 { 0.0 } else { score.abs().ln() };

        let mut pairs: Vec<ScoredPair> = Vec::with_capacity(candidates.len());
        for cand in &candidates {
            if client.ever_known.contains(&cand.id) {
                continue;
            }
            let exponent = normalized_distance(&client.location, &cand.location, cfg).recip();
            pairs.push((
                RankKey::from_parts(cand.appeal_sign, exponent * cand.appeal_ln),
                RankKey::from_parts(score_sign, exponent * score_ln),
                rng.gen(),
                rng.gen(),
                cand.id,
            ));
        }
        if !pairs.is_empty() {
            applicants.push((*cid, pairs));
        }
    }

    ScoredBatch {
        quota: cfg.distribution.k as usize,
        applicants,
        provider_quota,
    }
}

impl ScoredBatch {
    /// Materializes the preference table, keeping only each applicant's
    /// `depth` best candidates (all of them when `depth` is None). The
    /// truncated table induces the same matching as the full one as long as
    /// no applicant both exhausts a truncated list and falls short of its
    /// quota; [`assign`] retries with the full table when that happens.
    fn table(&self, depth: Option<usize>) -> PreferenceTable<ClientId, ProxyId> {
        let mut table = PreferenceTable::new();
        let mut provider_entries: BTreeMap<ProxyId, Vec<(RankKey<Scalar>, u64, ClientId)>> =
            BTreeMap::new();

        for (cid, pairs) in &self.applicants {
            let mut pairs: Vec<ScoredPair> = pairs.clone();
            let keep = depth.unwrap_or(pairs.len()).min(pairs.len());
            let client_order = |a: &ScoredPair, b: &ScoredPair| b.0.cmp(&a.0).then(a.2.cmp(&b.2));
            if keep < pairs.len() {
                pairs.select_nth_unstable_by(keep, client_order);
                pairs.truncate(keep);
            }
            pairs.sort_unstable_by(client_order);

            for (_, proxy_key, _, tie, pid) in &pairs {
                provider_entries
                    .entry(*pid)
                    .or_default()
                    .push((*proxy_key, *tie, *cid));
            }
            table.applicants.push(ApplicantPrefs {
                id: *cid,
                quota: self.quota,
                preferences: pairs.into_iter().map(|(_, _, _, _, p)| p).collect(),
            });
        }

        for (pid, mut entries) in provider_entries {
            entries.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            table.providers.push(ProviderPrefs {
                id: pid,
                quota: self.provider_quota[&pid],
                ranking: entries.into_iter().map(|(_, _, a)| a).collect(),
            });
        }
        table
    }

    fn full_list_len(&self, applicant: ClientId) -> usize {
        self.applicants
            .iter()
            .find(|(cid, _)| *cid == applicant)
            .map_or(0, |(_, pairs)| pairs.len())
    }
}

/// Builds the stage's full preference table (every applicant ranks every
/// admissible candidate).
pub fn build_preferences(
    batch: &RequestBatch,
    clients: &BTreeMap<ClientId, ClientRecord>,
    proxies: &BTreeMap<ProxyId, ProxyRecord>,
    cfg: &SimConfig,
    rng: &mut RunRng,
) -> PreferenceTable<ClientId, ProxyId> {
    score_pairs(batch, clients, proxies, cfg, rng).table(None)
}

/// One full game-theoretic assignment round: build the table, run deferred
/// acceptance, and apply the result to the world records.
///
/// The matching runs over lists truncated well past the quota; in the rare
/// round where some applicant exhausts a truncated list while still short of
/// seats, the round reruns on the full table, so the outcome always equals
/// the full-table matching.
pub fn assign(
    batch: &RequestBatch,
    clients: &mut BTreeMap<ClientId, ClientRecord>,
    proxies: &mut BTreeMap<ProxyId, ProxyRecord>,
    cfg: &SimConfig,
    rng: &mut RunRng,
) -> AssignmentOutcome {
    let scored = score_pairs(batch, clients, proxies, cfg, rng);
    let depth = (cfg.distribution.k as usize * 8).max(32);
    let mut table = scored.table(Some(depth));
    let mut matching = deferred_acceptance(&table);

    let needs_full_lists = table.applicants.iter().any(|a| {
        let held = matching.seats_of(&a.id).map_or(0, |s| s.len());
        held < a.quota && a.preferences.len() < scored.full_list_len(a.id)
    });
    if needs_full_lists {
        table = scored.table(None);
        matching = deferred_acceptance(&table);
    }

    let fulfilled_waits = apply_grants(&matching, batch, clients, proxies);
    AssignmentOutcome {
        matching,
        fulfilled_waits,
    }
}

/// The reputation-free baseline: every requester, regardless of history,
/// receives `k` uniformly random proxies among the unblocked, under-capacity
/// ones it does not already know.
pub fn assign_uniform_baseline(
    batch: &RequestBatch,
    clients: &mut BTreeMap<ClientId, ClientRecord>,
    proxies: &mut BTreeMap<ProxyId, ProxyRecord>,
    cfg: &SimConfig,
    rng: &mut RunRng,
) -> AssignmentOutcome {
    let k = cfg.distribution.k as usize;
    let mut promised: BTreeMap<ProxyId, u32> = BTreeMap::new();
    let mut assignments: BTreeMap<ClientId, BTreeSet<ProxyId>> = BTreeMap::new();

    for cid in &batch.requesters {
        let client = &clients[cid];
        let eligible: Vec<ProxyId> = proxies
            .values()
            .filter(|p| !p.blocked)
            .filter(|p| {
                p.connected_count() + promised.get(&p.id).copied().unwrap_or(0) < p.capacity
            })
            .filter(|p| !client.ever_known.contains(&p.id))
            .map(|p| p.id)
            .collect();
        let chosen: BTreeSet<ProxyId> = eligible.choose_multiple(rng, k).copied().collect();
        for pid in &chosen {
            *promised.entry(*pid).or_insert(0) += 1;
        }
        if !chosen.is_empty() {
            assignments.insert(*cid, chosen);
        }
    }

    let matching = Matching { assignments };
    let fulfilled_waits = apply_grants(&matching, batch, clients, proxies);
    AssignmentOutcome {
        matching,
        fulfilled_waits,
    }
}

/// Applies a stage's grants: request counters for every petitioner, pool and
/// knower updates for every granted pair, and waiting-episode bookkeeping.
fn apply_grants(
    matching: &Matching<ClientId, ProxyId>,
    batch: &RequestBatch,
    clients: &mut BTreeMap<ClientId, ClientRecord>,
    proxies: &mut BTreeMap<ProxyId, ProxyRecord>,
) -> Vec<u32> {
    for cid in &batch.requesters {
        let client = clients.get_mut(cid).expect("requester exists");
        client.request_count += 1;
        if batch.unprovoked.contains(cid) {
            let idle = client
                .known_proxies
                .iter()
                .filter(|pid| !proxies[pid].blocked && client.usage_of(**pid) == 0)
                .count();
            client.idle_unused_requests += idle as u32;
        }
    }

    let mut fulfilled = Vec::new();
    for (cid, granted) in &matching.assignments {
        let client = clients.get_mut(cid).expect("granted client exists");
        for pid in granted {
            let proxy = proxies.get_mut(pid).expect("granted proxy exists");
            assert!(!proxy.blocked, "distributor revealed a blocked proxy");
            client.learn_proxy(*pid);
            proxy.knowers.insert(*cid);
        }
        if let Some(since) = client.waiting_since.take() {
            fulfilled.push(batch.stage.since(since));
        }
    }

    for cid in &batch.requesters {
        if matching.assignments.contains_key(cid) {
            continue;
        }
        let client = clients.get_mut(cid).expect("requester exists");
        if client.is_benign() && client.known_proxies.is_empty() && client.waiting_since.is_none() {
            client.waiting_since = Some(batch.stage);
        }
    }
    fulfilled
}
