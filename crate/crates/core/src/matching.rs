//! Deferred acceptance with quotas on both sides, plus the stability check
//! used to validate its output.
//!
//! Applicants propose down their preference lists until they tentatively hold
//! their quota of seats or run out of providers; providers keep their best
//! tentative applicants up to their own quota and reject the rest. All tie
//! breaking happens before the table is built, so the procedure itself is
//! deterministic.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::fmt::Debug;
use std::hash::Hash;

/// Identifier usable on either side of a matching table.
pub trait MatchId: Copy + Ord + Eq + Hash + Debug {}
impl<T: Copy + Ord + Eq + Hash + Debug> MatchId for T {}

/// One applicant: wants up to `quota` seats, ranked best-first over
/// `preferences`. Providers missing from the list are unacceptable to it.
#[derive(Clone, Debug)]
pub struct ApplicantPrefs<A, P> {
    pub id: A,
    pub quota: usize,
    pub preferences: Vec<P>,
}

/// One provider: offers `quota` seats, ranks applicants best-first in
/// `ranking`. Applicants missing from the ranking are never admitted.
#[derive(Clone, Debug)]
pub struct ProviderPrefs<P, A> {
    pub id: P,
    pub quota: usize,
    pub ranking: Vec<A>,
}

/// Both sides' materialized preferences for one round of the game.
#[derive(Clone, Debug, Default)]
pub struct PreferenceTable<A, P> {
    pub applicants: Vec<ApplicantPrefs<A, P>>,
    pub providers: Vec<ProviderPrefs<P, A>>,
}

impl<A: MatchId, P: MatchId> PreferenceTable<A, P> {
    pub fn new() -> Self {
        PreferenceTable {
            applicants: Vec::new(),
            providers: Vec::new(),
        }
    }

    /// Structural sanity: positive quotas, no duplicate ids, no duplicate
    /// list entries, and every listed id declared on the other side.
    pub fn validate(&self) -> Result<(), String> {
        let mut app_ids = BTreeSet::new();
        let mut prov_ids = BTreeSet::new();
        for a in &self.applicants {
            if !app_ids.insert(a.id) {
                return Err(format!("duplicate applicant {:?}", a.id));
            }
            if a.quota == 0 {
                return Err(format!("applicant {:?} has zero quota", a.id));
            }
        }
        for p in &self.providers {
            if !prov_ids.insert(p.id) {
                return Err(format!("duplicate provider {:?}", p.id));
            }
            if p.quota == 0 {
                return Err(format!("provider {:?} has zero quota", p.id));
            }
        }
        for a in &self.applicants {
            let mut seen = BTreeSet::new();
            for pref in &a.preferences {
                if !seen.insert(*pref) {
                    return Err(format!("applicant {:?} lists {:?} twice", a.id, pref));
                }
                if !prov_ids.contains(pref) {
                    return Err(format!("applicant {:?} lists unknown provider {:?}", a.id, pref));
                }
            }
        }
        for p in &self.providers {
            let mut seen = BTreeSet::new();
            for r in &p.ranking {
                if !seen.insert(*r) {
                    return Err(format!("provider {:?} ranks {:?} twice", p.id, r));
                }
                if !app_ids.contains(r) {
                    return Err(format!("provider {:?} ranks unknown applicant {:?}", p.id, r));
                }
            }
        }
        Ok(())
    }
}

/// Result of a matching round: which providers each applicant holds.
/// Applicants that received nothing are simply absent.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Matching<A: MatchId, P: MatchId> {
    pub assignments: BTreeMap<A, BTreeSet<P>>,
}

impl<A: MatchId, P: MatchId> Matching<A, P> {
    pub fn seats_of(&self, applicant: &A) -> Option<&BTreeSet<P>> {
        self.assignments.get(applicant)
    }

    pub fn total_seats(&self) -> usize {
        self.assignments.values().map(|s| s.len()).sum()
    }
}

/// Applicant-proposing deferred acceptance generalized to applicant quotas.
///
/// The output is stable with respect to the table and applicant-optimal
/// among stable matchings. An empty table yields an empty matching.
pub fn deferred_acceptance<A: MatchId, P: MatchId>(table: &PreferenceTable<A, P>) -> Matching<A, P> {
    debug_assert!(table.validate().is_ok());

    let prov_index: HashMap<P, usize> = table
        .providers
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id, i))
        .collect();
    // rank positions per provider; absent applicants are unacceptable
    let prov_rank: Vec<HashMap<A, usize>> = table
        .providers
        .iter()
        .map(|p| p.ranking.iter().enumerate().map(|(i, a)| (*a, i)).collect())
        .collect();

    // max-heap keyed by rank position, so the worst tentative admit pops first
    let mut held: Vec<BinaryHeap<(usize, usize)>> = vec![BinaryHeap::new(); table.providers.len()];
    let mut seats: Vec<Vec<P>> = vec![Vec::new(); table.applicants.len()];
    let mut cursor: Vec<usize> = vec![0; table.applicants.len()];

    let mut queue: VecDeque<usize> = (0..table.applicants.len()).collect();
    let mut proposals = 0usize;
    let proposal_bound: usize = table.applicants.iter().map(|a| a.preferences.len()).sum();

    while let Some(ai) = queue.pop_front() {
        let applicant = &table.applicants[ai];
        while seats[ai].len() < applicant.quota && cursor[ai] < applicant.preferences.len() {
            let target = applicant.preferences[cursor[ai]];
            cursor[ai] += 1;
            proposals += 1;
            assert!(proposals <= proposal_bound, "deferred acceptance failed to terminate");

            let pi = prov_index[&target];
            let my_rank = match prov_rank[pi].get(&applicant.id) {
                Some(r) => *r,
                None => continue, // provider never admits this applicant
            };
            if held[pi].len() < table.providers[pi].quota {
                held[pi].push((my_rank, ai));
                seats[ai].push(target);
            } else if let Some(&(worst_rank, worst_ai)) = held[pi].peek() {
                if my_rank < worst_rank {
                    held[pi].pop();
                    seats[worst_ai].retain(|p| *p != target);
                    queue.push_back(worst_ai);
                    held[pi].push((my_rank, ai));
                    seats[ai].push(target);
                }
            }
        }
    }

    let mut assignments = BTreeMap::new();
    for (ai, held_seats) in seats.into_iter().enumerate() {
        if !held_seats.is_empty() {
            assignments.insert(table.applicants[ai].id, held_seats.into_iter().collect());
        }
    }
    Matching { assignments }
}

/// True iff no applicant-provider pair blocks `matching`: a pair blocks when
/// the applicant either has spare quota or prefers the provider to one of
/// its held seats, while the provider either has spare quota or prefers the
/// applicant to one of its admits (and ranks the applicant at all).
pub fn is_stable<A: MatchId, P: MatchId>(
    table: &PreferenceTable<A, P>,
    matching: &Matching<A, P>,
) -> bool {
    let prov_rank: HashMap<P, HashMap<A, usize>> = table
        .providers
        .iter()
        .map(|p| {
            (
                p.id,
                p.ranking.iter().enumerate().map(|(i, a)| (*a, i)).collect(),
            )
        })
        .collect();
    let prov_quota: HashMap<P, usize> = table.providers.iter().map(|p| (p.id, p.quota)).collect();

    // provider -> rank positions of its current admits
    let mut admits: HashMap<P, Vec<usize>> = HashMap::new();
    for (a, seats) in &matching.assignments {
        for p in seats {
            let rank = prov_rank[p].get(a).expect("assigned pair must be ranked");
            admits.entry(*p).or_default().push(*rank);
        }
    }

    for applicant in &table.applicants {
        let held = matching.seats_of(&applicant.id);
        let held_count = held.map_or(0, |s| s.len());
        // preference position of the applicant's worst held seat
        let worst_held_pos = held.map(|seats| {
            applicant
                .preferences
                .iter()
                .enumerate()
                .filter(|(_, p)| seats.contains(p))
                .map(|(i, _)| i)
                .max()
                .expect("held seats appear in the preference list")
        });

        for (pos, p) in applicant.preferences.iter().enumerate() {
            if let Some(seats) = held {
                if seats.contains(p) {
                    continue;
                }
            }
            let wants = held_count < applicant.quota || worst_held_pos.is_some_and(|w| pos < w);
            if !wants {
                continue;
            }
            let Some(my_rank) = prov_rank[p].get(&applicant.id) else {
                continue;
            };
            let taken = admits.get(p).map_or(0, |v| v.len());
            let reciprocates = taken < prov_quota[p]
                || admits[p].iter().any(|admitted| my_rank < admitted);
            if reciprocates {
                return false;
            }
        }
    }
    true
}

/// Whether `preferred` weakly dominates `other` for this applicant under
/// responsive preferences: at least as many seats, and the k-th best seat of
/// `preferred` is ranked no worse than the k-th best of `other`.
pub fn weakly_prefers<A: MatchId, P: MatchId>(
    applicant: &ApplicantPrefs<A, P>,
    preferred: &BTreeSet<P>,
    other: &BTreeSet<P>,
) -> bool {
    let pos: HashMap<P, usize> = applicant
        .preferences
        .iter()
        .enumerate()
        .map(|(i, p)| (*p, i))
        .collect();
    let mut a: Vec<usize> = preferred.iter().map(|p| pos[p]).collect();
    let mut b: Vec<usize> = other.iter().map(|p| pos[p]).collect();
    a.sort_unstable();
    b.sort_unstable();
    if a.len() < b.len() {
        return false;
    }
    b.iter().zip(&a).all(|(ob, pa)| pa <= ob)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Enumerates every quota-respecting matching of `table` and returns the
    /// stable ones. Exponential; intended for tiny instances only.
    pub fn enumerate_stable<A: MatchId, P: MatchId>(
        table: &PreferenceTable<A, P>,
    ) -> Vec<Matching<A, P>> {
        let mut per_applicant_choices: Vec<Vec<Vec<P>>> = Vec::new();
        for a in &table.applicants {
            // all subsets of the preference list up to the quota
            let mut choices: Vec<Vec<P>> = vec![Vec::new()];
            for p in &a.preferences {
                let mut extended = Vec::new();
                for c in &choices {
                    if c.len() < a.quota {
                        let mut bigger = c.clone();
                        bigger.push(*p);
                        extended.push(bigger);
                    }
                }
                choices.extend(extended);
            }
            per_applicant_choices.push(choices);
        }

        let quota: HashMap<P, usize> = table.providers.iter().map(|p| (p.id, p.quota)).collect();
        let ranked: HashMap<P, BTreeSet<A>> = table
            .providers
            .iter()
            .map(|p| (p.id, p.ranking.iter().copied().collect()))
            .collect();

        let mut stable = Vec::new();
        let mut current: Vec<Vec<P>> = Vec::new();
        fn recurse<A: MatchId, P: MatchId>(
            table: &PreferenceTable<A, P>,
            per_applicant_choices: &[Vec<Vec<P>>],
            quota: &HashMap<P, usize>,
            ranked: &HashMap<P, BTreeSet<A>>,
            load: &mut HashMap<P, usize>,
            current: &mut Vec<Vec<P>>,
            out: &mut Vec<Matching<A, P>>,
        ) {
            let ai = current.len();
            if ai == table.applicants.len() {
                let mut assignments = BTreeMap::new();
                for (i, seats) in current.iter().enumerate() {
                    if !seats.is_empty() {
                        assignments
                            .insert(table.applicants[i].id, seats.iter().copied().collect());
                    }
                }
                let m = Matching { assignments };
                if is_stable(table, &m) {
                    out.push(m);
                }
                return;
            }
            'choice: for choice in &per_applicant_choices[ai] {
                // provider must rank the applicant and have room
                for p in choice {
                    if !ranked[p].contains(&table.applicants[ai].id) {
                        continue 'choice;
                    }
                    if load.get(p).copied().unwrap_or(0) + 1 > quota[p] {
                        continue 'choice;
                    }
                }
                for p in choice {
                    *load.entry(*p).or_insert(0) += 1;
                }
                current.push(choice.clone());
                recurse(table, per_applicant_choices, quota, ranked, load, current, out);
                current.pop();
                for p in choice {
                    *load.get_mut(p).unwrap() -= 1;
                }
            }
        }
        recurse(
            table,
            &per_applicant_choices,
            &quota,
            &ranked,
            &mut HashMap::new(),
            &mut current,
            &mut stable,
        );
        stable
    }

    /// Random small tables for the stability and optimality properties.
    pub fn random_table(
        rng: &mut impl rand::Rng,
        max_applicants: usize,
        max_providers: usize,
        max_quota: usize,
    ) -> PreferenceTable<u32, u32> {
        use rand::seq::SliceRandom;
        let n_apps = rng.gen_range(0..=max_applicants);
        let n_provs = rng.gen_range(1..=max_providers);
        let mut table = PreferenceTable::new();
        for p in 0..n_provs {
            let mut ranking: Vec<u32> = (0..n_apps as u32)
                .filter(|_| rng.gen_bool(0.9))
                .collect();
            ranking.shuffle(rng);
            table.providers.push(ProviderPrefs {
                id: p as u32,
                quota: rng.gen_range(1..=max_quota),
                ranking,
            });
        }
        for a in 0..n_apps {
            let mut preferences: Vec<u32> = (0..n_provs as u32)
                .filter(|_| rng.gen_bool(0.8))
                .collect();
            preferences.shuffle(rng);
            table.applicants.push(ApplicantPrefs {
                id: a as u32,
                quota: rng.gen_range(1..=max_quota),
                preferences,
            });
        }
        table
    }
}
