//! Hopcroft-Karp maximum-cardinality matching on a bipartite graph, used by
//! the censor to spread its agents over as many unique proxies as possible.

use std::collections::{BTreeMap, HashMap};

use crate::matching::MatchId;

const INFINITY: u32 = u32::MAX;
const NIL: usize = usize::MAX;

/// Returns a maximum-cardinality matching as a left-to-right map. Nodes left
/// unmatched are absent. Inputs are index-compressed and sorted internally,
/// so the result is deterministic regardless of edge order.
pub fn max_bipartite_matching<L: MatchId, R: MatchId>(
    left: &[L],
    right: &[R],
    edges: &[(L, R)],
) -> BTreeMap<L, R> {
    let mut left_ids: Vec<L> = left.to_vec();
    left_ids.sort_unstable();
    left_ids.dedup();
    let mut right_ids: Vec<R> = right.to_vec();
    right_ids.sort_unstable();
    right_ids.dedup();

    let left_index: HashMap<L, usize> = left_ids.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    let right_index: HashMap<R, usize> =
        right_ids.iter().enumerate().map(|(i, r)| (*r, i)).collect();

    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); left_ids.len()];
    for (l, r) in edges {
        let li = *left_index.get(l).expect("edge references declared left node");
        let ri = *right_index.get(r).expect("edge references declared right node");
        adjacency[li].push(ri);
    }
    for adj in &mut adjacency {
        adj.sort_unstable();
        adj.dedup();
    }

    let mut match_left: Vec<usize> = vec![NIL; left_ids.len()];
    let mut match_right: Vec<usize> = vec![NIL; right_ids.len()];
    let mut dist: Vec<u32> = vec![0; left_ids.len()];

    while bfs(&adjacency, &match_left, &match_right, &mut dist) {
        for li in 0..left_ids.len() {
            if match_left[li] == NIL {
                dfs(li, &adjacency, &mut match_left, &mut match_right, &mut dist);
            }
        }
    }

    let mut result = BTreeMap::new();
    for (li, &ri) in match_left.iter().enumerate() {
        if ri != NIL {
            result.insert(left_ids[li], right_ids[ri]);
        }
    }
    result
}

/// Layers the free left vertices; true if some augmenting path exists.
fn bfs(
    adjacency: &[Vec<usize>],
    match_left: &[usize],
    match_right: &[usize],
    dist: &mut [u32],
) -> bool {
    let mut queue = std::collections::VecDeque::new();
    for (li, &m) in match_left.iter().enumerate() {
        if m == NIL {
            dist[li] = 0;
            queue.push_back(li);
        } else {
            dist[li] = INFINITY;
        }
    }
    let mut reachable_free = false;
    while let Some(li) = queue.pop_front() {
        for &ri in &adjacency[li] {
            match match_right[ri] {
                NIL => reachable_free = true,
                owner => {
                    if dist[owner] == INFINITY {
                        dist[owner] = dist[li] + 1;
                        queue.push_back(owner);
                    }
                }
            }
        }
    }
    reachable_free
}

fn dfs(
    li: usize,
    adjacency: &[Vec<usize>],
    match_left: &mut [usize],
    match_right: &mut [usize],
    dist: &mut [u32],
) -> bool {
    for i in 0..adjacency[li].len() {
        let ri = adjacency[li][i];
        let advance = match match_right[ri] {
            NIL => true,
            owner => dist[owner] == dist[li] + 1 && dfs(owner, adjacency, match_left, match_right, dist),
        };
        if advance {
            match_left[li] = ri;
            match_right[ri] = li;
            return true;
        }
    }
    dist[li] = INFINITY;
    false
}


#[cfg(test)]
mod tests {
    use super::test_support::brute_force_max_matching;
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn forced_assignment() {
        // a1 can reach both proxies, a2 only p1: the only size-2 matching
        // sends a1 to p2.
        let m = max_bipartite_matching(&["a1", "a2"], &["p1", "p2"], &[("a1", "p1"), ("a1", "p2"), ("a2", "p1")]);
        assert_eq!(m.len(), 2);
        assert_eq!(m["a1"], "p2");
        assert_eq!(m["a2"], "p1");
    }

    #[test]
    fn no_edges_no_matching() {
        let m = max_bipartite_matching::<u32, u32>(&[1, 2], &[3, 4], &[]);
        assert!(m.is_empty());
    }

    #[test]
    fn complete_graph_saturates() {
        let left = [0u32, 1, 2];
        let right = [10u32, 11, 12];
        let edges: Vec<(u32, u32)> = left
            .iter()
            .flat_map(|l| right.iter().map(move |r| (*l, *r)))
            .collect();
        let m = max_bipartite_matching(&left, &right, &edges);
        assert_eq!(m.len(), 3);
        let mut used: Vec<u32> = m.values().copied().collect();
        used.sort_unstable();
        used.dedup();
        assert_eq!(used.len(), 3);
    }

    #[test]
    fn matches_brute_force_on_random_graphs() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(4242);
        for _ in 0..300 {
            let n_left = rng.gen_range(0..=10);
            let n_right = rng.gen_range(0..=10);
            let mut edges = Vec::new();
            for l in 0..n_left {
                for r in 0..n_right {
                    if rng.gen_bool(0.3) {
                        edges.push((l, r));
                    }
                }
            }
            let left: Vec<usize> = (0..n_left).collect();
            let right: Vec<usize> = (0..n_right).collect();
            let m = max_bipartite_matching(&left, &right, &edges);
            let expected = brute_force_max_matching(n_left, n_right, &edges);
            assert_eq!(m.len(), expected, "edges {edges:?}");
            // validity: every pair is an edge, no right node reused
            let mut seen = std::collections::BTreeSet::new();
            for (l, r) in &m {
                assert!(edges.contains(&(*l, *r)));
                assert!(seen.insert(*r));
            }
        }
    }
}
