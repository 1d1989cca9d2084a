//! Non-dominated sorting and crowding-distance truncation (minimization).

use std::cmp::Ordering;

/// `a` dominates `b`: no worse on every objective and better on at least one.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut better = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            better = true;
        }
    }
    better
}

/// Fronts of indices into `objectives`, best first, each in ascending index order.
pub fn non_dominated_sort(objectives: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = objectives.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    for p in 0..n {
        for q in p + 1..n {
            if dominates(&objectives[p], &objectives[q]) {
                dominated_by_me[p].push(q);
                counts[q] += 1;
            } else if dominates(&objectives[q], &objectives[p]) {
                dominated_by_me[q].push(p);
                counts[p] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| counts[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated_by_me[p] {
                counts[q] -= 1;
                if counts[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of `front` (same order as `front`).
/// Boundary members get infinity; objectives with zero range contribute nothing.
pub fn crowding_distance(objectives: &[Vec<f64>], front: &[usize]) -> Vec<f64> {
    let m = front.len();
    let mut distance = vec![0.0; m];
    if m == 0 {
        return distance;
    }
    let k = objectives[front[0]].len();
    let mut order: Vec<usize> = (0..m).collect();
    for obj in 0..k {
        let value = |i: usize| objectives[front[i]][obj];
        order.sort_by(|&a, &b| value(a).total_cmp(&value(b)));
        let (lo, hi) = (value(order[0]), value(order[m - 1]));
        distance[order[0]] = f64::INFINITY;
        distance[order[m - 1]] = f64::INFINITY;
        let range = hi - lo;
        if !(range > 0.0) || !range.is_finite() {
            continue;
        }
        for w in 1..m.saturating_sub(1) {
            distance[order[w]] += (value(order[w + 1]) - value(order[w - 1])) / range;
        }
    }
    distance
}

/// Survivor indices: whole fronts while they fit, then the boundary front
/// by descending crowding distance (stable, so lower index wins ties).
/// Also returns each survivor's rank and crowding distance.
pub fn nsga2_survive(objectives: &[Vec<f64>], n: usize) -> Vec<Survivor> {
    let mut survivors = Vec::with_capacity(n);
    for (rank, front) in non_dominated_sort(objectives).into_iter().enumerate() {
        if survivors.len() >= n {
            break;
        }
        let crowding = crowding_distance(objectives, &front);
        let mut members: Vec<(usize, f64)> = front.into_iter().zip(crowding).collect();
        if survivors.len() + members.len() > n {
            members.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal));
            members.truncate(n - survivors.len());
        }
        survivors.extend(members.into_iter().map(|(index, crowding)| Survivor {
            index,
            rank,
            crowding,
        }));
    }
    survivors
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Survivor {
    pub index: usize,
    pub rank: usize,
    pub crowding: f64,
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Textbook reference: peel fronts by repeated O(N^2) scans, crowding by
    /// per-objective stable sort, truncate by descending crowding.
    pub(crate) fn reference_survivors(obj: &[Vec<f64>], n: usize) -> Vec<usize> {
        let mut remaining: Vec<usize> = (0..obj.len()).collect();
        let mut chosen = Vec::new();
        while chosen.len() < n {
            let front: Vec<usize> = remaining
                .iter()
                .copied()
                .filter(|&p| !remaining.iter().any(|&q| q != p && dominates(&obj[q], &obj[p])))
                .collect();
            remaining.retain(|i| !front.contains(i));
            if chosen.len() + front.len() <= n {
                chosen.extend(front);
                continue;
            }
            let mut dist = vec![0.0f64; front.len()];
            for k in 0..obj[0].len() {
                let mut idx: Vec<usize> = (0..front.len()).collect();
                idx.sort_by(|&a, &b| obj[front[a]][k].partial_cmp(&obj[front[b]][k]).unwrap());
                let lo = obj[front[idx[0]]][k];
                let hi = obj[front[idx[idx.len() - 1]]][k];
                dist[idx[0]] = f64::INFINITY;
                dist[idx[idx.len() - 1]] = f64::INFINITY;
                if hi > lo {
                    for w in 1..idx.len() - 1 {
                        dist[idx[w]] +=
                            (obj[front[idx[w + 1]]][k] - obj[front[idx[w - 1]]][k]) / (hi - lo);
                    }
                }
            }
            let mut pairs: Vec<(usize, f64)> = front.into_iter().zip(dist).collect();
            pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            chosen.extend(pairs.into_iter().take(n - chosen.len()).map(|p| p.0));
        }
        chosen
    }

    fn sorted(mut v: Vec<usize>) -> Vec<usize> {
        v.sort_unstable();
        v
    }

    #[test]
    fn single_front_keeps_the_most_crowded_out() {
        let obj: Vec<Vec<f64>> = vec![
            vec![0.0, 4.0],
            vec![1.0, 3.0],
            vec![1.1, 2.9],
            vec![3.0, 1.0],
            vec![4.0, 0.0],
            vec![2.0, 2.0],
        ];
        let survivors = nsga2_survive(&obj, 3);
        let ids = sorted(survivors.iter().map(|s| s.index).collect());
        // extremes are infinite; (3, 1) has crowding 1.0, (2, 2) only 0.95
        assert_eq!(ids, vec![0, 3, 4]);
    }

    #[test]
    fn a_dominating_individual_always_survives() {
        let mut obj: Vec<Vec<f64>> = (0..9).map(|i| vec![5.0 + i as f64, 20.0 - i as f64]).collect();
        obj.push(vec![0.0, 0.0]);
        let survivors = nsga2_survive(&obj, 1);
        assert_eq!(survivors[0].index, 9);
        assert_eq!(survivors[0].rank, 0);
    }

    #[test]
    fn fronts_are_layered() {
        let obj = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![0.5, 3.0], vec![3.0, 3.0]];
        assert_eq!(non_dominated_sort(&obj), vec![vec![0, 2], vec![1], vec![3]]);
    }

    #[test]
    fn identical_points_do_not_dominate_each_other() {
        assert!(!dominates(&[1.0, 2.0], &[1.0, 2.0]));
        assert_eq!(non_dominated_sort(&[vec![1.0, 2.0], vec![1.0, 2.0]]), vec![vec![0, 1]]);
    }

    fn pool() -> impl Strategy<Value = Vec<Vec<f64>>> {
        // integer-valued objectives produce plenty of ties and duplicates
        prop::collection::vec(
            prop_oneof![
                (0u32..12, 1u32..30).prop_map(|(a, b)| vec![a as f64, b as f64]),
                (0.0..1.0f64, 1u32..30).prop_map(|(a, b)| vec![a, b as f64]),
            ],
            40,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn survivors_match_textbook_reference(obj in pool()) {
            let ours: Vec<usize> = nsga2_survive(&obj, 20).iter().map(|s| s.index).collect();
            prop_assert_eq!(sorted(ours), sorted(reference_survivors(&obj, 20)));
        }

        #[test]
        fn no_survivor_is_dominated_by_a_casualty(obj in pool()) {
            let kept: Vec<usize> = nsga2_survive(&obj, 20).iter().map(|s| s.index).collect();
            prop_assert_eq!(kept.len(), 20);
            for &s in &kept {
                for c in (0..obj.len()).filter(|i| !kept.contains(i)) {
                    prop_assert!(!dominates(&obj[c], &obj[s]));
                }
            }
        }
    }
}
