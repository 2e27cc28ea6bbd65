use std::collections::BTreeMap;

use super::{ThreadId, Timestamp};

/// For every query interval, the indices of `intervals` on the same thread
/// that fully contain it, innermost first.
///
/// Runs as a sweep over start times with a stack of open intervals, so the
/// cost is `O((n + q) log(n + q))` plus the chain lengths. Intervals that
/// overlap partially are still reported correctly because every candidate
/// on the stack is checked for containment.
pub fn enclosing_chains(
    intervals: &[(ThreadId, Timestamp, Timestamp)],
    queries: &[(ThreadId, Timestamp, Timestamp)],
) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); queries.len()];

    let mut by_thread: BTreeMap<ThreadId, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, iv) in intervals.iter().enumerate() {
        by_thread.entry(iv.0).or_default().0.push(i);
    }
    for (i, q) in queries.iter().enumerate() {
        by_thread.entry(q.0).or_default().1.push(i);
    }

    for (_, (mut ivs, mut qs)) in by_thread {
        if ivs.is_empty() || qs.is_empty() {
            continue;
        }
        ivs.sort_by_key(|&i| (intervals[i].1, std::cmp::Reverse(intervals[i].2), i));
        qs.sort_by_key(|&i| (queries[i].1, i));

        let mut stack: Vec<usize> = Vec::new();
        let mut next = 0;
        for &qi in &qs {
            let (_, qs_start, qs_end) = queries[qi];
            while next < ivs.len() && intervals[ivs[next]].1 <= qs_start {
                let cand = ivs[next];
                while stack.last().is_some_and(|&top| intervals[top].2 < intervals[cand].1) {
                    stack.pop();
                }
                stack.push(cand);
                next += 1;
            }
            while stack.last().is_some_and(|&top| intervals[top].2 < qs_start) {
                stack.pop();
            }
            let mut chain: Vec<usize> =
                stack.iter().copied().filter(|&i| intervals[i].1 <= qs_start && qs_end <= intervals[i].2).collect();
            chain.sort_by_key(|&i| {
                let (_, s, e) = intervals[i];
                (e.0 - s.0, std::cmp::Reverse(s), std::cmp::Reverse(i))
            });
            out[qi] = chain;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(t: u64, s: u64, e: u64) -> (ThreadId, Timestamp, Timestamp) {
        (ThreadId(t), Timestamp(s), Timestamp(e))
    }

    #[test]
    fn nested_chain_innermost_first() {
        let ivs = [iv(1, 0, 100), iv(1, 10, 50), iv(1, 20, 30), iv(2, 0, 100)];
        let qs = [iv(1, 22, 25), iv(1, 60, 70), iv(1, 200, 210)];
        let chains = enclosing_chains(&ivs, &qs);
        assert_eq!(chains[0], vec![2, 1, 0]);
        assert_eq!(chains[1], vec![0]);
        assert!(chains[2].is_empty());
    }

    #[test]
    fn query_must_be_fully_contained() {
        let ivs = [iv(1, 0, 10)];
        let qs = [iv(1, 5, 15)];
        assert!(enclosing_chains(&ivs, &qs)[0].is_empty());
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            raw_ivs in proptest::collection::vec((0u64..3, 0u64..200, 0u64..80), 0..30),
            raw_qs in proptest::collection::vec((0u64..3, 0u64..250, 0u64..20), 0..30),
        ) {
            let ivs: Vec<_> = raw_ivs.iter().map(|&(t, s, d)| iv(t, s, s + d)).collect();
            let qs: Vec<_> = raw_qs.iter().map(|&(t, s, d)| iv(t, s, s + d)).collect();
            let got = enclosing_chains(&ivs, &qs);
            for (qi, q) in qs.iter().enumerate() {
                let mut want: Vec<usize> = (0..ivs.len())
                    .filter(|&i| ivs[i].0 == q.0 && ivs[i].1 <= q.1 && q.2 <= ivs[i].2)
                    .collect();
                want.sort();
                let mut have = got[qi].clone();
                have.sort();
                prop_assert_eq!(have, want);
            }
        }
    }
}
