use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    Exact,
    Substring,
    MostFrequent,
}

impl fmt::Display for MatchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchKind::Exact => "exact",
            MatchKind::Substring => "substring",
            MatchKind::MostFrequent => "most_frequent",
        })
    }
}

/// Picks the replayed kernel name that stands for `target`.
///
/// 1. a replayed name equal to `target`;
/// 2. a replayed name contained in `target` or containing it;
/// 3. the most frequent replayed name.
///
/// Several candidates within one rule resolve to the most frequent one,
/// then to the lexicographically smallest. Returns `None` only for an empty
/// multiset.
pub fn match_kernel<S: AsRef<str>>(replayed: &[S], target: &str) -> Option<(String, MatchKind)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for name in replayed {
        *counts.entry(name.as_ref()).or_default() += 1;
    }
    if counts.is_empty() {
        return None;
    }
    if counts.contains_key(target) {
        return Some((target.to_string(), MatchKind::Exact));
    }
    let pick = |cands: &mut dyn Iterator<Item = (&&str, &usize)>| {
        // BTreeMap iteration is lexicographic, so the first maximum wins ties.
        let mut best: Option<(&str, usize)> = None;
        for (&name, &n) in cands {
            if best.is_none_or(|(_, b)| n > b) {
                best = Some((name, n));
            }
        }
        best.map(|(name, _)| name.to_string())
    };
    let mut substring = counts.iter().filter(|(name, _)| {
        !name.is_empty() && !target.is_empty() && (target.contains(**name) || name.contains(target))
    });
    if let Some(name) = pick(&mut substring) {
        return Some((name, MatchKind::Substring));
    }
    pick(&mut counts.iter()).map(|name| (name, MatchKind::MostFrequent))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact() {
        assert_eq!(match_kernel(&["ampere_gemm"], "ampere_gemm"), Some(("ampere_gemm".into(), MatchKind::Exact)));
    }

    #[test]
    fn substring_either_direction() {
        assert_eq!(
            match_kernel(&["sm90_xmma_gemm_f16"], "xmma_gemm_f16"),
            Some(("sm90_xmma_gemm_f16".into(), MatchKind::Substring))
        );
        assert_eq!(match_kernel(&["gemm"], "sm90_gemm_x"), Some(("gemm".into(), MatchKind::Substring)));
    }

    #[test]
    fn most_frequent_with_lexicographic_ties() {
        assert_eq!(match_kernel(&["bar", "bar", "bar", "baz"], "foo"), Some(("bar".into(), MatchKind::MostFrequent)));
        assert_eq!(match_kernel(&["zed", "abc"], "foo"), Some(("abc".into(), MatchKind::MostFrequent)));
        assert_eq!(match_kernel::<&str>(&[], "foo"), None);
    }

    /// Independent reference for the hierarchy.
    fn reference(replayed: &[String], target: &str) -> (String, MatchKind) {
        if replayed.iter().any(|r| r == target) {
            return (target.to_string(), MatchKind::Exact);
        }
        let choose = |pool: Vec<&String>| {
            let mut names: Vec<&String> = pool.clone();
            names.sort();
            names.dedup();
            let count = |n: &String| pool.iter().filter(|p| **p == n).count();
            let max = names.iter().map(|n| count(n)).max().unwrap();
            names.into_iter().find(|n| count(n) == max).unwrap().clone()
        };
        let subs: Vec<&String> = replayed
            .iter()
            .filter(|r| !r.is_empty() && !target.is_empty() && (r.contains(target) || target.contains(r.as_str())))
            .collect();
        if !subs.is_empty() {
            return (choose(subs), MatchKind::Substring);
        }
        (choose(replayed.iter().collect()), MatchKind::MostFrequent)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn agrees_with_reference(replayed in proptest::collection::vec("[abg]{0,4}", 1..8), target in "[abg]{0,4}") {
            prop_assert_eq!(match_kernel(&replayed, &target).unwrap(), reference(&replayed, &target));
        }
    }
}
