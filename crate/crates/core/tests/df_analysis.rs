//! The analyzer against the definition, by brute force.

mod support;

use proptest::prelude::*;

use mrsession::df_analysis::is_df_reducible;
use support::{brute_force_df, to_collection, Set};

/// A regular collection: both halves of channels `1..=pairs` placed in
/// `nsets` sets by `codes`.
fn placement(pairs: u64, nsets: usize, codes: &[usize]) -> Vec<Set> {
    let mut sets = vec![Vec::new(); nsets];
    for id in 1..=pairs {
        let k = 2 * (id - 1) as usize;
        sets[codes[k] % nsets].push((id, true));
        sets[codes[k + 1] % nsets].push((id, false));
    }
    sets
}

proptest! {
    #[test]
    fn agrees_with_brute_force(
        pairs in 0u64..6,
        nsets in 1usize..6,
        codes in prop::collection::vec(any::<usize>(), 12),
    ) {
        let sets = placement(pairs, nsets, &codes);
        prop_assert_eq!(is_df_reducible(&to_collection(&sets)), Ok(brute_force_df(&sets)), "{:?}", sets);
    }

    #[test]
    fn as_many_pairs_as_sets_is_never_reducible(
        nsets in 1usize..5,
        extra in 0u64..2,
        codes in prop::collection::vec(any::<usize>(), 12),
    ) {
        let pairs = nsets as u64 + extra;
        prop_assume!(2 * pairs as usize <= codes.len());
        let sets = placement(pairs, nsets, &codes);
        prop_assert_eq!(is_df_reducible(&to_collection(&sets)), Ok(false));
    }
}

#[test]
fn small_anchors() {
    assert_eq!(is_df_reducible(&to_collection(&[vec![], vec![]])), Ok(true));
    assert_eq!(is_df_reducible(&to_collection(&[vec![(1, true)], vec![(1, false)]])), Ok(true));
    assert_eq!(is_df_reducible(&to_collection(&[vec![(1, true), (1, false)]])), Ok(false));
    let crossed = [vec![(1, true), (2, true)], vec![(1, false), (2, false)]];
    assert_eq!(is_df_reducible(&to_collection(&crossed)), Ok(false));
}
