//! Protocol runs against independent oracles.

mod support;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mrsession::protocols::{run_colist_session, run_list_session, run_queue_session, run_two_buyer, Branch, QueueScript};
use support::fifo_oracle;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn queue_accounts_follow_a_fifo(seed in any::<u64>(), len in 1usize..30) {
        let script = QueueScript::random(&mut ChaCha8Rng::seed_from_u64(seed), len);
        let (sizes, dequeued) = fifo_oracle(&script);
        let out = run_queue_session(&script).unwrap();
        for party in &out.sizes {
            prop_assert_eq!(party, &sizes);
        }
        prop_assert_eq!(out.dequeued, dequeued);
        prop_assert_eq!(out.live_endpoints, 0);
    }

    #[test]
    fn two_buyer_branch_follows_the_budget(price in 0i64..300, contribution in 0i64..300, budget in 0i64..300) {
        let out = run_two_buyer("book", price, contribution, budget).unwrap();
        let success = price - contribution <= budget;
        prop_assert_eq!(out.branch, if success { Branch::Success } else { Branch::Failure });
        prop_assert_eq!(out.receipt.is_some(), success);
        prop_assert_eq!(out.messages.len(), if success { 6 } else { 4 });
    }

    #[test]
    fn lists_deliver_in_order(n in 0usize..12) {
        let want: Vec<i64> = (0..n as i64).map(|k| k * 10).collect();
        prop_assert_eq!(run_list_session(n).unwrap().values, want.clone());
        prop_assert_eq!(run_colist_session(n).unwrap().values, want);
    }
}

#[test]
fn script_text_round_trips() {
    for seed in 0..50 {
        let script = QueueScript::random(&mut ChaCha8Rng::seed_from_u64(seed), 30);
        let back: QueueScript = script.to_string().parse().unwrap();
        assert_eq!(back, script);
    }
}
