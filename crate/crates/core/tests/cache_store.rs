use proptest::prelude::*;

use spc_offload::cache::{DecisionCache, ExecutionTrail, Invalidation, MergePolicy};
use spc_offload::context::ContextSignature;
use spc_offload::{Assignment, DeviceId, MethodId};

fn trail(app: &str, tokens: &[u16], device: &str) -> ExecutionTrail {
    let mut a = Assignment::default();
    a.insert(MethodId::new("m"), DeviceId::new(device));
    ExecutionTrail::new(
        app,
        ContextSignature {
            tokens: tokens.to_vec(),
            bucketing: 0,
        },
        a,
    )
}

#[test]
fn cache_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.json");
    let mut c = DecisionCache::new(4);
    c.record_trail(trail("a", &[1, 2], "s"), MergePolicy::Weighted);
    c.record_trail(trail("a", &[1, 2], "s"), MergePolicy::Weighted);
    c.record_trail(trail("b", &[3], "d"), MergePolicy::Weighted);
    c.save(&path).unwrap();
    let back = DecisionCache::load(&path).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.trails()[0].weight, 2);

    std::fs::write(&path, r#"{"trails": [], "capacity": 0, "checkpoint": null}"#).unwrap();
    assert!(DecisionCache::load(&path).is_err());
    assert!(DecisionCache::load(&dir.path().join("missing.json")).is_err());
}

#[test]
fn drift_beyond_threshold_empties_the_cache() {
    let mut c = DecisionCache::new(4);
    let here = ContextSignature { tokens: vec![1, 1, 1, 1], bucketing: 0 };
    let near = ContextSignature { tokens: vec![1, 1, 1, 2], bucketing: 0 };
    let far = ContextSignature { tokens: vec![2, 2, 2, 2], bucketing: 0 };
    let policy = Invalidation::OnChange { drift: 0.3 };
    assert!(!c.invalidate(policy, 0.0, &here).unwrap());
    c.record_trail(trail("a", &[1], "s"), MergePolicy::Append);
    assert!(!c.invalidate(policy, 1.0, &near).unwrap());
    assert_eq!(c.len(), 1);
    assert!(c.invalidate(policy, 2.0, &far).unwrap());
    assert!(c.is_empty());
    assert_eq!(c.checkpoint(), Some(&far));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, failure_persistence: None, ..ProptestConfig::default() })]

    /// Append keeps the most recent `capacity` trails in arrival order.
    #[test]
    fn append_keeps_the_newest(tokens in prop::collection::vec(0u16..50, 0..40), cap in 1usize..10) {
        let mut c = DecisionCache::new(cap);
        for t in &tokens {
            c.record_trail(trail("a", &[*t], "s"), MergePolicy::Append);
        }
        let kept: Vec<u16> = c.trails().iter().map(|t| t.signature.tokens[0]).collect();
        let start = tokens.len().saturating_sub(cap);
        prop_assert_eq!(kept, tokens[start..].to_vec());
    }

    /// Unique never stores the same decision twice.
    #[test]
    fn unique_rows_are_distinct(tokens in prop::collection::vec(0u16..6, 0..40)) {
        let mut c = DecisionCache::new(64);
        for t in &tokens {
            c.record_trail(trail("a", &[*t], "s"), MergePolicy::Unique);
        }
        let rows = c.trails();
        for (i, a) in rows.iter().enumerate() {
            for b in &rows[i + 1..] {
                prop_assert!(!a.same_decision(b));
            }
        }
    }
}
