use kfunc_core::eval::*;
use kfunc_testkit::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn memoized_oracle_agrees_with_full_enumeration() {
    for_each_canonical_pair(4, 4, |r, h| {
        assert_eq!(best_script(r, h), best_script_exhaustive(r, h), "{r:?} vs {h:?}");
    });
}

#[test]
fn align_matches_exhaustive_search_up_to_length_six() {
    let mut pairs = 0usize;
    for_each_canonical_pair(6, 4, |r, h| {
        check_alignment(r, h, &best_script(r, h)).unwrap();
        pairs += 1;
    });
    assert!(pairs > 1_000_000);
}

#[test]
fn alignment_is_invariant_under_renaming() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let (lr, lh) = (rng.random_range(0..=6), rng.random_range(0..=6));
        let r = random_sequence(&mut rng, &[0u8, 1, 2, 3], lr);
        let h = random_sequence(&mut rng, &[0u8, 1, 2, 3], lh);
        let rename = |s: &[u8]| s.iter().map(|&x| ["K", "AE", "T", "S"][x as usize]).collect::<Vec<_>>();
        let a: Vec<EditOp> = align(&r, &h).into_iter().map(|p| p.op).collect();
        let b: Vec<EditOp> = align(&rename(&r), &rename(&h)).into_iter().map(|p| p.op).collect();
        assert_eq!(a, b);
    }
}

#[test]
fn concatenation_never_costs_more_than_pooling() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pool = ["B", "ER", "D", "P"];
    for _ in 0..500 {
        let n = rng.random_range(1..=4);
        let pairs: Vec<CorpusPair<&str>> = (0..n)
            .map(|u| {
                let (lr, lh) = (rng.random_range(1..=5), rng.random_range(0..=5));
                (format!("u{u}"), random_sequence(&mut rng, &pool, lr), random_sequence(&mut rng, &pool, lh))
            })
            .collect();
        let pooled = corpus_per(&pairs).unwrap().pooled;
        let r: Vec<&str> = pairs.iter().flat_map(|p| p.1.clone()).collect();
        let h: Vec<&str> = pairs.iter().flat_map(|p| p.2.clone()).collect();
        let joined = per(&r, &h).unwrap();
        assert_eq!(joined.reference_length, pooled.reference_length);
        assert!(joined.edits() <= pooled.edits());
    }
    // equality where no alignment can usefully cross a boundary
    let pairs = vec![
        ("u1".to_string(), vec!["B", "ER", "D"], vec!["B", "EH", "D"]),
        ("u2".to_string(), vec!["K", "AE", "T"], vec!["K", "AE", "T", "S"]),
    ];
    let pooled = corpus_per(&pairs).unwrap().pooled;
    let joined = per(&["B", "ER", "D", "K", "AE", "T"], &["B", "EH", "D", "K", "AE", "T", "S"]).unwrap();
    assert_eq!(joined.edits(), pooled.edits());
    assert!((joined.per - pooled.per).abs() < 1e-12);
    assert_eq!(per(&["B", "ER"], &["B", "ER"]).unwrap().per, 0.0);
}
