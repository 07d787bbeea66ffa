use kfunc_core::decoder::*;
use kfunc_core::phonology::*;
use kfunc_core::synth::*;
use kfunc_testkit::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup() -> (PhonemeInventory, SimilarityMatrix) {
    let inv = PhonemeInventory::arpabet();
    let sim = SimilarityMatrix::with_default_weights(&inv);
    (inv, sim)
}

#[test]
fn decode_matches_brute_force_on_grid() {
    let (inv, sim) = setup();
    let cases = decode_grid(&inv);
    assert!(cases.len() > 40_000);
    let failures: Vec<String> = cases
        .iter()
        .filter_map(|c| check_decode_case(c, &inv, &sim).err())
        .take(5)
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn decode_matches_brute_force_on_random_cases() {
    let (inv, sim) = setup();
    for case in random_decode_cases(&inv, 7, 1000) {
        check_decode_case(&case, &inv, &sim).unwrap();
    }
}

#[test]
fn fused_search_equals_explicit_composition() {
    let (inv, sim) = setup();
    let decoder = Decoder::new(&inv, &sim, DecoderConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pool = inv.parse_sequence("B P D T AH ER IY").unwrap();
    for _ in 0..150 {
        let phonemes = random_subset(&mut rng, &pool, 4);
        let frames = rng.random_range(0..=10);
        let lattice = random_lattice(&mut rng, &inv, &phonemes, frames, 3);
        let len = rng.random_range(1..=4);
        let reference = random_sequence(&mut rng, &pool, len);
        for k in [1, 3] {
            let fused = decoder.decode_with_k(&lattice, &reference, k).unwrap();
            let explicit = decoder.decode_explicit(&lattice, &reference, k).unwrap();
            assert!((fused.total_cost - explicit.total_cost).abs() < 1e-9);
            assert_eq!(fused.annotations(), explicit.annotations());
            assert_eq!(fused.tokens, explicit.tokens);
        }
    }
}

#[test]
fn larger_k_never_costs_more() {
    let (inv, sim) = setup();
    let decoder = Decoder::new(&inv, &sim, DecoderConfig::default()).unwrap();
    check_k_monotonic(&mixed_corpus(&inv, &sim, 300, 100), &decoder, &inv, &sim).unwrap();
}

#[test]
fn k_one_equals_substitution_free_decoder() {
    let (inv, sim) = setup();
    let decoder = Decoder::new(&inv, &sim, DecoderConfig::default()).unwrap();
    check_k_one_reduction(&mixed_corpus(&inv, &sim, 200, 200), &decoder, &inv, &sim).unwrap();
}

#[test]
fn decode_accepts_any_lattice() {
    let (inv, sim) = setup();
    let decoder = Decoder::new(&inv, &sim, DecoderConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let all: Vec<SymbolId> = inv.phonemes().collect();
    for _ in 0..100 {
        // lattices over phonemes unrelated to the reference
        let phonemes = random_subset(&mut rng, &all, 5);
        let frames = rng.random_range(0..=12);
        let lattice = random_lattice(&mut rng, &inv, &phonemes, frames, 2);
        let len = rng.random_range(1..=5);
        let reference = random_sequence(&mut rng, &all, len);
        let t = decoder.decode(&lattice, &reference).unwrap();
        let expected: Vec<String> = t
            .tokens
            .iter()
            .filter(|t| t.edit != EditKind::Insertion && t.edit != EditKind::Repetition)
            .map(|t| t.expected.clone().unwrap())
            .collect();
        assert_eq!(expected, inv.labels(&reference));
        let sum: f64 = t.tokens.iter().map(|t| t.cost).sum();
        assert!((sum - t.total_cost).abs() < 1e-6);
    }
}

#[test]
fn auto_k_records_decision() {
    let (inv, sim) = setup();
    let decoder = Decoder::new(&inv, &sim, DecoderConfig::default().with_k(KSetting::Auto)).unwrap();
    let mut plan = SynthesisPlan::new(inv.parse_sequence("B ER D").unwrap());
    let confident = synthesize_posteriors(&plan, &inv, &sim).unwrap();
    let t = decoder.decode(&confident, &plan.base).unwrap();
    assert_eq!(t.k_used, 3);
    assert!(t.metadata.mean_max_posterior.unwrap() > 0.99);
    assert!(t.metadata.k_rule.is_some());
    plan.confidence = 0.3;
    plan.jitter = 0.0;
    let unsure = synthesize_posteriors(&plan, &inv, &sim).unwrap();
    assert_eq!(decoder.decode(&unsure, &plan.base).unwrap().k_used, 1);
}

#[test]
fn identity_pipeline() {
    let (inv, sim) = setup();
    let decoder = Decoder::new(&inv, &sim, DecoderConfig::default()).unwrap();
    let spec = CorpusSpec {
        utterances: 50,
        seed: 300,
        ..Default::default()
    };
    check_identity_pipeline(&generate_corpus(&spec, &inv, &sim).unwrap(), &decoder, &inv, &sim).unwrap();
}
