use kfunc_core::decoder::*;
use kfunc_core::lattice_io::validate;
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

/// Every base over `alphabet` of length 1..=max_len.
fn bases(alphabet: &[SymbolId], max_len: usize) -> Vec<Vec<SymbolId>> {
    let mut out: Vec<Vec<SymbolId>> = vec![vec![]];
    let mut all = Vec::new();
    for _ in 0..max_len {
        out = out
            .iter()
            .flat_map(|b| alphabet.iter().map(move |&p| [b.as_slice(), &[p]].concat()))
            .collect();
        all.extend(out.iter().cloned());
    }
    all
}

/// Every single edit that is in range for a sequence of `len` phonemes.
fn edits_for(len: usize, sub: &[SymbolId], ins: &[SymbolId]) -> Vec<Edit> {
    let mut out = Vec::new();
    for position in 1..=len {
        out.extend(sub.iter().map(|&phoneme| Edit::Substitute { position, phoneme }));
        out.push(Edit::Delete { position });
        out.extend((1..=2).map(|times| Edit::Repeat { position, times }));
    }
    for position in 1..=len + 1 {
        out.extend(ins.iter().map(|&phoneme| Edit::Insert { position, phoneme }));
    }
    out
}

fn covered_by(truth: &GroundTruth, sim: &SimilarityMatrix, k: usize) -> bool {
    truth.annotations.iter().all(|t| {
        t.kind != EditKind::Substitution
            || sim.top_k_neighbors(t.expected.unwrap(), k).unwrap().contains(&t.produced.unwrap())
    })
}

#[derive(Default, Debug)]
struct ChainStats {
    plans: usize,
    unique_truth: usize,
    exact: usize,
}

fn check_chain(plan: &SynthesisPlan, inv: &PhonemeInventory, sim: &SimilarityMatrix, decoder: &Decoder, stats: &mut ChainStats) {
    let truth = apply_edits(plan, inv).unwrap();
    let lattice = synthesize_posteriors(plan, inv, sim).unwrap();
    let t = decoder.decode_with_k(&lattice, &plan.base, 3).unwrap();
    let context = format!("{:?} {:?}", inv.labels(&plan.base), plan.edits.iter().map(|e| e.render(inv)).collect::<Vec<_>>());
    assert_eq!(t.verbatim(), inv.labels(&truth.realized), "{context}");
    let config = decoder.config();
    let ex = best_explanations(&truth.realized, &plan.base, inv, sim, config, 3);
    let truth_cost = tag_sequence_cost(&truth.annotations, sim, config);
    assert!(truth_cost >= ex.min_cost - 1e-9, "{context}: truth beats the oracle optimum");
    let decoded = t.annotations();
    let render = |tags: &[EditTag]| tags.iter().map(|t| t.render(inv)).collect::<Vec<_>>();
    assert_eq!(decoded, render(&ex.best), "{context}");
    stats.plans += 1;
    if ex.optimal_count == 1 && tied_with_best(truth_cost, ex.min_cost) {
        stats.unique_truth += 1;
        assert_eq!(decoded, render(&truth.annotations), "{context}: unique optimum not recovered");
    }
    if decoded == render(&truth.annotations) {
        stats.exact += 1;
    }
}

#[test]
fn explanation_oracle_matches_enumeration() {
    let (inv, sim) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let pool = inv.parse_sequence("B P D ER AH").unwrap();
    for _ in 0..400 {
        let config = random_config(&mut rng);
        let (n, m) = (rng.random_range(0..=4), rng.random_range(0..=4));
        let (reference, heard) = (random_sequence(&mut rng, &pool, n), random_sequence(&mut rng, &pool, m));
        let k = if rng.random_bool(0.5) { 1 } else { 3 };
        let all = annotated_edit_sequences(&heard, &reference, &inv, &sim, &config, k);
        let min = all.iter().map(|a| a.0).fold(f64::INFINITY, f64::min);
        let optimal: Vec<&Vec<EditTag>> = all.iter().filter(|a| tied_with_best(a.0, min)).map(|a| &a.1).collect();
        let ex = best_explanations(&heard, &reference, &inv, &sim, &config, k);
        assert!((ex.min_cost - min).abs() < 1e-9);
        assert_eq!(ex.optimal_count, optimal.len());
        let render = |tags: &[EditTag]| tags.iter().map(|t| t.label(inv.phoneme_count())).collect::<Vec<_>>();
        assert_eq!(render(&ex.best), optimal.iter().map(|t| render(t)).min().unwrap());
        for (c, tags) in &all {
            assert!((tag_sequence_cost(tags, &sim, &config) - c).abs() < 1e-9);
        }
    }
}

#[test]
fn oracle_chain_is_exhaustive_for_short_bases() {
    let (inv, sim) = setup();
    let decoder = Decoder::new(&inv, &sim, DecoderConfig::default()).unwrap();
    let alphabet = inv.parse_sequence("B ER").unwrap();
    // top-3 neighbours of B and ER, plus the base phonemes themselves
    let sub = inv.parse_sequence("B P D ER AH OW").unwrap();
    let ins = inv.parse_sequence("B ER P").unwrap();
    let mut stats = ChainStats::default();
    for base in bases(&alphabet, 4) {
        let mut plans = vec![SynthesisPlan::new(base.clone())];
        for first in edits_for(base.len(), &sub, &ins) {
            let mut plan = SynthesisPlan::new(base.clone());
            plan.edits = vec![first];
            let Ok(after) = apply_edits(&plan, &inv) else { continue };
            plans.push(plan.clone());
            // later positions refer to the sequence left by the first edit
            let visible = after.realized.len();
            for second in edits_for(visible, &sub, &ins) {
                let mut two = plan.clone();
                two.edits.push(second);
                plans.push(two);
            }
        }
        for plan in plans {
            let Ok(truth) = apply_edits(&plan, &inv) else { continue };
            if truth.realized.is_empty() || !covered_by(&truth, &sim, 3) {
                continue;
            }
            check_chain(&plan, &inv, &sim, &decoder, &mut stats);
        }
    }
    eprintln!("{stats:?}");
    assert!(stats.plans > 20_000, "{stats:?}");
    assert!(stats.unique_truth * 3 > stats.plans, "{stats:?}");
}

#[test]
fn generated_rows_are_valid_and_seeded() {
    let (inv, sim) = setup();
    let spec = CorpusSpec {
        utterances: 60,
        substitutions: (0, 2),
        insertions: (0, 1),
        deletions: (0, 1),
        repetitions: (0, 1),
        confidence: 0.6,
        seed: 40,
        ..Default::default()
    };
    let corpus = generate_corpus(&spec, &inv, &sim).unwrap();
    assert_eq!(corpus, generate_corpus(&spec, &inv, &sim).unwrap());
    for (i, plan) in corpus.iter().enumerate() {
        assert_eq!(plan.seed, 40 + i as u64);
        let lattice = synthesize_posteriors(plan, &inv, &sim).unwrap();
        assert!(validate(&lattice, &inv).is_empty());
        assert_eq!(lattice, synthesize_posteriors(plan, &inv, &sim).unwrap());
        let realized = apply_edits(plan, &inv).unwrap().realized;
        let n = realized.len();
        assert_eq!(lattice.n_frames(), n * plan.frames_per_phoneme + (n - 1) * plan.blank_frames_between);
    }
}

#[test]
fn confident_argmax_interleaves_blanks() {
    let (inv, sim) = setup();
    let mut plan = SynthesisPlan::new(inv.parse_sequence("B ER D").unwrap());
    plan.edits = vec![Edit::parse("ins:1=P", &inv).unwrap(), Edit::parse("rep:2=1", &inv).unwrap()];
    plan.frames_per_phoneme = 2;
    let lattice = synthesize_posteriors(&plan, &inv, &sim).unwrap();
    let columns = lattice.column_ids(&inv).unwrap();
    let argmax: Vec<&str> = (0..lattice.n_frames())
        .map(|f| {
            let row = lattice.row(f);
            let best = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            inv.label(columns[best])
        })
        .collect();
    assert_eq!(argmax.join(" "), "P P <blank> B B <blank> B B <blank> ER ER <blank> D D");
}

#[test]
fn truth_document_round_trips() {
    let (inv, _) = setup();
    let mut plan = SynthesisPlan::new(inv.parse_sequence("B ER D").unwrap());
    plan.edits = ["sub:2=EH", "ins:1=P"].iter().map(|e| Edit::parse(e, &inv).unwrap()).collect();
    plan.confidence = 0.9;
    plan.seed = 42;
    let truth = apply_edits(&plan, &inv).unwrap();
    let doc = TruthDocument::new(&plan, &truth, &inv);
    assert_eq!(doc.realized, ["P", "B", "EH", "D"]);
    assert_eq!(doc.annotations, ["I:P", "M:B", "S:EH|ER", "M:D"]);
    assert_eq!(doc.edits, ["sub:2=EH", "ins:1=P"]);
    let json = serde_json::to_string(&doc).unwrap();
    assert_eq!(serde_json::from_str::<TruthDocument>(&json).unwrap(), doc);
}
