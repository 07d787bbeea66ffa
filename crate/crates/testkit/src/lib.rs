//! Exhaustive reference implementations used as test oracles, seeded
//! generators of small random inputs, and the checks shared by the
//! integration and acceptance tests. The oracles share no code with the
//! algorithms under test beyond their data types.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use kfunc_core::decoder::{greedy_decode, Decoder, DecoderConfig, EditKind, EditTag};
use kfunc_core::eval::{align, corpus_per, per, CorpusPair, EditOp};
use kfunc_core::fst::{Arc, Label, Wfst, EPSILON};
use kfunc_core::lattice_io::PosteriorLattice;
use kfunc_core::phonology::{PhonemeInventory, SimilarityMatrix, SymbolId};
use kfunc_core::synth::{apply_edits, generate_corpus, synthesize_posteriors, CorpusSpec, SynthesisPlan};
use rand::{Rng, SeedableRng};

/// Relative tolerance under which two costs count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

pub fn tied_with_best(cost: f64, best: f64) -> bool {
    cost <= best + TIE_TOLERANCE * best.abs().max(1.0)
}

// ---------------------------------------------------------------- machines

/// Label sequences and cost of one accepting path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathInfo {
    pub input: Vec<Label>,
    pub output: Vec<Label>,
    pub cost: f64,
}

/// Every accepting path with at most `max_arcs` arcs, epsilons dropped from
/// the label sequences.
pub fn enumerate_paths(m: &Wfst, max_arcs: usize) -> Vec<PathInfo> {
    fn walk(m: &Wfst, q: usize, left: usize, cur: &mut PathInfo, out: &mut Vec<PathInfo>) {
        if let Some(w) = m.final_weight(q) {
            out.push(PathInfo {
                cost: cur.cost + w,
                ..cur.clone()
            });
        }
        if left == 0 {
            return;
        }
        for arc in m.arcs(q) {
            let saved = cur.cost;
            cur.cost += arc.weight;
            if arc.ilabel != EPSILON {
                cur.input.push(arc.ilabel);
            }
            if arc.olabel != EPSILON {
                cur.output.push(arc.olabel);
            }
            walk(m, arc.nextstate, left - 1, cur, out);
            if arc.ilabel != EPSILON {
                cur.input.pop();
            }
            if arc.olabel != EPSILON {
                cur.output.pop();
            }
            cur.cost = saved;
        }
    }
    let mut out = Vec::new();
    if m.num_states() > 0 {
        let mut cur = PathInfo {
            input: vec![],
            output: vec![],
            cost: 0.0,
        };
        walk(m, m.start(), max_arcs, &mut cur, &mut out);
    }
    out
}

/// Minimum cost and number of accepting paths for every label pair.
pub type Relation = BTreeMap<(Vec<Label>, Vec<Label>), (f64, usize)>;

pub fn relation(paths: &[PathInfo]) -> Relation {
    let mut out = Relation::new();
    for p in paths {
        let e = out
            .entry((p.input.clone(), p.output.clone()))
            .or_insert((f64::INFINITY, 0));
        e.0 = e.0.min(p.cost);
        e.1 += 1;
    }
    out
}

/// The relation of `a ∘ b` computed by joining the two relations on the
/// middle tape, counting one composed path per pair of component paths.
pub fn join_relations(a: &Relation, b: &Relation) -> Relation {
    let mut out = Relation::new();
    for ((x, y), &(ca, na)) in a {
        for ((y2, z), &(cb, nb)) in b {
            if y == y2 {
                let e = out.entry((x.clone(), z.clone())).or_insert((f64::INFINITY, 0));
                e.0 = e.0.min(ca + cb);
                e.1 += na * nb;
            }
        }
    }
    out
}

/// Best path under the shortest-path contract: minimum cost, then the
/// smallest output sequence, then the smallest input sequence.
pub fn best_path(paths: &[PathInfo]) -> Option<&PathInfo> {
    let best = paths.iter().map(|p| p.cost).fold(f64::INFINITY, f64::min);
    paths
        .iter()
        .filter(|p| tied_with_best(p.cost, best))
        .min_by(|a, b| a.output.cmp(&b.output).then_with(|| a.input.cmp(&b.input)))
}

fn weight(rng: &mut impl Rng, allow_zero: bool) -> f64 {
    // a small discrete set provokes exact ties
    let lo = if allow_zero { 0 } else { 1 };
    rng.random_range(lo..=6) as f64 * 0.5
}

/// Random acyclic machine: arcs only go from lower to higher state ids.
/// Labels are drawn from `0..=n_labels` with 0 the epsilon.
pub fn random_dag(rng: &mut impl Rng, n_states: usize, n_labels: Label, max_out: usize) -> Wfst {
    let mut m = Wfst::with_states(n_states);
    for q in 0..n_states {
        if q > 0 && rng.random_bool(0.4) || q + 1 == n_states && rng.random_bool(0.8) {
            m.set_final(q, weight(rng, true)).unwrap();
        }
        if q + 1 == n_states {
            break;
        }
        for _ in 0..rng.random_range(0..=max_out) {
            let next = rng.random_range(q + 1..n_states);
            let arc = Arc::new(
                rng.random_range(0..=n_labels),
                rng.random_range(0..=n_labels),
                weight(rng, true),
                next,
            );
            m.add_arc(q, arc).unwrap();
        }
    }
    m
}

/// Random machine with cycles allowed and strictly positive weights.
pub fn random_cyclic(rng: &mut impl Rng, n_states: usize, n_labels: Label, max_out: usize) -> Wfst {
    let mut m = Wfst::with_states(n_states);
    for q in 0..n_states {
        if rng.random_bool(0.35) {
            m.set_final(q, weight(rng, true)).unwrap();
        }
        for _ in 0..rng.random_range(0..=max_out) {
            let arc = Arc::new(
                rng.random_range(0..=n_labels),
                rng.random_range(0..=n_labels),
                weight(rng, false),
                rng.random_range(0..n_states),
            );
            m.add_arc(q, arc).unwrap();
        }
    }
    m
}

/// Linear acceptor of `labels` with zero weights.
pub fn linear_acceptor(labels: &[Label]) -> Wfst {
    let mut m = Wfst::with_states(labels.len() + 1);
    for (i, &l) in labels.iter().enumerate() {
        m.add_arc(i, Arc::new(l, l, 0.0, i + 1)).unwrap();
    }
    m.set_final(labels.len(), 0.0).unwrap();
    m
}

/// Single-state identity transducer over `labels`.
pub fn identity_machine(labels: impl IntoIterator<Item = Label>) -> Wfst {
    let mut m = Wfst::with_states(1);
    for l in labels {
        m.add_arc(0, Arc::new(l, l, 0.0, 0)).unwrap();
    }
    m.set_final(0, 0.0).unwrap();
    m
}

// --------------------------------------------------------------- alignment

fn script_cost(script: &[EditOp]) -> usize {
    script.iter().filter(|&&op| op != EditOp::Match).count()
}

/// Every edit script turning `reference` into `hypothesis`, with match only
/// on equal symbols and substitution only on different ones.
pub fn enumerate_scripts<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<Vec<EditOp>> {
    fn walk<T: PartialEq>(r: &[T], h: &[T], cur: &mut Vec<EditOp>, out: &mut Vec<Vec<EditOp>>) {
        if r.is_empty() && h.is_empty() {
            out.push(cur.clone());
            return;
        }
        let mut step = |op, r2: &[T], h2: &[T], cur: &mut Vec<EditOp>| {
            cur.push(op);
            walk(r2, h2, cur, out);
            cur.pop();
        };
        if let (Some(a), Some(b)) = (r.first(), h.first()) {
            let op = if a == b { EditOp::Match } else { EditOp::Substitution };
            step(op, &r[1..], &h[1..], cur);
        }
        if !r.is_empty() {
            step(EditOp::Deletion, &r[1..], h, cur);
        }
        if !h.is_empty() {
            step(EditOp::Insertion, r, &h[1..], cur);
        }
    }
    let mut out = Vec::new();
    walk(reference, hypothesis, &mut Vec::new(), &mut out);
    out
}

/// Orders minimal scripts the way a backtrace from the end chooses them:
/// compare the reversed scripts with match < substitution < deletion <
/// insertion.
fn backtrace_order(a: &[EditOp], b: &[EditOp]) -> Ordering {
    script_cost(a)
        .cmp(&script_cost(b))
        .then_with(|| a.iter().rev().cmp(b.iter().rev()))
}

/// Preferred minimal script, chosen from the full enumeration.
pub fn best_script_exhaustive<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<EditOp> {
    enumerate_scripts(reference, hypothesis)
        .into_iter()
        .min_by(|a, b| backtrace_order(a, b))
        .expect("at least one script exists")
}

/// Preferred minimal script by exhaustive search over last operations with
/// memoized prefixes; agrees with [`best_script_exhaustive`] and scales to
/// longer inputs.
pub fn best_script<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<EditOp> {
    let (n, m) = (reference.len(), hypothesis.len());
    // memo[i][j]: (cost, reversed script) for the prefixes of length i, j
    let mut memo: Vec<Vec<Option<(usize, Vec<EditOp>)>>> = vec![vec![None; m + 1]; n + 1];
    for i in 0..=n {
        for j in 0..=m {
            let mut best: Option<(usize, Vec<EditOp>)> = if i == 0 && j == 0 { Some((0, vec![])) } else { None };
            let mut offer = |op: EditOp, prev: &(usize, Vec<EditOp>)| {
                let mut seq = Vec::with_capacity(prev.1.len() + 1);
                seq.push(op);
                seq.extend_from_slice(&prev.1);
                let cand = (prev.0 + usize::from(op != EditOp::Match), seq);
                if best.as_ref().is_none_or(|b| cand < *b) {
                    best = Some(cand);
                }
            };
            if i > 0 && j > 0 {
                let op = if reference[i - 1] == hypothesis[j - 1] {
                    EditOp::Match
                } else {
                    EditOp::Substitution
                };
                offer(op, memo[i - 1][j - 1].as_ref().unwrap());
            }
            if i > 0 {
                offer(EditOp::Deletion, memo[i - 1][j].as_ref().unwrap());
            }
            if j > 0 {
                offer(EditOp::Insertion, memo[i][j - 1].as_ref().unwrap());
            }
            memo[i][j] = best;
        }
    }
    let (_, mut rev) = memo[n][m].take().unwrap();
    rev.reverse();
    rev
}

/// Calls `f` on every sequence over `0..alphabet` with length at most
/// `max_len` whose symbols first appear in increasing order, so each class
/// of sequences equal up to renaming is visited once.
pub fn for_each_canonical_pair(max_len: usize, alphabet: u8, mut f: impl FnMut(&[u8], &[u8])) {
    fn grow(buf: &mut Vec<u8>, used: u8, alphabet: u8, total: usize, f: &mut dyn FnMut(&[u8])) {
        if buf.len() == total {
            f(buf);
            return;
        }
        for s in 0..=used.min(alphabet - 1) {
            buf.push(s);
            grow(buf, used.max(s + 1), alphabet, total, f);
            buf.pop();
        }
    }
    for la in 0..=max_len {
        for lb in 0..=max_len {
            grow(&mut Vec::new(), 0, alphabet, la + lb, &mut |s: &[u8]| f(&s[..la], &s[la..]));
        }
    }
}

// ---------------------------------------------------------------- decoding

/// Optimal annotated decode found by enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDecode {
    pub cost: f64,
    pub tags: Vec<EditTag>,
    /// Number of distinct collapsed label sequences considered.
    pub sequences: usize,
}

fn tag_key(t: &EditTag) -> (usize, u32, u32) {
    let kind = EditKind::ALL.iter().position(|&k| k == t.kind).unwrap();
    (kind, t.produced.map_or(0, |s| s.0), t.expected.map_or(0, |s| s.0))
}

/// Best frame path cost per collapsed label sequence over every
/// assignment of a lattice column to every frame.
pub fn collapsed_sequences(lattice: &PosteriorLattice, columns: &[SymbolId]) -> BTreeMap<Vec<SymbolId>, f64> {
    let (t_max, s) = (lattice.n_frames(), columns.len());
    let mut out = BTreeMap::new();
    let mut choice = vec![0usize; t_max];
    loop {
        let mut cost = 0.0;
        let mut seq = Vec::new();
        let mut prev: Option<SymbolId> = None;
        for (t, &c) in choice.iter().enumerate() {
            cost += -(lattice.log_prob(t, c) as f64);
            let sym = columns[c];
            if Some(sym) != prev && !sym.is_blank() {
                seq.push(sym);
            }
            prev = Some(sym);
        }
        let e = out.entry(seq).or_insert(f64::INFINITY);
        *e = f64::min(*e, cost);
        // odometer
        let mut t = 0;
        while t < t_max {
            choice[t] += 1;
            if choice[t] < s {
                break;
            }
            choice[t] = 0;
            t += 1;
        }
        if t == t_max {
            break;
        }
    }
    out
}

/// Every annotated edit sequence explaining `heard` against `reference`,
/// with its edit cost.
pub fn annotated_edit_sequences(
    heard: &[SymbolId],
    reference: &[SymbolId],
    inventory: &PhonemeInventory,
    similarity: &SimilarityMatrix,
    config: &DecoderConfig,
    k: usize,
) -> Vec<(f64, Vec<EditTag>)> {
    let k_eff = k.min(inventory.phoneme_count() - 1);
    let candidates: Vec<Vec<SymbolId>> = reference
        .iter()
        .map(|&p| {
            if k_eff < 2 {
                vec![]
            } else {
                similarity.top_k_neighbors(p, k_eff).unwrap()[1..].to_vec()
            }
        })
        .collect();
    struct Ctx<'a> {
        heard: &'a [SymbolId],
        reference: &'a [SymbolId],
        candidates: &'a [Vec<SymbolId>],
        similarity: &'a SimilarityMatrix,
        config: &'a DecoderConfig,
        out: Vec<(f64, Vec<EditTag>)>,
    }
    fn walk(cx: &mut Ctx, i: usize, j: usize, cost: f64, tags: &mut Vec<EditTag>) {
        let (n, m) = (cx.reference.len(), cx.heard.len());
        if i == n && j == m {
            cx.out.push((cost, tags.clone()));
            return;
        }
        let step = |cx: &mut Ctx, tag, c: f64, i2, j2, tags: &mut Vec<EditTag>| {
            tags.push(tag);
            walk(cx, i2, j2, cost + c, tags);
            tags.pop();
        };
        if j < m {
            let q = cx.heard[j];
            step(cx, EditTag::insertion(q), cx.config.c_ins, i, j + 1, tags);
            if i >= 1 && cx.reference[i - 1] == q {
                step(cx, EditTag::repetition(q), cx.config.c_rep, i, j + 1, tags);
            }
            if i < n {
                let p = cx.reference[i];
                if q == p {
                    step(cx, EditTag::matched(p), 0.0, i + 1, j + 1, tags);
                } else if cx.candidates[i].contains(&q) {
                    let c = cx.config.lambda_sub * (1.0 - cx.similarity.get(q, p)) + cx.config.beta_sub;
                    step(cx, EditTag::substitution(q, p), c, i + 1, j + 1, tags);
                }
            }
        }
        if i < n {
            step(cx, EditTag::deletion(cx.reference[i]), cx.config.c_del, i + 1, j, tags);
        }
    }
    let mut cx = Ctx {
        heard,
        reference,
        candidates: &candidates,
        similarity,
        config,
        out: Vec::new(),
    };
    walk(&mut cx, 0, 0, 0.0, &mut Vec::new());
    cx.out
}

/// Minimum over frame paths and annotated edit sequences of emission plus
/// edit cost; ties go to the lexicographically smallest tag sequence.
pub fn brute_force_decode(
    lattice: &PosteriorLattice,
    inventory: &PhonemeInventory,
    similarity: &SimilarityMatrix,
    config: &DecoderConfig,
    reference: &[SymbolId],
    k: usize,
) -> OracleDecode {
    let columns = lattice.column_ids(inventory).unwrap();
    let sequences = collapsed_sequences(lattice, &columns);
    let mut all = Vec::new();
    for (heard, emission) in &sequences {
        for (c, tags) in annotated_edit_sequences(heard, reference, inventory, similarity, config, k) {
            all.push((emission + c, tags));
        }
    }
    let best = all.iter().map(|(c, _)| *c).fold(f64::INFINITY, f64::min);
    let (cost, tags) = all
        .into_iter()
        .filter(|(c, _)| tied_with_best(*c, best))
        .min_by(|a, b| a.1.iter().map(tag_key).cmp(b.1.iter().map(tag_key)))
        .expect("deletions always explain the empty sequence");
    OracleDecode {
        cost,
        tags,
        sequences: sequences.len(),
    }
}

// -------------------------------------------------------------- generators

/// Lattice over blank plus `phonemes` with random rows. `peak` > 1 makes
/// rows more peaked.
pub fn random_lattice(
    rng: &mut impl Rng,
    inventory: &PhonemeInventory,
    phonemes: &[SymbolId],
    n_frames: usize,
    peak: i32,
) -> PosteriorLattice {
    let mut symbols = vec![inventory.label(SymbolId::BLANK).to_string()];
    symbols.extend(phonemes.iter().map(|&p| inventory.label(p).to_string()));
    let rows: Vec<Vec<f64>> = (0..n_frames)
        .map(|_| {
            (0..symbols.len())
                .map(|_| rng.random_range(0.001f64..1.0).powi(peak))
                .collect()
        })
        .collect();
    PosteriorLattice::from_probabilities(symbols, 20.0, &rows).unwrap()
}

/// Lattice whose rows are given explicitly, columns blank plus `phonemes`.
pub fn lattice_from_rows(inventory: &PhonemeInventory, phonemes: &[SymbolId], rows: &[Vec<f64>]) -> PosteriorLattice {
    let mut symbols = vec![inventory.label(SymbolId::BLANK).to_string()];
    symbols.extend(phonemes.iter().map(|&p| inventory.label(p).to_string()));
    PosteriorLattice::from_probabilities(symbols, 20.0, rows).unwrap()
}

/// Random non-empty subset of `pool` of size at most `max`, in pool order.
pub fn random_subset<T: Copy>(rng: &mut impl Rng, pool: &[T], max: usize) -> Vec<T> {
    let size = rng.random_range(1..=max.min(pool.len()));
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    for i in 0..size {
        let j = rng.random_range(i..idx.len());
        idx.swap(i, j);
    }
    let mut chosen = idx[..size].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| pool[i]).collect()
}

pub fn random_sequence<T: Copy>(rng: &mut impl Rng, pool: &[T], len: usize) -> Vec<T> {
    (0..len).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

/// Decoder configuration with penalties drawn from small ranges.
pub fn random_config(rng: &mut impl Rng) -> DecoderConfig {
    DecoderConfig {
        lambda_sub: rng.random_range(0.0..6.0),
        beta_sub: rng.random_range(0.0..2.0),
        c_del: rng.random_range(0.0..5.0),
        c_ins: rng.random_range(0.0..5.0),
        c_rep: rng.random_range(0.0..3.0),
        ..DecoderConfig::default()
    }
}


// ------------------------------------------------------------ case drivers

/// One decoding problem for the oracle comparison.
#[derive(Debug, Clone)]
pub struct DecodeCase {
    pub lattice: PosteriorLattice,
    pub reference: Vec<SymbolId>,
    pub k: usize,
    pub config: DecoderConfig,
}

fn ids(inventory: &PhonemeInventory, labels: &str) -> Vec<SymbolId> {
    inventory.parse_sequence(labels).unwrap()
}

/// Every lattice of up to 3 frames whose rows come from a small palette
/// (one row peaked on each column plus the uniform row), over blank plus any
/// non-empty subset of {B, P, D}, against every reference of length 1..=3
/// over the same phonemes, for k = 1 and k = 3.
pub fn decode_grid(inventory: &PhonemeInventory) -> Vec<DecodeCase> {
    let pool = ids(inventory, "B P D");
    let mut references = Vec::new();
    for len in 1..=3u32 {
        for code in 0..3usize.pow(len) {
            let mut c = code;
            references.push(
                (0..len)
                    .map(|_| {
                        let p = pool[c % 3];
                        c /= 3;
                        p
                    })
                    .collect::<Vec<_>>(),
            );
        }
    }
    let mut out = Vec::new();
    for mask in 1..8usize {
        let phonemes: Vec<SymbolId> = (0..3).filter(|b| mask >> b & 1 == 1).map(|b| pool[b]).collect();
        let width = phonemes.len() + 1;
        let mut palette: Vec<Vec<f64>> = (0..width)
            .map(|peak| (0..width).map(|s| if s == peak { 0.6 } else { 0.4 / (width - 1) as f64 }).collect())
            .collect();
        palette.push(vec![1.0 / width as f64; width]);
        for frames in 0..=3u32 {
            for code in 0..palette.len().pow(frames) {
                let mut c = code;
                let rows: Vec<Vec<f64>> = (0..frames)
                    .map(|_| {
                        let r = palette[c % palette.len()].clone();
                        c /= palette.len();
                        r
                    })
                    .collect();
                let lattice = lattice_from_rows(inventory, &phonemes, &rows);
                for reference in &references {
                    for k in [1, 3] {
                        out.push(DecodeCase {
                            lattice: lattice.clone(),
                            reference: reference.clone(),
                            k,
                            config: DecoderConfig::default(),
                        });
                    }
                }
            }
        }
    }
    out
}

/// Seeded random cases: up to 6 frames, up to 4 lattice symbols, references
/// of length 1..=3, default or random penalties.
pub fn random_decode_cases(inventory: &PhonemeInventory, seed: u64, n: usize) -> Vec<DecodeCase> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let pool = ids(inventory, "B P D T AH ER");
    (0..n)
        .map(|_| {
            let phonemes = random_subset(&mut rng, &pool, 3);
            let frames = rng.random_range(0..=6);
            let peak = rng.random_range(1..=4);
            let lattice = random_lattice(&mut rng, inventory, &phonemes, frames, peak);
            let len = rng.random_range(1..=3);
            let reference = random_sequence(&mut rng, &pool, len);
            let k = if rng.random_bool(0.5) { 1 } else { 3 };
            let config = if rng.random_bool(0.5) {
                DecoderConfig::default()
            } else {
                random_config(&mut rng)
            };
            DecodeCase {
                lattice,
                reference,
                k,
                config,
            }
        })
        .collect()
}

/// Compares the production decoder with [`brute_force_decode`].
pub fn check_decode_case(case: &DecodeCase, inventory: &PhonemeInventory, similarity: &SimilarityMatrix) -> Result<(), String> {
    let decoder = Decoder::new(inventory, similarity, case.config.clone()).map_err(|e| e.to_string())?;
    let t = decoder
        .decode_with_k(&case.lattice, &case.reference, case.k)
        .map_err(|e| e.to_string())?;
    let oracle = brute_force_decode(&case.lattice, inventory, similarity, &case.config, &case.reference, case.k);
    let expected: Vec<String> = oracle.tags.iter().map(|t| t.render(inventory)).collect();
    let describe = || {
        format!(
            "reference {:?}, k {}, {} frames over {:?}",
            inventory.labels(&case.reference),
            case.k,
            case.lattice.n_frames(),
            case.lattice.symbols()
        )
    };
    if (t.total_cost - oracle.cost).abs() > 1e-9 {
        return Err(format!("{}: cost {} but oracle {}", describe(), t.total_cost, oracle.cost));
    }
    if t.annotations() != expected {
        return Err(format!("{}: annotations {:?} but oracle {:?}", describe(), t.annotations(), expected));
    }
    Ok(())
}

/// Checks `align` and `per` on one pair against the script oracle.
pub fn check_alignment<T: PartialEq + std::fmt::Debug>(
    reference: &[T],
    hypothesis: &[T],
    oracle: &[EditOp],
) -> Result<(), String> {
    let got = align(reference, hypothesis);
    let ops: Vec<EditOp> = got.iter().map(|p| p.op).collect();
    if ops != oracle {
        return Err(format!("{reference:?} vs {hypothesis:?}: {ops:?}, oracle {oracle:?}"));
    }
    // the columns must consume both sequences in order
    let (mut i, mut j) = (0, 0);
    for p in &got {
        let (r, h) = match p.op {
            EditOp::Match | EditOp::Substitution => (Some(i), Some(j)),
            EditOp::Deletion => (Some(i), None),
            EditOp::Insertion => (None, Some(j)),
        };
        if (p.reference, p.hypothesis) != (r, h) {
            return Err(format!("{reference:?} vs {hypothesis:?}: column {p:?} out of order"));
        }
        i += usize::from(r.is_some());
        j += usize::from(h.is_some());
    }
    if !reference.is_empty() {
        let per = per(reference, hypothesis).map_err(|e| e.to_string())?;
        let count = |op| oracle.iter().filter(|&&o| o == op).count();
        let expected = (count(EditOp::Substitution), count(EditOp::Deletion), count(EditOp::Insertion));
        if (per.substitutions, per.deletions, per.insertions) != expected || per.reference_length != reference.len() {
            return Err(format!("{reference:?} vs {hypothesis:?}: per counts {per:?}"));
        }
        let rate = 100.0 * (expected.0 + expected.1 + expected.2) as f64 / reference.len() as f64;
        if (per.per - rate).abs() > 1e-12 {
            return Err(format!("{reference:?} vs {hypothesis:?}: per {} expected {rate}", per.per));
        }
    }
    Ok(())
}

/// Random valid lattice over blank plus a random phoneme subset in random
/// order, with 0..=30 frames and a random whole-millisecond frame duration.
pub fn random_kwpo_lattice(rng: &mut impl Rng, inventory: &PhonemeInventory) -> PosteriorLattice {
    let mut pool: Vec<SymbolId> = inventory.phonemes().collect();
    for i in (1..pool.len()).rev() {
        pool.swap(i, rng.random_range(0..=i));
    }
    let width = rng.random_range(0..=pool.len());
    let mut symbols = vec![inventory.label(SymbolId::BLANK).to_string()];
    symbols.extend(pool[..width].iter().map(|&p| inventory.label(p).to_string()));
    let frames = rng.random_range(0..=30);
    let rows: Vec<Vec<f64>> = (0..frames)
        .map(|_| {
            (0..symbols.len())
                .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0f64..1.0) + 1e-9 })
                .collect()
        })
        .collect();
    let duration = rng.random_range(1..=100) as f32;
    PosteriorLattice::from_probabilities(symbols, duration, &rows).unwrap()
}

/// Round trip through the byte format, then invert each header byte (fixed
/// fields and symbol table) in turn and require the reader to refuse it.
pub fn check_kwpo(lattice: &PosteriorLattice, inventory: &PhonemeInventory) -> Result<(), String> {
    use kfunc_core::lattice_io::{decode, encode, FIXED_HEADER_LEN};
    let bytes = encode(lattice).map_err(|e| e.to_string())?;
    let back = decode(&bytes, inventory).map_err(|e| format!("valid file rejected: {e}"))?;
    if back != *lattice || back.log_probs().iter().zip(lattice.log_probs()).any(|(a, b)| a.to_bits() != b.to_bits()) {
        return Err("round trip changed the lattice".into());
    }
    if encode(&back).map_err(|e| e.to_string())? != bytes {
        return Err("re-encoding is not byte-identical".into());
    }
    let header = FIXED_HEADER_LEN + lattice.symbols().iter().map(|s| 1 + s.len()).sum::<usize>();
    for i in 0..header {
        let mut bad = bytes.clone();
        bad[i] ^= 0xFF;
        if decode(&bad, inventory).is_ok() {
            return Err(format!("header byte {i} inverted and still accepted"));
        }
    }
    Ok(())
}

/// Similarity under the default weight table, recomputed from the rendered
/// feature fields of both phonemes.
pub fn default_similarity_oracle(inventory: &PhonemeInventory, p: SymbolId, q: SymbolId) -> f64 {
    let fields = |s: SymbolId| -> BTreeMap<String, String> {
        inventory
            .features(s)
            .unwrap()
            .to_document_fields()
            .split_whitespace()
            .map(|kv| {
                let (k, v) = kv.split_once('=').unwrap();
                (k.to_string(), v.to_string())
            })
            .collect()
    };
    let (a, b) = (fields(p), fields(q));
    if a["class"] != b["class"] {
        return 0.0;
    }
    let weights: &[(&str, f64)] = if a["class"] == "consonant" {
        &[("class", 0.25), ("manner", 0.30), ("place", 0.25), ("voicing", 0.20)]
    } else {
        &[("class", 0.25), ("height", 0.30), ("backness", 0.25), ("rounding", 0.10), ("tenseness", 0.10)]
    };
    weights.iter().filter(|(d, _)| a[*d] == b[*d]).map(|(_, w)| w).sum()
}

/// Every similarity-matrix property over every phoneme pair: agreement
/// with the recomputed score, symmetry, unit diagonal, [0, 1] range, unique
/// self-argmax, and top-k rankings equal to a full sort for every k.
pub fn check_similarity_suite(inventory: &PhonemeInventory, similarity: &SimilarityMatrix) -> Result<(), String> {
    let phonemes: Vec<SymbolId> = inventory.phonemes().collect();
    if phonemes.len() != 39 {
        return Err(format!("{} phonemes", phonemes.len()));
    }
    for &p in &phonemes {
        let lp = inventory.label(p);
        for &q in &phonemes {
            let s = similarity.similarity(p, q).map_err(|e| e.to_string())?;
            let oracle = default_similarity_oracle(inventory, p, q);
            if (s - oracle).abs() > 1e-12 {
                return Err(format!("sim({lp},{}) = {s}, recomputed {oracle}", inventory.label(q)));
            }
            if s != similarity.similarity(q, p).unwrap() {
                return Err(format!("sim({lp},{}) is not symmetric", inventory.label(q)));
            }
            if !(0.0..=1.0).contains(&s) {
                return Err(format!("sim({lp},{}) = {s} out of range", inventory.label(q)));
            }
            if p != q && s >= 1.0 {
                return Err(format!("sim({lp},{}) ties the self-similarity", inventory.label(q)));
            }
        }
        if similarity.similarity(p, p).unwrap() != 1.0 {
            return Err(format!("sim({lp},{lp}) != 1"));
        }
        let mut ranked = phonemes.clone();
        ranked.sort_by(|&a, &b| {
            similarity
                .get(p, b)
                .partial_cmp(&similarity.get(p, a))
                .unwrap()
                .then(a.cmp(&b))
        });
        for k in 1..phonemes.len() {
            let got = similarity.top_k_neighbors(p, k).map_err(|e| e.to_string())?;
            if got != &ranked[..k] {
                return Err(format!("top_k({lp}, {k}) = {:?}, expected {:?}", inventory.labels(got), inventory.labels(&ranked[..k])));
            }
        }
        if similarity.top_k_neighbors(p, phonemes.len()).is_ok() || similarity.top_k_neighbors(p, 0).is_ok() {
            return Err(format!("top_k({lp}, k) accepted an out-of-range k"));
        }
    }
    Ok(())
}

/// Cheapest explanations of `heard` against `reference`.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanations {
    pub min_cost: f64,
    /// Lexicographically smallest minimum-cost tag sequence.
    pub best: Vec<EditTag>,
    /// Number of distinct minimum-cost tag sequences.
    pub optimal_count: usize,
}

/// Memoized search over the same move set as
/// [`annotated_edit_sequences`]; suffixes are solved once per
/// `(reference position, heard position)`.
pub fn best_explanations(
    heard: &[SymbolId],
    reference: &[SymbolId],
    inventory: &PhonemeInventory,
    similarity: &SimilarityMatrix,
    config: &DecoderConfig,
    k: usize,
) -> Explanations {
    let (n, m) = (reference.len(), heard.len());
    let k_eff = k.min(inventory.phoneme_count() - 1);
    let subs = |p: SymbolId| -> &[SymbolId] {
        if k_eff < 2 {
            &[]
        } else {
            &similarity.top_k_neighbors(p, k_eff).unwrap()[1..]
        }
    };
    let mut memo: Vec<Vec<Option<Explanations>>> = vec![vec![None; m + 1]; n + 1];
    for i in (0..=n).rev() {
        for j in (0..=m).rev() {
            if i == n && j == m {
                memo[i][j] = Some(Explanations {
                    min_cost: 0.0,
                    best: vec![],
                    optimal_count: 1,
                });
                continue;
            }
            let mut moves: Vec<(EditTag, f64, usize, usize)> = Vec::new();
            if j < m {
                let q = heard[j];
                moves.push((EditTag::insertion(q), config.c_ins, i, j + 1));
                if i >= 1 && reference[i - 1] == q {
                    moves.push((EditTag::repetition(q), config.c_rep, i, j + 1));
                }
                if i < n {
                    let p = reference[i];
                    if q == p {
                        moves.push((EditTag::matched(p), 0.0, i + 1, j + 1));
                    } else if subs(p).contains(&q) {
                        let c = config.lambda_sub * (1.0 - similarity.get(q, p)) + config.beta_sub;
                        moves.push((EditTag::substitution(q, p), c, i + 1, j + 1));
                    }
                }
            }
            if i < n {
                moves.push((EditTag::deletion(reference[i]), config.c_del, i + 1, j));
            }
            let scored: Vec<(f64, Vec<EditTag>, usize)> = moves
                .into_iter()
                .filter_map(|(tag, c, i2, j2)| {
                    let rest = memo[i2][j2].as_ref()?;
                    let mut seq = vec![tag];
                    seq.extend_from_slice(&rest.best);
                    Some((c + rest.min_cost, seq, rest.optimal_count))
                })
                .collect();
            let min = scored.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
            memo[i][j] = scored
                .iter()
                .filter(|s| tied_with_best(s.0, min))
                .min_by(|a, b| a.1.iter().map(tag_key).cmp(b.1.iter().map(tag_key)))
                .map(|best| Explanations {
                    min_cost: min,
                    best: best.1.clone(),
                    optimal_count: scored.iter().filter(|s| tied_with_best(s.0, min)).map(|s| s.2).sum(),
                });
        }
    }
    memo[0][0].take().expect("deletions and insertions always explain")
}

/// Edit cost of a tag sequence under `config`.
pub fn tag_sequence_cost(tags: &[EditTag], similarity: &SimilarityMatrix, config: &DecoderConfig) -> f64 {
    tags.iter()
        .map(|t| match t.kind {
            EditKind::Match => 0.0,
            EditKind::Substitution => {
                config.lambda_sub * (1.0 - similarity.get(t.produced.unwrap(), t.expected.unwrap())) + config.beta_sub
            }
            EditKind::Deletion => config.c_del,
            EditKind::Insertion => config.c_ins,
            EditKind::Repetition => config.c_rep,
        })
        .sum()
}

/// Ten `(id, predicted, reference, error rate)` records; rates worked out
/// by hand as `|p - r| / r`.
pub const SCORE_FIXTURE: [(&str, f64, f64, f64); 10] = [
    ("u01", 45.0, 50.0, 0.1),
    ("u02", 50.0, 50.0, 0.0),
    ("u03", 0.0, 50.0, 1.0),
    ("u04", 60.0, 50.0, 0.2),
    ("u05", 30.0, 40.0, 0.25),
    ("u06", 88.0, 80.0, 0.1),
    ("u07", 12.0, 16.0, 0.25),
    ("u08", 7.0, 8.0, 0.125),
    ("u09", 101.0, 100.0, 0.01),
    ("u10", 33.0, 30.0, 0.1),
];

/// Mean of the fixture rates in percent: 213.5 / 10.
pub const SCORE_FIXTURE_MEAN_PERCENT: f64 = 21.35;

pub fn check_scoring_fixture() -> Result<(), String> {
    use kfunc_core::scoring::{mean_error_rate, score_error_rate, ScoreRecord};
    let mut records = Vec::new();
    for (id, p, r, rate) in SCORE_FIXTURE {
        let got = score_error_rate(p, r).map_err(|e| e.to_string())?;
        if (got - rate).abs() > 1e-12 {
            return Err(format!("{id}: rate {got}, hand value {rate}"));
        }
        records.push(ScoreRecord::new(id, p, r).map_err(|e| e.to_string())?);
    }
    let mean = mean_error_rate(&records).map_err(|e| e.to_string())?;
    if (mean - SCORE_FIXTURE_MEAN_PERCENT).abs() > 1e-12 {
        return Err(format!("mean {mean}, hand value {SCORE_FIXTURE_MEAN_PERCENT}"));
    }
    Ok(())
}

/// Seeded corpus mixing every edit type at moderate confidence.
pub fn mixed_corpus(inventory: &PhonemeInventory, similarity: &SimilarityMatrix, utterances: usize, seed: u64) -> Vec<SynthesisPlan> {
    let spec = CorpusSpec {
        utterances,
        min_length: 2,
        max_length: 8,
        substitutions: (0, 2),
        insertions: (0, 1),
        deletions: (0, 1),
        repetitions: (0, 1),
        frames_per_phoneme: 2,
        confidence: 0.8,
        seed,
        ..Default::default()
    };
    generate_corpus(&spec, inventory, similarity).expect("valid corpus spec")
}

/// With `k = 1` the reference machine has no substitution arcs and decoding
/// equals the substitution-free decoder.
pub fn check_k_one_reduction(plans: &[SynthesisPlan], decoder: &Decoder, inventory: &PhonemeInventory, similarity: &SimilarityMatrix) -> Result<(), String> {
    for (n, plan) in plans.iter().enumerate() {
        let arcs = decoder.reference_machine(&plan.base, 1).map_err(|e| e.to_string())?.substitution_arc_count();
        if arcs != 0 {
            return Err(format!("utterance {n}: {arcs} substitution arcs at k=1"));
        }
        let lattice = synthesize_posteriors(plan, inventory, similarity).map_err(|e| e.to_string())?;
        let one = decoder.decode_with_k(&lattice, &plan.base, 1).map_err(|e| e.to_string())?;
        let plain = decoder.decode_without_substitutions(&lattice, &plan.base).map_err(|e| e.to_string())?;
        if one != plain {
            return Err(format!("utterance {n}: k=1 {:?} vs substitution-free {:?}", one.annotations(), plain.annotations()));
        }
    }
    Ok(())
}

/// `total_cost(k=3) <= total_cost(k=1)` on every plan.
pub fn check_k_monotonic(plans: &[SynthesisPlan], decoder: &Decoder, inventory: &PhonemeInventory, similarity: &SimilarityMatrix) -> Result<(), String> {
    let mut violations = Vec::new();
    for (n, plan) in plans.iter().enumerate() {
        let lattice = synthesize_posteriors(plan, inventory, similarity).map_err(|e| e.to_string())?;
        let one = decoder.decode_with_k(&lattice, &plan.base, 1).map_err(|e| e.to_string())?.total_cost;
        let three = decoder.decode_with_k(&lattice, &plan.base, 3).map_err(|e| e.to_string())?.total_cost;
        if three > one + TIE_TOLERANCE * one.abs().max(1.0) {
            violations.push(format!("utterance {n}: k=3 {three} > k=1 {one}"));
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(format!("{} violations, first {}", violations.len(), violations[0]))
    }
}

/// Edit-free confident plans decode to all matches with PER 0, and the
/// greedy path returns the base.
pub fn check_identity_pipeline(plans: &[SynthesisPlan], decoder: &Decoder, inventory: &PhonemeInventory, similarity: &SimilarityMatrix) -> Result<(), String> {
    for (n, plan) in plans.iter().enumerate() {
        if !plan.edits.is_empty() || plan.confidence != 1.0 {
            return Err(format!("utterance {n} is not an edit-free confident plan"));
        }
        let lattice = synthesize_posteriors(plan, inventory, similarity).map_err(|e| e.to_string())?;
        let t = decoder.decode(&lattice, &plan.base).map_err(|e| e.to_string())?;
        if !t.tokens.iter().all(|t| t.edit == EditKind::Match) {
            return Err(format!("utterance {n}: {:?}", t.annotations()));
        }
        let rate = per(&t.reference, &t.verbatim()).map_err(|e| e.to_string())?;
        if rate.per != 0.0 || t.verbatim() != inventory.labels(&plan.base) {
            return Err(format!("utterance {n}: PER {}", rate.per));
        }
        if greedy_decode(&lattice, inventory).map_err(|e| e.to_string())? != plan.base {
            return Err(format!("utterance {n}: greedy path differs from the base"));
        }
    }
    Ok(())
}

/// The two directional corpora: confident with similarity-guided
/// substitutions, and unreliable.
pub fn directional_corpus(confident: bool) -> CorpusSpec {
    let (confidence, jitter, seed) = if confident { (0.95, 1.5, 11_000) } else { (0.40, 2.5, 11_500) };
    CorpusSpec {
        utterances: 200,
        min_length: 4,
        max_length: 10,
        substitutions: (1, 2),
        substitution_k: 3,
        frames_per_phoneme: 1,
        blank_frames_between: 1,
        confidence,
        jitter,
        seed,
        ..Default::default()
    }
}

/// Pooled PER against the realized phonemes for each system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemPers {
    pub greedy: f64,
    pub k1: f64,
    pub k3: f64,
}

pub fn system_pers(spec: &CorpusSpec, decoder: &Decoder, inventory: &PhonemeInventory, similarity: &SimilarityMatrix) -> Result<SystemPers, String> {
    let plans = generate_corpus(spec, inventory, similarity).map_err(|e| e.to_string())?;
    let (mut greedy, mut k1, mut k3) = (Vec::new(), Vec::new(), Vec::new());
    for (n, plan) in plans.iter().enumerate() {
        let id = format!("u{n:04}");
        let truth = inventory.labels(&apply_edits(plan, inventory).map_err(|e| e.to_string())?.realized);
        let lattice = synthesize_posteriors(plan, inventory, similarity).map_err(|e| e.to_string())?;
        let g = greedy_decode(&lattice, inventory).map_err(|e| e.to_string())?;
        greedy.push((id.clone(), truth.clone(), inventory.labels(&g)));
        for (k, out) in [(1, &mut k1), (3, &mut k3)] {
            let t = decoder.decode_with_k(&lattice, &plan.base, k).map_err(|e| e.to_string())?;
            out.push((id.clone(), truth.clone(), t.verbatim()));
        }
    }
    let pooled = |pairs: &[CorpusPair<String>]| corpus_per(pairs).map(|r| r.pooled.per).map_err(|e| e.to_string());
    Ok(SystemPers {
        greedy: pooled(&greedy)?,
        k1: pooled(&k1)?,
        k3: pooled(&k3)?,
    })
}
