use std::cmp::Ordering;

use crate::fst::{
    build_collapse_fst, build_emission_fst, compose, label_symbol, shortest_distance, shortest_path, within_tolerance, Wfst,
};
use crate::lattice_io::{self, LatticeError, PosteriorLattice};
use crate::phonology::{PhonemeInventory, SimilarityMatrix, SymbolId};

use super::{
    mean_max_posterior, select_k, DecodeError, DecodedToken, DecoderConfig, EditKind, EditTag, KSetting, ReferenceMachine,
    Transcription, TranscriptionMetadata,
};

const AUTO_K_RULE: &str = "k=3 if mean max-posterior >= tau_conf else k=1 (lattice confidence used as a proxy)";

/// One move of the decoding search: optionally a consumed frame, optionally
/// an emitted edit tag.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Step {
    next: usize,
    frame: Option<(usize, usize)>,
    tag: Option<EditTag>,
    cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Choice {
    Unset,
    Final,
    Move(Step),
}

/// Path event in search order: a frame `(t, symbol)` and/or a tag.
type Event = (Option<(usize, SymbolId)>, Option<EditTag>);

/// Decodes lattices against reference sequences.
#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    inventory: &'a PhonemeInventory,
    similarity: &'a SimilarityMatrix,
    config: DecoderConfig,
}

impl<'a> Decoder<'a> {
    pub fn new(
        inventory: &'a PhonemeInventory,
        similarity: &'a SimilarityMatrix,
        config: DecoderConfig,
    ) -> Result<Self, DecodeError> {
        config.validate()?;
        Ok(Self {
            inventory,
            similarity,
            config,
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn inventory(&self) -> &'a PhonemeInventory {
        self.inventory
    }

    /// The candidate count for `lattice` under the configured policy.
    pub fn resolve_k(&self, lattice: &PosteriorLattice) -> (usize, TranscriptionMetadata) {
        match self.config.k.fixed() {
            Some(k) => (
                k,
                TranscriptionMetadata {
                    k_requested: self.config.k,
                    mean_max_posterior: None,
                    k_rule: None,
                },
            ),
            None => (
                select_k(lattice, &self.config),
                TranscriptionMetadata {
                    k_requested: KSetting::Auto,
                    mean_max_posterior: mean_max_posterior(lattice),
                    k_rule: Some(AUTO_K_RULE.to_string()),
                },
            ),
        }
    }

    pub fn reference_machine(&self, reference: &[SymbolId], k: usize) -> Result<ReferenceMachine<'a>, DecodeError> {
        ReferenceMachine::new(reference, self.inventory, self.similarity, &self.config, k)
    }

    /// Decodes with the configured candidate count.
    pub fn decode(&self, lattice: &PosteriorLattice, reference: &[SymbolId]) -> Result<Transcription, DecodeError> {
        let (k, metadata) = self.resolve_k(lattice);
        let machine = self.reference_machine(reference, k)?;
        self.decode_with(lattice, &machine, metadata)
    }

    /// Decodes with a fixed candidate count, ignoring the configured policy.
    pub fn decode_with_k(
        &self,
        lattice: &PosteriorLattice,
        reference: &[SymbolId],
        k: usize,
    ) -> Result<Transcription, DecodeError> {
        let machine = self.reference_machine(reference, k)?;
        self.decode_with(lattice, &machine, fixed_metadata(k))
    }

    /// Decodes with the substitution mechanism removed from the reference
    /// machine.
    pub fn decode_without_substitutions(
        &self,
        lattice: &PosteriorLattice,
        reference: &[SymbolId],
    ) -> Result<Transcription, DecodeError> {
        let machine = ReferenceMachine::without_substitutions(reference, self.inventory, self.similarity, &self.config)?;
        self.decode_with(lattice, &machine, fixed_metadata(1))
    }

    /// Frame-synchronous search over emission, collapse and reference at
    /// once. Equivalent to the shortest path of the explicit composition.
    pub fn decode_with(
        &self,
        lattice: &PosteriorLattice,
        machine: &ReferenceMachine<'_>,
        metadata: TranscriptionMetadata,
    ) -> Result<Transcription, DecodeError> {
        let columns = self.check_lattice(lattice)?;
        let search = Search::new(lattice, &columns, machine);
        let (total_cost, events) = search.run()?;
        self.finish(lattice, machine, metadata, total_cost, &events)
    }

    /// The explicitly composed machine `E ∘ C ∘ R` for `lattice`.
    pub fn compose_explicit(&self, lattice: &PosteriorLattice, machine: &ReferenceMachine<'_>) -> Result<Wfst, DecodeError> {
        let columns = self.check_lattice(lattice)?;
        let emission = build_emission_fst(lattice, self.inventory)?;
        let collapse = build_collapse_fst(&columns);
        let ec = compose(&emission, &collapse)?;
        Ok(compose(&ec, &machine.to_fst())?)
    }

    /// Decodes by building and searching the explicit composition. Slow;
    /// exists as a cross-check on [`Self::decode_with`].
    pub fn decode_explicit(
        &self,
        lattice: &PosteriorLattice,
        reference: &[SymbolId],
        k: usize,
    ) -> Result<Transcription, DecodeError> {
        let machine = self.reference_machine(reference, k)?;
        let composed = self.compose_explicit(lattice, &machine)?;
        let distance = shortest_distance(&composed)[composed.start()];
        let path = shortest_path(&composed)
            .map_err(|e| DecodeError::Invariant(format!("deletion arcs guarantee acceptance: {e}")))?;
        let size = self.inventory.len();
        let mut t = 0;
        let mut events = Vec::with_capacity(path.arcs.len());
        for arc in &path.arcs {
            let frame = label_symbol(arc.ilabel).map(|s| {
                t += 1;
                (t - 1, s)
            });
            let tag = EditTag::from_label(arc.olabel, size);
            match tag {
                // a silent frame and a deletion can advance in one composed arc
                Some(d) if d.kind == EditKind::Deletion && frame.is_some() => {
                    events.push((None, Some(d)));
                    events.push((frame, None));
                }
                _ => events.push((frame, tag)),
            }
        }
        self.finish(lattice, &machine, fixed_metadata(k), distance, &events)
    }

    fn check_lattice(&self, lattice: &PosteriorLattice) -> Result<Vec<SymbolId>, DecodeError> {
        if let Some(v) = lattice_io::validate(lattice, self.inventory).into_iter().next() {
            return Err(LatticeError::Invalid(v).into());
        }
        Ok(lattice.column_ids(self.inventory)?)
    }

    fn finish(
        &self,
        lattice: &PosteriorLattice,
        machine: &ReferenceMachine<'_>,
        metadata: TranscriptionMetadata,
        total_cost: f64,
        events: &[Event],
    ) -> Result<Transcription, DecodeError> {
        let columns = lattice.column_ids(self.inventory)?;
        let column_of = |s: SymbolId| columns.iter().position(|&c| c == s).expect("frame symbol is a lattice column");
        let emission = |t: usize, s: SymbolId| -(lattice.log_prob(t, column_of(s)) as f64);
        let label = |s: Option<SymbolId>| s.map(|s| self.inventory.label(s).to_string());

        let mut tokens: Vec<DecodedToken> = Vec::new();
        let mut open: Option<usize> = None;
        let mut first_realized: Option<usize> = None;
        let mut leading = 0.0;
        for &(frame, tag) in events {
            match (frame, tag) {
                (Some((t, s)), Some(tag)) => {
                    if let Some(o) = open {
                        tokens[o].frame_end = Some(t);
                    }
                    open = Some(tokens.len());
                    first_realized.get_or_insert(tokens.len());
                    tokens.push(DecodedToken {
                        phoneme: label(tag.produced).expect("realized tags carry a phoneme"),
                        edit: tag.kind,
                        expected: label(tag.expected),
                        frame_start: Some(t),
                        frame_end: None,
                        cost: machine.tag_cost(&tag) + emission(t, s),
                    });
                }
                (Some((t, s)), None) => match open {
                    Some(o) => tokens[o].cost += emission(t, s),
                    None => leading += emission(t, s),
                },
                (None, Some(tag)) => {
                    if tag.kind != EditKind::Deletion {
                        return Err(DecodeError::Invariant(format!("tag {tag:?} emitted without a frame")));
                    }
                    tokens.push(DecodedToken {
                        phoneme: label(tag.expected).expect("deletions carry the expected phoneme"),
                        edit: EditKind::Deletion,
                        expected: label(tag.expected),
                        frame_start: None,
                        frame_end: None,
                        cost: machine.tag_cost(&tag),
                    });
                }
                (None, None) => return Err(DecodeError::Invariant("path step consumes and emits nothing".into())),
            }
        }
        if let Some(o) = open {
            tokens[o].frame_end = Some(lattice.n_frames());
        }
        match first_realized {
            Some(f) => {
                tokens[f].frame_start = Some(0);
                tokens[f].cost += leading;
            }
            // nothing was realized: frames are all blank or repeats, and
            // their cost stays with the last token
            None => {
                if let Some(last) = tokens.last_mut() {
                    last.cost += leading;
                }
            }
        }
        let expected: Vec<SymbolId> = events
            .iter()
            .filter_map(|(_, tag)| *tag)
            .filter(|t| matches!(t.kind, EditKind::Match | EditKind::Substitution | EditKind::Deletion))
            .filter_map(|t| t.expected)
            .collect();
        if expected != machine.reference() {
            return Err(DecodeError::Invariant("decoded path does not cover the reference".into()));
        }
        Ok(Transcription {
            reference: self.inventory.labels(machine.reference()),
            tokens,
            total_cost,
            k_used: machine.k(),
            lattice_id: None,
            metadata,
        })
    }
}

fn fixed_metadata(k: usize) -> TranscriptionMetadata {
    TranscriptionMetadata {
        k_requested: if k == 3 { KSetting::Three } else { KSetting::One },
        mean_max_posterior: None,
        k_rule: None,
    }
}

/// Search state `(t, c, i)`: frames consumed, lattice column of the last
/// frame (column 0 is the blank), reference phonemes consumed.
struct Search<'s, 'a> {
    machine: &'s ReferenceMachine<'a>,
    columns: &'s [SymbolId],
    /// `-log p` per frame and column.
    emission: Vec<f64>,
    frames: usize,
    width: usize,
}

impl<'s, 'a> Search<'s, 'a> {
    fn new(lattice: &PosteriorLattice, columns: &'s [SymbolId], machine: &'s ReferenceMachine<'a>) -> Self {
        Self {
            machine,
            columns,
            emission: lattice.log_probs().iter().map(|&v| -(v as f64)).collect(),
            frames: lattice.n_frames(),
            width: machine.len() + 1,
        }
    }

    fn index(&self, t: usize, c: usize, i: usize) -> usize {
        (t * self.columns.len() + c) * self.width + i
    }

    fn is_final(&self, t: usize, i: usize) -> bool {
        t == self.frames && i == self.machine.len()
    }

    /// Moves out of `(t, c, i)`. Fresh-symbol moves are listed only for
    /// symbols whose entry in `fresh` passes `keep`.
    fn moves(&self, t: usize, c: usize, i: usize, fresh: &[f64], keep: impl Fn(f64) -> bool, out: &mut Vec<Step>) {
        out.clear();
        let n_cols = self.columns.len();
        if let Some((tag, cost)) = self.machine.deletion(i) {
            out.push(Step {
                next: self.index(t, c, i + 1),
                frame: None,
                tag: Some(tag),
                cost,
            });
        }
        if t == self.frames {
            return;
        }
        for s in 0..n_cols {
            let e = self.emission[t * n_cols + s];
            let frame = Some((t, s));
            let sym = self.columns[s];
            if sym.is_blank() || s == c {
                let next = if sym.is_blank() { 0 } else { c };
                out.push(Step {
                    next: self.index(t + 1, next, i),
                    frame,
                    tag: None,
                    cost: e,
                });
                continue;
            }
            if !keep(fresh[s]) {
                continue;
            }
            let mut push = |(tag, cost): (EditTag, f64), to: usize| {
                out.push(Step {
                    next: self.index(t + 1, s, to),
                    frame,
                    tag: Some(tag),
                    cost: e + cost,
                })
            };
            push(self.machine.insertion(sym), i);
            if let Some(r) = self.machine.repetition(i, sym) {
                push(r, i);
            }
            if let Some(a) = self.machine.advance(i, sym) {
                push(a, i + 1);
            }
        }
    }

    /// States in an order where every move's target precedes its source.
    fn reverse_topological(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let (n_cols, n) = (self.columns.len(), self.machine.len());
        (0..=self.frames)
            .rev()
            .flat_map(move |t| (0..=n).rev().flat_map(move |i| (0..n_cols).map(move |c| (t, c, i))))
    }

    /// Cheapest continuation per column `s` when frame `t` opens a new
    /// token on `s` at reference position `i`; infinite for the blank.
    fn fresh_costs(&self, t: usize, i: usize, d: &[f64], out: &mut [f64]) {
        let n_cols = self.columns.len();
        for (s, slot) in out.iter_mut().enumerate() {
            let sym = self.columns[s];
            *slot = f64::INFINITY;
            if sym.is_blank() {
                continue;
            }
            let e = self.emission[t * n_cols + s];
            let here = d[self.index(t + 1, s, i)];
            let (_, ins) = self.machine.insertion(sym);
            *slot = (e + ins) + here;
            if let Some((_, rep)) = self.machine.repetition(i, sym) {
                *slot = slot.min((e + rep) + here);
            }
            if let Some((_, adv)) = self.machine.advance(i, sym) {
                *slot = slot.min((e + adv) + d[self.index(t + 1, s, i + 1)]);
            }
        }
    }

    fn run(&self) -> Result<(f64, Vec<Event>), DecodeError> {
        let (n_cols, n) = (self.columns.len(), self.machine.len());
        let size = (self.frames + 1) * n_cols * self.width;
        let mut d = vec![f64::INFINITY; size];
        let mut fresh = vec![f64::INFINITY; (self.frames + 1) * self.width * n_cols];
        let blank = self.columns.iter().position(|s| s.is_blank());
        let fresh_at = |t: usize, i: usize| (t * self.width + i) * n_cols..(t * self.width + i + 1) * n_cols;
        for t in (0..=self.frames).rev() {
            for i in (0..=n).rev() {
                let range = fresh_at(t, i);
                if t < self.frames {
                    self.fresh_costs(t, i, &d, &mut fresh[range.clone()]);
                }
                // the two cheapest fresh columns; a token cannot reopen on c
                let (mut first, mut second) = ((f64::INFINITY, usize::MAX), f64::INFINITY);
                for (s, &v) in fresh[range.clone()].iter().enumerate() {
                    if v < first.0 {
                        second = first.0;
                        first = (v, s);
                    } else if v < second {
                        second = v;
                    }
                }
                for c in 0..n_cols {
                    let mut best = if self.is_final(t, i) { 0.0 } else { f64::INFINITY };
                    if let Some((_, del)) = self.machine.deletion(i) {
                        best = best.min(del + d[self.index(t, c, i + 1)]);
                    }
                    if t < self.frames {
                        if let Some(b) = blank {
                            best = best.min(self.emission[t * n_cols + b] + d[self.index(t + 1, 0, i)]);
                        }
                        if !self.columns[c].is_blank() {
                            best = best.min(self.emission[t * n_cols + c] + d[self.index(t + 1, c, i)]);
                        }
                        best = best.min(if first.1 == c { second } else { first.0 });
                    }
                    d[self.index(t, c, i)] = best;
                }
            }
        }
        let start = self.index(0, 0, 0);
        if !d[start].is_finite() {
            return Err(DecodeError::Invariant("deletion arcs guarantee acceptance".into()));
        }

        let mut buf = Vec::new();
        let mut choice = vec![Choice::Unset; size];
        for (t, c, i) in self.reverse_topological() {
            let q = self.index(t, c, i);
            if !d[q].is_finite() {
                continue;
            }
            let mut best = if self.is_final(t, i) && within_tolerance(0.0, d[q]) {
                Choice::Final
            } else {
                Choice::Unset
            };
            self.moves(t, c, i, &fresh[fresh_at(t, i)], |v| within_tolerance(v, d[q]), &mut buf);
            for m in &buf {
                if choice[m.next] == Choice::Unset || !within_tolerance(m.cost + d[m.next], d[q]) {
                    continue;
                }
                let cand = Choice::Move(*m);
                if best == Choice::Unset || self.compare(&choice, cand, best) == Ordering::Less {
                    best = cand;
                }
            }
            choice[q] = best;
        }

        let mut events = Vec::new();
        let mut q = start;
        loop {
            match choice[q] {
                Choice::Unset => return Err(DecodeError::Invariant("broken choice chain".into())),
                Choice::Final => break,
                Choice::Move(m) => {
                    events.push((m.frame.map(|(t, s)| (t, self.columns[s])), m.tag));
                    q = m.next;
                }
            }
        }
        Ok((d[start], events))
    }

    fn chain<'c>(&'c self, choice: &'c [Choice], first: Choice) -> impl Iterator<Item = Step> + Clone + 'c {
        let mut next = first;
        std::iter::from_fn(move || match next {
            Choice::Move(m) => {
                next = choice[m.next];
                Some(m)
            }
            _ => None,
        })
    }

    /// Orders two suffixes by their tag sequence, then their frame symbols.
    fn compare(&self, choice: &[Choice], a: Choice, b: Choice) -> Ordering {
        let tags = |c| self.chain(choice, c).filter_map(|m| m.tag);
        let frames = |c| self.chain(choice, c).filter_map(|m| m.frame.map(|(_, s)| self.columns[s]));
        tags(a).cmp(tags(b)).then_with(|| frames(a).cmp(frames(b)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(inv: &PhonemeInventory, frames: &[&str]) -> PosteriorLattice {
        let symbols = PosteriorLattice::inventory_symbols(inv);
        let rows: Vec<Vec<f64>> = frames
            .iter()
            .map(|f| {
                let j = inv.id(f).unwrap().index();
                (0..symbols.len()).map(|i| if i == j { 1.0 } else { 0.0 }).collect()
            })
            .collect();
        PosteriorLattice::from_probabilities(symbols, 20.0, &rows).unwrap()
    }

    fn setup() -> (PhonemeInventory, SimilarityMatrix) {
        let inv = PhonemeInventory::arpabet();
        let sim = SimilarityMatrix::with_default_weights(&inv);
        (inv, sim)
    }

    #[test]
    fn identity_decode() {
        let (inv, sim) = setup();
        let dec = Decoder::new(&inv, &sim, DecoderConfig::default()).unwrap();
        let lattice = one_hot(&inv, &["<blank>", "B", "<blank>", "ER", "<blank>", "D", "<blank>"]);
        let r = inv.parse_sequence("B ER D").unwrap();
        let t = dec.decode(&lattice, &r).unwrap();
        assert_eq!(t.annotations(), ["M:B", "M:ER", "M:D"]);
        assert_eq!(t.k_used, 3);
        assert_eq!(t.tokens[0].frame_start, Some(0));
        assert_eq!(t.tokens[2].frame_end, Some(7));
    }

    #[test]
    fn intrusive_plosive_with_k1() {
        let (inv, sim) = setup();
        let dec = Decoder::new(&inv, &sim, DecoderConfig::default().with_k(KSetting::One)).unwrap();
        let lattice = one_hot(&inv, &["P", "<blank>", "B", "<blank>", "ER", "<blank>", "D"]);
        let r = inv.parse_sequence("B ER D").unwrap();
        let t = dec.decode(&lattice, &r).unwrap();
        assert_eq!(t.annotations(), ["I:P", "M:B", "M:ER", "M:D"]);
        let explicit = dec.decode_explicit(&lattice, &r, 1).unwrap();
        assert_eq!(explicit.annotations(), t.annotations());
        assert!((explicit.total_cost - t.total_cost).abs() < 1e-9);
    }

    #[test]
    fn similar_substitution_with_k3() {
        let (inv, sim) = setup();
        let dec = Decoder::new(&inv, &sim, DecoderConfig::default()).unwrap();
        let lattice = one_hot(&inv, &["B", "<blank>", "AH", "<blank>", "D"]);
        let r = inv.parse_sequence("B ER D").unwrap();
        let t = dec.decode_with_k(&lattice, &r, 3).unwrap();
        assert_eq!(t.annotations(), ["M:B", "S:AH|ER", "M:D"]);
        let t1 = dec.decode_with_k(&lattice, &r, 1).unwrap();
        assert!(t.total_cost <= t1.total_cost);
    }

    #[test]
    fn empty_lattice_deletes_everything() {
        let (inv, sim) = setup();
        let dec = Decoder::new(&inv, &sim, DecoderConfig::default()).unwrap();
        let lattice = PosteriorLattice::new(PosteriorLattice::inventory_symbols(&inv), 20.0, Vec::new()).unwrap();
        let r = inv.parse_sequence("B ER").unwrap();
        let t = dec.decode(&lattice, &r).unwrap();
        assert_eq!(t.annotations(), ["D:B", "D:ER"]);
        assert_eq!(t.total_cost, 6.0);
        assert_eq!(t.k_used, 1);
    }

    #[test]
    fn repeated_phoneme_is_labeled_repetition() {
        let (inv, sim) = setup();
        let dec = Decoder::new(&inv, &sim, DecoderConfig::default()).unwrap();
        let lattice = one_hot(&inv, &["B", "<blank>", "B", "<blank>", "ER"]);
        let r = inv.parse_sequence("B ER").unwrap();
        let t = dec.decode(&lattice, &r).unwrap();
        assert_eq!(t.annotations(), ["M:B", "R:B", "M:ER"]);
        let sum: f64 = t.tokens.iter().map(|t| t.cost).sum();
        assert!((sum - t.total_cost).abs() < 1e-6);
    }
}
