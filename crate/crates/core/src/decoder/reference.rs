use crate::fst::{phoneme_label, Arc, Wfst, EPSILON};
use crate::phonology::{PhonemeInventory, SimilarityMatrix, SymbolId};

use super::{DecodeError, DecoderConfig, EditKind, EditTag};

/// The reference transducer in tabulated form: states `s_0..s_N`, where
/// `s_i` has consumed the first `i` reference phonemes.
#[derive(Debug, Clone)]
pub struct ReferenceMachine<'a> {
    inventory: &'a PhonemeInventory,
    similarity: &'a SimilarityMatrix,
    config: DecoderConfig,
    reference: Vec<SymbolId>,
    k: usize,
    /// Substitution candidates other than the expected phoneme, per position.
    candidates: Vec<Vec<(SymbolId, f64)>>,
}

impl<'a> ReferenceMachine<'a> {
    /// Machine admitting the `k - 1` most similar non-identical phonemes as
    /// substitutions at every position.
    pub fn new(
        reference: &[SymbolId],
        inventory: &'a PhonemeInventory,
        similarity: &'a SimilarityMatrix,
        config: &DecoderConfig,
        k: usize,
    ) -> Result<Self, DecodeError> {
        Self::build(reference, inventory, similarity, config, k, true)
    }

    /// Machine with the substitution mechanism removed entirely.
    pub fn without_substitutions(
        reference: &[SymbolId],
        inventory: &'a PhonemeInventory,
        similarity: &'a SimilarityMatrix,
        config: &DecoderConfig,
    ) -> Result<Self, DecodeError> {
        Self::build(reference, inventory, similarity, config, 1, false)
    }

    fn build(
        reference: &[SymbolId],
        inventory: &'a PhonemeInventory,
        similarity: &'a SimilarityMatrix,
        config: &DecoderConfig,
        k: usize,
        substitutions: bool,
    ) -> Result<Self, DecodeError> {
        config.validate()?;
        if reference.is_empty() {
            return Err(DecodeError::EmptyReference);
        }
        if k == 0 {
            return Err(DecodeError::Config("k must be at least 1".into()));
        }
        if similarity.size() != inventory.phoneme_count() {
            return Err(DecodeError::Config(format!(
                "similarity matrix covers {} phonemes but the inventory has {}",
                similarity.size(),
                inventory.phoneme_count()
            )));
        }
        for &p in reference {
            inventory.features(p)?;
        }
        // inventories with fewer than k - 1 alternatives offer all they have
        let k_eff = k.min(inventory.phoneme_count().saturating_sub(1));
        let candidates = reference
            .iter()
            .map(|&p| {
                if !substitutions || k_eff <= 1 {
                    return Ok(Vec::new());
                }
                Ok(similarity
                    .top_k_neighbors(p, k_eff)?
                    .iter()
                    .filter(|&&q| q != p)
                    .map(|&q| (q, config.substitution_cost(similarity.get(q, p))))
                    .collect())
            })
            .collect::<Result<_, DecodeError>>()?;
        Ok(Self {
            inventory,
            similarity,
            config: *config,
            reference: reference.to_vec(),
            k,
            candidates,
        })
    }

    pub fn reference(&self) -> &[SymbolId] {
        &self.reference
    }

    pub fn len(&self) -> usize {
        self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn inventory(&self) -> &'a PhonemeInventory {
        self.inventory
    }

    /// Number of substitution arcs in the machine.
    pub fn substitution_arc_count(&self) -> usize {
        self.candidates.iter().map(Vec::len).sum()
    }

    /// Match or substitution from `s_i` on hearing `q`.
    pub fn advance(&self, i: usize, q: SymbolId) -> Option<(EditTag, f64)> {
        let &p = self.reference.get(i)?;
        if q == p {
            return Some((EditTag::matched(p), 0.0));
        }
        self.candidates[i]
            .iter()
            .find(|&&(c, _)| c == q)
            .map(|&(_, cost)| (EditTag::substitution(q, p), cost))
    }

    /// Repetition self-loop on `s_i` on hearing `q`.
    pub fn repetition(&self, i: usize, q: SymbolId) -> Option<(EditTag, f64)> {
        (i >= 1 && self.reference[i - 1] == q).then(|| (EditTag::repetition(q), self.config.c_rep))
    }

    pub fn insertion(&self, q: SymbolId) -> (EditTag, f64) {
        (EditTag::insertion(q), self.config.c_ins)
    }

    /// Deletion `s_i -> s_{i+1}`.
    pub fn deletion(&self, i: usize) -> Option<(EditTag, f64)> {
        self.reference.get(i).map(|&p| (EditTag::deletion(p), self.config.c_del))
    }

    /// Arc cost carried by `tag` in this machine.
    pub fn tag_cost(&self, tag: &EditTag) -> f64 {
        match tag.kind {
            EditKind::Match => 0.0,
            EditKind::Substitution => {
                let (q, p) = (tag.produced.expect("substitution"), tag.expected.expect("substitution"));
                self.config.substitution_cost(self.similarity.get(q, p))
            }
            EditKind::Deletion => self.config.c_del,
            EditKind::Insertion => self.config.c_ins,
            EditKind::Repetition => self.config.c_rep,
        }
    }

    /// Explicit transducer: input phoneme labels, output edit-tag labels.
    pub fn to_fst(&self) -> Wfst {
        let n = self.reference.len();
        let size = self.inventory.len();
        let mut m = Wfst::with_states(n + 1);
        let mut add = |src: usize, input: Option<SymbolId>, (tag, cost): (EditTag, f64), dst: usize| {
            let ilabel = input.map_or(EPSILON, phoneme_label);
            m.add_arc(src, Arc::new(ilabel, tag.label(size), cost, dst))
                .expect("states allocated up front");
        };
        for (i, &p) in self.reference.iter().enumerate() {
            add(i, Some(p), (EditTag::matched(p), 0.0), i + 1);
            for &(q, cost) in &self.candidates[i] {
                add(i, Some(q), (EditTag::substitution(q, p), cost), i + 1);
            }
            add(i, None, (EditTag::deletion(p), self.config.c_del), i + 1);
            add(i + 1, Some(p), (EditTag::repetition(p), self.config.c_rep), i + 1);
        }
        for i in 0..=n {
            for q in self.inventory.phonemes() {
                add(i, Some(q), self.insertion(q), i);
            }
        }
        m.set_final(n, 0.0).expect("final state exists");
        m
    }
}

/// The reference transducer for `reference` with `k` substitution candidates
/// per position (the expected phoneme itself counts as the first).
pub fn build_reference_fst(
    reference: &[SymbolId],
    inventory: &PhonemeInventory,
    similarity: &SimilarityMatrix,
    config: &DecoderConfig,
    k: usize,
) -> Result<Wfst, DecodeError> {
    Ok(ReferenceMachine::new(reference, inventory, similarity, config, k)?.to_fst())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (PhonemeInventory, SimilarityMatrix) {
        let inv = PhonemeInventory::arpabet();
        let sim = SimilarityMatrix::with_default_weights(&inv);
        (inv, sim)
    }

    fn count(m: &Wfst, kind: EditKind, n: usize) -> usize {
        m.states()
            .flat_map(|s| m.arcs(s).iter())
            .filter(|a| EditTag::from_label(a.olabel, n).unwrap().kind == kind)
            .count()
    }

    #[test]
    fn k1_has_no_substitution_arcs() {
        let (inv, sim) = setup();
        let r = inv.parse_sequence("B ER D").unwrap();
        let m = build_reference_fst(&r, &inv, &sim, &DecoderConfig::default(), 1).unwrap();
        assert_eq!(count(&m, EditKind::Substitution, inv.len()), 0);
    }

    #[test]
    fn single_phoneme_k3_has_two_substitutions_into_s1() {
        let (inv, sim) = setup();
        let r = inv.parse_sequence("B").unwrap();
        let m = build_reference_fst(&r, &inv, &sim, &DecoderConfig::default(), 3).unwrap();
        let subs: Vec<_> = m
            .arcs(0)
            .iter()
            .filter(|a| EditTag::from_label(a.olabel, inv.len()).unwrap().kind == EditKind::Substitution)
            .collect();
        assert_eq!(subs.len(), 2);
        assert!(subs.iter().all(|a| a.nextstate == 1));
    }

    #[test]
    fn arc_counts_follow_construction() {
        let (inv, sim) = setup();
        let r = inv.parse_sequence("B ER D AH").unwrap();
        let n = r.len();
        let m = build_reference_fst(&r, &inv, &sim, &DecoderConfig::default(), 3).unwrap();
        assert_eq!(m.num_arcs(), n + 2 * n + n + (n + 1) * 39 + n);
        assert_eq!(count(&m, EditKind::Deletion, inv.len()), n);
        assert!(m.arcs(0).iter().filter(|a| a.ilabel == EPSILON).count() == 1);
    }

    #[test]
    fn empty_reference_rejected() {
        let (inv, sim) = setup();
        assert!(matches!(
            build_reference_fst(&[], &inv, &sim, &DecoderConfig::default(), 1),
            Err(DecodeError::EmptyReference)
        ));
    }
}
