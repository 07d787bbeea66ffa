use crate::lattice_io::{LatticeError, PosteriorLattice};
use crate::phonology::{PhonemeInventory, SymbolId};

use super::{Arc, Label, Wfst, EPSILON};

/// Transducer label of an inventory symbol. Label 0 is reserved for epsilon,
/// so the blank symbol becomes 1 and phonemes follow.
pub fn phoneme_label(id: SymbolId) -> Label {
    id.0 + 1
}

/// Inverse of [`phoneme_label`]; `None` for epsilon.
pub fn label_symbol(label: Label) -> Option<SymbolId> {
    (label != EPSILON).then(|| SymbolId(label - 1))
}

/// Linear acceptor with one state per frame boundary. Frame `t` contributes
/// one arc per lattice column, labeled with the column's symbol and weighted
/// by its negative log-probability.
pub fn build_emission_fst(lattice: &PosteriorLattice, inventory: &PhonemeInventory) -> Result<Wfst, LatticeError> {
    let columns = lattice.column_ids(inventory)?;
    let frames = lattice.n_frames();
    let mut m = Wfst::with_states(frames + 1);
    for t in 0..frames {
        for (j, &id) in columns.iter().enumerate() {
            let label = phoneme_label(id);
            let weight = -(lattice.log_prob(t, j) as f64);
            m.add_arc(t, Arc::new(label, label, weight, t + 1))
                .map_err(|_| LatticeError::Invalid(crate::lattice_io::Violation {
                    frame: Some(t),
                    symbol: Some(lattice.symbols()[j].clone()),
                    rule: crate::lattice_io::Rule::NonFinite,
                }))?;
        }
    }
    m.set_final(frames, 0.0).expect("final state exists");
    Ok(m)
}

/// CTC collapse over `symbols` (the blank is always included). The state
/// remembers the last frame symbol: blank frames emit nothing, a repeat of the
/// previous symbol emits nothing, and any other phoneme is emitted once.
pub fn build_collapse_fst(symbols: &[SymbolId]) -> Wfst {
    let mut alphabet: Vec<SymbolId> = std::iter::once(SymbolId::BLANK).chain(symbols.iter().copied()).collect();
    alphabet.sort();
    alphabet.dedup();
    // alphabet[0] is the blank, which doubles as the start state
    let mut m = Wfst::with_states(alphabet.len());
    for (c, &prev) in alphabet.iter().enumerate() {
        for (s, &sym) in alphabet.iter().enumerate() {
            let ilabel = phoneme_label(sym);
            let arc = if sym.is_blank() {
                Arc::new(ilabel, EPSILON, 0.0, 0)
            } else if sym == prev {
                Arc::new(ilabel, EPSILON, 0.0, c)
            } else {
                Arc::new(ilabel, ilabel, 0.0, s)
            };
            m.add_arc(c, arc).expect("states allocated up front");
        }
        m.set_final(c, 0.0).expect("states allocated up front");
    }
    m
}
