use crate::lattice_io::PosteriorLattice;
use crate::phonology::{PhonemeInventory, SymbolId};

use super::{DecodeError, DecoderConfig};

/// Per-frame argmax (ties go to the lowest symbol id) followed by CTC
/// collapse.
pub fn greedy_decode(lattice: &PosteriorLattice, inventory: &PhonemeInventory) -> Result<Vec<SymbolId>, DecodeError> {
    let columns = lattice.column_ids(inventory)?;
    let mut out = Vec::new();
    let mut prev = SymbolId::BLANK;
    for t in 0..lattice.n_frames() {
        let row = lattice.row(t);
        let best = (0..columns.len())
            .min_by(|&a, &b| row[b].total_cmp(&row[a]).then(columns[a].cmp(&columns[b])))
            .map_or(SymbolId::BLANK, |j| columns[j]);
        if !best.is_blank() && best != prev {
            out.push(best);
        }
        prev = best;
    }
    Ok(out)
}

/// Mean over frames of the largest symbol probability; `None` for an empty
/// lattice.
pub fn mean_max_posterior(lattice: &PosteriorLattice) -> Option<f64> {
    let frames = lattice.n_frames();
    if frames == 0 || lattice.n_symbols() == 0 {
        return None;
    }
    let total: f64 = (0..frames)
        .map(|t| {
            let max = lattice.row(t).iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v));
            (max as f64).exp()
        })
        .sum();
    Some(total / frames as f64)
}

/// Candidate count for automatic selection: 3 when the mean max-posterior
/// reaches `tau_conf`, otherwise 1. An empty lattice gives 1.
pub fn select_k(lattice: &PosteriorLattice, config: &DecoderConfig) -> usize {
    match mean_max_posterior(lattice) {
        Some(c) if c >= config.tau_conf => 3,
        _ => 1,
    }
}
