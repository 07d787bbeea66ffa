use super::features::FeatureWeights;
use super::inventory::{PhonemeInventory, SymbolId};
use super::PhonologyError;

/// Pairwise similarity over the non-blank phonemes of an inventory, plus the
/// neighbor ranking derived from it.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    /// Row-major over non-blank phonemes; entry `(p-1)*n + (q-1)`.
    values: Vec<f64>,
    n: usize,
    /// Full neighbor ranking per phoneme, self first.
    rankings: Vec<Vec<SymbolId>>,
    weights: FeatureWeights,
}

impl SimilarityMatrix {
    pub fn new(inventory: &PhonemeInventory, weights: FeatureWeights) -> Result<Self, PhonologyError> {
        weights.validate().map_err(PhonologyError::InvalidWeights)?;
        let n = inventory.phoneme_count();
        let ids: Vec<SymbolId> = inventory.phonemes().collect();
        let mut values = vec![0.0; n * n];
        for (i, &p) in ids.iter().enumerate() {
            let fp = inventory.features(p)?;
            for (j, &q) in ids.iter().enumerate() {
                let fq = inventory.features(q)?;
                values[i * n + j] = weights.score(fp, fq);
            }
        }
        let rankings = (0..n)
            .map(|i| {
                let mut order: Vec<usize> = (0..n).collect();
                // self is pinned to rank 1; ties otherwise fall back to ascending id
                order.sort_by(|&a, &b| {
                    (b == i)
                        .cmp(&(a == i))
                        .then(values[i * n + b].total_cmp(&values[i * n + a]))
                        .then(a.cmp(&b))
                });
                order.into_iter().map(|j| ids[j]).collect()
            })
            .collect();
        Ok(Self {
            values,
            n,
            rankings,
            weights,
        })
    }

    pub fn with_default_weights(inventory: &PhonemeInventory) -> Self {
        Self::new(inventory, FeatureWeights::default()).expect("default weights are valid")
    }

    pub fn weights(&self) -> &FeatureWeights {
        &self.weights
    }

    /// Number of non-blank phonemes covered.
    pub fn size(&self) -> usize {
        self.n
    }

    fn row(&self, p: SymbolId) -> Result<usize, PhonologyError> {
        if p.is_blank() {
            return Err(PhonologyError::BlankPhoneme);
        }
        let row = p.index() - 1;
        if row >= self.n {
            return Err(PhonologyError::UnknownPhoneme(p.to_string()));
        }
        Ok(row)
    }

    pub fn similarity(&self, p: SymbolId, q: SymbolId) -> Result<f64, PhonologyError> {
        let (i, j) = (self.row(p)?, self.row(q)?);
        Ok(self.values[i * self.n + j])
    }

    /// Indexing shortcut for ids already known to be valid phonemes.
    pub fn get(&self, p: SymbolId, q: SymbolId) -> f64 {
        self.values[(p.index() - 1) * self.n + (q.index() - 1)]
    }

    /// The `k` most similar phonemes to `p`, `p` itself first.
    pub fn top_k_neighbors(&self, p: SymbolId, k: usize) -> Result<&[SymbolId], PhonologyError> {
        let row = self.row(p)?;
        if k == 0 || k >= self.n {
            return Err(PhonologyError::NeighborCountOutOfRange {
                k,
                max: self.n.saturating_sub(1),
            });
        }
        Ok(&self.rankings[row][..k])
    }
}
