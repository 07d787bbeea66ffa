//! Synthetic posterior lattices with controlled disfluencies, plus the
//! ground-truth annotations of what was injected.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::decoder::{EditKind, EditTag};
use crate::lattice_io::{LatticeError, PosteriorLattice};
use crate::phonology::{PhonemeInventory, PhonologyError, SimilarityMatrix, SymbolId};

/// Mass given to symbols a frame has no similarity-based share for.
pub const MASS_FLOOR: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("edit {index} ({edit}): position {position} out of range 1..={max}")]
    PositionOutOfRange {
        index: usize,
        edit: String,
        position: usize,
        max: usize,
    },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("cannot parse edit {0:?}; expected sub:P=PH, ins:P=PH, del:P or rep:P=N")]
    EditSyntax(String),
    #[error(transparent)]
    Phonology(#[from] PhonologyError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// One edit applied to the current realized sequence. Positions are
/// 1-based and refer to the sequence as left by the previous edits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Edit {
    /// Replace the phoneme at `position`.
    Substitute { position: usize, phoneme: SymbolId },
    /// Insert before `position`; one past the end appends.
    Insert { position: usize, phoneme: SymbolId },
    Delete { position: usize },
    /// Follow the phoneme at `position` with `times` extra copies.
    Repeat { position: usize, times: usize },
}

impl Edit {
    /// Parses `sub:2=EH`, `ins:1=P`, `del:3` or `rep:1=2`.
    pub fn parse(text: &str, inventory: &PhonemeInventory) -> Result<Self, SynthError> {
        let bad = || SynthError::EditSyntax(text.to_string());
        let (op, rest) = text.trim().split_once(':').ok_or_else(bad)?;
        let (pos, arg) = match rest.split_once('=') {
            Some((p, a)) => (p, Some(a.trim())),
            None => (rest, None),
        };
        let position: usize = pos.trim().parse().map_err(|_| bad())?;
        match (op.trim(), arg) {
            ("sub", Some(a)) => Ok(Edit::Substitute {
                position,
                phoneme: inventory.phoneme(a)?,
            }),
            ("ins", Some(a)) => Ok(Edit::Insert {
                position,
                phoneme: inventory.phoneme(a)?,
            }),
            ("del", None) => Ok(Edit::Delete { position }),
            ("rep", Some(a)) => Ok(Edit::Repeat {
                position,
                times: a.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }

    pub fn render(&self, inventory: &PhonemeInventory) -> String {
        match *self {
            Edit::Substitute { position, phoneme } => format!("sub:{position}={}", inventory.label(phoneme)),
            Edit::Insert { position, phoneme } => format!("ins:{position}={}", inventory.label(phoneme)),
            Edit::Delete { position } => format!("del:{position}"),
            Edit::Repeat { position, times } => format!("rep:{position}={times}"),
        }
    }
}

/// A base sequence, the disfluencies to inject and the lattice shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisPlan {
    pub base: Vec<SymbolId>,
    pub edits: Vec<Edit>,
    pub frames_per_phoneme: usize,
    pub blank_frames_between: usize,
    /// Probability mass on the intended symbol of every frame.
    pub confidence: f64,
    /// Standard deviation of the log-normal factor applied to every
    /// probability when `confidence < 1`.
    pub jitter: f64,
    pub frame_duration_ms: f32,
    pub seed: u64,
}

impl SynthesisPlan {
    pub const DEFAULT_FRAMES_PER_PHONEME: usize = 4;
    pub const DEFAULT_BLANK_FRAMES: usize = 1;
    pub const DEFAULT_JITTER: f64 = 1.0;
    pub const DEFAULT_FRAME_DURATION_MS: f32 = 20.0;

    pub fn new(base: Vec<SymbolId>) -> Self {
        Self {
            base,
            edits: Vec::new(),
            frames_per_phoneme: Self::DEFAULT_FRAMES_PER_PHONEME,
            blank_frames_between: Self::DEFAULT_BLANK_FRAMES,
            confidence: 1.0,
            jitter: Self::DEFAULT_JITTER,
            frame_duration_ms: Self::DEFAULT_FRAME_DURATION_MS,
            seed: 0,
        }
    }

    pub fn validate(&self, inventory: &PhonemeInventory) -> Result<(), SynthError> {
        let invalid = |m: String| Err(SynthError::InvalidPlan(m));
        if self.base.is_empty() {
            return invalid("base sequence is empty".into());
        }
        for &p in &self.base {
            inventory.features(p)?;
        }
        let floor = 1.0 / inventory.len() as f64;
        if !(self.confidence > floor && self.confidence <= 1.0) {
            return invalid(format!("confidence must lie in ({floor}, 1], got {}", self.confidence));
        }
        if self.frames_per_phoneme == 0 {
            return invalid("frames_per_phoneme must be at least 1".into());
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return invalid(format!("jitter must be finite and >= 0, got {}", self.jitter));
        }
        Ok(())
    }
}

/// Realized sequence and the annotation of every realized or deleted
/// phoneme against the base.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub realized: Vec<SymbolId>,
    pub annotations: Vec<EditTag>,
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    phoneme: Option<SymbolId>,
    base: Option<usize>,
}

/// Applies the plan's edits in order.
///
/// Each base phoneme ends up matched, substituted or deleted; inserted
/// phonemes are insertions, except that a copy of the most recently passed
/// base phoneme is a repetition. Edits that undo each other (a substitution
/// back to the base phoneme, deleting an inserted phoneme) leave no trace.
pub fn apply_edits(plan: &SynthesisPlan, inventory: &PhonemeInventory) -> Result<GroundTruth, SynthError> {
    let mut slots: Vec<Slot> = plan
        .base
        .iter()
        .enumerate()
        .map(|(j, &p)| Slot {
            phoneme: Some(p),
            base: Some(j),
        })
        .collect();
    for (index, edit) in plan.edits.iter().enumerate() {
        let visible: Vec<usize> = (0..slots.len()).filter(|&s| slots[s].phoneme.is_some()).collect();
        let out_of_range = |position: usize, max: usize| SynthError::PositionOutOfRange {
            index: index + 1,
            edit: edit.render(inventory),
            position,
            max,
        };
        let existing = |position: usize| {
            position
                .checked_sub(1)
                .and_then(|p| visible.get(p).copied())
                .ok_or_else(|| out_of_range(position, visible.len()))
        };
        match *edit {
            Edit::Substitute { position, phoneme } => {
                inventory.features(phoneme)?;
                slots[existing(position)?].phoneme = Some(phoneme);
            }
            Edit::Insert { position, phoneme } => {
                inventory.features(phoneme)?;
                if position == 0 || position > visible.len() + 1 {
                    return Err(out_of_range(position, visible.len() + 1));
                }
                let at = visible.get(position - 1).copied().unwrap_or(slots.len());
                slots.insert(
                    at,
                    Slot {
                        phoneme: Some(phoneme),
                        base: None,
                    },
                );
            }
            Edit::Delete { position } => {
                let s = existing(position)?;
                if slots[s].base.is_some() {
                    slots[s].phoneme = None;
                } else {
                    slots.remove(s);
                }
            }
            Edit::Repeat { position, times } => {
                let s = existing(position)?;
                let copy = Slot {
                    phoneme: slots[s].phoneme,
                    base: None,
                };
                for _ in 0..times {
                    slots.insert(s + 1, copy);
                }
            }
        }
    }

    let mut realized = Vec::new();
    let mut annotations = Vec::with_capacity(slots.len());
    let mut last_base: Option<SymbolId> = None;
    for slot in slots {
        match (slot.phoneme, slot.base) {
            (None, Some(j)) => {
                annotations.push(EditTag::deletion(plan.base[j]));
                last_base = Some(plan.base[j]);
            }
            (Some(p), Some(j)) => {
                let expected = plan.base[j];
                annotations.push(if p == expected {
                    EditTag::matched(p)
                } else {
                    EditTag::substitution(p, expected)
                });
                realized.push(p);
                last_base = Some(expected);
            }
            (Some(p), None) => {
                annotations.push(if last_base == Some(p) {
                    EditTag::repetition(p)
                } else {
                    EditTag::insertion(p)
                });
                realized.push(p);
            }
            (None, None) => unreachable!("removed slots are dropped"),
        }
    }
    Ok(GroundTruth { realized, annotations })
}

fn phoneme_row(p: SymbolId, confidence: f64, inventory: &PhonemeInventory, similarity: &SimilarityMatrix) -> Vec<f64> {
    let mut row = vec![MASS_FLOOR; inventory.len()];
    let others: f64 = inventory.phonemes().filter(|&q| q != p).map(|q| similarity.get(p, q)).sum();
    for q in inventory.phonemes() {
        let s = similarity.get(p, q);
        if q == p {
            row[q.index()] = confidence;
        } else if s > 0.0 && others > 0.0 {
            row[q.index()] = (1.0 - confidence) * s / others;
        }
    }
    row
}

fn blank_row(confidence: f64, inventory: &PhonemeInventory) -> Vec<f64> {
    let share = (1.0 - confidence) / inventory.phoneme_count() as f64;
    let mut row = vec![share.max(MASS_FLOOR); inventory.len()];
    row[SymbolId::BLANK.index()] = confidence;
    row
}

/// Frame-level posteriors for the realized sequence: `frames_per_phoneme`
/// frames per phoneme, `blank_frames_between` blank-dominant frames between
/// consecutive phonemes. Columns follow inventory order.
pub fn synthesize_posteriors(
    plan: &SynthesisPlan,
    inventory: &PhonemeInventory,
    similarity: &SimilarityMatrix,
) -> Result<PosteriorLattice, SynthError> {
    plan.validate(inventory)?;
    let truth = apply_edits(plan, inventory)?;
    let mut rows = Vec::new();
    for (n, &p) in truth.realized.iter().enumerate() {
        if n > 0 {
            for _ in 0..plan.blank_frames_between {
                rows.push(blank_row(plan.confidence, inventory));
            }
        }
        for _ in 0..plan.frames_per_phoneme {
            rows.push(phoneme_row(p, plan.confidence, inventory, similarity));
        }
    }
    if plan.confidence < 1.0 && plan.jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        let noise = LogNormal::new(0.0, plan.jitter).map_err(|e| SynthError::InvalidPlan(e.to_string()))?;
        for row in &mut rows {
            for v in row.iter_mut() {
                *v *= noise.sample(&mut rng);
            }
        }
    }
    Ok(PosteriorLattice::from_probabilities(
        PosteriorLattice::inventory_symbols(inventory),
        plan.frame_duration_ms,
        &rows,
    )?)
}

/// Sidecar document describing how a synthetic lattice was made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthDocument {
    pub base: Vec<String>,
    pub edits: Vec<String>,
    pub realized: Vec<String>,
    pub annotations: Vec<String>,
    pub frames_per_phoneme: usize,
    pub blank_frames_between: usize,
    pub confidence: f64,
    pub jitter: f64,
    pub seed: u64,
}

impl TruthDocument {
    pub fn new(plan: &SynthesisPlan, truth: &GroundTruth, inventory: &PhonemeInventory) -> Self {
        Self {
            base: inventory.labels(&plan.base),
            edits: plan.edits.iter().map(|e| e.render(inventory)).collect(),
            realized: inventory.labels(&truth.realized),
            annotations: truth.annotations.iter().map(|t| t.render(inventory)).collect(),
            frames_per_phoneme: plan.frames_per_phoneme,
            blank_frames_between: plan.blank_frames_between,
            confidence: plan.confidence,
            jitter: plan.jitter,
            seed: plan.seed,
        }
    }
}

/// Recipe for a seeded corpus of random plans. Utterance `i` uses seed
/// `seed + i` for both its plan and its lattice noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub utterances: usize,
    pub min_length: usize,
    pub max_length: usize,
    /// Inclusive range of substitutions per utterance, each drawn among the
    /// `substitution_k - 1` phonemes most similar to the one replaced.
    pub substitutions: (usize, usize),
    pub substitution_k: usize,
    pub insertions: (usize, usize),
    pub deletions: (usize, usize),
    pub repetitions: (usize, usize),
    pub frames_per_phoneme: usize,
    pub blank_frames_between: usize,
    pub confidence: f64,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            utterances: 100,
            min_length: 4,
            max_length: 10,
            substitutions: (0, 0),
            substitution_k: 3,
            insertions: (0, 0),
            deletions: (0, 0),
            repetitions: (0, 0),
            frames_per_phoneme: SynthesisPlan::DEFAULT_FRAMES_PER_PHONEME,
            blank_frames_between: SynthesisPlan::DEFAULT_BLANK_FRAMES,
            confidence: 1.0,
            jitter: SynthesisPlan::DEFAULT_JITTER,
            seed: 0,
        }
    }
}

/// Draws the plans of a corpus. Substituted positions are distinct base
/// positions; other edits land at random positions of the sequence built so
/// far.
pub fn generate_corpus(
    spec: &CorpusSpec,
    inventory: &PhonemeInventory,
    similarity: &SimilarityMatrix,
) -> Result<Vec<SynthesisPlan>, SynthError> {
    if spec.min_length == 0 || spec.min_length > spec.max_length {
        return Err(SynthError::InvalidPlan("need 1 <= min_length <= max_length".into()));
    }
    let phonemes: Vec<SymbolId> = inventory.phonemes().collect();
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)| rng.random_range(lo..=hi.max(lo));
    (0..spec.utterances)
        .map(|u| {
            let seed = spec.seed.wrapping_add(u as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let len = rng.random_range(spec.min_length..=spec.max_length);
            let base: Vec<SymbolId> = (0..len).map(|_| phonemes[rng.random_range(0..phonemes.len())]).collect();
            let mut edits = Vec::new();
            let mut positions: Vec<usize> = (1..=len).collect();
            let n_sub = draw(&mut rng, spec.substitutions).min(len);
            for _ in 0..n_sub {
                let position = positions.swap_remove(rng.random_range(0..positions.len()));
                let p = base[position - 1];
                let k = spec.substitution_k.min(phonemes.len() - 1);
                if k < 2 {
                    break;
                }
                let neighbors = similarity.top_k_neighbors(p, k)?;
                let phoneme = neighbors[rng.random_range(1..neighbors.len())];
                edits.push(Edit::Substitute { position, phoneme });
            }
            // substitutions keep the length, so later edits see `current`
            let mut current = len;
            for _ in 0..draw(&mut rng, spec.deletions) {
                if current <= 1 {
                    break;
                }
                edits.push(Edit::Delete {
                    position: rng.random_range(1..=current),
                });
                current -= 1;
            }
            for _ in 0..draw(&mut rng, spec.insertions) {
                edits.push(Edit::Insert {
                    position: rng.random_range(1..=current + 1),
                    phoneme: phonemes[rng.random_range(0..phonemes.len())],
                });
                current += 1;
            }
            for _ in 0..draw(&mut rng, spec.repetitions) {
                edits.push(Edit::Repeat {
                    position: rng.random_range(1..=current),
                    times: 1,
                });
                current += 1;
            }
            Ok(SynthesisPlan {
                base,
                edits,
                frames_per_phoneme: spec.frames_per_phoneme,
                blank_frames_between: spec.blank_frames_between,
                confidence: spec.confidence,
                jitter: spec.jitter,
                frame_duration_ms: SynthesisPlan::DEFAULT_FRAME_DURATION_MS,
                seed,
            })
        })
        .collect()
}

/// Counts of annotation kinds, in [`EditKind::ALL`] order.
pub fn annotation_counts(annotations: &[EditTag]) -> [usize; 5] {
    let mut out = [0; 5];
    for t in annotations {
        out[EditKind::ALL.iter().position(|&k| k == t.kind).expect("known kind")] += 1;
    }
    out
}
