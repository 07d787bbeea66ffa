//! Weighted finite-state transducers over the tropical semiring
//! (`⊕ = min`, `⊗ = +`, zero `+∞`, one `0`).

mod build;
mod compose;
mod shortest_path;

use std::collections::BTreeSet;
use std::fmt::Write as _;

pub use build::{build_collapse_fst, build_emission_fst, phoneme_label, label_symbol};
pub use compose::compose;
pub use shortest_path::{shortest_distance, shortest_path, Path};

pub type Label = u32;
pub type StateId = usize;

/// The distinguished empty label, usable on both tapes.
pub const EPSILON: Label = 0;

/// Costs closer than this (scaled by magnitude) are treated as tied.
pub const COST_TOLERANCE: f64 = 1e-9;

pub(crate) fn within_tolerance(candidate: f64, best: f64) -> bool {
    candidate <= best + COST_TOLERANCE * best.abs().max(1.0)
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FstError {
    #[error("state {0} does not exist")]
    InvalidState(StateId),
    #[error("arc weight {0} is not finite")]
    NonFiniteWeight(f64),
    #[error("output label {0} of the left machine is not in the input alphabet of the right machine")]
    AlphabetMismatch(Label),
    #[error("machine has no accepting path")]
    NoAcceptingPath,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub ilabel: Label,
    pub olabel: Label,
    pub weight: f64,
    pub nextstate: StateId,
}

impl Arc {
    pub fn new(ilabel: Label, olabel: Label, weight: f64, nextstate: StateId) -> Self {
        Self {
            ilabel,
            olabel,
            weight,
            nextstate,
        }
    }
}

/// Mutable-during-construction transducer with contiguous state ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Wfst {
    arcs: Vec<Vec<Arc>>,
    finals: Vec<Option<f64>>,
    start: StateId,
}

impl Wfst {
    /// A machine with a single non-final start state.
    pub fn new() -> Self {
        Self {
            arcs: vec![Vec::new()],
            finals: vec![None],
            start: 0,
        }
    }

    pub fn with_states(n: usize) -> Self {
        let n = n.max(1);
        Self {
            arcs: vec![Vec::new(); n],
            finals: vec![None; n],
            start: 0,
        }
    }

    pub fn add_state(&mut self) -> StateId {
        self.arcs.push(Vec::new());
        self.finals.push(None);
        self.arcs.len() - 1
    }

    fn check_state(&self, s: StateId) -> Result<(), FstError> {
        if s < self.arcs.len() {
            Ok(())
        } else {
            Err(FstError::InvalidState(s))
        }
    }

    pub fn set_start(&mut self, s: StateId) -> Result<(), FstError> {
        self.check_state(s)?;
        self.start = s;
        Ok(())
    }

    pub fn set_final(&mut self, s: StateId, weight: f64) -> Result<(), FstError> {
        self.check_state(s)?;
        if !weight.is_finite() {
            return Err(FstError::NonFiniteWeight(weight));
        }
        self.finals[s] = Some(weight);
        Ok(())
    }

    pub fn add_arc(&mut self, src: StateId, arc: Arc) -> Result<(), FstError> {
        self.check_state(src)?;
        self.check_state(arc.nextstate)?;
        if !arc.weight.is_finite() {
            return Err(FstError::NonFiniteWeight(arc.weight));
        }
        self.arcs[src].push(arc);
        Ok(())
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn num_states(&self) -> usize {
        self.arcs.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.iter().map(Vec::len).sum()
    }

    pub fn arcs(&self, s: StateId) -> &[Arc] {
        &self.arcs[s]
    }

    pub fn final_weight(&self, s: StateId) -> Option<f64> {
        self.finals[s]
    }

    pub fn states(&self) -> std::ops::Range<StateId> {
        0..self.arcs.len()
    }

    pub fn input_alphabet(&self) -> BTreeSet<Label> {
        self.arcs
            .iter()
            .flatten()
            .map(|a| a.ilabel)
            .filter(|&l| l != EPSILON)
            .collect()
    }

    pub fn output_alphabet(&self) -> BTreeSet<Label> {
        self.arcs
            .iter()
            .flatten()
            .map(|a| a.olabel)
            .filter(|&l| l != EPSILON)
            .collect()
    }

    /// Topological order of all states, or `None` if the machine has a cycle.
    pub fn topological_order(&self) -> Option<Vec<StateId>> {
        topological_order(self.num_states(), |s| self.arcs[s].iter().map(|a| a.nextstate))
    }

    /// Textual arc listing (`src dst in out weight`, then `state weight` for
    /// finals), start state first, as read by standard FST tooling.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let order = std::iter::once(self.start).chain(self.states().filter(|&s| s != self.start));
        let order: Vec<StateId> = order.collect();
        for &s in &order {
            for a in &self.arcs[s] {
                writeln!(out, "{s}\t{}\t{}\t{}\t{}", a.nextstate, a.ilabel, a.olabel, a.weight).unwrap();
            }
        }
        for &s in &order {
            if let Some(w) = self.finals[s] {
                writeln!(out, "{s}\t{w}").unwrap();
            }
        }
        out
    }
}

/// Kahn's algorithm over an implicit graph.
pub(crate) fn topological_order<F, I>(n: usize, successors: F) -> Option<Vec<StateId>>
where
    F: Fn(StateId) -> I,
    I: Iterator<Item = StateId>,
{
    let mut indegree = vec![0usize; n];
    for s in 0..n {
        for t in successors(s) {
            indegree[t] += 1;
        }
    }
    let mut stack: Vec<StateId> = (0..n).rev().filter(|&s| indegree[s] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(s) = stack.pop() {
        order.push(s);
        for t in successors(s) {
            indegree[t] -= 1;
            if indegree[t] == 0 {
                stack.push(t);
            }
        }
    }
    (order.len() == n).then_some(order)
}
