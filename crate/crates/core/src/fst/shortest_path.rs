use std::cmp::Ordering;
use std::collections::VecDeque;

use super::{topological_order, within_tolerance, Arc, FstError, Label, StateId, Wfst, EPSILON};

/// A complete accepting path.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    /// Visited states, start first; one longer than `arcs`.
    pub states: Vec<StateId>,
    pub arcs: Vec<Arc>,
    pub final_weight: f64,
    /// Sum of arc weights plus the final weight.
    pub total_cost: f64,
    /// Non-epsilon input labels.
    pub input: Vec<Label>,
    /// Non-epsilon output labels.
    pub output: Vec<Label>,
}

/// Tropical distance from every state to acceptance (`+∞` when none).
pub fn shortest_distance(m: &Wfst) -> Vec<f64> {
    let n = m.num_states();
    let mut d = vec![f64::INFINITY; n];
    if let Some(order) = m.topological_order() {
        for &q in order.iter().rev() {
            let mut best = m.final_weight(q).unwrap_or(f64::INFINITY);
            for arc in m.arcs(q) {
                best = best.min(arc.weight + d[arc.nextstate]);
            }
            d[q] = best;
        }
        return d;
    }

    // label-correcting relaxation over reversed arcs; handles negative arcs
    // as long as no cycle has negative total cost
    let mut reverse: Vec<Vec<(StateId, f64)>> = vec![Vec::new(); n];
    for q in m.states() {
        for arc in m.arcs(q) {
            reverse[arc.nextstate].push((q, arc.weight));
        }
    }
    let mut queue = VecDeque::new();
    let mut queued = vec![false; n];
    for q in m.states() {
        if let Some(w) = m.final_weight(q) {
            d[q] = w;
            queue.push_back(q);
            queued[q] = true;
        }
    }
    let mut budget = n.saturating_mul(m.num_arcs() + n) + n;
    while let Some(q) = queue.pop_front() {
        queued[q] = false;
        for &(p, w) in &reverse[q] {
            let cand = w + d[q];
            if cand < d[p] {
                d[p] = cand;
                if !queued[p] {
                    queued[p] = true;
                    queue.push_back(p);
                }
            }
        }
        budget = budget.saturating_sub(1);
        if budget == 0 {
            break;
        }
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Choice {
    Unset,
    Final,
    Arc(usize),
}

struct Chain<'a> {
    m: &'a Wfst,
    choice: &'a [Choice],
    state: StateId,
    next: Choice,
}

impl<'a> Iterator for Chain<'a> {
    type Item = &'a Arc;

    fn next(&mut self) -> Option<&'a Arc> {
        match self.next {
            Choice::Unset | Choice::Final => None,
            Choice::Arc(i) => {
                let arc = &self.m.arcs(self.state)[i];
                self.state = arc.nextstate;
                self.next = self.choice[arc.nextstate];
                Some(arc)
            }
        }
    }
}

fn compare_suffixes(m: &Wfst, choice: &[Choice], q: StateId, a: Choice, b: Choice) -> Ordering {
    let chain = |c| Chain {
        m,
        choice,
        state: q,
        next: c,
    };
    let outputs = |c| chain(c).map(|arc| arc.olabel).filter(|&l| l != EPSILON);
    let inputs = |c| chain(c).map(|arc| arc.ilabel).filter(|&l| l != EPSILON);
    outputs(a).cmp(outputs(b)).then_with(|| inputs(a).cmp(inputs(b)))
}

/// Minimum-cost accepting path. Among paths whose cost ties (within
/// [`super::COST_TOLERANCE`]) the one with the lexicographically smallest
/// output label sequence wins, then the smallest input sequence, then the
/// earliest arc.
pub fn shortest_path(m: &Wfst) -> Result<Path, FstError> {
    let d = shortest_distance(m);
    if !d[m.start()].is_finite() {
        return Err(FstError::NoAcceptingPath);
    }
    let n = m.num_states();
    let final_ok = |q: StateId| {
        m.final_weight(q)
            .is_some_and(|w| within_tolerance(w, d[q]))
    };
    let optimal = |q: StateId, arc: &Arc| d[arc.nextstate].is_finite() && within_tolerance(arc.weight + d[arc.nextstate], d[q]);

    let live: Vec<bool> = d.iter().map(|v| v.is_finite()).collect();
    let live_ref = &live;
    let optimal_ref = &optimal;
    let successors = |q: StateId| {
        m.arcs(q)
            .iter()
            .filter(move |arc| live_ref[q] && optimal_ref(q, arc))
            .map(|arc| arc.nextstate)
            .collect::<Vec<_>>()
            .into_iter()
    };

    // The tie-break walks suffix chains, which needs an acyclic optimal
    // subgraph. Zero-cost cycles are cut by only keeping arcs that strictly
    // decrease the hop count to acceptance.
    let (order, hops) = match topological_order(n, successors) {
        Some(order) => (order.into_iter().rev().collect::<Vec<_>>(), None),
        None => {
            let hops = hops_to_acceptance(m, &final_ok, &optimal);
            let mut order: Vec<StateId> = (0..n).filter(|&q| hops[q] != usize::MAX).collect();
            order.sort_by_key(|&q| hops[q]);
            (order, Some(hops))
        }
    };
    let allowed = |q: StateId, arc: &Arc| match &hops {
        None => optimal(q, arc),
        Some(h) => optimal(q, arc) && h[arc.nextstate] < h[q],
    };

    let mut choice = vec![Choice::Unset; n];
    for &q in &order {
        if !live[q] {
            continue;
        }
        let mut best = if final_ok(q) { Choice::Final } else { Choice::Unset };
        for (i, arc) in m.arcs(q).iter().enumerate() {
            if !allowed(q, arc) || choice[arc.nextstate] == Choice::Unset {
                continue;
            }
            let cand = Choice::Arc(i);
            if best == Choice::Unset || compare_suffixes(m, &choice, q, cand, best) == Ordering::Less {
                best = cand;
            }
        }
        choice[q] = best;
    }

    let mut path = Path {
        states: vec![m.start()],
        arcs: Vec::new(),
        final_weight: 0.0,
        total_cost: 0.0,
        input: Vec::new(),
        output: Vec::new(),
    };
    let mut q = m.start();
    loop {
        match choice[q] {
            Choice::Unset => return Err(FstError::NoAcceptingPath),
            Choice::Final => {
                path.final_weight = m.final_weight(q).expect("chosen final state");
                path.total_cost += path.final_weight;
                return Ok(path);
            }
            Choice::Arc(i) => {
                let arc = m.arcs(q)[i];
                path.total_cost += arc.weight;
                if arc.ilabel != EPSILON {
                    path.input.push(arc.ilabel);
                }
                if arc.olabel != EPSILON {
                    path.output.push(arc.olabel);
                }
                path.arcs.push(arc);
                path.states.push(arc.nextstate);
                q = arc.nextstate;
            }
        }
    }
}

fn hops_to_acceptance(
    m: &Wfst,
    final_ok: &impl Fn(StateId) -> bool,
    optimal: &impl Fn(StateId, &Arc) -> bool,
) -> Vec<usize> {
    let n = m.num_states();
    let mut reverse: Vec<Vec<StateId>> = vec![Vec::new(); n];
    for q in m.states() {
        for arc in m.arcs(q) {
            if optimal(q, arc) {
                reverse[arc.nextstate].push(q);
            }
        }
    }
    let mut hops = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for q in m.states() {
        if final_ok(q) {
            hops[q] = 0;
            queue.push_back(q);
        }
    }
    while let Some(q) = queue.pop_front() {
        for &p in &reverse[q] {
            if hops[p] == usize::MAX {
                hops[p] = hops[q] + 1;
                queue.push_back(p);
            }
        }
    }
    hops
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(weights: &[f64]) -> Wfst {
        let mut m = Wfst::with_states(weights.len() + 1);
        for (i, &w) in weights.iter().enumerate() {
            m.add_arc(i, Arc::new(i as Label + 1, i as Label + 1, w, i + 1)).unwrap();
        }
        m.set_final(weights.len(), 0.0).unwrap();
        m
    }

    #[test]
    fn linear_chain() {
        let p = shortest_path(&chain(&[1.0, 2.0, 0.5])).unwrap();
        assert_eq!(p.total_cost, 3.5);
        assert_eq!(p.input, vec![1, 2, 3]);
        assert_eq!(p.states, vec![0, 1, 2, 3]);
    }

    #[test]
    fn diamond_takes_cheaper_branch() {
        let mut m = Wfst::with_states(4);
        m.add_arc(0, Arc::new(1, 1, 1.0, 1)).unwrap();
        m.add_arc(0, Arc::new(2, 2, 1.0, 2)).unwrap();
        m.add_arc(1, Arc::new(3, 3, 2.0, 3)).unwrap();
        m.add_arc(2, Arc::new(4, 4, 1.0, 3)).unwrap();
        m.set_final(3, 0.0).unwrap();
        let p = shortest_path(&m).unwrap();
        assert_eq!(p.total_cost, 2.0);
        assert_eq!(p.output, vec![2, 4]);
    }

    #[test]
    fn ties_prefer_smaller_output_sequence() {
        let mut m = Wfst::with_states(3);
        m.add_arc(0, Arc::new(1, 5, 1.0, 1)).unwrap();
        m.add_arc(0, Arc::new(1, EPSILON, 1.0, 2)).unwrap();
        m.add_arc(2, Arc::new(1, 3, 0.0, 1)).unwrap();
        m.set_final(1, 0.0).unwrap();
        let p = shortest_path(&m).unwrap();
        assert_eq!(p.output, vec![3]);
        // the empty output beats any non-empty one
        m.set_final(2, 0.0).unwrap();
        assert_eq!(shortest_path(&m).unwrap().output, Vec::<Label>::new());
    }

    #[test]
    fn no_accepting_path() {
        let mut m = Wfst::with_states(2);
        m.add_arc(0, Arc::new(1, 1, 0.0, 1)).unwrap();
        assert_eq!(shortest_path(&m), Err(FstError::NoAcceptingPath));
    }

    #[test]
    fn zero_cost_cycle_terminates() {
        let mut m = Wfst::with_states(3);
        m.add_arc(0, Arc::new(1, 1, 0.0, 1)).unwrap();
        m.add_arc(1, Arc::new(2, 2, 0.0, 0)).unwrap();
        m.add_arc(1, Arc::new(3, 3, 1.0, 2)).unwrap();
        m.set_final(2, 0.0).unwrap();
        let p = shortest_path(&m).unwrap();
        assert_eq!(p.total_cost, 1.0);
        assert_eq!(p.output, vec![1, 3]);
    }

    #[test]
    fn negative_arc_without_negative_cycle() {
        let mut m = Wfst::with_states(3);
        m.add_arc(0, Arc::new(1, 1, 2.0, 1)).unwrap();
        m.add_arc(0, Arc::new(2, 2, 0.5, 2)).unwrap();
        m.add_arc(1, Arc::new(3, 3, -1.5, 2)).unwrap();
        m.add_arc(2, Arc::new(4, 4, 1.0, 2)).unwrap();
        m.set_final(2, 0.0).unwrap();
        let p = shortest_path(&m).unwrap();
        assert!((p.total_cost - 0.5).abs() < 1e-12);
        // both branches cost 0.5; the smaller output sequence wins
        assert_eq!(p.output, vec![1, 3]);
    }
}
