use std::collections::HashMap;

use super::{Arc, FstError, Label, StateId, Wfst, EPSILON};

/// Epsilon-filter state. `Clear` admits any move; after the left machine
/// moves alone on an output epsilon only further left-alone moves or real
/// matches are allowed (`LeftEps`), symmetrically for `RightEps`. This keeps
/// exactly one interleaving per pair of epsilon paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Filter {
    Clear,
    LeftEps,
    RightEps,
}

type Triple = (StateId, StateId, Filter);

struct Builder {
    out: Wfst,
    ids: HashMap<Triple, StateId>,
    keys: Vec<Triple>,
}

impl Builder {
    fn intern(&mut self, key: Triple) -> StateId {
        if let Some(&id) = self.ids.get(&key) {
            return id;
        }
        let id = if self.keys.is_empty() { 0 } else { self.out.add_state() };
        self.ids.insert(key, id);
        self.keys.push(key);
        id
    }

    fn arc(&mut self, src: StateId, ilabel: Label, olabel: Label, weight: f64, dst: Triple) {
        let next = self.intern(dst);
        self.out
            .add_arc(src, Arc::new(ilabel, olabel, weight, next))
            .expect("composed states are interned before use");
    }
}

/// Tropical composition `a ∘ b`: maps `x` to `z` whenever `a` maps `x` to some
/// `y` and `b` maps `y` to `z`, with costs summed. Only states reachable from
/// the start are materialized.
pub fn compose(a: &Wfst, b: &Wfst) -> Result<Wfst, FstError> {
    let b_inputs = b.input_alphabet();
    if let Some(&l) = a.output_alphabet().iter().find(|l| !b_inputs.contains(l)) {
        return Err(FstError::AlphabetMismatch(l));
    }

    // right-machine arcs sorted by input label for range lookups
    let sorted_b: Vec<Vec<Arc>> = b
        .states()
        .map(|s| {
            let mut arcs = b.arcs(s).to_vec();
            arcs.sort_by_key(|arc| arc.ilabel);
            arcs
        })
        .collect();
    let matching = |s: StateId, label: Label| -> &[Arc] {
        let arcs = &sorted_b[s];
        let lo = arcs.partition_point(|arc| arc.ilabel < label);
        let hi = arcs.partition_point(|arc| arc.ilabel <= label);
        &arcs[lo..hi]
    };

    let mut builder = Builder {
        out: Wfst::new(),
        ids: HashMap::new(),
        keys: Vec::new(),
    };
    builder.intern((a.start(), b.start(), Filter::Clear));

    let mut next = 0;
    while next < builder.keys.len() {
        let src = next;
        let (qa, qb, filter) = builder.keys[src];
        next += 1;

        if let (Some(wa), Some(wb)) = (a.final_weight(qa), b.final_weight(qb)) {
            builder.out.set_final(src, wa + wb).expect("state exists");
        }

        for x in a.arcs(qa) {
            if x.olabel != EPSILON {
                for y in matching(qb, x.olabel) {
                    builder.arc(src, x.ilabel, y.olabel, x.weight + y.weight, (x.nextstate, y.nextstate, Filter::Clear));
                }
                continue;
            }
            // left moves alone on an output epsilon
            if filter != Filter::RightEps {
                builder.arc(src, x.ilabel, EPSILON, x.weight, (x.nextstate, qb, Filter::LeftEps));
            }
            // both move on epsilon together
            if filter == Filter::Clear {
                for y in matching(qb, EPSILON) {
                    builder.arc(src, x.ilabel, y.olabel, x.weight + y.weight, (x.nextstate, y.nextstate, Filter::Clear));
                }
            }
        }
        // right moves alone on an input epsilon
        if filter != Filter::LeftEps {
            for y in matching(qb, EPSILON) {
                builder.arc(src, EPSILON, y.olabel, y.weight, (qa, y.nextstate, Filter::RightEps));
            }
        }
    }
    Ok(builder.out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fst::shortest_path;

    fn single_arc(i: Label, o: Label, w: f64) -> Wfst {
        let mut m = Wfst::with_states(2);
        m.add_arc(0, Arc::new(i, o, w, 1)).unwrap();
        m.set_final(1, 0.0).unwrap();
        m
    }

    #[test]
    fn single_arcs_add_costs() {
        let c = compose(&single_arc(1, 2, 1.0), &single_arc(2, 3, 2.0)).unwrap();
        assert_eq!(c.num_arcs(), 1);
        let arc = c.arcs(c.start())[0];
        assert_eq!((arc.ilabel, arc.olabel, arc.weight), (1, 3, 3.0));
        assert_eq!(c.final_weight(arc.nextstate), Some(0.0));
    }

    #[test]
    fn alphabet_mismatch() {
        assert_eq!(
            compose(&single_arc(1, 2, 1.0), &single_arc(5, 3, 2.0)),
            Err(FstError::AlphabetMismatch(2))
        );
    }

    #[test]
    fn epsilon_paths_counted_once() {
        // three interleavings of the two epsilon moves exist without a filter
        let a = single_arc(1, EPSILON, 1.0);
        let b = single_arc(EPSILON, 7, 2.0);
        let c = compose(&a, &b).unwrap();
        let mut count = 0;
        let mut stack = vec![(c.start(), 0.0)];
        while let Some((s, cost)) = stack.pop() {
            if let Some(w) = c.final_weight(s) {
                count += 1;
                assert_eq!(cost + w, 3.0);
            }
            for arc in c.arcs(s) {
                stack.push((arc.nextstate, cost + arc.weight));
            }
        }
        assert_eq!(count, 1);
        let p = shortest_path(&c).unwrap();
        assert_eq!(p.input, vec![1]);
        assert_eq!(p.output, vec![7]);
    }
}
