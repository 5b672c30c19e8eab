//! Qualitative reachability via automata saturation.
//!
//! A set of configurations is represented by a finite automaton over a
//! one-letter alphabet: configuration `p(n)` belongs to the set iff the
//! automaton has a path of exactly `n` edges from the control state `p` to
//! an accepting state. Predecessor and successor sets under positive rules
//! ("honest" steps: the counter stays positive strictly before the final
//! configuration) are computed by saturating such an automaton; the
//! saturated automaton is again of this shape, so membership, intersection,
//! and finiteness checks stay cheap.
//!
//! Zero rules never participate: they fire at counter zero, which only the
//! endpoints of an honest path may visit.

use crate::graph;
use crate::model::{Config, Poc};
use std::collections::BTreeSet;

/// Automaton over the one-letter alphabet; the first `n_control` states
/// mirror the pOC's control states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PAutomaton {
    n_control: usize,
    edges: Vec<BTreeSet<usize>>,
    accepting: Vec<bool>,
}

impl PAutomaton {
    /// Automaton accepting `{q(0) : q in accepting}`.
    pub fn zero_target(n_control: usize, accepting: impl IntoIterator<Item = usize>) -> PAutomaton {
        let mut acc = vec![false; n_control];
        for q in accepting {
            acc[q] = true;
        }
        PAutomaton { n_control, edges: vec![BTreeSet::new(); n_control], accepting: acc }
    }

    /// Automaton accepting exactly `{c}`: a fresh chain of `c.counter` edges.
    pub fn single_config(n_control: usize, c: Config) -> PAutomaton {
        assert!(c.state < n_control);
        let len = usize::try_from(c.counter).expect("counter fits usize");
        let n = n_control + len.max(1);
        let mut edges = vec![BTreeSet::new(); n];
        let mut accepting = vec![false; n];
        if len == 0 {
            // One unreachable spare state keeps the shape uniform.
            accepting[c.state] = true;
        } else {
            let mut cur = c.state;
            for k in 0..len {
                let next = n_control + k;
                edges[cur].insert(next);
                cur = next;
            }
            accepting[cur] = true;
        }
        PAutomaton { n_control, edges, accepting }
    }

    pub fn n_control(&self) -> usize {
        self.n_control
    }

    pub fn n_states(&self) -> usize {
        self.edges.len()
    }

    pub fn is_accepting(&self, state: usize) -> bool {
        self.accepting[state]
    }

    pub fn successors(&self, state: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges[state].iter().copied()
    }

    /// Membership of one configuration: a path of exactly `counter` edges.
    pub fn accepts(&self, c: Config) -> bool {
        if c.state >= self.n_control {
            return false;
        }
        let mut layer = vec![false; self.n_states()];
        layer[c.state] = true;
        for _ in 0..c.counter {
            let mut next = vec![false; self.n_states()];
            let mut any = false;
            for (s, here) in layer.iter().enumerate() {
                if *here {
                    for &t in &self.edges[s] {
                        next[t] = true;
                        any = true;
                    }
                }
            }
            if !any {
                return false;
            }
            layer = next;
        }
        layer.iter().zip(&self.accepting).any(|(l, a)| *l && *a)
    }

    /// Does the automaton accept `state(k)` for any `k >= min_counter`?
    pub fn accepts_some(&self, state: usize, min_counter: u64) -> bool {
        let adj = self.adjacency();
        match min_counter {
            0 => graph::reachable(&adj, [state]).iter().zip(&self.accepting).any(|(r, a)| *r && *a),
            1 => {
                let starts: Vec<usize> = self.edges[state].iter().copied().collect();
                graph::reachable(&adj, starts).iter().zip(&self.accepting).any(|(r, a)| *r && *a)
            }
            _ => {
                // Layered start sets for small fixed offsets.
                let mut layer: BTreeSet<usize> = [state].into();
                for _ in 0..min_counter {
                    layer = layer.iter().flat_map(|&s| self.edges[s].iter().copied()).collect();
                }
                graph::reachable(&adj, layer).iter().zip(&self.accepting).any(|(r, a)| *r && *a)
            }
        }
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        self.edges.iter().map(|set| set.iter().copied().collect()).collect()
    }

    /// States that lie on some accepting path from some control state.
    fn live_mask(&self) -> Vec<bool> {
        let adj = self.adjacency();
        let fwd = graph::reachable(&adj, 0..self.n_control);
        let rev = graph::transpose(&adj);
        let acc: Vec<usize> =
            (0..self.n_states()).filter(|&s| self.accepting[s]).collect();
        let bwd = graph::reachable(&rev, acc);
        fwd.iter().zip(&bwd).map(|(f, b)| *f && *b).collect()
    }

    /// True iff the accepted configuration set is infinite: after trimming
    /// to states on accepting paths, some cycle survives.
    pub fn is_infinite(&self) -> bool {
        graph::has_cycle(&self.adjacency(), &self.live_mask())
    }

    /// All accepted configurations, or `None` when the set is infinite. On a
    /// trimmed acyclic automaton accepted counters stay below the state
    /// count, so enumeration is a short layered sweep.
    pub fn enumerate(&self) -> Option<Vec<Config>> {
        if self.is_infinite() {
            return None;
        }
        let live = self.live_mask();
        let mut out = Vec::new();
        for p in 0..self.n_control {
            if !live[p] {
                continue;
            }
            let mut layer: BTreeSet<usize> = [p].into();
            let mut counter = 0u64;
            loop {
                if layer.iter().any(|&s| self.accepting[s]) {
                    out.push(Config { state: p, counter });
                }
                layer = layer
                    .iter()
                    .flat_map(|&s| self.edges[s].iter().copied())
                    .filter(|&s| live[s])
                    .collect();
                if layer.is_empty() {
                    break;
                }
                counter += 1;
                assert!(
                    counter as usize <= self.n_states(),
                    "acyclic automaton exceeded its path-length bound"
                );
            }
        }
        out.sort_unstable();
        Some(out)
    }

    /// Product automaton: accepts exactly the configurations accepted by
    /// both operands. Control states stay aligned.
    pub fn intersect(&self, other: &PAutomaton) -> PAutomaton {
        assert_eq!(self.n_control, other.n_control);
        let nc = self.n_control;
        let mut index = std::collections::HashMap::new();
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for p in 0..nc {
            index.insert((p, p), p);
            pairs.push((p, p));
        }
        let mut edges: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nc];
        let mut queue: std::collections::VecDeque<usize> = (0..nc).collect();
        while let Some(i) = queue.pop_front() {
            let (u1, u2) = pairs[i];
            let targets: Vec<(usize, usize)> = self.edges[u1]
                .iter()
                .flat_map(|&v1| other.edges[u2].iter().map(move |&v2| (v1, v2)))
                .collect();
            for pair in targets {
                let j = *index.entry(pair).or_insert_with(|| {
                    pairs.push(pair);
                    edges.push(BTreeSet::new());
                    queue.push_back(pairs.len() - 1);
                    pairs.len() - 1
                });
                edges[i].insert(j);
            }
        }
        let accepting = pairs
            .iter()
            .map(|&(s1, s2)| self.accepting[s1] && other.accepting[s2])
            .collect();
        PAutomaton { n_control: nc, edges, accepting }
    }
}

/// Summary of a configuration set: the automaton, whether it is finite, and
/// the exact number of configurations when it is.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigSetInfo {
    pub automaton: PAutomaton,
    pub finite: bool,
    pub size_bound: Option<u64>,
}

pub fn config_set_info(automaton: PAutomaton) -> ConfigSetInfo {
    match automaton.enumerate() {
        Some(configs) => {
            ConfigSetInfo { automaton, finite: true, size_bound: Some(configs.len() as u64) }
        }
        None => ConfigSetInfo { automaton, finite: false, size_bound: None },
    }
}

/// Saturate `target` into the automaton of honest predecessors: all `r(k)`
/// that can reach an accepted configuration with the counter positive in
/// every configuration before that visit.
pub fn pre_star(m: &Poc, target: &PAutomaton) -> PAutomaton {
    assert_eq!(target.n_control(), m.n_states());
    let mut auto = target.clone();
    loop {
        let mut grew = false;
        for r in m.all_pos_rules() {
            let additions: Vec<usize> = match r.delta {
                -1 => vec![r.dst],
                0 => auto.edges[r.dst].iter().copied().collect(),
                1 => auto.edges[r.dst]
                    .iter()
                    .flat_map(|&mid| auto.edges[mid].iter().copied())
                    .collect(),
                _ => unreachable!("validated delta"),
            };
            for t in additions {
                grew |= auto.edges[r.src].insert(t);
            }
        }
        if !grew {
            return auto;
        }
    }
}

/// Saturate `source` into the automaton of honest successors: all `r(k)`
/// reachable from an accepted configuration with the counter positive in
/// every configuration before the visit to `r(k)`.
pub fn post_star(m: &Poc, source: &PAutomaton) -> PAutomaton {
    assert_eq!(source.n_control(), m.n_states());
    let nc = m.n_states();
    let pos_rules: Vec<_> = m.all_pos_rules().collect();
    // One fresh state per +1 rule.
    let n = source.n_states() + pos_rules.iter().filter(|r| r.delta == 1).count();
    let mut x_edges: Vec<BTreeSet<usize>> = source.edges.clone();
    x_edges.resize(n, BTreeSet::new());
    let mut e_edges: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut aux = source.n_states();
    let aux_of: Vec<Option<usize>> = pos_rules
        .iter()
        .map(|r| {
            if r.delta == 1 {
                aux += 1;
                Some(aux - 1)
            } else {
                None
            }
        })
        .collect();

    // States reachable from `state` by any number of epsilon edges.
    let closure = |e_edges: &Vec<BTreeSet<usize>>, state: usize| -> Vec<usize> {
        let mut seen = vec![false; n];
        let mut stack = vec![state];
        seen[state] = true;
        while let Some(s) = stack.pop() {
            for &t in &e_edges[s] {
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        (0..n).filter(|&s| seen[s]).collect()
    };
    // Targets of paths from `state` reading exactly one edge, epsilons free.
    let reach_one = |x_edges: &Vec<BTreeSet<usize>>, e_edges: &Vec<BTreeSet<usize>>, state: usize| {
        let mut hit = BTreeSet::new();
        for s in closure(e_edges, state) {
            for &t in &x_edges[s] {
                for u in closure(e_edges, t) {
                    hit.insert(u);
                }
            }
        }
        hit
    };

    loop {
        let mut grew = false;
        for (ri, r) in pos_rules.iter().enumerate() {
            let one = reach_one(&x_edges, &e_edges, r.src);
            match r.delta {
                -1 => {
                    for &s in &one {
                        grew |= e_edges[r.dst].insert(s);
                    }
                }
                0 => {
                    for &s in &one {
                        grew |= x_edges[r.dst].insert(s);
                    }
                }
                1 => {
                    let a = aux_of[ri].expect("aux allocated");
                    grew |= x_edges[r.dst].insert(a);
                    for &s in &one {
                        grew |= x_edges[a].insert(s);
                    }
                }
                _ => unreachable!("validated delta"),
            }
        }
        if !grew {
            break;
        }
    }

    // Eliminate epsilon edges: prepend closures to each edge, lift acceptance.
    let mut edges: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut accepting = vec![false; n];
    for s in 0..n {
        for c in closure(&e_edges, s) {
            for &t in &x_edges[c] {
                edges[s].insert(t);
            }
            if c < source.n_states() && source.accepting[c] {
                accepting[s] = true;
            }
        }
    }
    PAutomaton { n_control: nc, edges, accepting }
}

/// All pairs `(p, q)` whose termination probability is positive: `p(1)` is an
/// honest predecessor of `q(0)`.
pub fn positive_pairs(m: &Poc) -> Vec<(usize, usize)> {
    let n = m.n_states();
    let mut pairs = Vec::new();
    for q in 0..n {
        let pre = pre_star(m, &PAutomaton::zero_target(n, [q]));
        for p in 0..n {
            if pre.accepts(Config { state: p, counter: 1 }) {
                pairs.push((p, q));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// States that diverge surely from counter 1: no honest path from `q(1)`
/// reaches counter 0 at all.
pub fn sure_divergers(m: &Poc) -> Vec<usize> {
    let n = m.n_states();
    let pre = pre_star(m, &PAutomaton::zero_target(n, 0..n));
    (0..n).filter(|&q| !pre.accepts(Config { state: q, counter: 1 })).collect()
}

/// True iff some `q(k)`, `k >= 1`, is an honest successor of `p(1)`.
pub fn reach_positive(m: &Poc, p: usize, q: usize) -> bool {
    let post = post_star(m, &PAutomaton::single_config(m.n_states(), Config { state: p, counter: 1 }));
    post.accepts_some(q, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{and_or_model, walk_model};
    use crate::numeric::rat;

    #[test]
    fn walk_pre_star_accepts_every_counter() {
        let m = walk_model(&rat(3, 5)).unwrap();
        let pre = pre_star(&m, &PAutomaton::zero_target(1, [0]));
        for counter in [0u64, 1, 2, 10, 100] {
            assert!(pre.accepts(Config { state: 0, counter }));
        }
        assert!(pre.is_infinite());
    }

    #[test]
    fn descending_walk_post_star_is_finite() {
        let m = walk_model(&rat(1, 1)).unwrap();
        let post = post_star(&m, &PAutomaton::single_config(1, Config { state: 0, counter: 1 }));
        assert!(post.accepts(Config { state: 0, counter: 1 }));
        assert!(post.accepts(Config { state: 0, counter: 0 }));
        assert!(!post.accepts(Config { state: 0, counter: 2 }));
        let info = config_set_info(post);
        assert!(info.finite);
        assert_eq!(info.size_bound, Some(2));
    }

    #[test]
    fn ascending_walk_post_star_is_infinite() {
        let m = walk_model(&rat(2, 5)).unwrap();
        let post = post_star(&m, &PAutomaton::single_config(1, Config { state: 0, counter: 1 }));
        for counter in [0u64, 1, 5, 40] {
            assert!(post.accepts(Config { state: 0, counter }), "counter {counter}");
        }
        assert!(post.is_infinite());
        assert!(reach_positive(&m, 0, 0));
    }

    #[test]
    fn positive_pairs_of_the_and_or_model() {
        let m = and_or_model(&rat(1, 2), &rat(2, 5), &rat(1, 5), &rat(1, 5)).unwrap();
        let pairs = positive_pairs(&m);
        let name_pairs: Vec<(String, String)> = pairs
            .iter()
            .map(|&(p, q)| (m.name(p).to_string(), m.name(q).to_string()))
            .collect();
        // Parity: descents from *_init/*_ret states land on the opposite
        // family, so and_init can only hit or-states at counter zero.
        assert!(name_pairs.contains(&("and_init".into(), "or_ret0".into())));
        assert!(name_pairs.contains(&("and_init".into(), "or_ret1".into())));
        assert!(!name_pairs.contains(&("and_init".into(), "and_ret0".into())));
        assert!(!name_pairs.contains(&("and_init".into(), "and_init".into())));
        // No state diverges surely: every state can descend.
        assert!(sure_divergers(&m).is_empty());
    }

    #[test]
    fn sure_divergers_on_a_climbing_state() {
        // u climbs forever; d descends.
        let text = "poc v1\nstate u d\nzero u 0 u 1\nzero d 0 d 1\n\
                    pos u 1 u 1\npos d -1 d 1\n";
        let m = crate::parse::parse_poc(text).unwrap();
        assert_eq!(sure_divergers(&m), vec![0]);
        assert!(!reach_positive(&m, 0, 1));
        assert!(reach_positive(&m, 0, 0));
    }

    #[test]
    fn intersection_aligns_control_states() {
        let m = walk_model(&rat(2, 5)).unwrap();
        let pre = pre_star(&m, &PAutomaton::zero_target(1, [0]));
        let post = post_star(&m, &PAutomaton::single_config(1, Config { state: 0, counter: 1 }));
        let both = pre.intersect(&post);
        for counter in [0u64, 1, 7] {
            assert_eq!(
                both.accepts(Config { state: 0, counter }),
                pre.accepts(Config { state: 0, counter })
                    && post.accepts(Config { state: 0, counter })
            );
        }
        assert!(both.is_infinite());
    }
}
