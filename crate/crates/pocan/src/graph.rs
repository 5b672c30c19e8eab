//! Small directed-graph utilities: Tarjan components, reachability.

use std::collections::VecDeque;

/// Strongly connected components of the graph given as adjacency lists.
///
/// Components are ordered so that every edge goes from an earlier component
/// to a later one (or stays inside one); bottom components therefore sit at
/// the end of the list. Within a component, vertices keep index order.
pub fn sccs(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut state = Tarjan {
        adj,
        index: vec![usize::MAX; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if state.index[v] == usize::MAX {
            state.visit(v);
        }
    }
    // Tarjan emits sinks first; flip to sources-first order.
    state.out.reverse();
    for comp in &mut state.out {
        comp.sort_unstable();
    }
    state.out
}

struct Tarjan<'a> {
    adj: &'a [Vec<usize>],
    index: Vec<usize>,
    low: Vec<usize>,
    on_stack: Vec<bool>,
    stack: Vec<usize>,
    next: usize,
    out: Vec<Vec<usize>>,
}

impl Tarjan<'_> {
    fn visit(&mut self, root: usize) {
        // Explicit stack: (vertex, next edge position) to stay safe on deep graphs.
        let mut work = vec![(root, 0usize)];
        self.open(root);
        while let Some(top) = work.last_mut() {
            let v = top.0;
            let i = top.1;
            top.1 += 1;
            if let Some(&w) = self.adj[v].get(i) {
                if self.index[w] == usize::MAX {
                    self.open(w);
                    work.push((w, 0));
                } else if self.on_stack[w] {
                    self.low[v] = self.low[v].min(self.index[w]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    self.low[parent] = self.low[parent].min(self.low[v]);
                }
                if self.low[v] == self.index[v] {
                    // v is the root of a component.
                    let mut comp = Vec::new();
                    loop {
                        let w = self.stack.pop().expect("tarjan stack");
                        self.on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    self.out.push(comp);
                }
            }
        }
    }

    fn open(&mut self, v: usize) {
        self.index[v] = self.next;
        self.low[v] = self.next;
        self.next += 1;
        self.stack.push(v);
        self.on_stack[v] = true;
    }
}

/// Vertices reachable from `starts` (inclusive).
pub fn reachable(adj: &[Vec<usize>], starts: impl IntoIterator<Item = usize>) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for s in starts {
        if !seen[s] {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen
}

/// Transposed adjacency lists.
pub fn transpose(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut rev = vec![Vec::new(); adj.len()];
    for (v, outs) in adj.iter().enumerate() {
        for &w in outs {
            rev[w].push(v);
        }
    }
    rev
}

/// True if the subgraph induced by `keep` contains a cycle.
pub fn has_cycle(adj: &[Vec<usize>], keep: &[bool]) -> bool {
    for comp in sccs(adj) {
        let kept: Vec<usize> = comp.into_iter().filter(|&v| keep[v]).collect();
        if kept.len() > 1 {
            // The component may have lost vertices to the filter; recheck on
            // the induced subgraph.
            if induced_cycle(adj, &kept, keep) {
                return true;
            }
        } else if let [v] = kept[..] {
            if adj[v].contains(&v) {
                return true;
            }
        }
    }
    false
}

fn induced_cycle(adj: &[Vec<usize>], verts: &[usize], keep: &[bool]) -> bool {
    let mut local = std::collections::HashMap::new();
    for (i, &v) in verts.iter().enumerate() {
        local.insert(v, i);
    }
    let mut sub = vec![Vec::new(); verts.len()];
    for (i, &v) in verts.iter().enumerate() {
        for &w in &adj[v] {
            if keep[w] {
                if let Some(&j) = local.get(&w) {
                    sub[i].push(j);
                }
            }
        }
    }
    sccs(&sub).iter().any(|c| c.len() > 1) || (0..verts.len()).any(|i| sub[i].contains(&i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scc_order_is_sources_first() {
        // p -> q, q -> q: components [{p}, {q}].
        let adj = vec![vec![1], vec![1]];
        assert_eq!(sccs(&adj), vec![vec![0], vec![1]]);
    }

    #[test]
    fn scc_groups_cycles() {
        // 0 <-> 1 -> 2, 3 isolated.
        let adj = vec![vec![1], vec![0, 2], vec![], vec![]];
        let comps = sccs(&adj);
        assert!(comps.contains(&vec![0, 1]));
        assert!(comps.contains(&vec![2]));
        assert!(comps.contains(&vec![3]));
        let pos_01 = comps.iter().position(|c| c == &vec![0, 1]).unwrap();
        let pos_2 = comps.iter().position(|c| c == &vec![2]).unwrap();
        assert!(pos_01 < pos_2, "edges must point to later components");
    }

    #[test]
    fn deep_chain_does_not_overflow() {
        let n = 200_000;
        let adj: Vec<Vec<usize>> = (0..n).map(|v| if v + 1 < n { vec![v + 1] } else { vec![] }).collect();
        assert_eq!(sccs(&adj).len(), n);
    }

    #[test]
    fn cycle_detection_respects_filter() {
        let adj = vec![vec![1], vec![0]];
        assert!(has_cycle(&adj, &[true, true]));
        assert!(!has_cycle(&adj, &[true, false]));
    }
}
