// Shared helpers for the integration tests: a seeded random-model generator
// and a brute-force configuration-graph search used as a reachability oracle.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};
use std::path::PathBuf;

use pocan::numeric::rat;
use pocan::sim::SplitMix64;
use pocan::{Config, Poc, Rule};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

#[derive(Clone, Copy)]
pub struct GenOpts {
    pub max_states: usize,
    /// Force a positive-rule cycle through all states so the underlying
    /// chain is strongly connected.
    pub connect: bool,
    /// Weight positive rules toward counter increments.
    pub up_bias: bool,
}

fn pick(rng: &mut SplitMix64, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

fn gen_kind(rng: &mut SplitMix64, src: usize, n: usize, positive: bool, o: &GenOpts, out: &mut Vec<Rule>) {
    let deltas: &[i8] = if positive { &[-1, 0, 1] } else { &[0, 1] };
    let want = 1 + pick(rng, 3);
    let mut chosen: Vec<(i8, usize)> = Vec::new();
    if positive && o.connect {
        chosen.push((deltas[pick(rng, deltas.len())], (src + 1) % n));
    }
    for _ in 0..24 {
        if chosen.len() >= want {
            break;
        }
        let cand = (deltas[pick(rng, deltas.len())], pick(rng, n));
        if !chosen.contains(&cand) {
            chosen.push(cand);
        }
    }
    let weights: Vec<u64> = chosen
        .iter()
        .map(|&(d, _)| {
            if positive && o.up_bias && d == 1 {
                6 + rng.next_u64() % 6
            } else {
                1 + rng.next_u64() % 4
            }
        })
        .collect();
    let total: u64 = weights.iter().sum();
    for (&(delta, dst), &w) in chosen.iter().zip(&weights) {
        out.push(Rule { src, delta, dst, prob: rat(w as i64, total as i64) });
    }
}

pub fn random_poc(rng: &mut SplitMix64, o: &GenOpts) -> Poc {
    let n = 1 + pick(rng, o.max_states);
    let names = (0..n).map(|i| format!("s{i}")).collect::<Vec<_>>();
    let mut zero = Vec::new();
    let mut pos = Vec::new();
    for src in 0..n {
        gen_kind(rng, src, n, false, o, &mut zero);
        gen_kind(rng, src, n, true, o, &mut pos);
    }
    Poc::new(names, zero, pos, vec![None; n]).expect("generated model is well formed")
}

/// Every configuration reachable from `start` along positive-rule edges,
/// restricted to counters at most `counter_cap`. Configurations at counter 0
/// are collected but never expanded, so every search path keeps the counter
/// positive strictly before its endpoint. The truncated graph is finite, so
/// a plain breadth-first search enumerates it exactly.
pub fn reachable_configs(m: &Poc, start: Config, counter_cap: u64) -> BTreeSet<(usize, u64)> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    if start.counter <= counter_cap {
        seen.insert((start.state, start.counter));
        queue.push_back(start);
    }
    while let Some(c) = queue.pop_front() {
        if c.counter == 0 {
            continue;
        }
        for (succ, _) in m.step_distribution(c) {
            if succ.counter <= counter_cap && seen.insert((succ.state, succ.counter)) {
                queue.push_back(succ);
            }
        }
    }
    seen
}
