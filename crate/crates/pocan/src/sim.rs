//! Seeded Monte-Carlo simulation of the configuration chain: the
//! independent oracle used to cross-check termination probabilities,
//! conditional expected times, tail probabilities, and acceptance values.
//!
//! Determinism contract: every estimator derives sample `i` from its own
//! generator seeded by `(seed, i)`, and all merging happens on integer
//! accumulators, so results are bitwise identical for a fixed
//! (seed, n, horizon) regardless of worker count or scheduling.

use crate::model::{Config, Poc};
use crate::numeric::rat_to_f64;
use crate::omega::RabinPoc;
use rayon::prelude::*;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no sampled run terminated in the requested state within the horizon")]
    NoTerminatingSamples,
}

/// Counter-based generator: a fixed increment walks the state, a finalizer
/// mixes it. Separate sample streams come from hashing (seed, index), so
/// parallel and serial execution consume identical randomness.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SplitMix64 {
    pub fn new(seed: u64) -> SplitMix64 {
        SplitMix64 { state: seed }
    }

    /// Generator for the index-th sample of a run batch.
    pub fn for_sample(seed: u64, index: u64) -> SplitMix64 {
        SplitMix64 { state: mix64(seed ^ mix64(index.wrapping_add(0x6A09_E667_F3BC_C909))) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        mix64(self.state)
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Flattened inverse-CDF tables. Rule probabilities are converted to floats
/// once; the last threshold of every segment is forced to 1.0 so rounding
/// drift cannot leave a gap at the top.
struct Sampler {
    cum: Vec<f64>,
    dst: Vec<u32>,
    delta: Vec<i8>,
    /// Segment bounds, indexed by 2*state + positive; length 2n+1.
    seg: Vec<u32>,
}

impl Sampler {
    fn new(m: &Poc) -> Sampler {
        let n = m.n_states();
        let mut cum = Vec::new();
        let mut dst = Vec::new();
        let mut delta = Vec::new();
        let mut seg = Vec::with_capacity(2 * n + 1);
        seg.push(0);
        for state in 0..n {
            for rules in [m.zero_rules(state), m.pos_rules(state)] {
                let mut acc = 0.0f64;
                for r in rules {
                    acc += rat_to_f64(&r.prob);
                    cum.push(acc);
                    dst.push(r.dst as u32);
                    delta.push(r.delta);
                }
                *cum.last_mut().expect("validated models have rules") = 1.0;
                seg.push(cum.len() as u32);
            }
        }
        Sampler { cum, dst, delta, seg }
    }

    #[inline]
    fn step(&self, state: usize, positive: bool, u: f64) -> (usize, i8) {
        let mut k = self.seg[2 * state + usize::from(positive)] as usize;
        while u >= self.cum[k] {
            k += 1;
        }
        (self.dst[k] as usize, self.delta[k])
    }
}

/// Honor POCAN_THREADS once, before the global pool self-initializes.
fn init_pool() {
    static INIT: OnceLock<()> = OnceLock::new();
    INIT.get_or_init(|| {
        if let Some(k) = std::env::var("POCAN_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&k| k >= 1)
        {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
    });
}

/// One sampled trajectory. The walk always runs for exactly `horizon`
/// steps (counter-0 configurations continue via zero rules); the first
/// counter-0 visit, if any, is recorded separately. `truncated` means the
/// horizon cut the run before any counter-0 visit.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub configs: Vec<Config>,
    pub terminated_at: Option<(u64, usize)>,
    pub truncated: bool,
}

pub fn sample_run(m: &Poc, start: Config, horizon: u64, rng: &mut SplitMix64) -> RunTrace {
    assert!(horizon >= 1, "horizon must be at least 1");
    let s = Sampler::new(m);
    let mut configs = Vec::with_capacity(horizon as usize + 1);
    configs.push(start);
    let mut state = start.state;
    let mut counter = start.counter;
    let mut terminated_at = if counter == 0 { Some((0, state)) } else { None };
    for step in 1..=horizon {
        let (q, d) = s.step(state, counter > 0, rng.next_f64());
        state = q;
        counter = counter.checked_add_signed(d as i64).expect("counter stays non-negative");
        configs.push(Config { state, counter });
        if counter == 0 && terminated_at.is_none() {
            terminated_at = Some((step, state));
        }
    }
    RunTrace { configs, terminated_at, truncated: terminated_at.is_none() }
}

/// Estimator output. `stderr` is the sample standard deviation divided by
/// sqrt(n); `n` is the number of samples the mean averages over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub horizon: u64,
    pub seed: u64,
}

fn bernoulli_estimate(hits: u64, n: u64, horizon: u64, seed: u64) -> Estimate {
    let mean = hits as f64 / n as f64;
    let stderr = if n >= 2 {
        (mean * (1.0 - mean) * n as f64 / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    Estimate { mean, stderr, n, horizon, seed }
}

/// Aggregate of one simulation pass from a fixed start: first-zero-hit
/// counts and hitting-step moments per target state, plus the by-step
/// termination counts. Everything downstream (termination fractions,
/// conditional expected times, survival tails) reads off this one pass.
#[derive(Debug, Clone)]
pub struct TerminationProfile {
    pub n: u64,
    pub horizon: u64,
    pub seed: u64,
    pub hits: Vec<u64>,
    pub step_sums: Vec<u64>,
    pub step_sq_sums: Vec<u128>,
    /// terminated_by_step[i] = runs whose first counter-0 visit is step i.
    pub terminated_by_step: Vec<u64>,
}

impl TerminationProfile {
    /// Fraction of runs whose first counter-0 visit lands in state q.
    pub fn termination(&self, q: usize) -> Estimate {
        bernoulli_estimate(self.hits[q], self.n, self.horizon, self.seed)
    }

    /// Fraction of runs that reach counter 0 at all within the horizon.
    pub fn termination_total(&self) -> Estimate {
        bernoulli_estimate(self.hits.iter().sum(), self.n, self.horizon, self.seed)
    }

    /// Conditional mean hitting step over runs terminating in q.
    pub fn exp_time(&self, q: usize) -> Result<Estimate, SimError> {
        let h = self.hits[q];
        if h == 0 {
            return Err(SimError::NoTerminatingSamples);
        }
        let sum = self.step_sums[q] as f64;
        let mean = sum / h as f64;
        let stderr = if h >= 2 {
            let var = (self.step_sq_sums[q] as f64 - sum * mean).max(0.0) / (h - 1) as f64;
            (var / h as f64).sqrt()
        } else {
            0.0
        };
        Ok(Estimate { mean, stderr, n: h, horizon: self.horizon, seed: self.seed })
    }

    /// Runs still lacking a counter-0 visit after `step` steps.
    pub fn surviving_after(&self, step: u64) -> u64 {
        let cut = (step.min(self.horizon) + 1) as usize;
        self.n - self.terminated_by_step[..cut].iter().sum::<u64>()
    }
}

struct ProfileAcc {
    hits: Vec<u64>,
    step_sums: Vec<u64>,
    step_sq_sums: Vec<u128>,
    terminated_by_step: Vec<u64>,
}

impl ProfileAcc {
    fn new(n_states: usize, horizon: u64) -> ProfileAcc {
        ProfileAcc {
            hits: vec![0; n_states],
            step_sums: vec![0; n_states],
            step_sq_sums: vec![0; n_states],
            terminated_by_step: vec![0; horizon as usize + 1],
        }
    }

    fn add(&mut self, outcome: Option<(usize, u64)>) {
        if let Some((q, step)) = outcome {
            self.hits[q] += 1;
            self.step_sums[q] += step;
            self.step_sq_sums[q] += (step as u128) * (step as u128);
            self.terminated_by_step[step as usize] += 1;
        }
    }

    fn merge(mut self, other: ProfileAcc) -> ProfileAcc {
        for (a, b) in self.hits.iter_mut().zip(&other.hits) {
            *a += b;
        }
        for (a, b) in self.step_sums.iter_mut().zip(&other.step_sums) {
            *a += b;
        }
        for (a, b) in self.step_sq_sums.iter_mut().zip(&other.step_sq_sums) {
            *a += b;
        }
        for (a, b) in self.terminated_by_step.iter_mut().zip(&other.terminated_by_step) {
            *a += b;
        }
        self
    }
}

/// First counter-0 visit of one run, as (state, step), or None if the run
/// cannot terminate within the horizon. Runs never consume randomness at
/// counter 0, so the loop only touches positive rules. The early exit
/// (counter exceeds the remaining steps) is exact: termination within the
/// horizon is impossible from there, and skipping the tail leaves every
/// recorded outcome unchanged.
fn run_outcome(
    s: &Sampler,
    start: Config,
    horizon: u64,
    rng: &mut SplitMix64,
) -> Option<(usize, u64)> {
    let mut state = start.state;
    let mut counter = start.counter;
    if counter == 0 {
        return Some((state, 0));
    }
    if counter > horizon {
        return None;
    }
    for step in 1..=horizon {
        let (q, d) = s.step(state, true, rng.next_f64());
        state = q;
        counter = counter.checked_add_signed(d as i64).expect("positive rules keep counter >= 0");
        if counter == 0 {
            return Some((state, step));
        }
        if counter > horizon - step {
            return None;
        }
    }
    None
}

/// One full simulation pass of n runs from `start`.
pub fn termination_profile(
    m: &Poc,
    start: Config,
    n: u64,
    horizon: u64,
    seed: u64,
) -> TerminationProfile {
    assert!(n >= 1, "at least one sample required");
    assert!(horizon >= 1, "horizon must be at least 1");
    init_pool();
    let s = Sampler::new(m);
    let n_states = m.n_states();
    let acc = (0..n)
        .into_par_iter()
        .fold(
            || ProfileAcc::new(n_states, horizon),
            |mut acc, i| {
                let mut rng = SplitMix64::for_sample(seed, i);
                acc.add(run_outcome(&s, start, horizon, &mut rng));
                acc
            },
        )
        .reduce(|| ProfileAcc::new(n_states, horizon), ProfileAcc::merge);
    TerminationProfile {
        n,
        horizon,
        seed,
        hits: acc.hits,
        step_sums: acc.step_sums,
        step_sq_sums: acc.step_sq_sums,
        terminated_by_step: acc.terminated_by_step,
    }
}

/// Fraction of n runs from p(1) whose first counter-0 visit is q(0).
/// Underestimates the true probability by at most the truncation mass.
pub fn estimate_termination(
    m: &Poc,
    p: usize,
    q: usize,
    n: u64,
    horizon: u64,
    seed: u64,
) -> Estimate {
    termination_profile(m, Config { state: p, counter: 1 }, n, horizon, seed).termination(q)
}

/// Conditional mean hitting step of q(0) over runs from p(1) that get
/// there within the horizon.
pub fn estimate_exp_time(
    m: &Poc,
    p: usize,
    q: usize,
    n: u64,
    horizon: u64,
    seed: u64,
) -> Result<Estimate, SimError> {
    termination_profile(m, Config { state: p, counter: 1 }, n, horizon, seed).exp_time(q)
}

/// Acceptance estimate with its caveat: the infinite-visit set is proxied
/// by a finite window, so the classifier is a heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceEstimate {
    pub estimate: Estimate,
    pub heuristic: bool,
}

/// Fraction of runs whose control-state set over the final `window` steps
/// satisfies some Rabin pair. A sound proxy for runs already absorbed in a
/// bottom component by then; runs that mix slowly can be misclassified.
pub fn estimate_acceptance(
    rp: &RabinPoc,
    start: Config,
    n: u64,
    horizon: u64,
    window: u64,
    seed: u64,
) -> AcceptanceEstimate {
    assert!(n >= 1, "at least one sample required");
    assert!(window >= 1 && window < horizon, "window must lie below the horizon");
    init_pool();
    let m = &rp.poc;
    let s = Sampler::new(m);
    let n_states = m.n_states();
    let mut e_mask = vec![vec![false; n_states]; rp.pairs.len()];
    let mut f_mask = vec![vec![false; n_states]; rp.pairs.len()];
    for (i, (e, f)) in rp.pairs.iter().enumerate() {
        for &q in e {
            e_mask[i][q] = true;
        }
        for &q in f {
            f_mask[i][q] = true;
        }
    }
    let window = window as usize;
    let accepted: u64 = (0..n)
        .into_par_iter()
        .fold(
            || 0u64,
            |acc, i| {
                let mut rng = SplitMix64::for_sample(seed, i);
                let mut state = start.state;
                let mut counter = start.counter;
                let mut ring = vec![0u32; window];
                let mut counts = vec![0u32; n_states];
                for step in 0..horizon as usize {
                    let (q, d) = s.step(state, counter > 0, rng.next_f64());
                    state = q;
                    counter = counter
                        .checked_add_signed(d as i64)
                        .expect("counter stays non-negative");
                    let slot = step % window;
                    if step >= window {
                        counts[ring[slot] as usize] -= 1;
                    }
                    ring[slot] = state as u32;
                    counts[state] += 1;
                }
                let ok = (0..rp.pairs.len()).any(|i| {
                    let mut hit_f = false;
                    for q in 0..n_states {
                        if counts[q] > 0 {
                            if e_mask[i][q] {
                                return false;
                            }
                            hit_f |= f_mask[i][q];
                        }
                    }
                    hit_f
                });
                acc + u64::from(ok)
            },
        )
        .sum();
    AcceptanceEstimate {
        estimate: bernoulli_estimate(accepted, n, horizon, seed),
        heuristic: true,
    }
}
