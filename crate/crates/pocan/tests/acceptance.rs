// Acceptance gate: one test per numbered criterion, each printing a
// pass/fail line with wall time (run with --nocapture to see them).

mod common;

use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_traits::{One, Signed, Zero};
use pocan::bounds::{
    azuma_tail, divergence_tail, gap_bound, grand_bound, perturbation_factor,
    potential_span_bound, pumping_bound, reach_high_bound, visiting_delta, BoundValue, GrandCase,
};
use pocan::chain::{bottom_analyses, martingale_residual, scc_decompose, underlying_chain};
use pocan::exptime::{classify_finiteness, expected_times, PrecisionMode};
use pocan::model::{and_or_model, walk_model};
use pocan::newton::solve_termination;
use pocan::numeric::{rat, rat_pow, rat_to_f64, Rat};
use pocan::omega::{divergence_all, model_check_from, nonterm_prob, nonterm_probs, CheckMode};
use pocan::parse::{parse_dra, parse_poc};
use pocan::reach::{config_set_info, positive_pairs, post_star, pre_star, PAutomaton};
use pocan::sim::{sample_run, termination_profile, SplitMix64};
use pocan::Config;

use common::{fixture, random_poc, reachable_configs, GenOpts};

fn report(n: u32, name: &str, body: impl FnOnce()) {
    let t0 = Instant::now();
    let r = catch_unwind(AssertUnwindSafe(body));
    let dt = t0.elapsed().as_secs_f64();
    match r {
        Ok(()) => println!("criterion {n} ({name}): PASS [{dt:.1}s]"),
        Err(e) => {
            println!("criterion {n} ({name}): FAIL [{dt:.1}s]");
            resume_unwind(e);
        }
    }
}

fn bv_f64(b: &BoundValue) -> f64 {
    match &b.exact {
        Some(r) => rat_to_f64(r),
        None => 2f64.powf(b.log2),
    }
}

/// The printed reference values are rounded to three decimals, so the
/// Monte-Carlo band gets half an ulp of that rounding on top of 3 sigma.
fn bracket(label: &str, mean: f64, stderr: f64, printed: f64) {
    let slack = 3.0 * stderr + 5.0e-4;
    assert!(
        (mean - printed).abs() <= slack,
        "{label}: estimate {mean} +- {stderr} does not bracket {printed}"
    );
}

// (z, y, x_a, x_o) in tenths -> [a down], [a down 0], [a down 1],
// E[a down 0], E[a down 1] for the AND-OR family.
const ROWS: [((i64, i64, i64, i64), [f64; 5]); 12] = [
    ((5, 4, 2, 2), [0.800, 0.500, 0.300, 11.000, 7.667]),
    ((5, 4, 2, 4), [0.967, 0.667, 0.300, 104.750, 38.917]),
    ((5, 4, 2, 6), [1.000, 0.720, 0.280, 20.368, 5.489]),
    ((5, 4, 2, 8), [1.000, 0.732, 0.268, 10.778, 2.758]),
    ((5, 5, 1, 1), [0.861, 0.556, 0.306, 11.400, 5.509]),
    ((5, 5, 2, 1), [0.931, 0.556, 0.375, 23.133, 20.644]),
    ((5, 5, 3, 1), [1.000, 0.546, 0.454, 83.199, 111.801]),
    ((5, 5, 4, 1), [1.000, 0.507, 0.493, 12.959, 21.555]),
    ((2, 4, 2, 2), [0.810, 0.696, 0.115, 7.827, 6.266]),
    ((3, 4, 2, 2), [0.811, 0.636, 0.175, 8.928, 6.783]),
    ((4, 4, 2, 2), [0.808, 0.571, 0.236, 10.005, 7.258]),
    ((5, 4, 2, 2), [0.800, 0.500, 0.300, 11.000, 7.667]),
];

#[test]
fn criterion_1_reference_table() {
    report(1, "reference table reproduction", || {
        for (i, ((z, y, xa, xo), want)) in ROWS.iter().enumerate() {
            let row_t0 = Instant::now();
            let m =
                and_or_model(&rat(*z, 10), &rat(*y, 10), &rat(*xa, 10), &rat(*xo, 10)).unwrap();
            let a = m.state_index("and_init").unwrap();
            let r0 = m.state_index("or_ret0").unwrap();
            let r1 = m.state_index("or_ret1").unwrap();

            let term = solve_termination(&m, 1e-6);
            let row = i + 1;
            let total = term.termination_total(a);
            assert!((total - want[0]).abs() <= 5e-4, "row {row}: [a down] = {total}");
            let p0 = term.prob(a, r0);
            assert!((p0 - want[1]).abs() <= 5e-4, "row {row}: [a down 0] = {p0}");
            let p1 = term.prob(a, r1);
            assert!((p1 - want[2]).abs() <= 5e-4, "row {row}: [a down 1] = {p1}");

            let et = expected_times(&m, &rat(1, 1000), PrecisionMode::Adaptive).unwrap();
            let e0 = et.value(a, r0).expect("pair is finite");
            assert!((e0 - want[3]).abs() <= 1e-2, "row {row}: E[a down 0] = {e0}");
            let e1 = et.value(a, r1).expect("pair is finite");
            assert!((e1 - want[4]).abs() <= 1e-2, "row {row}: E[a down 1] = {e1}");

            let n = 1_000_000u64;
            let seed = 20_260_816 + i as u64;
            let start = Config { state: a, counter: 1 };
            let labels = ["[a down]", "[a down 0]", "[a down 1]", "E[a down 0]", "E[a down 1]"];
            let estimates = |prof: &pocan::sim::TerminationProfile| {
                [
                    prof.termination_total(),
                    prof.termination(r0),
                    prof.termination(r1),
                    prof.exp_time(r0).unwrap(),
                    prof.exp_time(r1).unwrap(),
                ]
            };

            // Termination fractions and horizon-conditioned mean hitting
            // times can only undershoot their limits, never overshoot.
            let prof = termination_profile(&m, start, n, 10_000, seed);
            for (e, (lab, w)) in estimates(&prof).iter().zip(labels.iter().zip(want)) {
                assert!(
                    e.mean <= w + 3.0 * e.stderr + 5.0e-4,
                    "row {row} {lab}: estimate {} +- {} overshoots {w}",
                    e.mean,
                    e.stderr
                );
            }

            // The two-sided bracket needs the truncation mass to be
            // negligible. An undershoot beyond the band at the base horizon
            // is the signature of late terminations; push the horizon out
            // until they are gone before bracketing such a row (a genuine
            // defect would undershoot at every horizon and still fail).
            let undershoots = estimates(&prof)
                .iter()
                .zip(want)
                .any(|(e, w)| w - e.mean > 3.0 * e.stderr + 5.0e-4);
            let escalated;
            let bracket_prof = if undershoots {
                let diverging = (1.0 - total).max(0.0);
                let h = if diverging < 1e-4 { 2_000_000 } else { 160_000 };
                escalated = termination_profile(&m, start, n, h, seed);
                &escalated
            } else {
                &prof
            };
            for (e, (lab, w)) in estimates(bracket_prof).iter().zip(labels.iter().zip(want)) {
                bracket(&format!("row {row} {lab}"), e.mean, e.stderr, *w);
            }

            println!("  row {row:2}: term/exptime/mc ok [{:.1}s]", row_t0.elapsed().as_secs_f64());
        }
    });
}

#[test]
fn criterion_2_symmetric_walk() {
    report(2, "symmetric walk certification", || {
        let m = parse_poc(&std::fs::read_to_string(fixture("symmetric.poc")).unwrap()).unwrap();
        let sol = solve_termination(&m, 1e-6);
        let p = sol.prob(0, 0);
        assert!(p <= 1.0 && p >= 1.0 - 1e-6, "termination probability {p}");
        let rep = classify_finiteness(&m, &positive_pairs(&m));
        let reason = rep.reason(0, 0).expect("pair has positive termination probability");
        assert!(!reason.is_finite(), "expected time must be infinite");
        assert_eq!(reason.token(), "TREND_ZERO_PREPOST_INFINITE");
    });
}

#[test]
fn criterion_3_closed_form_walks() {
    report(3, "biased walk closed forms", || {
        for (u, d) in [(rat(2, 5), rat(3, 5)), (rat(1, 3), rat(2, 3)), (rat(3, 5), rat(2, 5))] {
            let m = walk_model(&d).unwrap();
            let sol = solve_termination(&m, 1e-8);
            let p = sol.prob(0, 0);
            let want = if d >= u { Rat::one() } else { d.clone() / u.clone() };
            let want_f = rat_to_f64(&want);
            assert!(
                (p - want_f).abs() <= want_f * 1e-8,
                "termination {p} vs {want_f} for down = {d}"
            );
            if d > u {
                let et = expected_times(&m, &rat(1, 1_000_000), PrecisionMode::Adaptive).unwrap();
                let e = et.value(0, 0).expect("pair is finite");
                let want_e = rat_to_f64(&(Rat::one() / (d.clone() - u.clone())));
                assert!((e - want_e).abs() <= 1e-6, "expected time {e} vs {want_e}");
            }
            if u > d {
                let v = nonterm_prob(&m, 0, &rat(1, 1_000_000)).unwrap();
                let want_v = rat_to_f64(&(Rat::one() - d.clone() / u.clone()));
                assert!(
                    (v - want_v).abs() <= want_v * 1e-6,
                    "divergence {v} vs {want_v} for down = {d}"
                );
            }
        }
    });
}

#[test]
fn criterion_4_martingale_and_potential_invariants() {
    report(4, "martingale and potential invariants", || {
        let mut rng = SplitMix64::new(0x5EED_0004);
        let opts = GenOpts { max_states: 6, connect: true, up_bias: false };
        for _ in 0..200 {
            let m = random_poc(&mut rng, &opts);
            let n = m.n_states();
            let ch = underlying_chain(&m);
            let scc = scc_decompose(&ch);
            assert_eq!(scc.components.len(), 1, "generator forces strong connectivity");
            let analyses = bottom_analyses(&ch, &scc).unwrap();
            let b = &analyses[0];

            for s in 0..n {
                for c in 1..=5u64 {
                    let r = martingale_residual(&m, b, Config { state: s, counter: c });
                    assert!(r.is_zero(), "state {s} counter {c}: drift {r}");
                }
            }

            let mut total = Rat::zero();
            for a in &b.alpha {
                total = total + a;
            }
            assert!(total.is_one(), "stationary weights sum to {total}");
            for (j, &s) in b.states.iter().enumerate() {
                let mut inflow = Rat::zero();
                for (k, &sp) in b.states.iter().enumerate() {
                    let mut w = Rat::zero();
                    for r in m.pos_rules(sp) {
                        if r.dst == s {
                            w = w + &r.prob;
                        }
                    }
                    inflow = inflow + &b.alpha[k] * w;
                }
                assert_eq!(inflow, b.alpha[j], "stationarity at state {s}");
            }

            let mut drift = Rat::zero();
            for (k, &sp) in b.states.iter().enumerate() {
                for r in m.pos_rules(sp) {
                    drift = drift + &b.alpha[k] * &r.prob * rat(r.delta as i64, 1);
                }
            }
            assert_eq!(drift, b.trend, "trend is the stationary drift");

            let bound = rat(2 * n as i64, 1) / rat_pow(m.x_min(), n as u32);
            assert!(b.span <= bound, "span {} exceeds {}", b.span, bound);
        }
    });
}

#[test]
fn criterion_5_reachability_oracle() {
    report(5, "reachability sets against brute force", || {
        let mut rng = SplitMix64::new(0x5EED_0005);
        let opts = GenOpts { max_states: 4, connect: false, up_bias: false };
        for _ in 0..100 {
            let m = random_poc(&mut rng, &opts);
            let n = m.n_states();
            // A path that needs to visit a configuration with counter c never
            // has to climb more than the pumping budget above it; anything
            // higher contains a removable positive loop. Search with that
            // headroom so the truncated graph decides counters up to 20.
            let pump = pumping_bound(n as u64);
            let cap = 20 + pump + 2;

            let pres: Vec<PAutomaton> = (0..n)
                .map(|q| pre_star(&m, &PAutomaton::single_config(n, Config { state: q, counter: 0 })))
                .collect();
            let posts: Vec<PAutomaton> = (0..n)
                .map(|p| post_star(&m, &PAutomaton::single_config(n, Config { state: p, counter: 1 })))
                .collect();

            for p in 0..n {
                let fwd = reachable_configs(&m, Config { state: p, counter: 1 }, cap);
                for &(q, c) in &fwd {
                    assert!(
                        posts[p].accepts(Config { state: q, counter: c }),
                        "forward set misses ({q}, {c}) from {p}\n{}",
                        pocan::model::render_poc(&m)
                    );
                }
                for q in 0..n {
                    for c in 0..=20u64 {
                        if posts[p].accepts(Config { state: q, counter: c }) {
                            assert!(
                                fwd.contains(&(q, c)),
                                "forward set claims unreachable ({q}, {c}) from {p}"
                            );
                        }
                    }
                }
            }

            for p in 0..n {
                for c in 0..=20u64 {
                    let fwd = reachable_configs(&m, Config { state: p, counter: c }, cap);
                    for (q, pre) in pres.iter().enumerate() {
                        assert_eq!(
                            pre.accepts(Config { state: p, counter: c }),
                            fwd.contains(&(q, 0)),
                            "backward set disagrees at ({p}, {c}) -> {q}"
                        );
                    }
                }
            }

            for p in 0..n {
                for q in 0..n {
                    let info = config_set_info(posts[p].intersect(&pres[q]));
                    if info.finite {
                        let confs = info.automaton.enumerate().expect("finite set enumerates");
                        assert!(
                            confs.len() as u64 <= pump,
                            "{} configurations exceed the budget {pump}",
                            confs.len()
                        );
                    }
                }
            }
        }
    });
}

#[test]
fn criterion_6_divergence_detection() {
    report(6, "divergence flags and certified bounds", || {
        let mut rng = SplitMix64::new(0x5EED_0006);
        let opts = GenOpts { max_states: 6, connect: false, up_bias: true };
        for mi in 0..50u64 {
            let m = random_poc(&mut rng, &opts);
            let infos = divergence_all(&m).unwrap();
            let probs = nonterm_probs(&m, &rat(1, 1_000_000)).unwrap();
            for (s, info) in infos.iter().enumerate() {
                if info.positive {
                    let lb = info.lower_bound.as_ref().expect("positive flag carries a bound");
                    assert!(lb.is_positive());
                    let lb_f = rat_to_f64(lb);
                    assert!(
                        probs[s] * (1.0 + 1e-5) + 1e-12 >= lb_f,
                        "state {s}: value {} below its certificate {lb_f}",
                        probs[s]
                    );
                } else {
                    assert!(info.lower_bound.is_none());
                    assert_eq!(probs[s], 0.0, "state {s} is qualitatively terminating");
                }
            }
            // A sampled run that is still alive far up the counter after a
            // long horizon must come from a state flagged as divergent.
            for s in 0..m.n_states() {
                for k in 0..12u64 {
                    let mut sample_rng = SplitMix64::for_sample(0xD1CE_0000 + mi, ((s as u64) << 8) | k);
                    let tr = sample_run(&m, Config { state: s, counter: 1 }, 100_000, &mut sample_rng);
                    let last = tr.configs.last().unwrap();
                    if tr.terminated_at.is_none() && last.counter > 1_000 {
                        assert!(infos[s].positive, "surviving high run from unflagged state {s}");
                    }
                }
            }
        }
    });
}

#[test]
fn criterion_7_tail_bounds_dominate_simulation() {
    report(7, "concentration tails dominate simulation", || {
        let m = walk_model(&rat(2, 5)).unwrap();
        let ch = underlying_chain(&m);
        let scc = scc_decompose(&ch);
        let analyses = bottom_analyses(&ch, &scc).unwrap();
        let b = &analyses[0];
        assert_eq!(b.trend, rat(1, 5));
        assert!(b.span.is_zero());

        // Terminations past the largest checked step are astronomically
        // unlikely on this walk, so a horizon just above it loses nothing.
        let n = 1_000_000u64;
        let prof = termination_profile(&m, Config { state: 0, counter: 1 }, n, 6_000, 777_001);
        for i in [1u64, 16, 64, 256, 1024, 4096] {
            let late: u64 = prof.terminated_by_step[i as usize..].iter().sum();
            let p_hat = late as f64 / n as f64;
            let sigma = (p_hat * (1.0 - p_hat) / n as f64).sqrt();
            let tail = azuma_tail(&b.trend, &b.span, 1, i as i64).unwrap();
            let bound = bv_f64(&tail.value.expect("index clears the threshold"));
            assert!(
                p_hat <= bound + 3.0 * sigma + 1e-12,
                "step {i}: late mass {p_hat} above bound {bound}"
            );
        }

        let c0 = 800u64;
        let prof2 = termination_profile(&m, Config { state: 0, counter: c0 }, n, 2_000, 777_002);
        let t2 = prof2.termination_total();
        let dt = divergence_tail(&b.trend, &b.span, c0 as i64).unwrap();
        let bound2 = bv_f64(&dt.value.expect("start counter is above the span"));
        assert!(
            t2.mean <= bound2 + 3.0 * t2.stderr + 1e-12,
            "height {c0}: termination {} above bound {bound2}",
            t2.mean
        );
    });
}

#[test]
fn criterion_8_omega_regular_values() {
    report(8, "omega-regular desk checks", || {
        let m = parse_poc(&std::fs::read_to_string(fixture("andor_row1.poc")).unwrap()).unwrap();
        let val = m.valuation();
        let a = m.state_index("and_init").unwrap();
        let start = Config { state: a, counter: 1 };

        let d = parse_dra(&std::fs::read_to_string(fixture("ev_always_or_ret1.dra")).unwrap())
            .unwrap();
        let r = model_check_from(&m, &val, &d, start, &rat(1, 1000), CheckMode::Adaptive).unwrap();
        assert!(
            (r.probability - 0.300).abs() <= 0.300 * 1e-3,
            "eventual containment value {}",
            r.probability
        );

        let u = parse_dra(&std::fs::read_to_string(fixture("universal.dra")).unwrap()).unwrap();
        let ru = model_check_from(&m, &val, &u, start, &rat(1, 1000), CheckMode::Adaptive).unwrap();
        assert_eq!(ru.probability, 1.0, "universal property holds surely");
        assert!(ru.qualitative, "universal property resolves without numerics");
    });
}

#[test]
fn criterion_9_bound_formulas() {
    report(9, "bound formulas on hand-checked inputs", || {
        let one = rat(1, 1);
        let g = grand_bound(GrandCase::NotInBscc, 1, &one, None).unwrap();
        assert_eq!(g.exact, Some(rat(5, 1)));
        let g = grand_bound(GrandCase::TrendNonzero, 1, &one, Some(&rat(1, 5))).unwrap();
        assert_eq!(g.exact, Some(rat(53_125_000, 1)));
        let g = grand_bound(GrandCase::PrepostFinite, 1, &one, None).unwrap();
        assert_eq!(g.exact, Some(rat(15, 1)));

        assert_eq!(pumping_bound(1), 3);
        assert_eq!(pumping_bound(6), 288);
        assert_eq!(gap_bound(&rat(1, 5), &rat(0, 1)).unwrap(), rat(1, 96_000));
        assert_eq!(visiting_delta(&rat(1, 10), &one, 1).unwrap(), rat(1, 320));
        assert_eq!(perturbation_factor(&rat(3, 1), &rat(5, 1), &rat(1, 120)).unwrap(), rat(1, 2));
        assert_eq!(potential_span_bound(6, &rat(1, 5)).unwrap().exact, Some(rat(187_500, 1)));
        assert_eq!(potential_span_bound(1, &one).unwrap().exact, Some(rat(2, 1)));
        assert_eq!(reach_high_bound(&rat(0, 1), 1).unwrap(), rat(1, 2));
        assert_eq!(reach_high_bound(&rat(2, 1), 3).unwrap(), rat(1, 6));

        // Step and height tails at a drift of one fifth: rate constants are
        // rounded up from exp(-1/288) and exp(-1/72).
        let az = azuma_tail(&rat(1, 5), &rat(0, 1), 1, 100).unwrap();
        assert_eq!(az.h, rat(-10, 1));
        let a_f = rat_to_f64(&az.a);
        let a_true = (-1.0f64 / 288.0).exp();
        assert!(a_f >= a_true - 1e-15 && a_f <= a_true + 1e-6, "step rate {a_f}");
        let az_down = azuma_tail(&rat(-1, 5), &rat(0, 1), 1, 100).unwrap();
        assert_eq!(az_down.h, rat(10, 1));

        let dt = divergence_tail(&rat(1, 5), &rat(0, 1), 0).unwrap();
        assert_eq!(dt.half_threshold, rat(1296, 1));
        let d_f = rat_to_f64(&dt.a);
        let d_true = (-1.0f64 / 72.0).exp();
        assert!(d_f >= d_true - 1e-15 && d_f <= d_true + 1e-6, "height rate {d_f}");
    });
}
