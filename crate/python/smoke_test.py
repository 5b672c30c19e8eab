#!/usr/bin/env python3
"""Smoke test for the pocan_py extension module.

Builds nothing itself: expects `cargo build -p pocan-py` (or --release) to
have produced target/{debug,release}/libpocan_py.so. Copies the library next
to this script under the importable name pocan_py.so, then exercises the
main entry points against known-good values.
"""

import math
import pathlib
import shutil
import sys

HERE = pathlib.Path(__file__).resolve().parent
ROOT = HERE.parent


def load_module():
    candidates = [
        ROOT / "target" / "release" / "libpocan_py.so",
        ROOT / "target" / "debug" / "libpocan_py.so",
    ]
    built = [p for p in candidates if p.exists()]
    if not built:
        sys.exit("no libpocan_py.so found; run `cargo build -p pocan-py` first")
    src = max(built, key=lambda p: p.stat().st_mtime)
    dst = HERE / "pocan_py.so"
    if not dst.exists() or dst.stat().st_mtime < src.stat().st_mtime:
        shutil.copy2(src, dst)
    sys.path.insert(0, str(HERE))
    import pocan_py

    return pocan_py


def approx(got, want, tol, what):
    assert math.isfinite(got) and abs(got - want) <= tol, f"{what}: got {got}, want {want} +- {tol}"


def main():
    pp = load_module()

    # Nested AND-OR evaluation model, reference parameter row.
    m = pp.Poc.and_or((1, 2), (2, 5), (1, 5), (1, 5))
    assert m.n_states() == 6 and m.x_min() == 0.2
    assert m.names()[0] == "and_init" and m.state_index("or_ret1") is not None

    term = {(r["p"], r["q"]): r["prob"] for r in pp.termination(m, rel_err=1e-6)}
    approx(term[("and_init", "or_ret1")], 0.300, 5e-4, "termination and_init->or_ret1")
    approx(term[("and_init", "or_ret0")], 0.500, 5e-4, "termination and_init->or_ret0")

    et = pp.expected_times(m, abs_err=1e-3)
    values = {(r["p"], r["q"]): r for r in et["pairs"]}
    approx(values[("and_init", "or_ret0")]["value"], 11.000, 1e-2, "exptime and_init->or_ret0")
    approx(values[("and_init", "or_ret1")]["value"], 7.667, 1e-2, "exptime and_init->or_ret1")
    assert values[("and_init", "or_ret1")]["reason"] == "BSCC_TREND_NONZERO"
    assert et["budget"]["delta_log2"] < 0.0

    # Round trip through the text format.
    m2 = pp.Poc.parse(m.render())
    assert m2.names() == m.names()

    # Symmetric walk: certain termination that still takes infinite expected time.
    sym = pp.Poc.parse("poc v1\nstate p\nzero p 0 p 1\npos p -1 p 1/2\npos p 1 p 1/2\n")
    verdicts = {(r["p"], r["q"]): r for r in pp.classify(sym)}
    row = verdicts[("p", "p")]
    assert row["verdict"] == "INFINITE" and row["reason"] == "TREND_ZERO_PREPOST_INFINITE"
    sym_term = pp.termination(sym)[0]["prob"]
    assert 1.0 - 1e-6 <= sym_term <= 1.0, sym_term

    # Up-biased walk: diverges with probability 1 - d/u = 1/3.
    up = pp.Poc.walk((2, 5))
    d = pp.diverge(up, "p", rel_err=1e-6)
    assert d["positive"] and d["lower_bound_log2"] < 0.0
    approx(d["value"], 1.0 / 3.0, 1e-6, "divergence value")

    est = pp.estimate_termination(up, "p", "p", n=20000, horizon=2000, seed=7)
    approx(est["mean"], 2.0 / 3.0, 3.0 * est["stderr"] + 1e-3, "walk termination estimate")
    again = pp.estimate_termination(up, "p", "p", n=20000, horizon=2000, seed=7)
    assert again == est, "estimator must be deterministic in the seed"

    # Rabin check: eventually-always in the or_ret1-labelled state. Labels
    # are opt-in, so attach them through the text format round trip.
    labelled = m.render() + "".join(
        f"label {s} zero={'r1' if s == 'or_ret1' else 'other'} pos=other\n" for s in m.names()
    )
    lm = pp.Poc.parse(labelled)
    dra = pp.Dra.parse(
        "dra v1\n"
        "alphabet r1 other\n"
        "state u v\n"
        "init u\n"
        "trans u r1 v\ntrans u other u\ntrans v r1 v\ntrans v other u\n"
        "pair E u ; F v\n"
    )
    mc = pp.model_check(lm, dra, "and_init", counter=1, rel_err=1e-3)
    approx(mc["probability"], 0.300, 0.300 * 1e-3, "model check probability")
    assert mc["product_states"] == 12

    everything = pp.Dra.parse(
        "dra v1\nalphabet r1 other\nstate w\ninit w\n"
        "trans w r1 w\ntrans w other w\npair E ; F w\n"
    )
    mc2 = pp.model_check(lm, everything, "and_init", counter=1, rel_err=1e-3)
    assert mc2["probability"] == 1.0 and mc2["qualitative"]

    # Errors surface as ValueError, not panics.
    try:
        pp.Poc.parse("poc v1\nstate a\nzero a 0 a 1/2\npos a -1 a 1\n")
    except ValueError as e:
        assert "sum" in str(e)
    else:
        raise AssertionError("bad distribution must be rejected")

    print("smoke test: all checks passed")


if __name__ == "__main__":
    main()
