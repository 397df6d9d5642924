"""Acceptance criteria, one test each.

Every test prints a ``PASS``/``FAIL`` line with its runtime; under pytest the
lines are collected into a summary section.  ``python3 tests/test_acceptance.py``
runs them without pytest.
"""

import itertools
import math
import random
import time
from collections import defaultdict
from fractions import Fraction

import pytest

from plastar import elimination as el
from plastar import logic as lg
from plastar import network as nw
from plastar import sequences as sq
from plastar import typeanalysis as ta

import conftest
from oracles import (
    UNARY2_BINARY1, anchored_isomorphic, ball, lukasiewicz_reference, random_af_formula, random_structure,
)

PATH = sq.BaseSequence.path()
SET = sq.BaseSequence.empty_set()


def verdict(number, title, ok, started, limit, detail=""):
    elapsed = time.perf_counter() - started
    in_time = elapsed < limit
    status = "PASS" if ok and in_time else "FAIL"
    line = f"{status} criterion {number:>2}: {title} ({elapsed:.1f}s, limit {limit}s){' ' + detail if detail else ''}"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line
    assert in_time, line


def r_net(theta, seq=PATH):
    return nw.network_from_probs(seq.signature, [f"R(x): {theta}"])


def test_c01_classical_truth_tables():
    t0 = time.perf_counter()
    entries = 0
    ok = True
    for name in ("not", "and", "or", "implies"):
        C = lg.LIBRARY.connective(name)
        for xs in itertools.product((0.0, 1.0), repeat=1 if name == "not" else 2):
            ok &= C(*xs) == lukasiewicz_reference(name, *xs)
            entries += 1
    # one unary and three binary tables
    verdict(1, "classical truth tables", ok and entries == 14, t0, 1, f"entries={entries}")


def test_c02_aggregation_free_compilation_is_exact():
    t0 = time.perf_counter()
    rng = random.Random(2024)
    structures = [random_structure(rng, UNARY2_BINARY1) for _ in range(50)]
    worst, extended = 0.0, 0
    for _ in range(200):
        phi = lg.parse(random_af_formula(rng, ("x", "y"), 3))
        basic = el.compile_aggregation_free(phi, structures, ("x", "y"))
        basic.extender = None  # every needed case must come from compilation
        for S in structures:
            ev = lg.Evaluator(S)
            for a, b in itertools.product(S.domain, repeat=2):
                worst = max(worst, abs(basic.value(S, (a, b)) - ev(phi, {"x": a, "y": b})))
        extended += basic.misses
    verdict(2, "aggregation-free compilation", worst <= 1e-12 and extended == 0, t0, 30,
            f"max_deviation={worst:.3g} misses={extended}")


def test_c03_path_rare_elements():
    t0 = time.perf_counter()
    ok = all(
        ta.rare_elements(PATH, n, lam) == set(range(lam)) | set(range(n - lam + 1, n + 1))
        for n, lam in ((100, 3), (257, 5), (512, 1))
    )
    verdict(3, "path rare-element closed form", ok, t0, 5)


def test_c04_distribution_oracle():
    t0 = time.perf_counter()
    net = nw.network_from_probs(SET.signature, ["R(x): 0.5"])
    B = sq.generate(SET, 4)
    worlds = list(nw.exact_distribution(net, B))
    total = math.fsum(p for _, p in worlds)
    phi = lg.parse("exists x . R(x)")
    exact = nw.exact_probability(net, B, phi)
    inside = sum(
        nw.estimate_probability(net, B, phi, samples=10**5, seed=trial).contains(15 / 16) for trial in range(100)
    )
    ok = len(worlds) == 16 and abs(total - 1) <= 1e-9 and exact == 15 / 16 and inside >= 95
    verdict(4, "distribution oracle", ok, t0, 60, f"worlds={len(worlds)} P={exact} inside={inside}/100")


def test_c05_ct_limits():
    t0 = time.perf_counter()
    c, a = [0.2, 0.8], [0.5, 0.5]
    am = el.ct_limit("am", el.CtParameters([c], [a])).value
    mx = el.ct_limit("max", el.CtParameters([c], [a])).value
    am_r = el.ct_limit("am", el.CtParameters([c[::-1]], [a[::-1]])).value
    mx_r = el.ct_limit("max", el.CtParameters([c[::-1]], [a[::-1]])).value
    ok = abs(am - 0.5) <= 1e-6 and mx == 0.8 and am_r == am and mx_r == mx
    verdict(5, "ct limits", ok, t0, 5, f"am={am} max={mx}")


def test_c06_bounded_balance_is_exact():
    t0 = time.perf_counter()
    B = sq.generate(PATH, 40)
    # y the successor of x: bounded in y; p1 additionally fixes R on x and y
    adjacent = ta.closure_type_of(B, (10, 11), 0, scope=1)
    W = nw.sample_world(r_net(0.3), B, seed=4)
    y = next(b for b in range(11, 30) if W.holds("R", (b,)))
    with_r = ta.closure_type_of(W, (y - 1, y), 0)
    est = el.balance_exact_bounded(PATH, r_net(0.3), with_r, adjacent, (1,), probes=(64, 128, 256), samples=4)
    values = set(est.by_type.values())
    probes_seen = [n for n, ratios in est.per_probe.items() if ratios]
    ok = values <= {Fraction(0), Fraction(1)} and Fraction(1) in values and probes_seen == [64, 128, 256]
    verdict(6, "bounded balance exactness", ok, t0, 60,
            f"anchor_types={len(est.by_type)} ratios={sorted(map(str, values))}")


def test_c07_end_to_end_elimination():
    t0 = time.perf_counter()
    chi = ta.closure_type_of(sq.generate(PATH, 20), (5, 12), 0)
    phi = lg.parse("am[R(y) : y : @chi(x, y)]", types={"chi": chi})
    net = r_net(0.3)
    cfg = el.EliminationConfig(probes=(64, 128, 256, 512), samples=32)
    basic, report = el.compile(phi, PATH, net, cfg)
    consts = [c.value for c in basic.cases.values()]
    rep = el.check_asymptotic_equivalence(phi, basic, PATH, net, 0.05, probes=(512,), samples=200)
    bad = el.parse_basic(basic.to_text())
    for c in bad.cases.values():
        c.value = min(1.0, c.value + 0.3)
    neg = el.check_asymptotic_equivalence(phi, bad, PATH, net, 0.05, probes=(512,), samples=200)
    ok = (consts and all(0.28 <= v <= 0.32 for v in consts)
          and rep.fractions[512] <= 0.05 and neg.fractions[512] >= 0.9)
    verdict(7, "end-to-end elimination", ok, t0, 300,
            f"cases=[{min(consts):.4f},{max(consts):.4f}] fraction={rep.fractions[512]:.3f} "
            f"control={neg.fractions[512]:.3f}")


def test_c08_convergence_stabilizes():
    t0 = time.perf_counter()
    p_tau = ta.neighbourhood_type_of(sq.generate(PATH, 30), (10,), 1)
    event = lg.parse("and(@ptau(x), R(x))", types={"ptau": p_tau})
    net = r_net(0.3)
    big = el.convergence_estimate(PATH, net, event, p_tau, probes=(64, 128, 256, 512), samples=20000, seed=8)
    small = el.convergence_estimate(PATH, net, event, p_tau, probes=(2, 3, 4, 5, 6, 7, 8))
    near = all(abs(v["value"] - 0.3) <= v["radius"] for v in big.per_probe.values())
    exact = all(v["exact"] and abs(v["value"] - 0.3) <= 1e-12 for v in small.per_probe.values())
    ok = near and exact and len(big.per_probe) == 4 and len(small.per_probe) == 7 and big.stable
    detail = " ".join(f"{n}:{v['value']:.4f}" for n, v in big.per_probe.items())
    verdict(8, "convergence stabilization", ok, t0, 120, detail)


def _invariant(S, tup, radius):
    # isomorphism-invariant summary; equal certificates imply equal summaries
    elems = set(ball(S, tup, radius))
    facts = defaultdict(int)
    for sym in S.signature:
        for t in S.relation(sym.name):
            if all(a in elems for a in t):
                facts[sym.name] += 1
    labels = tuple(tuple(S.holds(s.name, (a,) * s.arity) for s in S.signature) for a in tup)
    pattern = tuple(tup[i] == tup[j] for i, j in itertools.combinations(range(len(tup)), 2))
    return len(tup), len(elems), tuple(sorted(facts.items())), labels, pattern


def test_c09_certificates_match_brute_force():
    t0 = time.perf_counter()
    rng = random.Random(99)
    structures = [random_structure(rng, UNARY2_BINARY1) for _ in range(30)]
    mismatches = pairs = 0
    for radius in (0, 1, 2):
        items = []
        for S in structures:
            for k in (1, 2):
                for tup in itertools.product(S.domain, repeat=k):
                    items.append((S, tup, ta.neighbourhood_type_of(S, tup, radius)))
        groups = defaultdict(list)
        for it in items:
            groups[_invariant(it[0], it[1], radius)].append(it)
        cert_group = {}
        for key, members in groups.items():
            for _, _, t in members:
                if cert_group.setdefault(t.cert, key) != key:
                    mismatches += 1  # equal certificate across non-isomorphic summaries
            for (S1, a1, t1), (S2, a2, t2) in itertools.combinations(members, 2):
                pairs += 1
                if (t1 == t2) != anchored_isomorphic(S1, a1, S2, a2, radius):
                    mismatches += 1
    verdict(9, "canonicalization oracle", mismatches == 0, t0, 60, f"checked_pairs={pairs} mismatches={mismatches}")


def test_c10_ratio_diagnostic():
    t0 = time.perf_counter()
    B = sq.generate(PATH, 20)
    p = ta.neighbourhood_type_of(B, (10,), 1)
    r = ta.neighbourhood_type_of(B, (10,), 2)
    probes = (16, 32, 64, 128)
    out = sq.ratio_diagnostic(PATH, r, p, probes)
    ok = out["ratios"] == [(n - 3) / (n - 1) for n in probes] and out["stable"]
    verdict(10, "ratio diagnostic", ok, t0, 10, f"ratios={[round(x, 4) for x in out['ratios']]}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
