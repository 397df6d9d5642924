import itertools

import pytest
from hypothesis import given, settings, strategies as st

from plastar import elimination as el
from plastar import logic as lg
from plastar import network as nw
from plastar import sequences as sq
from plastar import typeanalysis as ta
from plastar.structures import Signature, Structure

PATH = sq.BaseSequence.path()
SET = sq.BaseSequence.empty_set()


def r_net(theta=0.3, seq=PATH):
    return nw.network_from_probs(seq.signature, [f"R(x): {theta}"])


def far_type():
    return ta.closure_type_of(sq.generate(PATH, 20), (5, 12), 0)


# -- ct limits -----------------------------------------------------------------

def test_ct_limit_am_and_max():
    p = el.CtParameters([[0.2, 0.8]], [[0.5, 0.5]])
    assert el.ct_limit("am", p).value == pytest.approx(0.5, abs=1e-6)
    assert el.ct_limit("max", p).value == 0.8


def test_ct_limit_length_inv_goes_to_zero():
    assert el.ct_limit("length_inv", el.CtParameters([[0.4]], [[1.0]])).value == 0.0


def test_ct_limit_am_is_weighted_mean():
    p = el.CtParameters([[0.0, 1.0, 0.5]], [[0.2, 0.3, 0.5]])
    assert el.ct_limit("am", p).value == pytest.approx(0.55, abs=1e-6)


def test_ct_limit_rejects_bad_inputs():
    with pytest.raises(el.EliminationError):
        el.ct_limit("noisy_or", el.CtParameters([[0.5]], [[1.0]]))
    with pytest.raises(el.EliminationError):
        el.ct_limit("max", el.CtParameters([[0.2, 0.8]], [[1.0, 0.0]]))
    with pytest.raises(ValueError):
        el.CtParameters([[0.2, 0.8]], [[0.6, 0.6]])


def test_ct_limit_reports_non_convergence():
    with pytest.raises(el.ConvergenceError):
        el.ct_limit("length_inv", el.CtParameters([[0.4]], [[1.0]]), cap=64)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1000), st.integers(1, 9)), min_size=1, max_size=4), st.randoms())
def test_ct_limit_is_reorder_invariant(pairs, rnd):
    # values below the tolerance snap to 0, so points live on a coarse grid
    total = sum(w for _, w in pairs)
    pts = [c / 1000 for c, _ in pairs]
    props = [w / total for _, w in pairs]
    order = list(range(len(pts)))
    rnd.shuffle(order)
    a = el.ct_limit("am", el.CtParameters([pts], [props])).value
    b = el.ct_limit("am", el.CtParameters([[pts[i] for i in order]], [[props[i] for i in order]])).value
    assert a == pytest.approx(b, abs=1e-6)
    assert a == pytest.approx(sum(c * w for c, w in zip(pts, props)), abs=2e-6)
    assert el.ct_limit("max", el.CtParameters([pts], [props])).value == max(pts)


# -- aggregation-free compilation ----------------------------------------------

def _pool(theta=0.5, n=6, samples=6, sig_probs=("R(x): 0.5",)):
    net = nw.network_from_probs(SET.signature, list(sig_probs))
    return el.WorldPool(SET, net, (n,), samples, seed=1)


def test_compile_atom():
    b = el.compile_aggregation_free(lg.parse("R(x)"), _pool())
    assert sorted(c.value for c in b.cases.values()) == [0.0, 1.0]
    assert all(c.mode == "exact" for c in b.cases.values())


def test_compile_constant():
    b = el.compile_aggregation_free(lg.parse("0.7"), _pool())
    assert [c.value for c in b.cases.values()] == [0.7]


def test_compile_implies_truth_table():
    pool = _pool(sig_probs=("R(x): 0.5", "Q(x): 0.5"), n=8)
    b = el.compile_aggregation_free(lg.parse("implies(R(x), Q(x))"), pool)
    assert len(b.cases) == 4
    for c in b.cases.values():
        S, tup = c.type.witness
        r, q = S.holds("R", tup), S.holds("Q", tup)
        assert c.value == min(1.0, 1.0 - r + q)


def test_compile_rejects_aggregations():
    with pytest.raises(el.EliminationError):
        el.compile_aggregation_free(lg.parse("max[R(y) : y : top]"), _pool())


def test_compose_connectives():
    pool = _pool()
    r = el.compile_aggregation_free(lg.parse("R(x)"), pool)
    same = el.compose_connective("id", [r], pool)
    assert {k: c.value for k, c in same.cases.items()} == {k: c.value for k, c in r.cases.items()}
    neg = el.compose_connective("not", [r], pool)
    assert {k: c.value for k, c in neg.cases.items()} == {k: 1 - c.value for k, c in r.cases.items()}
    a = el.compile_aggregation_free(lg.parse("0.4"), pool)
    b = el.compile_aggregation_free(lg.parse("0.9"), pool)
    both = el.compose_connective("and", [a, b], pool)
    assert {c.value for c in both.cases.values()} == {0.4}


def test_basic_text_round_trip():
    b = el.compile_aggregation_free(lg.parse("R(x)"), _pool())
    text = b.to_text()
    assert text.startswith("basic level=0 vars=x")
    again = el.parse_basic(text)
    assert again.to_text() == text
    W = nw.sample_world(r_net(0.5, SET), sq.generate(SET, 6), seed=5)
    for a in W.domain:
        assert again.value(W, (a,)) == (1.0 if W.holds("R", (a,)) else 0.0)


def test_unmatched_type_evaluates_to_zero():
    b = el.BasicFormula(0, ("x",), 2)
    W = nw.sample_world(r_net(0.5, SET), sq.generate(SET, 3), seed=1)
    assert b.value(W, (0,)) == 0.0 and b.misses == 1


def test_distance_atoms_compile_exactly():
    B = sq.generate(PATH, 12)
    pool = el.WorldPool.of([B])
    phi = lg.parse("dist(x, y) <= 3")
    b = el.compile_aggregation_free(phi, pool)
    assert b.level == 1
    for a, c in itertools.product(B.domain, repeat=2):
        assert b.value(B, (a, c)) == lg.evaluate(B, phi, (a, c))


def test_compile_report_is_exact_for_aggregation_free():
    basic, report = el.compile(lg.parse("and(R(x), 0.5)"), PATH, r_net(), el.EliminationConfig(probes=(8, 16), samples=3))
    assert report.all_exact and report.level == 0
    assert all(c.mode == "exact" for c in basic.cases.values())


# -- aggregations --------------------------------------------------------------

def test_bounded_aggregation_compiles_exactly():
    # y is the successor of x, written as a type condition
    succ = ta.closure_type_of(sq.generate(PATH, 20), (5, 6), 0)
    phi = lg.parse("max[R(y) : y : @succ(x, y)]", types={"succ": succ})
    net = r_net(0.5)
    basic, report = el.compile(phi, PATH, net, el.EliminationConfig(probes=(8, 16), samples=6))
    assert report.all_exact
    rep = el.check_asymptotic_equivalence(phi, basic, PATH, net, 0.01, probes=(16, 24), samples=20)
    assert all(f == 0 for f in rep.fractions.values()) and rep.passed


def test_strongly_unbounded_am_gives_theta():
    phi = lg.parse("am[R(y) : y : @chi(x, y)]", types={"chi": far_type()})
    cfg = el.EliminationConfig(probes=(64, 128, 256), samples=24)
    basic, report = el.compile(phi, PATH, r_net(0.3), cfg)
    assert basic.cases
    for c in basic.cases.values():
        assert c.mode == "empirical"
        assert 0.27 <= c.value <= 0.33
    assert all(e["stable"] and e["positive"] for e in report.entries)


def test_strongly_unbounded_max_gives_one():
    phi = lg.parse("max[R(y) : y : @chi(x, y)]", types={"chi": far_type()})
    basic, _ = el.compile(phi, PATH, r_net(0.3), el.EliminationConfig(probes=(32, 64, 128), samples=4))
    assert {c.value for c in basic.cases.values()} == {1.0}


def test_unsatisfiable_condition_gives_zero():
    loop = Structure(PATH.signature, 1, {"E": [(0, 0)]})
    never = ta.closure_type_of(loop, (0, 0), 0)
    phi = lg.parse("am[R(y) : y : @never(x, y)]", types={"never": never})
    basic, _ = el.compile(phi, PATH, r_net(0.3), el.EliminationConfig(probes=(8, 16), samples=2))
    assert {c.value for c in basic.cases.values()} == {0.0}


def test_noisy_or_is_rejected():
    phi = lg.parse("noisy_or[R(y) : y : @chi(x, y)]", types={"chi": far_type()})
    with pytest.raises(el.EliminationError, match="neither"):
        el.compile(phi, PATH, r_net(0.3), el.EliminationConfig(probes=(8, 16), samples=2))


def test_admissible_with_vanishing_proportion_is_rejected():
    phi = lg.parse("max[R(y) : y : @chi(x, y)]", types={"chi": far_type()})
    cfg = el.EliminationConfig(probes=(64, 128), samples=4, floor=0.4)
    with pytest.raises(el.EliminationError, match="admissible"):
        el.compile(phi, PATH, r_net(0.3), cfg)


def test_positivity_violation_is_reported():
    far = far_type()
    phi = lg.Agg("am", (lg.TOP,), ("y",), (lg.Conn("and", (lg.TypeAtom(far, ("x", "y")), lg.Atom("R", ("y",)))),))
    cfg = el.EliminationConfig(probes=(64, 128), samples=4)
    with pytest.raises(el.EliminationError, match="not positive"):
        el.compile(phi, PATH, r_net(0.005), cfg)


def test_perturbed_formula_fails_check():
    phi = lg.parse("am[R(y) : y : @chi(x, y)]", types={"chi": far_type()})
    basic, _ = el.compile(phi, PATH, r_net(0.3), el.EliminationConfig(probes=(64, 128, 256), samples=8))
    bad = el.parse_basic(basic.to_text())
    for c in bad.cases.values():
        c.value = 0.6
    rep = el.check_asymptotic_equivalence(phi, bad, PATH, r_net(0.3), 0.05, probes=(256,), samples=20)
    assert rep.fractions[256] == 1.0 and not rep.passed


# -- balance and convergence -------------------------------------------------

def _pair_types(W, a, b, lam):
    return ta.closure_type_of(W, (a, b), lam), ta.closure_type_of(W, (a, b), lam, scope=1)


def test_balance_of_type_with_itself_is_one():
    B = sq.generate(PATH, 30)
    p2 = ta.closure_type_of(B, (10, 11), 1)
    est = el.balance_exact_bounded(PATH, None, p2, p2, (1,), probes=(16, 24))
    assert set(est.by_type.values()) == {1}


def test_balance_estimate_generic_vertex():
    net = r_net(0.3)
    W = nw.sample_world(net, sq.generate(PATH, 40), seed=2)
    r_at = next(b for b in range(25, 40) if W.holds("R", (b,)))
    p = ta.closure_type_of(W, (5, r_at), 0)
    chi = ta.closure_type_of(W, (5, r_at), 0, scope=1)
    q = ta.restrict(p, (0,))
    est = el.balance_estimate(PATH, net, p, chi, q, (1,), probes=(64, 128, 256), samples=6)
    assert est.value == pytest.approx(0.3, abs=0.05)
    assert est.mode == "empirical" and est.positive
    same = el.balance_estimate(PATH, net, chi, chi, None, (1,), probes=(32, 64, 128), samples=2)
    assert same.value == 1.0


def test_convergence_without_network_is_zero_or_one():
    B = sq.generate(PATH, 30)
    p = ta.closure_type_of(B, (10,), 1)
    est = el.convergence_estimate(PATH, None, p, p, probes=(16, 32, 64))
    assert est.value == 1.0 and est.eventually_constant


def test_convergence_inconsistent_is_zero():
    B = sq.generate(PATH, 30)
    p_tau = ta.closure_type_of(B, (10,), 1)
    event = lg.parse("and(@p(x), bot)", types={"p": p_tau})
    est = el.convergence_estimate(PATH, r_net(0.3), event, p_tau, probes=(8, 16), samples=200)
    assert est.value == 0.0


def test_value_distribution_of_atom():
    net = r_net(0.3)
    basic, _ = el.compile(lg.parse("R(x)"), PATH, net, el.EliminationConfig(probes=(8,), samples=4))
    p_tau = ta.closure_type_of(sq.generate(PATH, 30), (10,), 1)
    rows = el.value_distribution(basic, PATH, net, p_tau, probes=(64,), samples=2000)
    table = {c: beta for c, beta, _ in rows}
    assert table[1.0] == pytest.approx(0.3, abs=0.04)
    assert table[0.0] == pytest.approx(0.7, abs=0.04)
    assert sum(table.values()) == pytest.approx(1.0)


def test_value_distribution_single_case():
    basic, _ = el.compile(lg.parse("0.4"), PATH, r_net(0.3), el.EliminationConfig(probes=(8,), samples=2), variables=("x",))
    p_tau = ta.closure_type_of(sq.generate(PATH, 30), (10,), 1)
    rows = el.value_distribution(basic, PATH, r_net(0.3), p_tau, probes=(16,), samples=20)
    assert [(c, b) for c, b, _ in rows] == [(0.4, 1.0)]


def test_pagerank_type_conditioned_variant_compiles():
    B = sq.generate(PATH, 20)
    adj = ta.closure_type_of(B, (5, 6), 0)
    far = ta.closure_type_of(B, (5, 12), 0)
    net = nw.network_from_probs(PATH.signature, ["L(x,y): 0.5"])
    phi = lg.pagerank_corpus(1, link="L", types=[adj, far])
    cfg = el.EliminationConfig(probes=(12, 16, 20), samples=2, anchors_per_world=2)
    basic, report = el.compile(phi, PATH, net, cfg)
    empirical = [e for e in report.entries if e["kind"] == "empirical"]
    bounded = [e for e in report.entries if e["kind"] == "bounded"]
    assert empirical and bounded
    assert all(e["positive"] for e in empirical)
    assert basic.level == report.level >= 1
