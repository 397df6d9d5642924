import math

import pytest
from hypothesis import given, settings, strategies as st

from plastar import logic as lg
from plastar import network as nw
from plastar import sequences as sq

SET = sq.BaseSequence.empty_set()
PATH = sq.BaseSequence.path()

DEPENDENT = """
signature E/2 R/1 Q/1 | tau=1
prob R(x): 0.5
prob Q(x): av(R(x), 0.2)   # 0.6 when R holds, 0.1 otherwise
parents Q: R
"""


def test_exact_distribution_on_four_element_set():
    net = nw.network_from_probs(SET.signature, ["R(x): 0.5"])
    B = sq.generate(SET, 4)
    worlds = list(nw.exact_distribution(net, B))
    assert len(worlds) == 16
    assert math.fsum(p for _, p in worlds) == pytest.approx(1.0, abs=1e-9)
    assert nw.exact_probability(net, B, lg.parse("exists x . R(x)")) == 15 / 16


def test_world_probability_and_rank():
    net = nw.network_from_probs(SET.signature, ["R(x): 0.5"])
    w = nw.sample_world(net, sq.generate(SET, 4), seed=3)
    assert nw.world_probability(net, w) == 0.0625
    assert nw.mp_rank(net) == 0


def test_dependent_network_parse_and_rank():
    net = nw.parse_network(DEPENDENT)
    assert nw.mp_rank(net) == 1
    assert net.order == ["R", "Q"]
    assert nw.parse_network(net.to_text()).formulas == net.formulas
    assert nw.mp_rank(nw.lower_stratum(net)) == 0


def test_dependent_network_exact_marginal():
    net = nw.parse_network(DEPENDENT)
    B = sq.generate(PATH, 2)
    p = nw.exact_probability(net, B, lg.parse("Q(x)"), {"x": 1})
    assert p == pytest.approx(0.5 * 0.6 + 0.5 * 0.1, abs=1e-12)


def test_dependent_network_sampling_agrees_with_exact():
    net = nw.parse_network(DEPENDENT)
    B = sq.generate(PATH, 3)
    est = nw.estimate_probability(net, B, lg.parse("and(Q(x), R(x))"), {"x": 0}, samples=20000, seed=1)
    assert est.contains(0.3)


def test_empty_network_is_the_base():
    net = nw.PlaNetwork(PATH.signature, {})
    assert nw.mp_rank(net) == -1
    B = sq.generate(PATH, 3)
    assert nw.sample_world(net, B).relations == B.relations


def test_network_errors():
    sig2 = nw.network_from_probs(SET.signature, ["R(x): 0.5"]).signature
    with pytest.raises(nw.NetworkError):
        nw.PlaNetwork(sig2, {})
    with pytest.raises(nw.NetworkError):
        nw.parse_network("signature R/1 | tau=0\nprob R(x): max[R(y) : y : top]\n")
    with pytest.raises(nw.NetworkError):
        nw.parse_network("signature R/1 | tau=0\nbogus line\n")


def test_over_budget_enumeration():
    net = nw.network_from_probs(SET.signature, ["R(x): 0.5"])
    with pytest.raises(nw.ResourceError):
        list(nw.exact_distribution(net, sq.generate(SET, 40), budget=2**20))


def test_hoeffding_radius():
    assert nw.hoeffding_radius(100000) == pytest.approx(math.sqrt(math.log(40) / 200000))


def test_sample_worlds_prefix_consistency():
    net = nw.network_from_probs(SET.signature, ["R(x): 0.3"])
    B = sq.generate(SET, 10)
    many = nw.sample_worlds(net, B, 5, seed=9)
    assert nw.sample_world(net, B, seed=9).relations == many[0].relations


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 12))
def test_sampling_is_deterministic(seed, n):
    net = nw.network_from_probs(PATH.signature, ["R(x): 0.5"])
    B = sq.generate(PATH, n)
    a = nw.serialize_world(nw.sample_world(net, B, seed))
    b = nw.serialize_world(nw.sample_world(net, B, seed))
    assert a == b


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 0.95), st.integers(1, 3))
def test_exact_distribution_sums_to_one(theta, n):
    net = nw.network_from_probs(PATH.signature, [f"R(x): {theta:.3f}"])
    B = sq.generate(PATH, n)
    assert math.fsum(p for _, p in nw.exact_distribution(net, B)) == pytest.approx(1.0, abs=1e-9)
