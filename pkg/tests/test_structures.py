import random

import pytest
from hypothesis import given, settings, strategies as st

from plastar.structures import (
    INF,
    Signature,
    Structure,
    StructureError,
    degree,
    dist,
    dist_tuples,
    distances_from,
    induced_substructure,
    neighbourhood,
    parse_signature_header,
    parse_structure,
    reduct,
    serialize_structure,
)
from plastar.sequences import BaseSequence, generate

from oracles import UNARY2_BINARY1, bfs, random_structure


@pytest.fixture
def path10():
    return generate(BaseSequence.path(), 10)


def test_path_degree(path10):
    assert degree(path10) == 2


def test_path_distances(path10):
    assert dist(path10, 0, 3) == 3
    assert dist_tuples(path10, (0, 9), (5,)) == 4


def test_distance_to_unreachable_is_infinite():
    S = Structure(Signature.of([("E", 2)]), 3, {"E": [(0, 1)]})
    assert dist(S, 0, 2) is INF
    assert INF > 10**9


def test_neighbourhood(path10):
    assert neighbourhood(path10, (5,), 1) == frozenset({4, 5, 6})


def test_induced_substructure_is_a_short_path(path10):
    sub, mapping = induced_substructure(path10, {4, 5, 6})
    assert sub.size == 3
    assert len(sub.relation("E")) == 2
    assert sorted(mapping) == [4, 5, 6]


def test_reduct_of_world_is_base():
    sig = Signature.of([("E", 2), ("R", 1)], tau_len=1)
    W = Structure(sig, 3, {"E": [(0, 1), (1, 2)], "R": [(1,)]})
    B = reduct(W, 1)
    assert B.signature.names == ("E",)
    assert B.relation("E") == W.relation("E")


def test_bad_arity_and_range():
    sig = Signature.of([("E", 2)])
    with pytest.raises(StructureError):
        Structure(sig, 2, {"E": [(0,)]})
    with pytest.raises(StructureError):
        Structure(sig, 2, {"E": [(0, 5)]})
    with pytest.raises(StructureError):
        Structure(sig, 2, {"F": [(0, 1)]})


def test_text_round_trip(path10):
    text = serialize_structure(path10)
    assert text.splitlines()[0].startswith("signature")
    assert parse_structure(text) == path10


def test_signature_header():
    sig = parse_signature_header("signature E/2 R/1 | tau=1")
    assert sig.names == ("E", "R")
    assert sig.tau_len == 1


def test_gaifman_ignores_non_base_symbols():
    sig = Signature.of([("E", 2), ("L", 2)], tau_len=1)
    S = Structure(sig, 3, {"E": [(0, 1)], "L": [(1, 2)]})
    assert dist(S, 1, 2) is INF


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_distances_match_reference_bfs(seed):
    S = random_structure(random.Random(seed))
    src = [0]
    assert distances_from(S, src) == bfs(S, src)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_serialization_round_trip_random(seed):
    S = random_structure(random.Random(seed), UNARY2_BINARY1)
    assert parse_structure(serialize_structure(S)) == S


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 3))
def test_distance_symmetry(seed, r):
    S = random_structure(random.Random(seed))
    for a in S.domain:
        for b in S.domain:
            assert dist(S, a, b) == dist(S, b, a)
        assert set(neighbourhood(S, (a,), r)) == set(bfs(S, [a], r))
