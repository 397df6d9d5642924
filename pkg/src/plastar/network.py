"""Probabilistic networks over a base signature and the distributions they induce."""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .structures import Signature, Structure, StructureError, Symbol, parse_signature_header, serialize_structure
from . import logic as lg

EXACT_BUDGET = 2**24
DEFAULT_DELTA = 0.05


class NetworkError(ValueError):
    pass


class ResourceError(RuntimeError):
    pass


class World(Structure):
    """An expansion of a base structure, remembering how it was produced."""

    def __init__(self, signature, size, relations, base, provenance=None):
        super().__init__(signature, size, relations, origin=base.origin if base is not None else None, base=base)
        self.provenance = provenance


@dataclass
class PlaNetwork:
    signature: Signature
    formulas: dict  # symbol -> (variables, formula)
    parents: dict = field(default_factory=dict)  # symbol -> frozenset of symbols
    name: str = "net"

    def __post_init__(self):
        sig = self.signature
        tau = set(sig.names[: sig.tau_len])
        top = sig.names[sig.tau_len:]
        if set(self.formulas) != set(top):
            missing = sorted(set(top) - set(self.formulas))
            extra = sorted(set(self.formulas) - set(top))
            raise NetworkError(f"probability formulas missing for {missing} / unexpected for {extra}")
        derived = {}
        for R in top:
            vars_, phi = self.formulas[R]
            vars_ = tuple(vars_)
            if len(vars_) != sig.arity(R) or len(set(vars_)) != len(vars_):
                raise NetworkError(f"{R} needs {sig.arity(R)} distinct variables")
            extra_vars = set(phi.free_vars) - set(vars_)
            if extra_vars:
                raise NetworkError(f"probability formula of {R} has unbound variables {sorted(extra_vars)}")
            self.formulas[R] = (vars_, phi)
            used = lg.relations_used(phi)
            unknown = used - set(sig.names)
            if unknown:
                raise NetworkError(f"probability formula of {R} uses unknown symbols {sorted(unknown)}")
            occurring = frozenset(used - tau)
            if R in self.parents:
                declared = frozenset(self.parents[R])
                if not occurring <= declared:
                    raise NetworkError(
                        f"probability formula of {R} uses {sorted(occurring - declared)} outside its parents"
                    )
                derived[R] = declared
            else:
                derived[R] = occurring
            for P in derived[R]:
                if P not in top:
                    raise NetworkError(f"parent {P} of {R} is not a network symbol")
        self.parents = derived
        self._ranks = _ranks(top, derived)
        self._order = sorted(top, key=lambda R: (self._ranks[R], sig.index(R)))

    @property
    def symbols(self) -> tuple[str, ...]:
        return self.signature.names[self.signature.tau_len:]

    @property
    def order(self) -> list[str]:
        return list(self._order)

    def rank(self, R: str) -> int:
        return self._ranks[R]

    def theta(self, R: str):
        return self.formulas[R]

    def parent_free(self, R: str) -> bool:
        return not self.parents[R]

    def to_text(self) -> str:
        lines = [self.signature.header()]
        for R in self.order:
            vars_, phi = self.formulas[R]
            lines.append(f"prob {R}({', '.join(vars_)}): {lg.to_text(phi)}")
            if self.parents[R]:
                lines.append(f"parents {R}: {' '.join(sorted(self.parents[R]))}")
        return "\n".join(lines) + "\n"


def _ranks(symbols, parents) -> dict[str, int]:
    ranks: dict[str, int] = {}
    visiting = set()

    def visit(R):
        if R in ranks:
            return ranks[R]
        if R in visiting:
            raise NetworkError(f"dependency cycle through {R}")
        visiting.add(R)
        r = 1 + max((visit(P) for P in parents[R]), default=-1)
        visiting.discard(R)
        ranks[R] = r
        return r

    for R in symbols:
        visit(R)
    return ranks


def mp_rank(net: PlaNetwork) -> int:
    return max(net._ranks.values(), default=-1)


def subnetwork(net: PlaNetwork, names: Iterable[str]) -> PlaNetwork:
    keep = set(names)
    sig = net.signature
    tau = set(sig.names[: sig.tau_len])
    keep_top = keep - tau
    unknown = keep_top - set(net.symbols)
    if unknown:
        raise NetworkError(f"unknown symbols {sorted(unknown)}")
    for R in keep_top:
        if not net.parents[R] <= keep_top:
            raise NetworkError(f"{R} needs parents {sorted(net.parents[R] - keep_top)} in the subnetwork")
    syms = [s for s in sig.symbols[: sig.tau_len]] + [s for s in sig.symbols[sig.tau_len:] if s.name in keep_top]
    sub_sig = Signature(tuple(syms), sig.tau_len)
    return PlaNetwork(
        sub_sig,
        {R: net.formulas[R] for R in keep_top},
        {R: net.parents[R] for R in keep_top},
        name=net.name,
    )


def lower_stratum(net: PlaNetwork) -> PlaNetwork:
    """The subnetwork on the symbols below the top rank."""
    top = mp_rank(net)
    return subnetwork(net, [R for R in net.symbols if net.rank(R) < top])


# ---------------------------------------------------------------------------
# text formats

def parse_network(text: str, types: Mapping | None = None) -> PlaNetwork:
    lines = [(i, l.split("#", 1)[0].strip()) for i, l in enumerate(text.splitlines(), 1)]
    lines = [(i, l) for i, l in lines if l]
    if not lines:
        raise NetworkError("empty network description")
    try:
        sig = parse_signature_header(lines[0][1])
    except StructureError as exc:
        raise NetworkError(str(exc)) from None
    formulas, parents = {}, {}
    for lineno, line in lines[1:]:
        m = re.match(r"^prob\s+([A-Za-z_]\w*)\s*\(([^)]*)\)\s*:\s*(.+)$", line)
        if m:
            R = m.group(1)
            vars_ = tuple(v.strip() for v in m.group(2).split(",") if v.strip())
            try:
                phi = lg.parse(m.group(3), sig, types=types)
            except lg.FormulaError as exc:
                raise NetworkError(f"line {lineno}: {exc}") from None
            formulas[R] = (vars_, phi)
            continue
        m = re.match(r"^parents\s+([A-Za-z_]\w*)\s*:\s*(.*)$", line)
        if m:
            parents[m.group(1)] = frozenset(m.group(2).split())
            continue
        raise NetworkError(f"line {lineno}: expected 'prob R(x..): formula' or 'parents R: ...'")
    return PlaNetwork(sig, formulas, parents)


def network_from_probs(tau: Signature, probs: Sequence[str], types: Mapping | None = None) -> PlaNetwork:
    """Build a network from lines like ``R(x): 0.5`` over the base signature ``tau``."""
    heads = []
    for line in probs:
        m = re.match(r"^\s*([A-Za-z_]\w*)\s*\(([^)]*)\)\s*:\s*(.+)$", line)
        if not m:
            raise NetworkError(f"bad probability declaration {line!r} (expected 'R(x): formula')")
        vars_ = tuple(v.strip() for v in m.group(2).split(",") if v.strip())
        heads.append((m.group(1), vars_, m.group(3)))
    syms = list(tau.symbols) + [Symbol(R, len(v)) for R, v, _ in heads]
    sig = Signature(tuple(syms), tau.tau_len)
    formulas = {}
    for R, vars_, body in heads:
        try:
            formulas[R] = (vars_, lg.parse(body, sig, types=types))
        except lg.FormulaError as exc:
            raise NetworkError(f"{R}: {exc}") from None
    return PlaNetwork(sig, formulas)


def expand_signature(net: PlaNetwork, base: Structure):
    if net.signature.tau != base.signature:
        raise NetworkError(
            f"network base signature {net.signature.tau.header()} does not match the structure's {base.signature.header()}"
        )


# ---------------------------------------------------------------------------
# probabilities of single tuples

def _tuples(n: int, arity: int) -> list[tuple]:
    return list(itertools.product(range(n), repeat=arity))


def _theta_vector(net: PlaNetwork, R: str, S: Structure) -> np.ndarray:
    """Probability of R at every tuple (lexicographic order), evaluated on ``S``."""
    vars_, phi = net.formulas[R]
    arity = len(vars_)
    if isinstance(phi, lg.Const):
        return np.full(S.size**arity, phi.value)
    ev = lg.evaluator(S)
    vals = np.fromiter(
        (ev.value(phi, dict(zip(vars_, t))) for t in itertools.product(S.domain, repeat=arity)),
        dtype=float,
        count=S.size**arity,
    )
    if vals.size and (vals.min() < 0 or vals.max() > 1):
        raise AssertionError(f"probability formula of {R} left [0, 1]")
    return vals


def _base_theta(net: PlaNetwork, R: str, base: Structure) -> np.ndarray:
    key = ("theta",) + net.formulas[R]
    v = base._cache.get(key)
    if v is None:
        v = _theta_vector(net, R, base)
        base._cache[key] = v
    return v


def _seed_entropy(seed) -> list[int]:
    if isinstance(seed, (tuple, list)):
        out = []
        for s in seed:
            out.extend(_seed_entropy(s))
        return out
    s = int(seed)
    if s < 0:
        s = (1 << 64) + s
    return [s]


def _stream(seed, sym_index: int) -> np.random.Generator:
    return np.random.default_rng(_seed_entropy(seed) + [0x5EED, sym_index])


def _world(net, base, rels, provenance) -> World:
    return World(net.signature, base.size, rels, base, provenance)


def _partial(net, base, rels) -> Structure:
    return Structure(net.signature, base.size, rels, origin=base.origin, base=base)


def sample_bits(net: PlaNetwork, base: Structure, count: int, seed) -> dict[str, np.ndarray]:
    """Indicator matrices (worlds x tuples) for every network symbol."""
    expand_signature(net, base)
    n = base.size
    bits: dict[str, np.ndarray] = {}
    tuple_lists = {R: None for R in net.symbols}
    partials: list[dict] | None = None
    for R in net.order:
        arity = net.signature.arity(R)
        T = n**arity
        u = _stream(seed, net.signature.index(R)).random((count, T))
        if net.parent_free(R):
            bits[R] = u < _base_theta(net, R, base)[None, :]
            continue
        if partials is None:
            partials = [dict() for _ in range(count)]
        tl = tuple_lists[R] = tuple_lists[R] or _tuples(n, arity)
        out = np.zeros((count, T), dtype=bool)
        for w in range(count):
            rels = {}
            for P in bits:
                idx = np.flatnonzero(bits[P][w])
                tl_p = _tuples(n, net.signature.arity(P)) if tuple_lists.get(P) is None else tuple_lists[P]
                tuple_lists[P] = tl_p
                rels[P] = [tl_p[i] for i in idx]
            S = _partial(net, base, rels)
            out[w] = u[w] < _theta_vector(net, R, S)
        bits[R] = out
    return bits


def worlds_from_bits(net, base, bits, provenance=None) -> list[World]:
    n = base.size
    count = next(iter(bits.values())).shape[0] if bits else 1
    lists = {R: _tuples(n, net.signature.arity(R)) for R in bits}
    worlds = []
    for w in range(count):
        rels = {R: base.relation(R) for R in base.signature.names}
        for R, B in bits.items():
            rels[R] = [lists[R][i] for i in np.flatnonzero(B[w])]
        worlds.append(_world(net, base, rels, (provenance, w)))
    return worlds


def sample_worlds(net: PlaNetwork, base: Structure, count: int, seed=0) -> list[World]:
    if count < 1:
        raise ValueError("sample count must be positive")
    if not net.symbols:
        return [_world(net, base, base.relations, (seed, w)) for w in range(count)]
    bits = sample_bits(net, base, count, seed)
    return worlds_from_bits(net, base, bits, seed)


def sample_world(net: PlaNetwork, base: Structure, seed=0) -> World:
    return sample_worlds(net, base, 1, seed)[0]


def world_probability(net: PlaNetwork, w: Structure) -> float:
    if w.signature != net.signature:
        raise NetworkError("world signature does not match the network")
    ev = lg.evaluator(w)
    factors = []
    for R in net.order:
        vars_, phi = net.formulas[R]
        rel = w.relation(R)
        for t in itertools.product(w.domain, repeat=len(vars_)):
            p = ev.value(phi, dict(zip(vars_, t)))
            factors.append(p if t in rel else 1.0 - p)
    return math.prod(factors)


def world_count(net: PlaNetwork, base: Structure) -> int:
    return 2 ** sum(base.size ** net.signature.arity(R) for R in net.symbols)


def exact_distribution(net: PlaNetwork, base: Structure, budget: int = EXACT_BUDGET) -> Iterator[tuple[World, float]]:
    expand_signature(net, base)
    total = world_count(net, base)
    if total > budget:
        raise ResourceError(f"exact enumeration needs {total} worlds (budget {budget})")
    return _enumerate(net, base)


def _enumerate(net, base):
    n = base.size
    lists = {R: _tuples(n, net.signature.arity(R)) for R in net.symbols}
    order = net.order

    def rec(i, rels, prob):
        if i == len(order):
            full = {R: base.relation(R) for R in base.signature.names}
            full.update(rels)
            yield _world(net, base, full, ("exact",)), prob
            return
        R = order[i]
        tl = lists[R]
        if net.parent_free(R):
            theta = _base_theta(net, R, base)
        else:
            theta = _theta_vector(net, R, _partial(net, base, rels))
        for mask in itertools.product((False, True), repeat=len(tl)):
            p = 1.0
            for m, q in zip(mask, theta):
                p *= q if m else 1.0 - q
            if p == 0.0:
                continue
            nr = dict(rels)
            nr[R] = [t for t, m in zip(tl, mask) if m]
            yield from rec(i + 1, nr, prob * p)

    yield from rec(0, {}, 1.0)


def exact_expectation(net, base, phi, abar=(), variables=None, budget: int = EXACT_BUDGET) -> float:
    terms = []
    for w, p in exact_distribution(net, base, budget):
        terms.append(p * lg.evaluate(w, phi, abar, variables))
    return math.fsum(terms)


def exact_probability(net, base, phi, abar=(), variables=None, budget: int = EXACT_BUDGET) -> float:
    terms = []
    for w, p in exact_distribution(net, base, budget):
        v = lg.evaluate(w, phi, abar, variables)
        if v not in (0.0, 1.0):
            raise lg.SemanticsError(f"event formula took the value {v}")
        if v == 1.0:
            terms.append(p)
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# estimation

def hoeffding_radius(samples: int, delta: float = DEFAULT_DELTA) -> float:
    return math.sqrt(math.log(2.0 / delta) / (2.0 * samples))


@dataclass
class ProbabilityEstimate:
    estimate: float
    samples: int
    radius: float
    delta: float = DEFAULT_DELTA

    @property
    def interval(self) -> tuple[float, float]:
        return max(0.0, self.estimate - self.radius), min(1.0, self.estimate + self.radius)

    def contains(self, value: float) -> bool:
        return abs(self.estimate - value) <= self.radius


def estimate_probability(
    net: PlaNetwork, base: Structure, phi, abar=(), samples: int = 1000, seed=0,
    delta: float = DEFAULT_DELTA, variables=None, batch: int = 50000,
) -> ProbabilityEstimate:
    if samples < 1:
        raise ValueError("sample count must be positive")
    hits = 0
    done = 0
    chunk = 0
    while done < samples:
        m = min(batch, samples - done)
        hits += _count_hits(net, base, phi, abar, variables, m, (seed, chunk) if chunk else seed)
        done += m
        chunk += 1
    return ProbabilityEstimate(hits / samples, samples, hoeffding_radius(samples, delta), delta)


def _count_hits(net, base, phi, abar, variables, count, seed) -> int:
    if not net.symbols:
        v = lg.evaluate(base, phi, abar, variables)
        if v not in (0.0, 1.0):
            raise lg.SemanticsError(f"event formula took the value {v}")
        return count if v == 1.0 else 0
    bits = sample_bits(net, base, count, seed)
    names = list(bits)
    mat = np.concatenate([bits[R] for R in names], axis=1)
    rows, inverse, counts = np.unique(mat, axis=0, return_inverse=True, return_counts=True)
    widths = [bits[R].shape[1] for R in names]
    n = base.size
    lists = {R: _tuples(n, net.signature.arity(R)) for R in names}
    hits = 0
    for row, c in zip(rows, counts):
        rels = {R: base.relation(R) for R in base.signature.names}
        off = 0
        for R, wdt in zip(names, widths):
            rels[R] = [lists[R][i] for i in np.flatnonzero(row[off: off + wdt])]
            off += wdt
        w = _world(net, base, rels, (seed,))
        v = lg.evaluate(w, phi, abar, variables)
        if v not in (0.0, 1.0):
            raise lg.SemanticsError(f"event formula took the value {v}")
        if v == 1.0:
            hits += int(c)
    return hits


def serialize_world(w: Structure) -> str:
    return serialize_structure(w)
