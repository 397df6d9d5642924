"""Base-structure families and their boundedness oracles."""

from __future__ import annotations

import itertools
import random
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

from .structures import INF, Signature, Structure, StructureError, distances_from
from . import typeanalysis as ta

DEFAULT_PROBES = (32, 64, 128, 256, 512)
TREE_RETRY_CAP = 10**6


class GenerationError(RuntimeError):
    pass


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class BaseSequence:
    family: str  # "set", "unary", "path", "grid", "tree"
    params: tuple = ()

    # -- constructors -------------------------------------------------------
    @classmethod
    def empty_set(cls):
        return cls("set")

    @classmethod
    def unary(cls, s: int = 1, m: int = 1):
        if s < 1 or m < 0:
            raise ValueError("unary family needs s >= 1 and m >= 0")
        return cls("unary", (("s", s), ("m", m)))

    @classmethod
    def path(cls):
        return cls("path")

    @classmethod
    def grid(cls, d: int = 2):
        if d < 1:
            raise ValueError("grid dimension must be positive")
        return cls("grid", (("d", d),))

    @classmethod
    def tree(cls, delta: int = 2, weights: Sequence[float] | None = None, seed: int = 0):
        if delta < 1:
            raise ValueError("tree family needs delta >= 1")
        if weights is None:
            weights = critical_binomial(delta)
        weights = tuple(float(w) for w in weights)
        if len(weights) != delta + 1 or any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ValueError(f"tree offspring weights must be {delta + 1} nonnegative numbers")
        if weights[0] == 0:
            raise ValueError("offspring weight of 0 children must be positive")
        return cls("tree", (("delta", delta), ("weights", weights), ("seed", seed)))

    # -- properties ---------------------------------------------------------
    def param(self, key, default=None):
        return dict(self.params).get(key, default)

    @property
    def signature(self) -> Signature:
        if self.family == "set":
            return Signature.of([], 0)
        if self.family == "unary":
            return Signature.of([(f"P{j}", 1) for j in range(1, self.param("s") + 1)])
        if self.family in ("path", "grid"):
            return Signature.of([("E", 2)])
        if self.family == "tree":
            return Signature.of([("E", 2), ("Ord", 2)])
        raise ValueError(f"unknown family {self.family!r}")

    @property
    def degree_bound(self) -> int:
        if self.family in ("set", "unary"):
            return 0
        if self.family == "path":
            return 2
        if self.family == "grid":
            return 2 * self.param("d")
        # parent, children and siblings (the sibling order is part of the base)
        return 2 * self.param("delta")

    def size(self, n: int) -> int:
        if self.family in ("set", "unary", "tree"):
            return n
        if self.family == "path":
            return n + 1
        return (n + 1) ** self.param("d")

    def describe(self) -> str:
        if not self.params:
            return self.family
        parts = []
        for k, v in self.params:
            if isinstance(v, tuple):
                v = "/".join(f"{w:g}" for w in v)
            parts.append(f"{k}={v}")
        return f"{self.family}:{','.join(parts)}"

    def __str__(self):
        return self.describe()


def critical_binomial(delta: int) -> tuple[float, ...]:
    from math import comb

    p = 1.0 / delta
    return tuple(comb(delta, k) * p**k * (1 - p) ** (delta - k) for k in range(delta + 1))


def parse_sequence(text: str) -> BaseSequence:
    """Parse a family descriptor such as ``grid:d=2`` or ``tree:delta=3,seed=7``."""
    name, _, rest = text.strip().partition(":")
    opts = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        k, eq, v = item.partition("=")
        if not eq:
            raise ValueError(f"bad sequence option {item!r} (expected key=value)")
        opts[k.strip()] = v.strip()

    def take(key, conv, default):
        if key not in opts:
            return default
        try:
            return conv(opts.pop(key))
        except ValueError:
            raise ValueError(f"bad value for {key} in {text!r}") from None

    if name in ("set", "empty"):
        seq = BaseSequence.empty_set()
    elif name == "path":
        seq = BaseSequence.path()
    elif name == "grid":
        seq = BaseSequence.grid(take("d", int, 2))
    elif name == "unary":
        seq = BaseSequence.unary(take("s", int, 1), take("m", int, 1))
    elif name == "tree":
        delta = take("delta", int, 2)
        weights = take("weights", lambda v: tuple(float(w) for w in v.split("/")), None)
        seq = BaseSequence.tree(delta, weights, take("seed", int, 0))
    else:
        raise ValueError(f"unknown base sequence family {name!r}")
    if opts:
        raise ValueError(f"unknown options for {name}: {sorted(opts)}")
    return seq


# ---------------------------------------------------------------------------
# generation

@lru_cache(maxsize=64)
def generate(seq: BaseSequence, n: int) -> Structure:
    if n < 1:
        raise ValueError("base structures are indexed from n = 1")
    sig = seq.signature
    rels: dict[str, list] = {}
    if seq.family == "set":
        size = n
    elif seq.family == "unary":
        size = n
        s, m = seq.param("s"), seq.param("m")
        for j in range(1, s + 1):
            rels[f"P{j}"] = [(a,) for a in range((j - 1) * m, j * m) if a < n]
    elif seq.family == "path":
        size = n + 1
        rels["E"] = [(i, i + 1) for i in range(n)]
    elif seq.family == "grid":
        d = seq.param("d")
        side = n + 1
        size = side**d
        edges = []
        for idx in range(size):
            stride = 1
            for axis in range(d):
                coord = (idx // stride) % side
                if coord + 1 < side:
                    edges.append((idx, idx + stride))
                    edges.append((idx + stride, idx))
                stride *= side
        rels["E"] = edges
    elif seq.family == "tree":
        children = _sample_tree(seq, n)
        size = n
        rels["E"] = [(p, c) for p, cs in enumerate(children) for c in cs]
        rels["Ord"] = [(a, b) for cs in children for a, b in itertools.combinations(cs, 2)]
    else:
        raise ValueError(f"unknown family {seq.family!r}")
    return Structure(sig, size, rels, origin=(seq, n))


def _sample_tree(seq: BaseSequence, n: int) -> list[list[int]]:
    """Galton-Watson tree conditioned on exactly ``n`` vertices, by rejection."""
    delta = seq.param("delta")
    weights = seq.param("weights")
    rng = random.Random(seq.param("seed") ^ n)
    counts = list(range(delta + 1))
    for _ in range(TREE_RETRY_CAP):
        offspring = []
        total, pending = 1, 1
        while pending and total <= n:
            k = rng.choices(counts, weights)[0]
            offspring.append(k)
            total += k
            pending += k - 1
        if pending == 0 and total == n:
            children, nxt = [], 1
            for k in offspring:
                children.append(list(range(nxt, nxt + k)))
                nxt += k
            return children
    raise GenerationError(f"tree sampling for n={n} exceeded the retry cap of {TREE_RETRY_CAP}")


def grid_coordinates(seq: BaseSequence, n: int, idx: int) -> tuple[int, ...]:
    side = n + 1
    return tuple((idx // side**axis) % side for axis in range(seq.param("d")))


# ---------------------------------------------------------------------------
# counting

def count_in(S: Structure, t: ta.LocalType, budget: int = 10**7) -> int:
    """Number of tuples of ``S`` realizing ``t``."""
    if t.arity == 0:
        return ta.satisfies(S, (), t)
    C, anchors, _ = t.configuration()
    d0 = distances_from(C, [anchors[0]])
    reach = [d0.get(a, INF) for a in anchors]
    n = ta._scope_len_of_type(S, t)
    ty = ta.typer(S, n)
    count = scanned = 0
    for a in S.domain:
        pools = []
        for i in range(1, t.arity):
            if reach[i] is INF:
                pools.append(S.domain)
            else:
                pools.append(sorted(ty.ball1(a, reach[i])))
        size = 1
        for p in pools:
            size *= len(p)
        scanned += size
        if scanned > budget:
            raise ta.ResourceError(f"realization count would scan more than {budget} tuples")
        for rest in itertools.product(*pools):
            if ty.type_of((a,) + rest, t.radius, n, t.kind) == t:
                count += 1
    return count


def count_realizations(seq: BaseSequence, n: int, t: ta.LocalType, budget: int = 10**7) -> int:
    return count_in(generate(seq, n), t, budget)


# ---------------------------------------------------------------------------
# boundedness

@dataclass
class BoundednessVerdict:
    bounded: bool
    cap: int | None = None
    evidence: dict = field(default_factory=dict)  # probe -> count
    empirical: bool = False
    rule: str = ""

    @property
    def kind(self) -> str:
        return "Bounded" if self.bounded else "Unbounded"

    def label(self) -> str:
        s = self.kind
        if self.bounded and self.cap is not None:
            s += f"({self.cap})"
        return s + (" [empirical]" if self.empirical else "")


_verdicts: dict = {}


def _config_steps(t: ta.LocalType, anchor: int, forward: bool) -> int:
    """Longest directed E-walk from ``anchor`` inside the configuration."""
    C, _, _ = t.configuration()
    E = C.relation("E")
    step = {}
    for a, b in E:
        if forward:
            step[a] = b
        else:
            step[b] = a
    k, cur = 0, anchor
    while cur in step and k <= t.radius:
        cur = step[cur]
        k += 1
    return k


def _has_root_near(t: ta.LocalType) -> bool:
    C, anchors, _ = t.configuration()
    near = distances_from(C, set(anchors), max(t.radius - 1, 0)) if t.radius > 0 else {}
    has_parent = {b for _, b in C.relation("E")}
    return any(v not in has_parent for v in near)


def _probes_for(seq: BaseSequence, t: ta.LocalType, probes):
    if probes:
        return tuple(probes)
    if seq.family == "grid":
        C, _, _ = t.configuration()
        base = 4 * t.radius + 4 + C.size // max(1, t.radius + 1)
        return (base, base + 2, base + 4)
    return DEFAULT_PROBES


def classify_boundedness(seq: BaseSequence, t: ta.LocalType, probes: Sequence[int] | None = None) -> BoundednessVerdict:
    if t.arity == 0:
        raise PreconditionError("boundedness is defined for types with at least one variable")
    if len(ta.sim_partition(t).blocks) > 1:
        raise PreconditionError("type variables span several locality classes")
    if probes is not None and (not probes or list(probes) != sorted(set(probes))):
        raise PreconditionError("probes must be a nonempty increasing list")
    key = (seq, t.cert, tuple(probes) if probes else None)
    v = _verdicts.get(key)
    if v is None:
        t = ta._tau_part(t) if len(t.scope) > t.tau_len else t
        v = _classify(seq, t, probes)
        _verdicts[key] = v
    return v


def _classify(seq, t, probes) -> BoundednessVerdict:
    C, anchors, _ = t.configuration()
    if seq.family == "set":
        return BoundednessVerdict(False, rule="no relations: every type is realized by n-tuples")
    if seq.family == "unary":
        marked = {e for R in C.relations.values() for (e,) in R}
        bounded = all(a in marked for a in anchors)
        cap = None
        if bounded:
            m, s = seq.param("m"), seq.param("s")
            cap = count_realizations(seq, max(s * m, 1) + 1, t)
        return BoundednessVerdict(bounded, cap, rule="bounded iff every variable is marked")
    if seq.family == "path":
        bounded = t.radius > 0 and any(
            _config_steps(t, a, True) < t.radius or _config_steps(t, a, False) < t.radius for a in anchors
        )
        cap = None
        if bounded:
            n0 = 4 * t.radius + 2 * C.size + 2
            cap = count_realizations(seq, n0, t)
        return BoundednessVerdict(bounded, cap, rule="bounded iff a variable has fewer than lambda predecessors or successors")
    if seq.family == "tree":
        bounded = _has_root_near(t)
        return BoundednessVerdict(bounded, None, rule="bounded iff the type sees the root")
    return _empirical(seq, t, _probes_for(seq, t, probes))


def _empirical(seq, t, probes) -> BoundednessVerdict:
    counts = {}
    for n in probes:
        if t.arity == 1:
            counts[n] = _unary_census(seq, n, t.radius, t.kind, len(t.scope)).get(t, 0)
        else:
            counts[n] = count_realizations(seq, n, t)
    tail = [counts[n] for n in probes[-3:]]
    bounded = len(tail) == 3 and len(set(tail)) == 1
    cap = max(counts.values()) if bounded else None
    return BoundednessVerdict(bounded, cap, counts, True, "constant over the last three probes")


@lru_cache(maxsize=256)
def _unary_census(seq, n, radius, kind, scope_len) -> Counter:
    B = generate(seq, n)
    ty = ta.typer(B, scope_len)
    return Counter(ty.type_of((a,), radius, scope_len, kind) for a in B.domain)


def ratio_diagnostic(
    seq: BaseSequence, r: ta.LocalType, p: ta.LocalType, probes: Sequence[int] = DEFAULT_PROBES, tol: float = 0.05
) -> dict:
    ratios = []
    for n in probes:
        cp = count_realizations(seq, n, p)
        cr = count_realizations(seq, n, r)
        ratios.append(None if cp == 0 else cr / cp)
    valid = [x for x in ratios[-3:] if x is not None]
    stable = len(valid) == 3 and max(valid) - min(valid) < tol
    return {"probes": list(probes), "ratios": ratios, "stable": stable}
