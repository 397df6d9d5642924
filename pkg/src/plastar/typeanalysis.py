"""Neighbourhood and closure types as canonical anchored configurations.

A type is stored as the canonical form of the induced substructure on the
lambda-neighbourhood (or lambda-closure) of an anchor tuple.  Anchor positions
and, for closures, the rare elements are marked.  The canonical form is the
sorted list of canonically labelled connected components, so equality of the
serialized certificate is equality of anchored isomorphism type.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .structures import INF, Signature, Structure, Symbol, distances_from


class TypeError_(ValueError):
    """Raised for malformed type requests (arity mismatch, missing witness, ...)."""


class CanonicalizationError(RuntimeError):
    pass


class ResourceError(RuntimeError):
    pass


# Guards for the canonical-labelling search.
MAX_CONFIG_ELEMENTS = 400
MAX_SEARCH_LEAVES = 20000


# ---------------------------------------------------------------------------
# canonical labelling

def _rank(values):
    order = {v: i for i, v in enumerate(sorted(set(values)))}
    return [order[v] for v in values]


def _canon_component(info: list, facts: list[tuple]) -> tuple:
    """Canonical encoding of one connected anchored component.

    ``info[v]`` is the sortable initial colour of vertex ``v`` (anchor labels
    and rare flag); ``facts`` are ``(relation index, v1, ..., vr)``.
    """
    m = len(info)
    if m == 1:
        return ((info[0],), tuple(sorted(set(facts))))
    incidence = [[] for _ in range(m)]
    for f in facts:
        for pos, v in enumerate(f[1:]):
            incidence[v].append((f, pos))

    def refine(colours):
        ncol = len(set(colours))
        while True:
            sigs = [
                (colours[v], tuple(sorted((f[0], pos, tuple(colours[u] for u in f[1:])) for f, pos in incidence[v])))
                for v in range(m)
            ]
            new = _rank(sigs)
            k = len(set(new))
            if k == ncol:
                return new
            colours, ncol = new, k

    leaves = [0]

    def encode(colours):
        label = colours  # discrete: colour is the label
        order = sorted(range(m), key=lambda v: label[v])
        verts = tuple(info[v] for v in order)
        fs = tuple(sorted(set((f[0],) + tuple(label[u] for u in f[1:]) for f in facts)))
        return (verts, fs)

    def search(colours):
        colours = refine(colours)
        if len(set(colours)) == m:
            leaves[0] += 1
            if leaves[0] > MAX_SEARCH_LEAVES:
                raise CanonicalizationError(
                    f"canonical labelling exceeded {MAX_SEARCH_LEAVES} search leaves"
                )
            return encode(colours)
        sizes = {}
        for c in colours:
            sizes[c] = sizes.get(c, 0) + 1
        target = min(c for c, s in sizes.items() if s > 1)
        best = None
        for v in range(m):
            if colours[v] != target:
                continue
            c2 = [2 * c for c in colours]
            c2[v] -= 1
            enc = search(_rank(c2))
            if best is None or enc < best:
                best = enc
        return best

    return search(_rank(info))


def _components(elems: Iterable[int], facts: list[tuple]) -> list[list[int]]:
    parent = {e: e for e in elems}

    def find(e):
        while parent[e] != e:
            parent[e] = parent[parent[e]]
            e = parent[e]
        return e

    for f in facts:
        r0 = find(f[1])
        for e in f[2:]:
            r = find(e)
            if r != r0:
                parent[r] = r0
    groups: dict[int, list[int]] = {}
    for e in parent:
        groups.setdefault(find(e), []).append(e)
    return list(groups.values())


# ---------------------------------------------------------------------------
# type objects

@dataclass(frozen=True, eq=False)
class LocalType:
    kind: str  # "nbhd" or "closure"
    radius: int
    arity: int
    scope: tuple[Symbol, ...]
    tau_len: int
    comps: tuple
    witness: tuple | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        payload = [
            self.kind,
            self.radius,
            self.arity,
            [[s.name, s.arity] for s in self.scope],
            self.tau_len,
            _jsonable(self.comps),
        ]
        object.__setattr__(self, "cert", json.dumps(payload, separators=(",", ":")).encode())

    def __eq__(self, other):
        return isinstance(other, LocalType) and self.cert == other.cert

    def __hash__(self):
        return hash(self.cert)

    def __lt__(self, other):
        return self.cert < other.cert

    @property
    def name(self) -> str:
        prefix = "n" if self.kind == "nbhd" else "c"
        return prefix + hashlib.sha1(self.cert).hexdigest()[:10]

    def hex(self) -> str:
        return self.cert.hex()

    @property
    def signature(self) -> Signature:
        return Signature(self.scope, self.tau_len)

    def configuration(self) -> tuple[Structure, tuple[int, ...], frozenset]:
        """Canonical realizing configuration: (structure, anchor elements, rare elements)."""
        cached = self.__dict__.get("_config")
        if cached is not None:
            return cached
        offset = 0
        anchors = [None] * self.arity
        rare = set()
        rels: dict[str, list] = {s.name: [] for s in self.scope}
        for verts, facts in self.comps:
            for i, (labels, is_rare) in enumerate(verts):
                for p in labels:
                    anchors[p] = offset + i
                if is_rare:
                    rare.add(offset + i)
            for f in facts:
                rels[self.scope[f[0]].name].append(tuple(offset + v for v in f[1:]))
            offset += len(verts)
        S = Structure(self.signature, offset, rels)
        out = (S, tuple(anchors), frozenset(rare))
        object.__setattr__(self, "_config", out)
        return out

    def __repr__(self):
        S, anchors, rare = self.configuration()
        return (
            f"{type(self).__name__}(radius={self.radius}, arity={self.arity}, "
            f"size={S.size}, rare={len(rare)}, name={self.name})"
        )


class NeighbourhoodType(LocalType):
    pass


class ClosureType(LocalType):
    pass


def _jsonable(x):
    if isinstance(x, tuple):
        return [_jsonable(e) for e in x]
    if isinstance(x, bool):
        return int(x)
    return x


def _tuplify(x):
    if isinstance(x, list):
        return tuple(_tuplify(e) for e in x)
    return x


def type_from_cert(cert: bytes | str) -> LocalType:
    """Rebuild a type from its certificate bytes (or their hex form)."""
    if isinstance(cert, str):
        cert = bytes.fromhex(cert)
    kind, radius, arity, scope, tau_len, comps = json.loads(cert.decode())
    cls = NeighbourhoodType if kind == "nbhd" else ClosureType
    comps = tuple(
        (tuple((tuple(lab), bool(r)) for lab, r in verts), tuple(tuple(f) for f in facts))
        for verts, facts in comps
    )
    t = cls(kind, radius, arity, tuple(Symbol(n, a) for n, a in scope), tau_len, comps)
    if t.cert != cert:
        raise TypeError_("certificate does not round-trip")
    return t


# ---------------------------------------------------------------------------
# per-structure computation cache

class Typer:
    """Caches balls, rare sets and component encodings for one structure."""

    def __init__(self, S: Structure):
        self.S = S
        self._balls: dict = {}
        self._rare: dict = {}
        self._comp: dict = {}
        self._types: dict = {}
        self._intern: dict = {}
        self._xinfo: dict = {}
        self._yinfo: dict = {}
        self._pairs: dict = {}

    # -- sets --------------------------------------------------------------
    def ball1(self, a: int, r: int) -> frozenset:
        key = (a, r)
        b = self._balls.get(key)
        if b is None:
            b = frozenset(distances_from(self.S, [a], r))
            self._balls[key] = b
        return b

    def ball(self, centers: Iterable[int], r: int) -> frozenset:
        out = set()
        for c in centers:
            out |= self.ball1(c, r)
        return frozenset(out)

    def rare(self, lam: int) -> frozenset:
        r = self._rare.get(lam)
        if r is None:
            override = getattr(self.S, "rare_override", None)
            if override is not None:
                r = frozenset(override(lam))
            elif self.S.origin is not None:
                seq, n = self.S.origin
                r = rare_elements(seq, n, lam)
            else:
                r = frozenset()
            self._rare[lam] = r
        return r

    # -- components --------------------------------------------------------
    def _facts_within(self, elems: frozenset, scope_len: int) -> list[tuple]:
        facts = set()
        for e in elems:
            for ri, t in self.S.facts_at(e):
                if ri < scope_len and all(u in elems for u in t):
                    facts.add((ri,) + t)
        return list(facts)

    def encode(self, elems: frozenset, labels: dict, rare: frozenset, scope_len: int) -> tuple:
        """Sorted canonical component encodings of an anchored element set."""
        facts = self._facts_within(elems, scope_len)
        comps = _components(elems, facts)
        if len(elems) > MAX_CONFIG_ELEMENTS:
            raise CanonicalizationError(
                f"configuration has {len(elems)} elements (guard {MAX_CONFIG_ELEMENTS})"
            )
        out = []
        for comp in comps:
            cset = frozenset(comp)
            key = (
                cset,
                tuple(sorted((e, labels[e]) for e in comp if e in labels)),
                cset & rare,
                scope_len,
            )
            enc = self._comp.get(key)
            if enc is None:
                order = sorted(comp)
                idx = {e: i for i, e in enumerate(order)}
                info = [(labels.get(e, ()), e in rare) for e in order]
                cf = [(f[0],) + tuple(idx[u] for u in f[1:]) for f in facts if f[1] in cset]
                enc = _canon_component(info, cf)
                self._comp[key] = enc
            out.append(enc)
        out.sort()
        return tuple(out)

    def _make(self, kind, radius, arity, scope_len, comps, witness) -> LocalType:
        key = (kind, radius, arity, scope_len, comps)
        t = self._intern.get(key)
        if t is None:
            cls = NeighbourhoodType if kind == "nbhd" else ClosureType
            sig = self.S.signature
            t = cls(kind, radius, arity, sig.symbols[:scope_len], sig.tau_len, comps, witness)
            self._intern[key] = t
        return t

    def type_of(self, tup: Sequence[int], radius: int, scope_len: int, kind: str = "closure") -> LocalType:
        tup = tuple(tup)
        key = (tup, radius, scope_len, kind)
        t = self._types.get(key)
        if t is not None:
            return t
        for e in tup:
            self.S.check_element(e)
        labels: dict[int, tuple] = {}
        for p, e in enumerate(tup):
            labels[e] = labels.get(e, ()) + (p,)
        centers = set(tup)
        rare = frozenset()
        if kind == "closure":
            rare = self.rare(radius)
            centers |= rare
        elems = self.ball(centers, radius)
        comps = self.encode(elems, labels, rare, scope_len)
        t = self._make(kind, radius, len(tup), scope_len, comps, (self.S, tup))
        self._types[key] = t
        return t

    # -- split fast path ---------------------------------------------------
    def _part(self, sub: tuple, positions: tuple, radius: int, scope_len: int, with_rare: bool):
        labels: dict[int, tuple] = {}
        for p, e in zip(positions, sub):
            labels[e] = labels.get(e, ()) + (p,)
        centers = set(sub)
        rare = frozenset()
        if with_rare:
            rare = self.rare(radius)
            centers |= rare
        elems = self.ball(centers, radius)
        comps = self.encode(elems, labels, rare, scope_len)
        return comps, elems, centers

    def xinfo(self, sub: tuple, positions: tuple, radius: int, scope_len: int, kind: str):
        key = (sub, positions, radius, scope_len, kind)
        info = self._xinfo.get(key)
        if info is None:
            comps, elems, centers = self._part(sub, positions, radius, scope_len, kind == "closure")
            sep = self.ball(centers, 2 * radius + 1)
            info = (comps, elems, sep)
            self._xinfo[key] = info
        return info

    def yinfo(self, sub: tuple, positions: tuple, radius: int, scope_len: int):
        key = (sub, positions, radius, scope_len)
        info = self._yinfo.get(key)
        if info is None:
            comps, elems, _ = self._part(sub, positions, radius, scope_len, False)
            info = (comps, elems)
            self._yinfo[key] = info
        return info

    def split_type(
        self, xsub: tuple, xpos: tuple, ysub: tuple, ypos: tuple, radius: int, scope_len: int, kind: str = "closure"
    ) -> LocalType:
        """Type of the tuple whose entries at ``xpos``/``ypos`` are ``xsub``/``ysub``.

        When the y-part is far from the x-part (and from rare elements) and no
        fact of the scope links the two, the configuration is a disjoint union
        and the encoding is assembled from cached halves.
        """
        xc, xelems, sep = self.xinfo(xsub, xpos, radius, scope_len, kind)
        if not any(b in sep for b in ysub):
            yc, yelems = self.yinfo(ysub, ypos, radius, scope_len)
            if not self._linked(xelems, yelems, scope_len):
                key = (id(xc), id(yc), kind, radius, scope_len)
                t = self._pairs.get(key)
                if t is None:
                    arity = len(xpos) + len(ypos)
                    tup = [None] * arity
                    for p, e in zip(xpos, xsub):
                        tup[p] = e
                    for p, e in zip(ypos, ysub):
                        tup[p] = e
                    comps = tuple(sorted(xc + yc))
                    t = self._make(kind, radius, arity, scope_len, comps, (self.S, tuple(tup)))
                    self._pairs[key] = t
                return t
        arity = len(xpos) + len(ypos)
        tup = [None] * arity
        for p, e in zip(xpos, xsub):
            tup[p] = e
        for p, e in zip(ypos, ysub):
            tup[p] = e
        return self.type_of(tuple(tup), radius, scope_len, kind)

    def _linked(self, xelems: frozenset, yelems: frozenset, scope_len: int) -> bool:
        tau_len = self.S.signature.tau_len
        if scope_len <= tau_len:
            return False
        syms = self.S.signature.symbols
        if all(s.arity < 2 for s in syms[tau_len:scope_len]):
            return False
        for u in yelems:
            for ri, t in self.S.facts_at(u):
                if tau_len <= ri < scope_len and any(e in xelems for e in t):
                    return True
        return False


def typer(S: Structure, scope_len: int | None = None) -> Typer:
    """The cache attached to ``S`` (or to its base when only base symbols matter)."""
    if scope_len is not None and scope_len <= S.signature.tau_len and S.base is not None:
        S = S.base
    t = S._cache.get("typer")
    if t is None:
        t = Typer(S)
        S._cache["typer"] = t
    return t


def _scope_len(S: Structure, scope) -> int:
    if scope is None:
        return len(S.signature)
    if isinstance(scope, int):
        n = scope
    elif isinstance(scope, Signature):
        n = len(scope)
        if not scope.is_prefix_of(S.signature):
            raise TypeError_("type scope must be a prefix of the structure's signature")
    else:
        names = list(scope)
        n = len(names)
        if tuple(names) != S.signature.names[:n]:
            raise TypeError_("type scope must be a prefix of the structure's signature")
    if not S.signature.tau_len <= n <= len(S.signature):
        raise TypeError_("type scope must contain the base symbols")
    return n


# ---------------------------------------------------------------------------
# public operations

def neighbourhood_type_of(S: Structure, tup: Sequence[int], radius: int, scope=None) -> NeighbourhoodType:
    n = _scope_len(S, scope)
    return typer(S, n).type_of(tuple(tup), radius, n, "nbhd")


def closure_type_of(S: Structure, tup: Sequence[int], radius: int, scope=None) -> ClosureType:
    n = _scope_len(S, scope)
    return typer(S, n).type_of(tuple(tup), radius, n, "closure")


def type_of_kind(S: Structure, tup, radius, scope_len, kind) -> LocalType:
    return typer(S, scope_len).type_of(tuple(tup), radius, scope_len, kind)


def _scope_len_of_type(S: Structure, t: LocalType) -> int:
    n = len(t.scope)
    if S.signature.symbols[:n] != t.scope or S.signature.tau_len != t.tau_len:
        raise TypeError_("structure signature does not extend the type's scope")
    return n


def satisfies(S: Structure, tup: Sequence[int], t: LocalType) -> int:
    tup = tuple(tup)
    if len(tup) != t.arity:
        raise TypeError_(f"tuple of length {len(tup)} for a type of arity {t.arity}")
    n = _scope_len_of_type(S, t)
    return int(type_of_kind(S, tup, t.radius, n, t.kind) == t)


def rare_elements(seq, n: int, lam: int) -> frozenset:
    from .sequences import classify_boundedness, generate

    B = generate(seq, n)
    ty = typer(B)
    cached = ty._rare.get(lam)
    if cached is not None:
        return cached
    verdicts: dict = {}
    out = set()
    tau_len = B.signature.tau_len
    for a in B.domain:
        p = ty.type_of((a,), lam, tau_len, "nbhd")
        v = verdicts.get(p)
        if v is None:
            v = classify_boundedness(seq, p)
            verdicts[p] = v
        if v.bounded:
            out.add(a)
    r = frozenset(out)
    ty._rare[lam] = r
    return r


def closure(seq, n: int, abar: Sequence[int], lam: int) -> frozenset:
    from .sequences import generate

    if not abar:
        raise TypeError_("closure needs a nonempty tuple")
    B = generate(seq, n)
    ty = typer(B)
    return ty.ball(set(abar) | ty.rare(lam), lam)


# -- reading properties off a configuration -------------------------------

def _config_distances(t: LocalType):
    S, anchors, rare = t.configuration()
    cache = t.__dict__.get("_dists")
    if cache is None:
        cache = {}
        for a in set(anchors) | set(rare):
            cache[a] = distances_from(S, [a])
        object.__setattr__(t, "_dists", cache)
    return S, anchors, rare, cache


@dataclass
class SimPartition:
    blocks: tuple[tuple[int, ...], ...]
    witness: dict  # (i, j) -> configuration distance for every merged pair

    def block_of(self, i: int) -> tuple[int, ...]:
        for b in self.blocks:
            if i in b:
                return b
        raise KeyError(i)


def _link_bound(radius: int) -> int:
    # Two anchors whose radius-balls touch or are joined by an edge lie in one
    # component of the configuration.
    return 2 * radius + 1


def sim_partition(t: LocalType, positions: Sequence[int] | None = None) -> SimPartition:
    S, anchors, rare, dists = _config_distances(t)
    pos = list(range(t.arity)) if positions is None else list(positions)
    bound = _link_bound(t.radius)
    parent = {p: p for p in pos}

    def find(p):
        while parent[p] != p:
            p = parent[p]
        return p

    witness = {}
    for i, j in itertools.combinations(pos, 2):
        d = dists[anchors[i]].get(anchors[j], INF)
        if d <= bound:
            witness[(i, j)] = d
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for p in pos:
        groups.setdefault(find(p), []).append(p)
    blocks = tuple(sorted(tuple(sorted(g)) for g in groups.values()))
    return SimPartition(blocks, witness)


def _touches_rare(t: LocalType, block: Sequence[int]) -> bool:
    S, anchors, rare, dists = _config_distances(t)
    bound = _link_bound(t.radius)
    return any(dists[anchors[p]].get(r, INF) <= bound for p in block for r in rare)


def _block_type(t: LocalType, block: Sequence[int]) -> NeighbourhoodType:
    S, anchors, rare = t.configuration()
    sub = tuple(anchors[p] for p in block)
    return typer(S).type_of(sub, t.radius, t.tau_len, "nbhd")


@dataclass
class BlockVerdict:
    block: tuple[int, ...]
    touches_anchor: bool
    touches_rare: bool
    oracle: object | None
    bounded: bool


def _block_verdict(seq, t: LocalType, block, ypos) -> BlockVerdict:
    touches_x = any(p not in ypos for p in block)
    near_rare = t.kind == "closure" and _touches_rare(t, block)
    oracle = None
    if near_rare:
        bounded = True
    else:
        from .sequences import classify_boundedness

        oracle = classify_boundedness(seq, _block_type(t, block))
        bounded = oracle.bounded
    return BlockVerdict(tuple(block), touches_x, near_rare, oracle, bounded)


@dataclass
class Classification:
    verdict: str  # "Bounded", "UniformlyUnbounded", "StronglyUnbounded"
    bound: int | None
    blocks: list[BlockVerdict]
    dimension: int
    empirical: bool

    @property
    def bounded(self) -> bool:
        return self.verdict == "Bounded"

    @property
    def strongly(self) -> bool:
        return self.verdict == "StronglyUnbounded"

    def label(self) -> str:
        if self.verdict == "Bounded":
            return f"Bounded({self.bound})" if self.bound is not None else "Bounded"
        return self.verdict


def _tau_part(t: LocalType) -> LocalType:
    return t if len(t.scope) == t.tau_len else restrict_sig(t, t.tau_len)


def _restriction_bounded(seq, t: LocalType, positions) -> tuple[bool, bool]:
    """Is the restriction of ``t`` to ``positions`` (no anchors outside) bounded?"""
    part = sim_partition(t, positions)
    empirical = False
    for block in part.blocks:
        v = _block_verdict(seq, t, block, set(positions))
        if v.oracle is not None and v.oracle.empirical:
            empirical = True
        if not v.bounded:
            return False, empirical
    return True, empirical


def _counted_bound(seq, t: LocalType) -> int:
    """Largest realization count over two probes large enough to hold the configuration."""
    from .sequences import count_realizations

    C, _, _ = t.configuration()
    n0 = 4 * t.radius + 2 * C.size + 2
    return max(count_realizations(seq, n, t) for n in (n0, 2 * n0))


def classify(seq, t: LocalType, ypos: Sequence[int]) -> Classification:
    t = _tau_part(t)
    ypos = tuple(sorted(set(ypos)))
    if any(not 0 <= p < t.arity for p in ypos):
        raise TypeError_("bound positions outside the type's arity")
    part = sim_partition(t)
    verdicts = []
    empirical = False
    for block in part.blocks:
        if not any(p in ypos for p in block):
            continue
        v = _block_verdict(seq, t, block, set(ypos))
        if v.oracle is not None and v.oracle.empirical:
            empirical = True
        verdicts.append(v)
    dim = sum(1 for v in verdicts if not v.touches_anchor and not v.bounded)
    if all(v.touches_anchor or v.bounded for v in verdicts):
        bound = None
        if t.arity == len(ypos):
            if all(v.oracle is not None and v.oracle.cap is not None for v in verdicts):
                bound = 1
                for v in verdicts:
                    bound *= v.oracle.cap
            else:
                bound = _counted_bound(seq, t)
        return Classification("Bounded", bound, verdicts, dim, empirical)
    strongly = all(not v.touches_anchor for v in verdicts)
    if strongly:
        for r in range(1, len(ypos) + 1):
            for sub in itertools.combinations(ypos, r):
                b, emp = _restriction_bounded(seq, t, sub)
                empirical = empirical or emp
                if b:
                    strongly = False
                    break
            if not strongly:
                break
    verdict = "StronglyUnbounded" if strongly else "UniformlyUnbounded"
    return Classification(verdict, None, verdicts, dim, empirical)


def dimension(seq, t: LocalType, ypos: Sequence[int]) -> int:
    t = _tau_part(t)
    ypos = set(ypos)
    part = sim_partition(t)
    dim = 0
    for block in part.blocks:
        if all(p in ypos for p in block):
            if not _block_verdict(seq, t, block, ypos).bounded:
                dim += 1
    return dim


def decompose(seq, t: LocalType, ypos: Sequence[int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split bound positions into a bounded part and a strongly unbounded part."""
    tt = _tau_part(t)
    ypos = tuple(sorted(set(ypos)))
    part = sim_partition(tt)
    far = set()
    for block in part.blocks:
        if not any(p in ypos for p in block):
            continue
        v = _block_verdict(seq, tt, block, set(ypos))
        if not v.touches_anchor and not v.bounded:
            far.update(block)
    u = tuple(p for p in ypos if p not in far)
    w = tuple(p for p in ypos if p in far)
    return u, w


# -- restrictions ---------------------------------------------------------

def restrict(t: LocalType, positions: Sequence[int]) -> LocalType:
    positions = tuple(positions)
    if any(not 0 <= p < t.arity for p in positions):
        raise TypeError_("restriction positions outside the type's arity")
    if positions == tuple(range(t.arity)):
        return t
    S, anchors, rare = t.configuration()
    ty = typer(S)
    sub = tuple(anchors[p] for p in positions)
    labels: dict[int, tuple] = {}
    for i, e in enumerate(sub):
        labels[e] = labels.get(e, ()) + (i,)
    centers = set(sub)
    if t.kind == "closure":
        centers |= rare
    elems = ty.ball(centers, t.radius)
    comps = ty.encode(elems, labels, rare & elems if t.kind == "closure" else frozenset(), len(t.scope))
    cls = type(t)
    witness = None
    if t.witness is not None:
        W, wt = t.witness
        witness = (W, tuple(wt[p] for p in positions))
    return cls(t.kind, t.radius, len(positions), t.scope, t.tau_len, comps, witness)


def restrict_sig(t: LocalType, scope_len: int) -> LocalType:
    if not t.tau_len <= scope_len <= len(t.scope):
        raise TypeError_("restricted scope must lie between the base symbols and the type's scope")
    if scope_len == len(t.scope):
        return t
    S, anchors, rare = t.configuration()
    labels: dict[int, tuple] = {}
    for p, e in enumerate(anchors):
        labels[e] = labels.get(e, ()) + (p,)
    comps = typer(S).encode(frozenset(S.domain), labels, rare, scope_len)
    witness = t.witness
    return type(t)(t.kind, t.radius, t.arity, t.scope[:scope_len], t.tau_len, comps, witness)


def restrict_radius(t: LocalType, gamma: int, witness: tuple | None = None) -> LocalType:
    if not 0 <= gamma <= t.radius:
        raise TypeError_("restricted radius must not exceed the type's radius")
    if gamma == t.radius:
        return t
    if t.kind == "nbhd":
        S, anchors, _ = t.configuration()
        ty = typer(S)
        labels: dict[int, tuple] = {}
        for p, e in enumerate(anchors):
            labels[e] = labels.get(e, ()) + (p,)
        elems = ty.ball(set(anchors), gamma)
        comps = ty.encode(elems, labels, frozenset(), len(t.scope))
        return NeighbourhoodType("nbhd", gamma, t.arity, t.scope, t.tau_len, comps, t.witness)
    witness = witness or t.witness
    if witness is None:
        raise TypeError_("restricting a closure type's radius needs a realizing witness structure")
    W, tup = witness
    return type_of_kind(W, tup, gamma, len(t.scope), "closure")


# -- realized types -------------------------------------------------------

def realized_types(
    structures: Iterable[Structure], radius: int, arity: int, scope_len: int | None = None,
    kind: str = "closure", budget: int = 10**7,
) -> list[LocalType]:
    seen: dict[LocalType, LocalType] = {}
    scanned = 0
    for S in structures:
        n = len(S.signature) if scope_len is None else scope_len
        ty = typer(S, n)
        total = S.size ** arity
        scanned += total
        if scanned > budget:
            raise ResourceError(f"type enumeration would scan more than {budget} tuples")
        if arity == 0:
            t = ty.type_of((), radius, n, kind)
            seen.setdefault(t, t)
            continue
        if arity >= 2:
            for a in S.domain:
                for rest in itertools.product(S.domain, repeat=arity - 1):
                    t = ty.split_type((a,), (0,), rest, tuple(range(1, arity)), radius, n, kind)
                    seen.setdefault(t, t)
        else:
            for a in S.domain:
                t = ty.type_of((a,), radius, n, kind)
                seen.setdefault(t, t)
    return sorted(seen)


def enumerate_realized_types(
    seq, probes: Sequence[int], radius: int, arity: int, scope_len: int | None = None,
    network=None, samples: int = 8, seed: int = 0, budget: int = 10**7,
) -> list[ClosureType]:
    from .sequences import generate

    structures = []
    for n in probes:
        B = generate(seq, n)
        if network is None:
            structures.append(B)
        else:
            from .network import sample_worlds

            structures.extend(sample_worlds(network, B, samples, seed=(seed, n)))
    if scope_len is None:
        scope_len = len(structures[0].signature) if network is not None else None
    return realized_types(structures, radius, arity, scope_len, "closure", budget)
