"""Finite relational signatures and structures.

Domains are always ``{0, ..., n-1}``.  Distances and neighbourhoods are taken
in the Gaifman graph of the base part of the signature (the first
``tau_len`` symbols), regardless of how many further symbols a structure
interprets.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence


class StructureError(ValueError):
    pass


class _Infinity:
    """Distance between elements in different Gaifman components."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "inf"

    __str__ = __repr__

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("plastar-infinity")


INF = _Infinity()

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class Symbol:
    name: str
    arity: int

    def __str__(self):
        return f"{self.name}/{self.arity}"


@dataclass(frozen=True)
class Signature:
    symbols: tuple[Symbol, ...]
    tau_len: int

    def __post_init__(self):
        names = [s.name for s in self.symbols]
        if len(set(names)) != len(names):
            raise StructureError(f"duplicate relation names in {names}")
        for s in self.symbols:
            if not _IDENT.match(s.name):
                raise StructureError(f"bad relation name {s.name!r}")
            if s.arity < 1:
                raise StructureError(f"arity of {s.name} must be positive")
        if not 0 <= self.tau_len <= len(self.symbols):
            raise StructureError("tau prefix length out of range")

    @classmethod
    def of(cls, spec: Iterable[tuple[str, int]], tau_len: int | None = None) -> "Signature":
        syms = tuple(Symbol(n, a) for n, a in spec)
        return cls(syms, len(syms) if tau_len is None else tau_len)

    def __len__(self):
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.symbols)

    def index(self, name: str) -> int:
        for i, s in enumerate(self.symbols):
            if s.name == name:
                return i
        raise KeyError(name)

    def arity(self, name: str) -> int:
        return self.symbols[self.index(name)].arity

    def __contains__(self, name) -> bool:
        return any(s.name == name for s in self.symbols)

    def prefix(self, length: int) -> "Signature":
        if not self.tau_len <= length <= len(self.symbols):
            raise StructureError(
                f"prefix of length {length} must contain the {self.tau_len} base symbols"
            )
        return Signature(self.symbols[:length], self.tau_len)

    @property
    def tau(self) -> "Signature":
        return self.prefix(self.tau_len)

    def is_prefix_of(self, other: "Signature") -> bool:
        return (
            self.tau_len == other.tau_len
            and len(self.symbols) <= len(other.symbols)
            and other.symbols[: len(self.symbols)] == self.symbols
        )

    def header(self) -> str:
        body = " ".join(str(s) for s in self.symbols)
        return f"signature {body} | tau={self.tau_len}".replace("  ", " ")


class Structure:
    """An immutable finite relational structure.

    ``origin`` optionally records ``(base_sequence, n)`` when the structure is
    (an expansion of) the n-th member of a base sequence; the type analysis
    uses it to locate rare elements.  ``base`` points at the underlying base
    structure for expansions, so that computations which only look at the
    base symbols can be shared between worlds.
    """

    def __init__(
        self,
        signature: Signature,
        size: int,
        relations: Mapping[str, Iterable[Sequence[int]]] | None = None,
        origin=None,
        base: "Structure | None" = None,
    ):
        if size < 0:
            raise StructureError("domain size must be nonnegative")
        self.signature = signature
        self.size = size
        rels = dict(relations or {})
        unknown = set(rels) - set(signature.names)
        if unknown:
            raise StructureError(f"relations not in signature: {sorted(unknown)}")
        self._rel: dict[str, frozenset] = {}
        for sym in signature:
            tuples = frozenset(tuple(int(e) for e in t) for t in rels.get(sym.name, ()))
            for t in tuples:
                if len(t) != sym.arity:
                    raise StructureError(f"{sym.name}{t}: expected arity {sym.arity}")
                for e in t:
                    if not 0 <= e < size:
                        raise StructureError(f"{sym.name}{t}: element {e} outside domain")
            self._rel[sym.name] = tuples
        self.origin = origin
        self.base = base
        self._adj = self._build_gaifman()
        self._cache: dict = {}

    def _build_gaifman(self) -> tuple[frozenset, ...]:
        adj = [set() for _ in range(self.size)]
        for sym in self.signature.symbols[: self.signature.tau_len]:
            for t in self._rel[sym.name]:
                for a in t:
                    for b in t:
                        if a != b:
                            adj[a].add(b)
        return tuple(frozenset(s) for s in adj)

    # -- access ---------------------------------------------------------
    @property
    def domain(self) -> range:
        return range(self.size)

    def relation(self, name: str) -> frozenset:
        return self._rel[name]

    @property
    def relations(self) -> dict[str, frozenset]:
        return dict(self._rel)

    def holds(self, name: str, tup: Sequence[int]) -> bool:
        return tuple(tup) in self._rel[name]

    def neighbours(self, a: int) -> frozenset:
        return self._adj[a]

    def facts_at(self, a: int) -> list[tuple[int, tuple]]:
        """All (symbol index, tuple) facts containing ``a``; built lazily."""
        index = self._cache.get("facts_at")
        if index is None:
            index = [[] for _ in range(self.size)]
            for i, sym in enumerate(self.signature):
                for t in self._rel[sym.name]:
                    for e in set(t):
                        index[e].append((i, t))
            self._cache["facts_at"] = index
        return index[a]

    def __eq__(self, other):
        return (
            isinstance(other, Structure)
            and self.signature == other.signature
            and self.size == other.size
            and self._rel == other._rel
        )

    def __hash__(self):
        return hash((self.signature, self.size, tuple(sorted((k, len(v)) for k, v in self._rel.items()))))

    def __repr__(self):
        nfacts = sum(len(v) for v in self._rel.values())
        return f"Structure(size={self.size}, facts={nfacts}, signature={self.signature.header()!r})"

    def check_element(self, a: int):
        if not (isinstance(a, int) and 0 <= a < self.size):
            raise StructureError(f"element {a!r} outside domain of size {self.size}")


def degree(S: Structure) -> int:
    return max((len(S.neighbours(a)) for a in S.domain), default=0)


def _bfs(S: Structure, sources: Iterable[int], radius=None) -> dict[int, int]:
    seen = {}
    queue = deque()
    for s in sources:
        if s not in seen:
            seen[s] = 0
            queue.append(s)
    while queue:
        u = queue.popleft()
        d = seen[u]
        if radius is not None and d >= radius:
            continue
        for v in S.neighbours(u):
            if v not in seen:
                seen[v] = d + 1
                queue.append(v)
    return seen


def dist(S: Structure, a: int, b: int):
    S.check_element(a)
    S.check_element(b)
    if a == b:
        return 0
    return _bfs(S, [a]).get(b, INF)


def dist_tuples(S: Structure, abar: Sequence[int], bbar: Sequence[int]):
    if not abar or not bbar:
        raise StructureError("dist_tuples needs two nonempty tuples")
    for e in list(abar) + list(bbar):
        S.check_element(e)
    reach = _bfs(S, abar)
    return min(reach.get(b, INF) for b in bbar)


def neighbourhood(S: Structure, abar: Iterable[int], radius: int) -> frozenset:
    abar = list(abar)
    for e in abar:
        S.check_element(e)
    return frozenset(_bfs(S, abar, radius))


def distances_from(S: Structure, sources: Iterable[int], radius=None) -> dict[int, int]:
    """BFS distances from a set of sources, cut off at ``radius``."""
    return _bfs(S, list(sources), radius)


def induced_substructure(S: Structure, subset: Iterable[int]) -> tuple[Structure, dict[int, int]]:
    """Restrict ``S`` to ``subset``; returns the substructure and old->new renaming."""
    elems = sorted(set(subset))
    for e in elems:
        S.check_element(e)
    ren = {e: i for i, e in enumerate(elems)}
    rels = {}
    for sym in S.signature:
        rels[sym.name] = [
            tuple(ren[e] for e in t) for t in S.relation(sym.name) if all(e in ren for e in t)
        ]
    return Structure(S.signature, len(elems), rels), ren


def reduct(S: Structure, sig: Signature | int) -> Structure:
    if isinstance(sig, int):
        try:
            sig = S.signature.prefix(sig)
        except StructureError as exc:
            raise StructureError(str(exc)) from None
    if not sig.is_prefix_of(S.signature):
        raise StructureError("reduct signature must be a prefix of the structure's signature")
    if sig == S.signature:
        return S
    rels = {s.name: S.relation(s.name) for s in sig}
    base = S.base if S.base is not None else None
    if sig.tau_len == len(sig) and base is not None:
        return base
    return Structure(sig, S.size, rels, origin=S.origin, base=base)


# -- text format ---------------------------------------------------------

def parse_signature_header(line: str) -> Signature:
    m = re.match(r"^\s*(signature|sigma)\b(.*)\|\s*tau\s*=\s*(\d+)\s*$", line)
    if not m:
        raise StructureError(f"bad signature header: {line.strip()!r}")
    syms = []
    for tok in m.group(2).split():
        name, _, ar = tok.partition("/")
        if not ar.isdigit():
            raise StructureError(f"bad symbol declaration {tok!r} (expected NAME/ARITY)")
        syms.append((name, int(ar)))
    return Signature.of(syms, int(m.group(3)))


def _content_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def parse_structure(text: str) -> Structure:
    lines = list(_content_lines(text))
    if len(lines) < 2:
        raise StructureError("structure text needs a signature header and a domain line")
    sig = parse_signature_header(lines[0][1])
    parts = lines[1][1].split()
    if len(parts) != 2 or parts[0] != "domain" or not parts[1].isdigit():
        raise StructureError(f"line {lines[1][0]}: expected 'domain n'")
    n = int(parts[1])
    rels: dict[str, list] = {s.name: [] for s in sig}
    for lineno, line in lines[2:]:
        toks = line.split()
        name = toks[0]
        if name not in rels:
            raise StructureError(f"line {lineno}: unknown relation {name!r}")
        try:
            tup = tuple(int(t) for t in toks[1:])
        except ValueError:
            raise StructureError(f"line {lineno}: elements must be integers") from None
        if len(tup) != sig.arity(name):
            raise StructureError(f"line {lineno}: {name} expects {sig.arity(name)} elements")
        rels[name].append(tup)
    return Structure(sig, n, rels)


def serialize_structure(S: Structure) -> str:
    out = [S.signature.header(), f"domain {S.size}"]
    for sym in S.signature:
        for t in sorted(S.relation(sym.name)):
            out.append(" ".join([sym.name, *map(str, t)]))
    return "\n".join(out) + "\n"
