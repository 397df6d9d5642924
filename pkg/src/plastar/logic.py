"""Formula syntax, the connective and aggregation libraries, and evaluation."""

from __future__ import annotations

import itertools
import math
import random
import re
from dataclasses import dataclass, field, fields
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .structures import Signature, Structure
from . import typeanalysis as ta


class FormulaError(ValueError):
    pass


class ParseError(FormulaError):
    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"position {position}: {message}"
        super().__init__(message)


class BindingError(FormulaError):
    pass


class SemanticsError(FormulaError):
    pass


class ResourceError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# syntax tree

class Formula:
    @property
    def free_vars(self) -> tuple[str, ...]:
        fv = self.__dict__.get("_fv")
        if fv is None:
            fv = tuple(dict.fromkeys(self._free()))
            object.__setattr__(self, "_fv", fv)
        return fv

    def _free(self) -> Iterable[str]:
        return ()

    def children(self) -> tuple["Formula", ...]:
        return ()

    def __str__(self):
        return to_text(self)


def _cached_hash(self):
    h = self.__dict__.get("_h")
    if h is None:
        h = hash((type(self).__name__,) + tuple(getattr(self, f.name) for f in fields(self) if f.compare))
        object.__setattr__(self, "_h", h)
    return h


@dataclass(frozen=True)
class Const(Formula):
    value: float

    def __post_init__(self):
        v = float(self.value)
        if not (0.0 <= v <= 1.0):
            raise FormulaError(f"constant {self.value} outside [0, 1]")
        object.__setattr__(self, "value", v)


TOP = Const(1.0)
BOT = Const(0.0)


@dataclass(frozen=True)
class Eq(Formula):
    left: str
    right: str

    def _free(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Atom(Formula):
    rel: str
    args: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))

    def _free(self):
        return self.args


@dataclass(frozen=True)
class DistLeq(Formula):
    left: str
    right: str
    bound: int

    def __post_init__(self):
        if int(self.bound) != self.bound or self.bound < 0:
            raise FormulaError("distance bound must be a natural number")

    def _free(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Conn(Formula):
    name: str
    args: tuple[Formula, ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))

    def _free(self):
        for a in self.args:
            yield from a.free_vars

    def children(self):
        return self.args


@dataclass(frozen=True)
class Agg(Formula):
    name: str
    values: tuple[Formula, ...]
    bound: tuple[str, ...]
    conds: tuple[Formula, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "conds", tuple(self.conds))
        object.__setattr__(self, "bound", tuple(self.bound))
        if not self.bound:
            raise FormulaError("an aggregation must bind at least one variable")
        if len(set(self.bound)) != len(self.bound):
            raise FormulaError(f"repeated bound variable in {self.bound}")
        if len(self.values) != len(self.conds) or not self.values:
            raise FormulaError("an aggregation needs as many conditions as value formulas")

    def _free(self):
        for f in self.values + self.conds:
            for v in f.free_vars:
                if v not in self.bound:
                    yield v

    def children(self):
        return self.values + self.conds


@dataclass(frozen=True)
class TypeAtom(Formula):
    """Holds iff the argument tuple realizes the given neighbourhood/closure type."""

    type: ta.LocalType
    args: tuple[str, ...]
    label: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if len(self.args) != self.type.arity:
            raise FormulaError(f"type of arity {self.type.arity} applied to {len(self.args)} variables")
        if not self.label:
            object.__setattr__(self, "label", self.type.name)

    def _free(self):
        return self.args


for _cls in (Const, Eq, Atom, DistLeq, Conn, Agg, TypeAtom):
    _cls.__hash__ = _cached_hash


def exists(bound, body: Formula) -> Agg:
    bound = (bound,) if isinstance(bound, str) else tuple(bound)
    return Agg("max", (body,), bound, (TOP,))


def forall(bound, body: Formula) -> Agg:
    bound = (bound,) if isinstance(bound, str) else tuple(bound)
    return Agg("min", (body,), bound, (TOP,))


def conj(*args: Formula) -> Formula:
    return args[0] if len(args) == 1 else Conn("and", args)


def walk(phi: Formula):
    """Post-order traversal."""
    for c in phi.children():
        yield from walk(c)
    yield phi


def is_aggregation_free(phi: Formula) -> bool:
    return not any(isinstance(n, Agg) for n in walk(phi))


def relations_used(phi: Formula) -> set[str]:
    out = set()
    for n in walk(phi):
        if isinstance(n, Atom):
            out.add(n.rel)
        elif isinstance(n, TypeAtom):
            out.update(s.name for s in n.type.scope)
    return out


def check_scoping(phi: Formula, outer: frozenset = frozenset()):
    """Reject aggregations that rebind a variable already bound or free outside."""
    if isinstance(phi, Agg):
        clash = set(phi.bound) & outer
        if clash:
            raise BindingError(f"aggregation rebinds variable(s) {sorted(clash)} of an enclosing scope")
        inner = outer | set(phi.bound)
        for c in phi.children():
            check_scoping(c, inner)
    else:
        for c in phi.children():
            check_scoping(c, outer)


def rename(phi: Formula, mapping: Mapping[str, str]) -> Formula:
    """Rename free variables (bound variables are left alone)."""
    if not mapping:
        return phi
    m = lambda v: mapping.get(v, v)
    if isinstance(phi, Const):
        return phi
    if isinstance(phi, Eq):
        return Eq(m(phi.left), m(phi.right))
    if isinstance(phi, Atom):
        return Atom(phi.rel, tuple(map(m, phi.args)))
    if isinstance(phi, DistLeq):
        return DistLeq(m(phi.left), m(phi.right), phi.bound)
    if isinstance(phi, TypeAtom):
        return TypeAtom(phi.type, tuple(map(m, phi.args)), phi.label)
    if isinstance(phi, Conn):
        return Conn(phi.name, tuple(rename(a, mapping) for a in phi.args))
    if isinstance(phi, Agg):
        inner = {k: v for k, v in mapping.items() if k not in phi.bound}
        if set(inner.values()) & set(phi.bound):
            raise FormulaError("renaming would capture a bound variable")
        return Agg(
            phi.name,
            tuple(rename(f, inner) for f in phi.values),
            phi.bound,
            tuple(rename(f, inner) for f in phi.conds),
        )
    raise TypeError(phi)


# ---------------------------------------------------------------------------
# function libraries

@dataclass(frozen=True)
class Connective:
    name: str
    arity: int | None  # None: any arity >= min_arity
    fn: Callable[..., float]
    min_arity: int = 1

    def accepts(self, k: int) -> bool:
        return k == self.arity if self.arity is not None else k >= self.min_arity

    def __call__(self, *xs: float) -> float:
        return self.fn(*xs)


CONTINUOUS, ADMISSIBLE, NEITHER = "continuous", "admissible", "neither"


@dataclass(frozen=True)
class AggregationFunction:
    name: str
    fn: Callable[[Sequence[float]], float]
    kind: str
    arity: int = 1  # number of input sequences

    def __call__(self, *seqs: Sequence[float]) -> float:
        return self.fn(*seqs)

    @property
    def continuous(self) -> bool:
        return self.kind == CONTINUOUS

    @property
    def admissible(self) -> bool:
        return self.kind in (CONTINUOUS, ADMISSIBLE)


def _implies(x, y):
    return min(1.0, 1.0 - x + y)


def _prod(*xs):
    out = 1.0
    for x in xs:
        out *= x
    return out


def _av(*xs):
    return math.fsum(xs) / len(xs)


def _gm(p):
    if any(v == 0 for v in p):
        return 0.0
    return math.exp(math.fsum(math.log(v) for v in p) / len(p))


def _tsum(p):
    return min(1.0, math.fsum(p))


def _noisy_or(p):
    out = 1.0
    for v in p:
        out *= 1.0 - v
    return 1.0 - out


def length_inv(beta: float = 1.0) -> Callable[[Sequence[float]], float]:
    if not 0 < beta <= 1:
        raise FormulaError("length exponent must lie in (0, 1]")
    return lambda p: len(p) ** (-beta)


class Library:
    """Registries of named connectives and aggregation functions."""

    def __init__(self):
        self.connectives: dict[str, Connective] = {}
        self.aggregations: dict[str, AggregationFunction] = {}

    def copy(self) -> "Library":
        lib = Library()
        lib.connectives = dict(self.connectives)
        lib.aggregations = dict(self.aggregations)
        return lib

    def register_connective(self, name, fn, arity=None, min_arity=1, samples=200, seed=0):
        c = Connective(name, arity, fn, min_arity)
        rng = random.Random(seed)
        sizes = [arity] if arity is not None else [min_arity, min_arity + 1, min_arity + 3]
        corners = []
        for k in sizes:
            corners.extend(itertools.islice(itertools.product((0.0, 1.0), repeat=k), 64))
        points = corners + [
            tuple(rng.random() for _ in range(rng.choice(sizes))) for _ in range(samples)
        ]
        for xs in points:
            v = fn(*xs)
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                raise FormulaError(f"connective {name} leaves [0, 1]: {name}{xs} = {v}")
        self.connectives[name] = c
        return c

    def register_aggregation(self, name, fn, kind=NEITHER, arity=1, samples=100, seed=0):
        if kind not in (CONTINUOUS, ADMISSIBLE, NEITHER):
            raise FormulaError(f"unknown aggregation class {kind!r}")
        rng = random.Random(seed)
        for _ in range(samples):
            seqs = [[rng.random() for _ in range(rng.randint(1, 6))] for _ in range(arity)]
            v = fn(*seqs)
            if not 0.0 <= v <= 1.0:
                raise FormulaError(f"aggregation {name} leaves [0, 1]")
        f = AggregationFunction(name, fn, kind, arity)
        self.aggregations[name] = f
        return f

    def connective(self, name: str) -> Connective:
        try:
            return self.connectives[name]
        except KeyError:
            raise FormulaError(f"unknown connective {name!r}") from None

    def aggregation(self, name: str) -> AggregationFunction:
        f = self.aggregations.get(name)
        if f is not None:
            return f
        m = re.fullmatch(r"length_inv_(\d+)", name)
        if m:
            beta = float("0." + m.group(1))
            if beta > 0:
                return AggregationFunction(name, length_inv(beta), CONTINUOUS)
        raise FormulaError(f"unknown aggregation function {name!r}")

    def has_connective(self, name: str) -> bool:
        return name in self.connectives

    def has_aggregation(self, name: str) -> bool:
        try:
            self.aggregation(name)
            return True
        except FormulaError:
            return False


def _default_library() -> Library:
    lib = Library()
    lib.register_connective("not", lambda x: 1.0 - x, arity=1)
    lib.register_connective("and", lambda *xs: min(xs), min_arity=1)
    lib.register_connective("or", lambda *xs: max(xs), min_arity=1)
    lib.register_connective("implies", _implies, arity=2)
    lib.register_connective("prod", _prod, min_arity=1)
    lib.register_connective("av", _av, min_arity=1)
    lib.register_connective("id", lambda x: x, arity=1)
    lib.register_aggregation("max", lambda p: max(p), ADMISSIBLE)
    lib.register_aggregation("min", lambda p: min(p), ADMISSIBLE)
    lib.register_aggregation("am", lambda p: math.fsum(p) / len(p), CONTINUOUS)
    lib.register_aggregation("gm", _gm, CONTINUOUS)
    lib.register_aggregation("length_inv", length_inv(1.0), CONTINUOUS)
    lib.register_aggregation("tsum", _tsum, CONTINUOUS)
    lib.register_aggregation("noisy_or", _noisy_or, NEITHER)
    return lib


LIBRARY = _default_library()


def builtin_connectives() -> dict[str, Connective]:
    return dict(LIBRARY.connectives)


def builtin_aggregations() -> dict[str, AggregationFunction]:
    return dict(LIBRARY.aggregations)


# ---------------------------------------------------------------------------
# printer

def _fmt_const(v: float) -> str:
    if v == 1.0:
        return "top"
    if v == 0.0:
        return "bot"
    return repr(v)


def to_text(phi: Formula) -> str:
    if isinstance(phi, Const):
        return _fmt_const(phi.value)
    if isinstance(phi, Eq):
        return f"{phi.left} = {phi.right}"
    if isinstance(phi, Atom):
        return f"{phi.rel}({', '.join(phi.args)})"
    if isinstance(phi, DistLeq):
        return f"dist({phi.left}, {phi.right}) <= {phi.bound}"
    if isinstance(phi, TypeAtom):
        return f"@{phi.label}({', '.join(phi.args)})"
    if isinstance(phi, Conn):
        return f"{phi.name}({', '.join(to_text(a) for a in phi.args)})"
    if isinstance(phi, Agg):
        vals = ", ".join(to_text(f) for f in phi.values)
        conds = ", ".join(to_text(f) for f in phi.conds)
        return f"{phi.name}[{vals} : {' '.join(phi.bound)} : {conds}]"
    raise TypeError(phi)


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+)|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<op><=|[()\[\],:.=@]))"
)
_KEYWORDS = {"exists", "forall", "top", "bot", "dist"}


def _tokenize(text: str):
    pos = 0
    out = []
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        out.append((kind, m.group(kind), start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text, signature, library, types):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.sig = signature
        self.lib = library
        self.types = types or {}

    def peek(self, k=0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value):
        t = self.next()
        if t[1] != value or t[0] == "end":
            raise ParseError(f"expected {value!r}, found {t[1] or 'end of input'!r}", t[2])
        return t

    def var(self):
        t = self.next()
        if t[0] != "id" or t[1] in _KEYWORDS:
            raise ParseError(f"expected a variable, found {t[1] or 'end of input'!r}", t[2])
        return t[1]

    def nat(self):
        t = self.next()
        if t[0] != "num" or not t[1].isdigit():
            raise ParseError("expected a natural number", t[2])
        return int(t[1])

    def formula(self) -> Formula:
        kind, val, pos = self.peek()
        if kind == "num":
            self.next()
            v = float(val)
            if not 0.0 <= v <= 1.0:
                raise ParseError(f"constant {val} outside [0, 1]", pos)
            return Const(v)
        if kind == "op" and val == "@":
            self.next()
            name_tok = self.next()
            if name_tok[0] != "id":
                raise ParseError("expected a type name after '@'", name_tok[2])
            t = self.types.get(name_tok[1])
            if t is None:
                raise ParseError(f"unknown type {name_tok[1]!r}", name_tok[2])
            args = self.var_args()
            if len(args) != t.arity:
                raise ParseError(f"type {name_tok[1]} expects {t.arity} variables", name_tok[2])
            return TypeAtom(t, tuple(args), name_tok[1])
        if kind != "id":
            raise ParseError(f"unexpected {val or 'end of input'!r}", pos)
        if val == "top":
            self.next()
            return TOP
        if val == "bot":
            self.next()
            return BOT
        if val in ("exists", "forall"):
            self.next()
            bound = [self.var()]
            while not (self.peek()[0] == "op" and self.peek()[1] == "."):
                if self.peek()[1] == ",":
                    self.next()
                bound.append(self.var())
            self.expect(".")
            body = self.formula()
            return (exists if val == "exists" else forall)(tuple(bound), body)
        if val == "dist" and self.peek(1)[1] == "(":
            self.next()
            self.expect("(")
            a = self.var()
            self.expect(",")
            b = self.var()
            self.expect(")")
            self.expect("<=")
            return DistLeq(a, b, self.nat())
        nxt = self.peek(1)
        if nxt[1] == "=":
            a = self.var()
            self.next()
            return Eq(a, self.var())
        if nxt[1] == "[":
            return self.aggregation()
        if nxt[1] == "(":
            if self.lib.has_connective(val):
                return self.connective()
            return self.atom()
        raise ParseError(f"unexpected identifier {val!r}", pos)

    def var_args(self):
        self.expect("(")
        args = [self.var()]
        while self.peek()[1] == ",":
            self.next()
            args.append(self.var())
        self.expect(")")
        return args

    def atom(self):
        name, pos = self.next()[1:]
        args = self.var_args()
        if self.sig is not None:
            if name not in self.sig:
                raise ParseError(f"unknown relation symbol {name!r}", pos)
            if self.sig.arity(name) != len(args):
                raise ParseError(f"{name} has arity {self.sig.arity(name)}, got {len(args)} arguments", pos)
        return Atom(name, tuple(args))

    def flist(self, stop):
        out = [self.formula()]
        while self.peek()[1] == ",":
            self.next()
            out.append(self.formula())
        if self.peek()[1] != stop:
            t = self.peek()
            raise ParseError(f"expected {stop!r}, found {t[1] or 'end of input'!r}", t[2])
        return out

    def connective(self):
        name, pos = self.next()[1:]
        self.expect("(")
        args = self.flist(")")
        self.expect(")")
        c = self.lib.connective(name)
        if not c.accepts(len(args)):
            raise ParseError(f"connective {name} does not take {len(args)} arguments", pos)
        return Conn(name, tuple(args))

    def aggregation(self):
        name, pos = self.next()[1:]
        try:
            f = self.lib.aggregation(name)
        except FormulaError as exc:
            raise ParseError(str(exc), pos) from None
        self.expect("[")
        values = self.flist(":")
        self.expect(":")
        bound = [self.var()]
        while self.peek()[1] != ":":
            if self.peek()[1] == ",":
                self.next()
            bound.append(self.var())
        self.expect(":")
        conds = self.flist("]")
        self.expect("]")
        if len(values) != f.arity or len(conds) != f.arity:
            raise ParseError(f"aggregation {name} takes {f.arity} value/condition pair(s)", pos)
        try:
            return Agg(name, tuple(values), tuple(bound), tuple(conds))
        except FormulaError as exc:
            raise ParseError(str(exc), pos) from None


def parse(
    text: str, signature: Signature | None = None, library: Library | None = None,
    types: Mapping[str, ta.LocalType] | None = None,
) -> Formula:
    p = _Parser(text, signature, library or LIBRARY, types)
    phi = p.formula()
    end = p.peek()
    if end[0] != "end":
        raise ParseError(f"unexpected trailing input {end[1]!r}", end[2])
    check_scoping(phi)
    return phi


# ---------------------------------------------------------------------------
# static analyses

_01_CONNECTIVES = {"not", "and", "or", "implies", "id"}


def is_01_valued(phi: Formula, library: Library | None = None) -> bool:
    """Conservative syntactic check; ``False`` means "unknown"."""
    if isinstance(phi, Const):
        return phi.value in (0.0, 1.0)
    if isinstance(phi, (Eq, Atom, DistLeq, TypeAtom)):
        return True
    if isinstance(phi, Conn):
        return phi.name in _01_CONNECTIVES and all(is_01_valued(a) for a in phi.args)
    if isinstance(phi, Agg):
        return phi.name in ("max", "min") and all(is_01_valued(v) for v in phi.values)
    return False


def conditioning_subformulas(phi: Formula, library: Library | None = None):
    lib = library or LIBRARY
    return [(n, list(n.conds), lib.aggregation(n.name)) for n in walk(phi) if isinstance(n, Agg)]


# ---------------------------------------------------------------------------
# evaluation

DEFAULT_TUPLE_BUDGET = 10**7


def _order_args(phi: Formula, abar, variables):
    if isinstance(abar, Mapping):
        env = dict(abar)
    else:
        abar = tuple(abar)
        names = tuple(variables) if variables is not None else phi.free_vars
        if len(names) != len(abar):
            raise BindingError(
                f"formula has free variables {names}, got {len(abar)} element(s)"
            )
        env = dict(zip(names, abar))
    missing = [v for v in phi.free_vars if v not in env]
    if missing:
        raise BindingError(f"unassigned free variable(s): {', '.join(missing)}")
    return env


class Evaluator:
    """Evaluates formulas on one structure, memoizing aggregation subterms."""

    def __init__(self, S: Structure, library: Library | None = None, budget: int = DEFAULT_TUPLE_BUDGET, fast: bool = True):
        self.S = S
        self.lib = library or LIBRARY
        self.budget = budget
        self.fast = fast
        self.memo: dict = {}

    def __call__(self, phi: Formula, abar=(), variables=None) -> float:
        env = _order_args(phi, abar, variables)
        for v in phi.free_vars:
            self.S.check_element(env[v])
        return self.value(phi, env)

    def value(self, phi: Formula, env: Mapping[str, int]) -> float:
        S = self.S
        if isinstance(phi, Const):
            return phi.value
        if isinstance(phi, Eq):
            return 1.0 if env[phi.left] == env[phi.right] else 0.0
        if isinstance(phi, Atom):
            try:
                return 1.0 if tuple(env[v] for v in phi.args) in S.relation(phi.rel) else 0.0
            except KeyError:
                if phi.rel not in S.signature:
                    raise SemanticsError(f"relation {phi.rel!r} is not in the structure's signature") from None
                raise
        if isinstance(phi, DistLeq):
            ty = ta.typer(S, S.signature.tau_len)
            return 1.0 if env[phi.right] in ty.ball1(env[phi.left], phi.bound) else 0.0
        if isinstance(phi, TypeAtom):
            return float(ta.satisfies(S, tuple(env[v] for v in phi.args), phi.type))
        if isinstance(phi, Conn):
            c = self.lib.connective(phi.name)
            return c.fn(*(self.value(a, env) for a in phi.args))
        if isinstance(phi, Agg):
            key = (phi, tuple(env[v] for v in phi.free_vars))
            v = self.memo.get(key)
            if v is None:
                v = self._aggregate(phi, env)
                self.memo[key] = v
            return v
        raise TypeError(phi)

    def _aggregate(self, phi: Agg, env) -> float:
        F = self.lib.aggregation(phi.name)
        seqs = []
        for val_f, cond_f in zip(phi.values, phi.conds):
            tuples = self.bound_tuples(cond_f, phi.bound, env)
            if not tuples:
                return 0.0
            if len(phi.bound) == 1 and set(val_f.free_vars) <= set(phi.bound):
                vec = self._vector(val_f, phi.bound[0])
                seq = vec[np.fromiter((b[0] for b in tuples), dtype=np.int64, count=len(tuples))].tolist()
            else:
                seq = []
                for b in tuples:
                    e = dict(env)
                    e.update(zip(phi.bound, b))
                    seq.append(self.value(val_f, e))
            seqs.append(seq)
        out = F.fn(*seqs)
        if not -1e-12 <= out <= 1 + 1e-12:
            raise SemanticsError(f"aggregation {phi.name} produced {out} outside [0, 1]")
        return min(1.0, max(0.0, out))

    def _vector(self, phi: Formula, var: str) -> np.ndarray:
        """Values of a formula in one variable at every element."""
        key = ("vec", phi, var)
        vec = self.memo.get(key)
        if vec is None:
            vec = np.array([self.value(phi, {var: a}) for a in self.S.domain], dtype=float)
            self.memo[key] = vec
        return vec

    def bound_tuples(self, cond: Formula, bound: tuple[str, ...], env) -> list[tuple]:
        """Bound-variable tuples extending ``env`` where ``cond`` has value 1, sorted."""
        cands = candidates(self.S, cond, bound, env) if self.fast else None
        if cands is not None:
            tuples, exact = cands
            if exact:
                return sorted(tuples)
            out = []
            for b in sorted(tuples):
                e = dict(env)
                e.update(zip(bound, b))
                if self.value(cond, e) == 1.0:
                    out.append(b)
            return out
        total = self.S.size ** len(bound)
        if total > self.budget:
            raise ResourceError(f"aggregation over {len(bound)} variable(s) would scan {total} tuples (budget {self.budget})")
        out = []
        for b in itertools.product(self.S.domain, repeat=len(bound)):
            e = dict(env)
            e.update(zip(bound, b))
            if self.value(cond, e) == 1.0:
                out.append(b)
        return out

    def satisfying(self, cond: Formula, bound: tuple[str, ...], env) -> list[dict]:
        """Environments extending ``env`` over ``bound`` where ``cond`` has value 1, in tuple order."""
        out = []
        for b in self.bound_tuples(cond, bound, env):
            e = dict(env)
            e.update(zip(bound, b))
            out.append(e)
        return out


def evaluator(S: Structure, library: Library | None = None) -> Evaluator:
    """The shared evaluator for ``S`` with the default library."""
    if library is not None and library is not LIBRARY:
        return Evaluator(S, library)
    ev = S._cache.get("evaluator")
    if ev is None:
        ev = Evaluator(S)
        S._cache["evaluator"] = ev
    return ev


def evaluate(S: Structure, phi: Formula, abar=(), variables=None, library: Library | None = None) -> float:
    return evaluator(S, library)(phi, abar, variables)


# -- candidate sets for conditions -------------------------------------------

def candidates(S: Structure, cond: Formula, bound: Sequence[str], env) -> tuple[Iterable[tuple], bool] | None:
    """A superset of the bound-variable tuples satisfying ``cond``, or None.

    The flag says whether every returned tuple is known to satisfy ``cond``.
    """
    if isinstance(cond, Const):
        return ([], True) if cond.value < 1.0 else None
    if isinstance(cond, Conn) and cond.name == "and":
        for part in cond.args:
            if set(bound) <= set(part.free_vars):
                c = candidates(S, part, bound, env)
                if c is not None:
                    return c[0], c[1] and len(cond.args) == 1
        return None
    if isinstance(cond, Eq):
        if cond.left in bound and cond.right not in bound and len(bound) == 1:
            return [(env[cond.right],)], True
        if cond.right in bound and cond.left not in bound and len(bound) == 1:
            return [(env[cond.left],)], True
        return None
    if isinstance(cond, Atom):
        return _atom_candidates(S, cond, bound, env)
    if isinstance(cond, DistLeq):
        if len(bound) == 1:
            (y,) = bound
            other = cond.right if cond.left == y else cond.left if cond.right == y else None
            if other is not None and other not in bound:
                ball = ta.typer(S, S.signature.tau_len).ball1(env[other], cond.bound)
                return [(b,) for b in ball], True
        return None
    if isinstance(cond, TypeAtom):
        return _type_candidates(S, cond, bound, env)
    return None


def _atom_candidates(S, cond: Atom, bound, env):
    if not set(bound) <= set(cond.args):
        return None
    outer = [(i, env[v]) for i, v in enumerate(cond.args) if v not in bound]
    if not outer:
        return None
    i0, a0 = outer[0]
    ri = S.signature.index(cond.rel)
    found = set()
    for rj, t in S.facts_at(a0):
        if rj != ri or any(t[i] != a for i, a in outer):
            continue
        assign = {}
        ok = True
        for v, e in zip(cond.args, t):
            if v in bound:
                if assign.setdefault(v, e) != e:
                    ok = False
                    break
        if ok:
            found.add(tuple(assign[v] for v in bound))
    return found, True


_MISSING = object()


def _type_candidates(S, cond: TypeAtom, bound, env):
    t = cond.type
    args = cond.args
    if len(set(args)) != len(args) or not set(bound) <= set(args):
        return None
    try:
        scope_len = ta._scope_len_of_type(S, t)
    except ta.TypeError_:
        return None
    ty = ta.typer(S, scope_len)
    ypos = tuple(i for i, v in enumerate(args) if v in bound)
    xpos = tuple(i for i, v in enumerate(args) if v not in bound)
    # cached on the typer, which worlds share with their base for base-only types
    key = ("cands", t.cert, xpos, ypos, tuple(bound.index(args[i]) for i in ypos),
           tuple(env[args[i]] for i in xpos))
    hit = ty._pairs.get(key, _MISSING)
    if hit is _MISSING:
        hit = _type_candidates_raw(ty, t, args, bound, env, xpos, ypos, scope_len)
        if hit is not None:
            hit = (sorted(hit[0]), hit[1])
        ty._pairs[key] = hit
    return hit


def _type_candidates_raw(ty, t, args, bound, env, xpos, ypos, scope_len):
    C, anchors, rare = t.configuration()
    from .structures import INF, distances_from

    near_src = [anchors[i] for i in xpos] + (sorted(rare) if t.kind == "closure" else [])
    reach = distances_from(C, near_src) if near_src else {}
    dists = [reach.get(anchors[i], INF) for i in ypos]
    order = [args[i] for i in ypos]
    if all(d is not INF for d in dists):
        # every bound anchor lies near the free anchors or the rare part
        centers = [env[args[i]] for i in xpos]
        if t.kind == "closure":
            centers += sorted(ty.rare(t.radius))
        if not centers:
            return None
        pools = [sorted(ty.ball(centers, d)) for d in dists]
        found = []
        xsub = tuple(env[args[i]] for i in xpos)
        for combo in itertools.product(*pools):
            if ty.split_type(xsub, xpos, combo, ypos, t.radius, scope_len, t.kind) == t:
                found.append(combo)
        return _reorder(found, order, bound), True
    if all(d is INF for d in dists) and ypos:
        xsub = tuple(env[args[i]] for i in xpos)
        return _reorder(_far_candidates(ty, t, xsub, xpos, ypos, scope_len), order, bound), True
    return None


def _reorder(found, order, bound):
    if tuple(order) == tuple(bound):
        return found
    idx = [order.index(v) for v in bound]
    return [tuple(c[i] for i in idx) for c in found]


def _far_candidates(ty: ta.Typer, t: ta.LocalType, xsub, xpos, ypos, scope_len):
    """Tuples realizing ``t`` when its bound anchors sit in components of their own."""
    key = ("far", t.cert, xpos, ypos)
    split = ty._pairs.get(key)
    if split is None:
        split = _split_target(t, xpos, ypos)
        ty._pairs[key] = split
    if split is None:
        return []
    xcomps, ycomps = split
    xc, xelems, sep = ty.xinfo(xsub, xpos, t.radius, scope_len, t.kind)
    if xc != xcomps:
        return []
    index = _y_index(ty, ypos, t.radius, scope_len)
    out = []
    for b in index.get(ycomps, ()):
        if any(e in sep for e in b):
            continue
        _, yelems = ty.yinfo(b, ypos, t.radius, scope_len)
        if ty._linked(xelems, yelems, scope_len):
            continue
        out.append(b)
    return out


def _split_target(t: ta.LocalType, xpos, ypos):
    """Split the canonical components of ``t`` into its free part and its bound part."""
    ys = set(ypos)
    xcomps, ycomps = [], []
    for comp in t.comps:
        verts = comp[0]
        labels = {p for lab, _ in verts for p in lab}
        rare = any(r for _, r in verts)
        if labels and labels <= ys and not rare:
            ycomps.append(comp)
        elif labels & ys:
            return None
        else:
            xcomps.append(comp)
    return tuple(sorted(xcomps)), tuple(sorted(ycomps))


def _y_index(ty: ta.Typer, ypos, radius, scope_len) -> dict:
    key = ("yindex", ypos, radius, scope_len)
    index = ty._pairs.get(key)
    if index is None:
        index = {}
        S = ty.S
        total = S.size ** len(ypos)
        if total > DEFAULT_TUPLE_BUDGET:
            raise ResourceError(f"indexing {total} tuples exceeds the tuple budget")
        for b in itertools.product(S.domain, repeat=len(ypos)):
            yc, _ = ty.yinfo(b, ypos, radius, scope_len)
            index.setdefault(yc, []).append(b)
        ty._pairs[key] = index
    return index


# ---------------------------------------------------------------------------
# PageRank formulas

def pagerank_corpus(k: int, link: str = "E", types: Sequence[ta.LocalType] | None = None, var: str = "x") -> Formula:
    """Stage-``k`` PageRank approximation as a formula in one free variable.

    With ``types`` (binary closure types over the base signature) the
    conditions are split by type and averaged, which keeps every aggregation
    conditioned on a type.
    """
    if k < 0:
        raise FormulaError("PageRank stage must be nonnegative")
    if types is not None:
        types = list(types)
        if not types:
            raise FormulaError("the type-conditioned PageRank needs at least one type")
        for t in types:
            if t.arity != 2:
                raise FormulaError("PageRank condition types must be binary")
        return _pr_typed(k, var, link, types, [0])
    return _pr_plain(k, var, link, [0])


def _fresh(counter, base):
    counter[0] += 1
    return f"{base}{counter[0]}"


def _pr_plain(k, v, link, counter) -> Formula:
    if k == 0:
        return Agg("length_inv", (Eq(v, v),), (_fresh(counter, "y"),), (TOP,))
    y = _fresh(counter, "y")
    z = _fresh(counter, "z")
    psi = Agg("length_inv", (Eq(y, y),), (z,), (Atom(link, (y, z)),))
    inner = _pr_plain(k - 1, y, link, counter)
    body = Conn("and", (Eq(v, v), Conn("prod", (inner, psi))))
    return Agg("tsum", (body,), (y,), (Atom(link, (y, v)),))


def _pr_typed(k, v, link, types, counter) -> Formula:
    def chi(i, a, b):
        return TypeAtom(types[i], (a, b), f"chi{i + 1}")

    if k == 0:
        parts = []
        for i in range(len(types)):
            y = _fresh(counter, "y")
            parts.append(Agg("length_inv", (Eq(v, v),), (y,), (chi(i, v, y),)))
        return Conn("av", tuple(parts))
    parts = []
    for i in range(len(types)):
        y = _fresh(counter, "y")
        psis = []
        for j in range(len(types)):
            z = _fresh(counter, "z")
            psis.append(Agg("length_inv", (Eq(y, y),), (z,), (Conn("and", (chi(j, y, z), Atom(link, (y, z)))),)))
        psi = Conn("av", tuple(psis))
        inner = _pr_typed(k - 1, y, link, types, counter)
        body = Conn("and", (Eq(v, v), Conn("prod", (inner, psi))))
        parts.append(Agg("tsum", (body,), (y,), (Conn("and", (chi(i, y, v), Atom(link, (y, v)))),)))
    return Conn("av", tuple(parts))
