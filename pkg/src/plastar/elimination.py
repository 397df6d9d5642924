"""Basic formulas and the compiler that eliminates aggregations.

A basic formula maps complete closure types (at a fixed radius, the level)
to constants.  Aggregation-free formulas and connectives compile exactly.
An aggregation whose conditions only reach a bounded part of the structure
compiles exactly as a local function of a larger closure type.  An
aggregation over strongly unbounded conditions compiles to the limit of the
aggregation function on the estimated proportions of the value points.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .structures import INF, Structure, distances_from
from . import logic as lg
from . import typeanalysis as ta
from .network import (
    DEFAULT_DELTA,
    EXACT_BUDGET,
    PlaNetwork,
    ResourceError,
    estimate_probability,
    exact_distribution,
    hoeffding_radius,
    sample_worlds,
    world_count,
)
from .sequences import BaseSequence, generate

TOL = 1e-12


class EliminationError(ValueError):
    pass


class EstimationError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# limits along convergence-testing sequences

@dataclass
class CtParameters:
    points: list[list[float]]
    proportions: list[list[float]]

    def __post_init__(self):
        if len(self.points) != len(self.proportions) or not self.points:
            raise ValueError("need one (points, proportions) pair per input sequence")
        for c, a in zip(self.points, self.proportions):
            if len(c) != len(a) or not c:
                raise ValueError("points and proportions must have equal nonzero length")
            if any(x < 0 for x in a) or abs(math.fsum(a) - 1.0) > 1e-9:
                raise ValueError(f"proportions {a} must be nonnegative and sum to 1")
            if any(not 0.0 <= x <= 1.0 for x in c):
                raise ValueError("convergence points must lie in [0, 1]")


@dataclass
class CtResult:
    value: float
    delta: float
    length: int

    def __float__(self):
        return self.value


def _ct_counts(props, N):
    # largest fractional remainder first, ties to the lower index
    raw = [a * N for a in props]
    counts = [int(math.floor(r)) for r in raw]
    order = sorted(range(len(props)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: N - sum(counts)]:
        counts[i] += 1
    return counts


def _ct_sequence(points, props, N):
    seq = []
    for c, k in zip(points, _ct_counts(props, N)):
        seq.extend([c] * k)
    return seq


def _realization_error(params: CtParameters, N) -> float:
    return max(
        abs(k / N - a)
        for props in params.proportions
        for k, a in zip(_ct_counts(props, N), props)
    )


def ct_limit(F, params: CtParameters, tol: float = 1e-6, n0: int = 16, cap: int = 2**20) -> CtResult:
    """Limit of ``F`` along sequences whose value frequencies approach the proportions.

    The length doubles until consecutive values agree within ``tol`` and the
    realized frequencies are within ``tol`` of the proportions, which rules
    out stopping on a rounding coincidence.
    """
    if isinstance(F, str):
        F = lg.LIBRARY.aggregation(F)
    if F.kind == lg.NEITHER:
        raise EliminationError(f"{F.name} is neither continuous nor admissible")
    if F.kind == lg.ADMISSIBLE and any(a <= 0 for props in params.proportions for a in props):
        raise EliminationError(f"{F.name} is only admissible: every proportion must be positive")
    if len(params.points) != F.arity:
        raise ValueError(f"{F.name} takes {F.arity} sequence(s)")

    def at(N):
        return F.fn(*(_ct_sequence(c, a, N) for c, a in zip(params.points, params.proportions)))

    N = n0
    prev = at(N)
    while N * 2 <= cap:
        N *= 2
        cur = at(N)
        delta = abs(cur - prev)
        if delta < tol and _realization_error(params, N) < tol:
            return CtResult(0.0 if cur < tol else cur, delta, N)
        prev = cur
    raise ConvergenceError(f"{F.name} did not stabilize within sequences of length {cap}")


# ---------------------------------------------------------------------------
# basic formulas

@dataclass
class Case:
    type: ta.LocalType
    value: float
    mode: str = "exact"


class BasicFormula:
    """First-match case list over complete closure types; 0 when no case matches."""

    def __init__(self, level: int, variables: Sequence[str], scope_len: int, cases=(), extender=None):
        self.level = level
        self.variables = tuple(variables)
        self.scope_len = scope_len
        self.cases: dict[bytes, Case] = {}
        self.extender = extender
        self.coverage: list[str] = []
        self.ledger: list[dict] = []
        self.misses = 0
        for c in cases:
            self.add(c)

    @property
    def arity(self) -> int:
        return len(self.variables)

    def add(self, case: Case):
        if case.type.radius != self.level or case.type.arity != self.arity:
            raise ValueError("case type does not match the formula's level/arity")
        self.cases.setdefault(case.type.cert, case)

    def lookup(self, t: ta.LocalType, witness=None) -> float:
        c = self.cases.get(t.cert)
        if c is not None:
            return c.value
        if self.extender is not None and witness is not None:
            value, mode = self.extender(*witness)
            self.add(Case(t, value, mode))
            return value
        self.misses += 1
        return 0.0

    def type_at(self, S: Structure, tup: tuple, fixed: Sequence[int] = ()) -> ta.LocalType:
        ty = ta.typer(S, self.scope_len)
        if fixed and len(fixed) < len(tup):
            xpos = tuple(fixed)
            ypos = tuple(i for i in range(len(tup)) if i not in fixed)
            return ty.split_type(
                tuple(tup[i] for i in xpos), xpos, tuple(tup[i] for i in ypos), ypos,
                self.level, self.scope_len, "closure",
            )
        return ty.type_of(tuple(tup), self.level, self.scope_len, "closure")

    def value(self, S: Structure, abar=(), fixed: Sequence[str] | None = None) -> float:
        if isinstance(abar, dict):
            tup = tuple(abar[v] for v in self.variables)
        else:
            tup = tuple(abar)
        if len(tup) != self.arity:
            raise lg.BindingError(f"basic formula over {self.variables} needs {self.arity} elements")
        fpos = [i for i, v in enumerate(self.variables) if fixed and v in fixed]
        t = self.type_at(S, tup, fpos)
        return self.lookup(t, (S, tup))

    __call__ = value

    def constants(self) -> list[float]:
        return sorted({c.value for c in self.cases.values()})

    def sorted_cases(self) -> list[Case]:
        return [self.cases[k] for k in sorted(self.cases)]

    def to_text(self) -> str:
        lines = [f"basic level={self.level} vars={','.join(self.variables)} scope={self.scope_len}"]
        for c in self.sorted_cases():
            lines.append(f"case {c.type.hex()} -> {c.value!r} # mode={c.mode}")
        return "\n".join(lines) + "\n"

    def __repr__(self):
        return f"BasicFormula(level={self.level}, vars={self.variables}, cases={len(self.cases)})"


def parse_basic(text: str) -> BasicFormula:
    lines = [l.strip() for l in text.splitlines() if l.strip() and not l.strip().startswith("#")]
    if not lines or not lines[0].startswith("basic"):
        raise ValueError("basic formula text must start with a 'basic level=...' line")
    head = dict(tok.split("=", 1) for tok in lines[0].split()[1:])
    variables = tuple(v for v in head.get("vars", "").split(",") if v)
    basic = BasicFormula(int(head["level"]), variables, int(head["scope"]))
    for line in lines[1:]:
        body, _, comment = line.partition("#")
        parts = body.split()
        if len(parts) != 4 or parts[0] != "case" or parts[2] != "->":
            raise ValueError(f"bad case line {line!r}")
        mode = comment.strip().removeprefix("mode=") or "exact"
        basic.add(Case(ta.type_from_cert(parts[1]), float(parts[3]), mode))
    return basic


# ---------------------------------------------------------------------------
# world pools

class WorldPool:
    """Base structures or sampled worlds at a list of probe sizes."""

    def __init__(self, seq: BaseSequence | None, net: PlaNetwork | None, probes: Sequence[int],
                 samples: int = 8, seed=0, structures: Sequence[Structure] | None = None):
        self.seq = seq
        self.net = net if net is not None and net.symbols else None
        self.probes = tuple(probes)
        self.samples = samples
        self.seed = seed
        self._fixed = list(structures) if structures is not None else None
        self._cache: dict[int, list] = {}

    @classmethod
    def of(cls, structures: Sequence[Structure]) -> "WorldPool":
        return cls(None, None, (), structures=structures)

    @property
    def scope_len(self) -> int:
        if self._fixed is not None:
            return len(self._fixed[0].signature)
        if self.net is not None:
            return len(self.net.signature)
        return len(self.seq.signature)

    def base(self, n: int) -> Structure:
        return generate(self.seq, n)

    def worlds(self, n: int) -> list[Structure]:
        w = self._cache.get(n)
        if w is None:
            B = self.base(n)
            w = [B] if self.net is None else sample_worlds(self.net, B, self.samples, seed=(self.seed, n))
            self._cache[n] = w
        return w

    def all(self) -> Iterable[Structure]:
        if self._fixed is not None:
            yield from self._fixed
            return
        for n in self.probes:
            yield from self.worlds(n)

    def fresh(self, n: int, count: int, salt: int = 1) -> list[Structure]:
        B = self.base(n)
        if self.net is None:
            return [B]
        return sample_worlds(self.net, B, count, seed=(self.seed, n, salt))


def _scan_tuples(S: Structure, k: int):
    return itertools.product(S.domain, repeat=k)


def _realize(pool: WorldPool, k: int, level: int, budget: int, fn: Callable, basic: BasicFormula):
    """Scan tuples of pool worlds (smallest first) and record a case per new type."""
    scanned = 0
    structures = sorted(pool.all(), key=lambda S: S.size)
    for S in structures:
        if scanned + S.size**k > budget and scanned:
            break
        scanned += S.size**k
        ty = ta.typer(S, basic.scope_len)
        for tup in _scan_tuples(S, k):
            if k >= 2:
                t = ty.split_type(tup[:1], (0,), tup[1:], tuple(range(1, k)), level, basic.scope_len, "closure")
            else:
                t = ty.type_of(tup, level, basic.scope_len, "closure")
            if t.cert not in basic.cases:
                value, mode = fn(S, tup)
                basic.add(Case(t, value, mode))
        basic.coverage.append(f"size={S.size} tuples={S.size**k}")
    return basic


def _level_of(phi: lg.Formula) -> int:
    return max((n.bound // 2 for n in lg.walk(phi) if isinstance(n, lg.DistLeq)), default=0)


def compile_aggregation_free(phi: lg.Formula, pool, variables: Sequence[str] | None = None,
                             budget: int = 2 * 10**5) -> BasicFormula:
    if not lg.is_aggregation_free(phi):
        raise EliminationError("formula contains an aggregation")
    if not isinstance(pool, WorldPool):
        pool = WorldPool.of(list(pool))
    variables = tuple(variables) if variables is not None else phi.free_vars
    missing = set(phi.free_vars) - set(variables)
    if missing:
        raise lg.BindingError(f"variables {sorted(missing)} of the formula are not listed")

    def exact(S, tup):
        return lg.evaluate(S, phi, tup, variables), "exact"

    basic = BasicFormula(_level_of(phi), variables, pool.scope_len, extender=exact)
    return _realize(pool, len(variables), basic.level, budget, exact, basic)


def compose_connective(name: str, inputs: Sequence[BasicFormula], pool, variables: Sequence[str] | None = None,
                       budget: int = 2 * 10**5, library: lg.Library | None = None) -> BasicFormula:
    lib = library or lg.LIBRARY
    C = lib.connective(name)
    if not C.accepts(len(inputs)):
        raise EliminationError(f"connective {name} does not take {len(inputs)} inputs")
    if not isinstance(pool, WorldPool):
        pool = WorldPool.of(list(pool))
    if variables is None:
        variables = tuple(dict.fromkeys(v for b in inputs for v in b.variables))
    variables = tuple(variables)
    for b in inputs:
        if not set(b.variables) <= set(variables):
            raise EliminationError("input variables are not covered")
    level = max((b.level for b in inputs), default=0)
    modes = {c.mode for b in inputs for c in b.cases.values()}
    mode = "exact" if modes <= {"exact"} else "empirical"

    def combine(S, tup):
        env = dict(zip(variables, tup))
        return C.fn(*(b.value(S, env) for b in inputs)), mode

    basic = BasicFormula(level, variables, pool.scope_len, extender=combine)
    for b in inputs:
        basic.ledger.extend(b.ledger)
    return _realize(pool, len(variables), level, budget, combine, basic)


# ---------------------------------------------------------------------------
# aggregation elimination

@dataclass
class EliminationConfig:
    probes: tuple = (64, 128, 256)
    samples: int = 16
    seed: int = 0
    kappa: int = 0
    xi: int | None = None
    floor: float = 0.01
    stab_tol: float = 0.05
    anchors_per_world: int = 8
    scan_budget: int = 2 * 10**5
    empty_cutoff: float = 0.5
    ct_tol: float = 1e-6
    ct_n0: int = 16
    ct_cap: int = 2**20
    delta: float = DEFAULT_DELTA
    anchors_for_bounded: int = 2000


def _condition_type(cond: lg.Formula, bound: Sequence[str]):
    """The type atom of a condition that mentions every bound variable, if any."""
    parts = cond.args if isinstance(cond, lg.Conn) and cond.name == "and" else (cond,)
    for p in parts:
        if isinstance(p, lg.TypeAtom) and set(bound) <= set(p.args):
            return p
    return None


def _tau_part(t: ta.LocalType) -> ta.LocalType:
    return t if len(t.scope) == t.tau_len else ta.restrict_sig(t, t.tau_len)


def _radius_of(cond: lg.Formula) -> int:
    r = 0
    for n in lg.walk(cond):
        if isinstance(n, lg.TypeAtom):
            r = max(r, n.type.radius)
        elif isinstance(n, lg.DistLeq):
            r = max(r, n.bound // 2)
    return r


def _bounded_reach(t: ta.LocalType, ypos) -> int:
    """Distance from the free anchors and rare elements within which bound anchors must lie."""
    C, anchors, rare = t.configuration()
    src = [anchors[i] for i in range(t.arity) if i not in ypos]
    if t.kind == "closure":
        src += sorted(rare)
    d = distances_from(C, src) if src else {}
    reach = 0
    part = ta.sim_partition(t)
    for p in ypos:
        dp = d.get(anchors[p], INF)
        if dp is INF:
            block = part.block_of(p)
            dp = t.radius + (2 * t.radius + 1) * len(block)
        reach = max(reach, dp)
    return reach


class _AggContext:
    """Evaluates an aggregation with compiled value formulas at one anchor."""

    def __init__(self, agg: lg.Agg, basics: Sequence[BasicFormula], outer: Sequence[str]):
        self.agg = agg
        self.basics = basics
        self.outer = tuple(outer)
        self.F = lg.LIBRARY.aggregation(agg.name)

    def sequences(self, S: Structure, abar: tuple):
        env = dict(zip(self.outer, abar))
        ev = lg.evaluator(S)
        out = []
        for basic, cond in zip(self.basics, self.agg.conds):
            envs = ev.satisfying(cond, self.agg.bound, env)
            out.append([basic.value(S, e, fixed=self.outer) for e in envs])
        return out

    def value(self, S, abar) -> float:
        seqs = self.sequences(S, abar)
        if any(not s for s in seqs):
            return 0.0
        return self.F.fn(*seqs)


def _anchors_of(pool: WorldPool, S: Structure, k: int, level: int, scope_len: int):
    ty = ta.typer(S, scope_len)
    for tup in _scan_tuples(S, k):
        yield tup, ty.type_of(tup, level, scope_len, "closure")


def eliminate_one(agg: lg.Agg, basics: Sequence[BasicFormula], pool: WorldPool,
                  config: EliminationConfig | None = None, variables: Sequence[str] | None = None,
                  path: str = "") -> BasicFormula:
    config = config or EliminationConfig()
    F = lg.LIBRARY.aggregation(agg.name)
    where = f" at {path}" if path else ""
    if F.kind == lg.NEITHER:
        raise EliminationError(f"aggregation {agg.name}{where} is neither continuous nor admissible")
    outer = tuple(variables) if variables is not None else agg.free_vars
    bound = agg.bound
    if pool.seq is None:
        raise EliminationError("eliminating an aggregation needs a base sequence")
    verdicts = []
    for cond in agg.conds:
        if any(isinstance(n, lg.Agg) for n in lg.walk(cond)):
            raise EliminationError(f"condition {cond}{where} contains an aggregation")
        atom = _condition_type(cond, bound)
        if atom is None:
            verdicts.append((cond, None, None))
            continue
        ypos = tuple(i for i, v in enumerate(atom.args) if v in bound)
        cls = ta.classify(pool.seq, _tau_part(atom.type), ypos)
        verdicts.append((cond, atom, cls))
    bounded = [v[2] is not None and v[2].bounded for v in verdicts]
    ctx = _AggContext(agg, basics, outer)
    if all(bounded):
        return _eliminate_bounded(agg, ctx, verdicts, pool, config, outer, path)
    if any(bounded):
        raise EliminationError(
            f"aggregation {agg.name}{where} mixes bounded and unbounded conditions; split it first"
        )
    return _eliminate_unbounded(agg, ctx, verdicts, pool, config, outer, path)


def _eliminate_bounded(agg, ctx, verdicts, pool, config, outer, path) -> BasicFormula:
    reach = 0
    for cond, atom, cls in verdicts:
        ypos = tuple(i for i, v in enumerate(atom.args) if v in agg.bound)
        reach = max(reach, _bounded_reach(_tau_part(atom.type), ypos))
    inner = max([b.level for b in ctx.basics] + [_radius_of(c) for c in agg.conds])
    xi = config.xi if config.xi is not None else reach + inner
    k = len(outer)

    def local(S, tup):
        return ctx.value(S, tup), "exact"

    basic = BasicFormula(xi, outer, pool.scope_len, extender=local)
    seen: dict[bytes, float] = {}
    checked = 0
    for S in pool.all():
        for tup, t in _anchors_of(pool, S, k, xi, pool.scope_len):
            if checked >= config.anchors_for_bounded and t.cert in seen:
                continue
            v = ctx.value(S, tup)
            checked += 1
            prev = seen.get(t.cert)
            if prev is None:
                seen[t.cert] = v
                basic.add(Case(t, v, "exact"))
            elif abs(prev - v) > TOL:
                raise AssertionError(
                    f"aggregation value is not constant on a closure type ({prev} vs {v}); classification bug"
                )
        basic.coverage.append(f"size={S.size}")
    for b in ctx.basics:
        basic.ledger.extend(b.ledger)
    basic.ledger.append({
        "kind": "bounded", "path": path, "aggregation": agg.name, "level": xi,
        "cases": len(basic.cases), "anchors_checked": checked, "mode": "exact",
    })
    return basic


def _proportions(ctx: _AggContext, S: Structure, abar: tuple):
    """Per-condition (value -> share) maps plus condition sizes at one anchor."""
    seqs = ctx.sequences(S, abar)
    shares = []
    for s in seqs:
        if not s:
            shares.append(None)
            continue
        counts = {}
        for v in s:
            counts[v] = counts.get(v, 0) + 1
        shares.append({v: c / len(s) for v, c in counts.items()})
    return shares, [len(s) for s in seqs]


def _positivity(atom: lg.TypeAtom, cond: lg.Formula, bound, outer, S: Structure, abar) -> float | None:
    env = dict(zip(outer, abar))
    ev = lg.evaluator(S)
    full = len(ev.satisfying(cond, bound, env))
    tau_atom = lg.TypeAtom(_tau_part(atom.type), atom.args, atom.label)
    base = len(ev.satisfying(tau_atom, bound, env))
    return None if base == 0 else full / base


def _eliminate_unbounded(agg, ctx, verdicts, pool, config, outer, path) -> BasicFormula:
    F = ctx.F
    lam = max([b.level for b in ctx.basics] + [_radius_of(c) for c in agg.conds])
    gamma = config.xi if config.xi is not None else lam + max(lam, config.kappa)
    k = len(outer)
    m = len(agg.conds)
    scope_len = pool.scope_len
    # q-types realized anywhere in the pool
    qtypes: dict[bytes, ta.LocalType] = {}
    per_probe: dict[bytes, dict[int, list]] = {}
    rng = np.random.default_rng(lg_seed(config.seed, "anchors"))
    for n in pool.probes:
        for S in pool.worlds(n):
            groups: dict[bytes, list] = {}
            for tup, t in _anchors_of(pool, S, k, gamma, scope_len):
                qtypes.setdefault(t.cert, t)
                groups.setdefault(t.cert, []).append(tup)
            for cert, tups in groups.items():
                if len(tups) > config.anchors_per_world:
                    pick = np.sort(rng.choice(len(tups), config.anchors_per_world, replace=False))
                    tups = [tups[i] for i in pick]
                per_probe.setdefault(cert, {}).setdefault(n, []).extend((S, t) for t in tups)
    basic = BasicFormula(gamma, outer, scope_len)
    flags = []
    for cond, atom, cls in verdicts:
        if atom is None:
            flags.append("condition-without-type")
    for cert in sorted(qtypes):
        q = qtypes[cert]
        probe_values = {}
        record = {"kind": "empirical", "path": path, "aggregation": agg.name, "level": gamma,
                  "type": q.name, "probes": {}, "flags": list(flags)}
        final = None
        for n in pool.probes:
            anchors = per_probe.get(cert, {}).get(n)
            if not anchors:
                continue
            sums = [dict() for _ in range(m)]
            empties = [0] * m
            ratios = [[] for _ in range(m)]
            for S, abar in anchors:
                shares, sizes = _proportions(ctx, S, abar)
                for i in range(m):
                    if shares[i] is None:
                        empties[i] += 1
                        continue
                    for v, a in shares[i].items():
                        sums[i][v] = sums[i].get(v, 0.0) + a
                    cond, atom, _ = verdicts[i]
                    if atom is not None:
                        r = _positivity(atom, cond, agg.bound, outer, S, abar)
                        if r is not None:
                            ratios[i].append(r)
            count = len(anchors)
            empty_frac = max(e / count for e in empties)
            if empty_frac > config.empty_cutoff:
                value, params = 0.0, None
            else:
                points, props = [], []
                for i in range(m):
                    total = count - empties[i]
                    pts = sorted(sums[i])
                    al = [sums[i][v] / total for v in pts]
                    if F.kind == lg.ADMISSIBLE:
                        small = [(v, a) for v, a in zip(pts, al) if a < config.floor]
                        if small:
                            raise EliminationError(
                                f"aggregation {agg.name}{' at ' + path if path else ''} is only admissible but value "
                                f"{small[0][0]} has proportion {small[0][1]:.4g} below the floor {config.floor}"
                            )
                    points.append(pts)
                    props.append(al)
                params = CtParameters(points, props)
                value = ct_limit(F, params, config.ct_tol, config.ct_n0, config.ct_cap).value
            pos = []
            for i in range(m):
                if ratios[i]:
                    mean = sum(ratios[i]) / len(ratios[i])
                    pos.append((mean, mean - hoeffding_radius(len(ratios[i]), config.delta)))
            probe_values[n] = value
            record["probes"][n] = {
                "value": value, "anchors": count, "empty_fraction": empty_frac,
                "points": params.points if params else None,
                "proportions": params.proportions if params else None,
                "positivity": pos,
            }
            final = (value, pos, n)
        if final is None:
            continue
        value, pos, n_last = final
        for i, (mean, lower) in enumerate(pos):
            if lower <= config.floor and mean <= config.floor:
                raise EliminationError(
                    f"condition {agg.conds[i]} is not positive: relative frequency {mean:.4g} "
                    f"(lower bound {lower:.4g}) at n={n_last}"
                )
        tail = [probe_values[n] for n in pool.probes if n in probe_values][-3:]
        stable = len(tail) == 3 and max(tail) - min(tail) < config.stab_tol
        record["value"] = value
        record["stable"] = stable
        record["positive"] = all(mean > config.floor for mean, _ in pos) if pos else None
        record["mode"] = "empirical"
        basic.add(Case(q, value, "empirical"))
        basic.ledger.append(record)
    for b in ctx.basics:
        basic.ledger[:0] = b.ledger
    basic.coverage.extend(f"n={n} worlds={len(pool.worlds(n))}" for n in pool.probes)
    return basic


def lg_seed(seed, salt: str) -> list[int]:
    base = seed if isinstance(seed, (list, tuple)) else [seed]
    return [int(s) & (2**63 - 1) for s in base] + [sum(map(ord, salt))]


# ---------------------------------------------------------------------------
# the compiler

@dataclass
class Report:
    entries: list = field(default_factory=list)
    level: int = 0

    @property
    def all_exact(self) -> bool:
        return all(e.get("mode") == "exact" for e in self.entries)

    def lines(self) -> list[str]:
        out = [f"# level={self.level}"]
        for e in self.entries:
            parts = [f"estimate kind={e.get('kind')}"]
            for key in ("path", "aggregation", "type", "level", "value", "mode", "stable", "positive", "cases"):
                if key in e:
                    v = e[key]
                    parts.append(f"{key}={v:.6g}" if isinstance(v, float) else f"{key}={v}")
            if e.get("probes"):
                parts.append("probes=" + ",".join(
                    f"{n}:{p['value']:.6g}" for n, p in e["probes"].items()))
            if e.get("flags"):
                parts.append("flags=" + ",".join(e["flags"]))
            out.append(" ".join(parts))
        return out


def compile(phi: lg.Formula, seq: BaseSequence | None, net: PlaNetwork | None = None,
            config: EliminationConfig | None = None, variables: Sequence[str] | None = None,
            pool: WorldPool | None = None):
    config = config or EliminationConfig()
    pool = pool or WorldPool(seq, net, config.probes, config.samples, config.seed)
    variables = tuple(variables) if variables is not None else phi.free_vars
    basic = _compile(phi, pool, config, "root")
    if basic.variables != variables:
        lifted = compose_connective("id", [basic], pool, variables, config.scan_budget)
        lifted.ledger = basic.ledger
        basic = lifted
    report = Report(list(basic.ledger), basic.level)
    if not report.entries:
        report.entries.append({"kind": "aggregation-free", "mode": "exact", "cases": len(basic.cases),
                               "level": basic.level})
    return basic, report


def _compile(phi: lg.Formula, pool: WorldPool, config: EliminationConfig, path: str) -> BasicFormula:
    if lg.is_aggregation_free(phi):
        return compile_aggregation_free(phi, pool, phi.free_vars, config.scan_budget)
    if isinstance(phi, lg.Conn):
        inputs = [_compile(a, pool, config, f"{path}.{phi.name}[{i}]") for i, a in enumerate(phi.args)]
        return compose_connective(phi.name, inputs, pool, phi.free_vars, config.scan_budget)
    if isinstance(phi, lg.Agg):
        basics = [_compile(v, pool, config, f"{path}.{phi.name}.value[{i}]") for i, v in enumerate(phi.values)]
        return eliminate_one(phi, basics, pool, config, phi.free_vars, path=f"{path}.{phi.name}")
    raise EliminationError(f"cannot compile {phi}")


# ---------------------------------------------------------------------------
# balance and convergence estimates

@dataclass
class BalanceEstimate:
    value: float
    mode: str
    per_probe: dict
    stable: bool
    positive: bool | None = None
    radius: float | None = None
    by_type: dict = field(default_factory=dict)


def _type_condition(t: ta.LocalType, ypos: Sequence[int]):
    names = [f"v{i}" for i in range(t.arity)]
    bound = tuple(names[i] for i in ypos)
    outer = tuple(n for i, n in enumerate(names) if i not in ypos)
    return lg.TypeAtom(t, tuple(names)), bound, outer


def _matches(S: Structure, atom: lg.TypeAtom, bound, outer, abar) -> set:
    env = dict(zip(outer, abar))
    return {tuple(e[v] for v in bound) for e in lg.evaluator(S).satisfying(atom, bound, env)}


def balance_exact_bounded(seq: BaseSequence, net: PlaNetwork | None, p1: ta.LocalType, p2: ta.LocalType,
                          ypos: Sequence[int], probes: Sequence[int] = (64, 128, 256), samples: int = 4,
                          seed=0, xi: int | None = None) -> BalanceEstimate:
    ypos = tuple(ypos)
    cls = ta.classify(seq, _tau_part(p2), ypos)
    if not cls.bounded:
        raise EliminationError("the conditioning type is not bounded in the bound variables")
    reach = _bounded_reach(_tau_part(p2), ypos)
    xi = xi if xi is not None else max(p1.radius, p2.radius) + reach
    a1, bound, outer = _type_condition(p1, ypos)
    a2, _, _ = _type_condition(p2, ypos)
    k = len(outer)
    pool = WorldPool(seq, net, probes, samples, seed)
    per_probe = {}
    by_type: dict[bytes, Fraction] = {}
    for n in probes:
        ratios: dict[bytes, Fraction] = {}
        for S in pool.worlds(n):
            scope = len(S.signature)
            for tup, q in _anchors_of(pool, S, k, xi, scope):
                den = _matches(S, a2, bound, outer, tup)
                if not den:
                    continue
                num = den & _matches(S, a1, bound, outer, tup)
                r = Fraction(len(num), len(den))
                prev = ratios.setdefault(q.cert, r)
                if prev != r:
                    raise AssertionError(
                        f"balance ratio is not constant on a closure type at n={n}: {prev} vs {r}"
                    )
                prev_all = by_type.setdefault(q.cert, r)
                if prev_all != r:
                    raise AssertionError(f"balance ratio changed between probes: {prev_all} vs {r}")
        per_probe[n] = ratios
    values = sorted(set(by_type.values()))
    return BalanceEstimate(
        float(values[0]) if len(values) == 1 else float("nan"), "exact-bounded",
        per_probe, True, by_type=by_type,
    )


def balance_estimate(seq: BaseSequence, net: PlaNetwork | None, p: ta.LocalType, chi: ta.LocalType,
                     q: ta.LocalType | None, ypos: Sequence[int], probes=(64, 128, 256), samples: int = 8,
                     seed=0, floor: float = 0.01, delta: float = DEFAULT_DELTA, stab_tol: float = 0.05,
                     anchors_per_world: int = 4) -> BalanceEstimate:
    ypos = tuple(ypos)
    cls = ta.classify(seq, _tau_part(chi), ypos)
    if cls.bounded:
        raise EliminationError("use the exact bounded balance for bounded conditioning types")
    ap, bound, outer = _type_condition(p, ypos)
    ac, _, _ = _type_condition(chi, ypos)
    k = len(outer)
    pool = WorldPool(seq, net, probes, samples, seed)
    per_probe = {}
    radius = None
    for n in probes:
        vals, empty = [], 0
        for S in pool.worlds(n):
            scope = len(S.signature)
            taken = 0
            for tup, t in _anchors_of(pool, S, k, q.radius if q is not None else 0, scope):
                if q is not None and t.cert != q.cert:
                    continue
                den = _matches(S, ac, bound, outer, tup)
                if not den:
                    empty += 1
                    continue
                num = den & _matches(S, ap, bound, outer, tup)
                vals.append(len(num) / len(den))
                taken += 1
                if taken >= anchors_per_world:
                    break
        if not vals:
            per_probe[n] = {"value": None, "anchors": 0, "empty": empty}
            continue
        mean = sum(vals) / len(vals)
        radius = hoeffding_radius(len(vals), delta)
        per_probe[n] = {"value": mean, "anchors": len(vals), "empty": empty, "radius": radius}
    got = [v["value"] for v in per_probe.values() if v["value"] is not None]
    if not got:
        raise EstimationError("every conditioning set was empty")
    tail = got[-3:]
    stable = len(tail) == 3 and max(tail) - min(tail) < stab_tol
    value = got[-1]
    return BalanceEstimate(value, "empirical", per_probe, stable, value - radius > floor, radius)


@dataclass
class ConvergenceEstimate:
    value: float
    per_probe: dict
    stable: bool
    eventually_constant: bool
    excluded: list
    exact_probes: list


def _as_event(p, arity: int):
    if isinstance(p, ta.LocalType):
        names = tuple(f"v{i}" for i in range(p.arity))
        return lg.TypeAtom(p, names), names
    return p, p.free_vars


def convergence_estimate(seq: BaseSequence, net: PlaNetwork | None, p, p_tau: ta.LocalType,
                         probes=(64, 128, 256, 512), samples: int = 2000, seed=0,
                         delta: float = DEFAULT_DELTA, stab_tol: float = 0.05,
                         exact_budget: int = 2**12) -> ConvergenceEstimate:
    event, names = _as_event(p, p_tau.arity)
    per_probe, excluded, exact_probes = {}, [], []
    for n in probes:
        B = generate(seq, n)
        anchor = _first_realizer(B, p_tau)
        if anchor is None:
            excluded.append(n)
            continue
        env = dict(zip(names, anchor))
        if net is None or not net.symbols:
            v = lg.evaluate(B, event, env)
            per_probe[n] = {"value": v, "radius": 0.0, "exact": True, "anchor": anchor}
            exact_probes.append(n)
            continue
        if world_count(net, B) <= exact_budget:
            terms = []
            for w, pr in exact_distribution(net, B, exact_budget):
                if lg.evaluate(w, event, env) == 1.0:
                    terms.append(pr)
            per_probe[n] = {"value": math.fsum(terms), "radius": 0.0, "exact": True, "anchor": anchor}
            exact_probes.append(n)
            continue
        est = estimate_probability(net, B, event, env, samples=samples, seed=(seed, n), delta=delta)
        per_probe[n] = {"value": est.estimate, "radius": est.radius, "exact": False, "anchor": anchor}
    if not per_probe:
        raise EstimationError("the conditioning type is not realized at any probe")
    vals = [v["value"] for v in per_probe.values()]
    tail = vals[-3:]
    stable = len(tail) >= 3 and max(tail) - min(tail) < stab_tol or len(set(vals)) == 1
    return ConvergenceEstimate(vals[-1], per_probe, stable, len(set(vals)) == 1, excluded, exact_probes)


def _first_realizer(B: Structure, t: ta.LocalType):
    scope = len(t.scope)
    ty = ta.typer(B, scope)
    for tup in _scan_tuples(B, t.arity):
        if ty.type_of(tup, t.radius, scope, t.kind) == t:
            return tup
    return None


def value_distribution(basic: BasicFormula, seq: BaseSequence, net: PlaNetwork | None, p_tau: ta.LocalType,
                       probes=(64, 128, 256), samples: int = 500, seed=0, delta: float = DEFAULT_DELTA):
    n = probes[-1]
    B = generate(seq, n)
    anchor = _first_realizer(B, p_tau)
    if anchor is None:
        raise EstimationError("the conditioning type is not realized at the largest probe")
    worlds = [B] if net is None or not net.symbols else sample_worlds(net, B, samples, seed=(seed, n, 7))
    tally: dict[float, int] = {}
    for W in worlds:
        v = basic.value(W, anchor)
        tally[v] = tally.get(v, 0) + 1
    for c in basic.constants():
        tally.setdefault(c, 0)
    r = hoeffding_radius(len(worlds), delta)
    return [(c, tally[c] / len(worlds), r) for c in sorted(tally, reverse=True)]


@dataclass
class EquivalenceReport:
    epsilon: float
    fractions: dict
    ceiling: float
    passed: bool
    trend_ok: bool
    misses: int
    max_deviation: dict


def check_asymptotic_equivalence(phi: lg.Formula, basic: BasicFormula, seq: BaseSequence,
                                 net: PlaNetwork | None, epsilon: float = 0.05, probes=(512,),
                                 samples: int = 200, seed=0, ceiling: float = 0.05,
                                 variables: Sequence[str] | None = None) -> EquivalenceReport:
    variables = tuple(variables) if variables is not None else basic.variables
    fractions, worst = {}, {}
    misses0 = basic.misses
    for n in probes:
        B = generate(seq, n)
        worlds = [B] if net is None or not net.symbols else sample_worlds(net, B, samples, seed=(seed, n, 11))
        bad = 0
        top = 0.0
        for W in worlds:
            ev = lg.evaluator(W)
            hit = False
            for tup in _scan_tuples(W, len(variables)):
                d = abs(ev(phi, tup, variables) - basic.value(W, tup))
                top = max(top, d)
                if d > epsilon:
                    hit = True
                    break
            bad += hit
        fractions[n] = bad / len(worlds)
        worst[n] = top
    vals = list(fractions.values())
    slack = hoeffding_radius(samples) if net is not None and net.symbols else 0.0
    trend_ok = len(vals) < 2 or vals[-1] <= vals[0] + slack
    passed = trend_ok and vals[-1] <= ceiling
    return EquivalenceReport(epsilon, fractions, ceiling, passed, trend_ok, basic.misses - misses0, worst)
