"""Command-line entry point: ``plastar <command> [options]``."""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import elimination as el
from . import logic as lg
from . import network as nw
from . import sequences as sq
from . import typeanalysis as ta
from .structures import StructureError, serialize_structure

EXIT_OK, EXIT_INTERNAL, EXIT_USER, EXIT_BUDGET = 0, 1, 2, 3

USER_ERRORS = (
    lg.FormulaError, StructureError, nw.NetworkError, sq.PreconditionError, ta.TypeError_,
    el.EliminationError, el.EstimationError, ValueError, OSError,
)
BUDGET_ERRORS = (
    lg.ResourceError, nw.ResourceError, ta.ResourceError, ta.CanonicalizationError,
    el.ConvergenceError, sq.GenerationError,
)

DEFAULTS = {
    "seq": "set",
    "n": 10,
    "lambda": 0,
    "arity": 1,
    "probes": "64,128,256",
    "samples": 1000,
    "worlds": 16,
    "epsilon": 0.05,
    "stab_tol": 0.05,
    "floor": 0.01,
    "budget": nw.EXACT_BUDGET,
    "scan_budget": 2 * 10**5,
    "ct_cap": 2**20,
    "jobs": 1,
    "type_n": 32,
    "kind": "closure",
}


class UserError(ValueError):
    pass


@dataclass
class RunConfig:
    seq: str
    n: int
    lam: int
    arity: int
    probes: tuple
    samples: int
    worlds: int
    seed: int
    epsilon: float
    stab_tol: float
    floor: float
    budget: int
    scan_budget: int
    ct_cap: int
    jobs: int
    type_n: int
    kind: str
    formula: str | None = None
    net_text: str | None = None
    probs: list = field(default_factory=list)
    at: dict = field(default_factory=dict)
    type_specs: list = field(default_factory=list)

    def __post_init__(self):
        if list(self.probes) != sorted(set(self.probes)) or not self.probes:
            raise UserError("probes must be strictly increasing")
        if self.samples < 1 or self.worlds < 1:
            raise UserError("sample counts must be at least 1")
        if min(self.epsilon, self.stab_tol, self.floor) <= 0:
            raise UserError("tolerances must be positive")
        if self.jobs < 1:
            raise UserError("--jobs must be at least 1")
        if self.kind not in ("closure", "nbhd"):
            raise UserError("--kind must be closure or nbhd")


def _read_config_file(path: str) -> dict:
    with open(path) as fh:
        text = fh.read()
    parser = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",))
    if not text.lstrip().startswith("["):
        text = "[plastar]\n" + text
    parser.read_string(text)
    out = {}
    for section in parser.sections():
        for k, v in parser[section].items():
            out[k.replace("-", "_")] = v
    return out


def _setting(args, conf, name, cast):
    v = getattr(args, name, None)
    if v is not None:
        return cast(v)
    if name in conf:
        return cast(conf[name])
    if name in DEFAULTS:
        return cast(DEFAULTS[name])
    return None


def _ints(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(int(x) for x in text)
    return tuple(int(x) for x in str(text).replace(" ", "").split(",") if x)


def _assignments(items) -> dict:
    out = {}
    for item in items or ():
        for part in item.split(","):
            name, sep, val = part.partition("=")
            if not sep:
                raise UserError(f"expected name=value in {part!r}")
            out[name.strip()] = int(val)
    return out


def _text_arg(value):
    if value is not None and value.startswith("@"):
        with open(value[1:]) as fh:
            return fh.read()
    return value


def build_config(args) -> RunConfig:
    conf = _read_config_file(args.config) if getattr(args, "config", None) else {}
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = conf.get("seed", os.environ.get("PLASTAR_SEED", 0))
    net_path = _setting(args, conf, "net", str)
    formula = _text_arg(_setting(args, conf, "formula", str))
    probs = list(args.prob or []) or [p.strip() for p in conf.get("prob", "").split(";") if p.strip()]
    return RunConfig(
        seq=_setting(args, conf, "seq", str),
        n=_setting(args, conf, "n", int),
        lam=_setting(args, conf, "lambda", int),
        arity=_setting(args, conf, "arity", int),
        probes=_ints(_setting(args, conf, "probes", str)),
        samples=_setting(args, conf, "samples", int),
        worlds=_setting(args, conf, "worlds", int),
        seed=int(seed),
        epsilon=_setting(args, conf, "epsilon", float),
        stab_tol=_setting(args, conf, "stab_tol", float),
        floor=_setting(args, conf, "floor", float),
        budget=_setting(args, conf, "budget", int),
        scan_budget=_setting(args, conf, "scan_budget", int),
        ct_cap=_setting(args, conf, "ct_cap", int),
        jobs=_setting(args, conf, "jobs", int),
        type_n=_setting(args, conf, "type_n", int),
        kind=_setting(args, conf, "kind", str),
        formula=formula,
        net_text=open(net_path).read() if net_path else None,
        probs=probs,
        at=_assignments(getattr(args, "at", None) or ([conf["at"]] if "at" in conf else [])),
        type_specs=list(getattr(args, "type", None) or []),
    )


# ---------------------------------------------------------------------------
# shared helpers

def fmt(v: float) -> str:
    return format(float(v), ".12g")


def _seq(cfg):
    return sq.parse_sequence(cfg.seq)


def _types(cfg, seq) -> dict:
    """Named closure types from ``NAME=a,b[@radius]`` specs over the base sequence."""
    out = {}
    if not cfg.type_specs:
        return out
    B = sq.generate(seq, cfg.type_n)
    for spec in cfg.type_specs:
        name, sep, rest = spec.partition("=")
        if not sep:
            raise UserError(f"--type expects NAME=elements[@radius], got {spec!r}")
        elems, _, radius = rest.partition("@")
        tup = _ints(elems)
        r = int(radius) if radius else cfg.lam
        out[name.strip()] = ta.type_of_kind(B, tup, r, len(B.signature), cfg.kind)
    return out


def _net(cfg, seq, types):
    if cfg.net_text is not None:
        return nw.parse_network(cfg.net_text, types)
    if cfg.probs:
        return nw.network_from_probs(seq.signature, cfg.probs, types)
    return None


def _formula(cfg, signature, types):
    if cfg.formula is None:
        raise UserError("--formula is required")
    return lg.parse(cfg.formula, signature, types=types)


def _signature(seq, net):
    return net.signature if net is not None else seq.signature


def _anchor(cfg, phi):
    missing = [v for v in phi.free_vars if v not in cfg.at]
    if missing:
        raise UserError(f"free variable(s) {', '.join(missing)} need a value via --at")
    return {v: cfg.at[v] for v in phi.free_vars}


def _elim_config(cfg) -> el.EliminationConfig:
    return el.EliminationConfig(
        probes=cfg.probes, samples=min(cfg.worlds, 64), seed=cfg.seed, floor=cfg.floor,
        stab_tol=cfg.stab_tol, scan_budget=cfg.scan_budget, ct_cap=cfg.ct_cap,
    )


def _count_chunk(job):
    net_text, probs, seq_text, n, types_specs, type_n, lam, kind, formula, env, count, seed = job
    seq = sq.parse_sequence(seq_text)
    shim = RunConfig(seq_text, n, lam, 1, (1,), 1, 1, 0, 0.05, 0.05, 0.01, 1, 1, 1, 1, type_n, kind,
                     formula, net_text, probs, {}, types_specs)
    types = _types(shim, seq)
    net = _net(shim, seq, types)
    phi = lg.parse(formula, net.signature, types=types)
    return nw._count_hits(net, sq.generate(seq, n), phi, env, None, count, seed)


# ---------------------------------------------------------------------------
# commands

def cmd_eval(cfg, out):
    seq = _seq(cfg)
    types = _types(cfg, seq)
    net = _net(cfg, seq, types)
    phi = _formula(cfg, _signature(seq, net), types)
    env = _anchor(cfg, phi)
    B = sq.generate(seq, cfg.n)
    S = nw.sample_world(net, B, cfg.seed) if net is not None else B
    print(fmt(lg.evaluate(S, phi, env)), file=out)


def cmd_types(cfg, out):
    seq = _seq(cfg)
    if cfg.kind == "nbhd":
        found = ta.realized_types([sq.generate(seq, cfg.n)], cfg.lam, cfg.arity, kind="nbhd")
    else:
        found = ta.enumerate_realized_types(seq, [cfg.n], cfg.lam, cfg.arity)
    B = sq.generate(seq, cfg.n)
    rare = ta.rare_elements(seq, cfg.n, cfg.lam)
    print(f"# seq={seq.describe()} n={cfg.n} lambda={cfg.lam} arity={cfg.arity} kind={cfg.kind}", file=out)
    print("# name count verdict dimension rare witness", file=out)
    for t in found:
        count = sq.count_in(B, t)
        w = t.witness[1] if t.witness else ()
        cls = ta.classify(seq, t, tuple(range(t.arity))) if t.arity else None
        verdict = cls.label() if cls else "-"
        dim = cls.dimension if cls else 0
        flag = "rare" if any(a in rare for a in w) else "-"
        print(f"{t.name} {count} {verdict} {dim} {flag} {','.join(map(str, w))}", file=out)


def cmd_classify(cfg, out):
    seq = _seq(cfg)
    if not cfg.at:
        raise UserError("classify needs --at naming the anchor tuple, e.g. --at y=0")
    names = list(cfg.at)
    tup = tuple(cfg.at[v] for v in names)
    B = sq.generate(seq, cfg.n)
    t = ta.type_of_kind(B, tup, cfg.lam, len(B.signature), cfg.kind)
    bound = set(cfg.bound.split(",")) if cfg.bound else set(names)
    ypos = tuple(i for i, v in enumerate(names) if v in bound)
    cls = ta.classify(seq, t, ypos)
    rare = ta.rare_elements(seq, cfg.n, cfg.lam)
    flag = "rare" if any(a in rare for a in tup) else "-"
    print("# name verdict dimension rare empirical blocks", file=out)
    blocks = ";".join(",".join(names[p] for p in b.block) for b in cls.blocks)
    print(f"{t.name} {cls.label()} {cls.dimension} {flag} {int(cls.empirical)} {blocks}", file=out)


def cmd_sample(cfg, out):
    seq = _seq(cfg)
    types = _types(cfg, seq)
    net = _net(cfg, seq, types)
    B = sq.generate(seq, cfg.n)
    if net is None:
        print(serialize_structure(B), end="", file=out)
        return
    for i, w in enumerate(nw.sample_worlds(net, B, cfg.count, cfg.seed)):
        print(f"# world {i} seed={cfg.seed}", file=out)
        print(nw.serialize_world(w), end="", file=out)


def cmd_exact(cfg, out):
    seq = _seq(cfg)
    types = _types(cfg, seq)
    net = _net(cfg, seq, types)
    if net is None:
        raise UserError("exact needs a network (--net or --prob)")
    phi = _formula(cfg, net.signature, types)
    env = _anchor(cfg, phi)
    B = sq.generate(seq, cfg.n)
    p = nw.exact_expectation(net, B, phi, env, budget=cfg.budget)
    print(fmt(p), file=out)


def cmd_estimate(cfg, out):
    seq = _seq(cfg)
    types = _types(cfg, seq)
    net = _net(cfg, seq, types)
    if net is None:
        raise UserError("estimate needs a network (--net or --prob)")
    phi = _formula(cfg, net.signature, types)
    env = _anchor(cfg, phi)
    B = sq.generate(seq, cfg.n)
    batch = 50000
    if cfg.jobs == 1:
        est = nw.estimate_probability(net, B, phi, env, samples=cfg.samples, seed=cfg.seed, batch=batch)
    else:
        # same chunking and per-chunk seeds as the sequential estimator
        jobs, done, chunk = [], 0, 0
        while done < cfg.samples:
            m = min(batch, cfg.samples - done)
            jobs.append((cfg.net_text, cfg.probs, cfg.seq, cfg.n, cfg.type_specs, cfg.type_n, cfg.lam,
                         cfg.kind, cfg.formula, env, m, (cfg.seed, chunk) if chunk else cfg.seed))
            done += m
            chunk += 1
        with ProcessPoolExecutor(cfg.jobs) as pool:
            hits = sum(pool.map(_count_chunk, jobs))
        est = nw.ProbabilityEstimate(hits / cfg.samples, cfg.samples, nw.hoeffding_radius(cfg.samples))
    print("# estimate radius samples", file=out)
    print(f"{fmt(est.estimate)} {fmt(est.radius)} {est.samples}", file=out)


def _report_lines(basic, report):
    lines = list(report.lines())
    for c in basic.sorted_cases():
        lines.append(f"case {c.type.name} value={fmt(c.value)} mode={c.mode}")
    return lines


def cmd_compile(cfg, out):
    seq = _seq(cfg)
    types = _types(cfg, seq)
    net = _net(cfg, seq, types)
    phi = _formula(cfg, _signature(seq, net), types)
    basic, report = el.compile(phi, seq, net, _elim_config(cfg))
    text = basic.to_text()
    if cfg.output:
        with open(cfg.output, "w") as fh:
            fh.write(text)
    else:
        print(text, end="", file=out)
    for line in _report_lines(basic, report):
        print(line if line.startswith("#") else "# " + line, file=out)


def _load_or_compile(cfg, phi, seq, net):
    if cfg.basic:
        with open(cfg.basic) as fh:
            return el.parse_basic(fh.read())
    basic, _ = el.compile(phi, seq, net, _elim_config(cfg))
    return basic


def cmd_check(cfg, out):
    seq = _seq(cfg)
    types = _types(cfg, seq)
    net = _net(cfg, seq, types)
    phi = _formula(cfg, _signature(seq, net), types)
    basic = _load_or_compile(cfg, phi, seq, net)
    rep = el.check_asymptotic_equivalence(
        phi, basic, seq, net, cfg.epsilon, cfg.probes, cfg.worlds, cfg.seed, variables=basic.variables
    )
    print("# n fraction max_deviation", file=out)
    for n, f in rep.fractions.items():
        print(f"{n} {fmt(f)} {fmt(rep.max_deviation[n])}", file=out)
    print(f"# uncovered={rep.misses}", file=out)
    print("pass" if rep.passed else "fail", file=out)


def cmd_distribution(cfg, out):
    seq = _seq(cfg)
    types = _types(cfg, seq)
    net = _net(cfg, seq, types)
    phi = _formula(cfg, _signature(seq, net), types)
    basic = _load_or_compile(cfg, phi, seq, net)
    if not cfg.at:
        raise UserError("distribution needs --at naming an anchor whose base type conditions the table")
    tup = tuple(cfg.at[v] for v in basic.variables)
    B = sq.generate(seq, cfg.type_n)
    p_tau = ta.closure_type_of(B, tup, cfg.lam)
    rows = el.value_distribution(basic, seq, net, p_tau, cfg.probes, cfg.worlds, cfg.seed)
    print("# value beta radius", file=out)
    for c, beta, r in rows:
        print(f"{fmt(c)} {fmt(beta)} {fmt(r)}", file=out)


COMMANDS = {
    "eval": cmd_eval,
    "types": cmd_types,
    "classify": cmd_classify,
    "sample": cmd_sample,
    "exact": cmd_exact,
    "estimate": cmd_estimate,
    "compile": cmd_compile,
    "check": cmd_check,
    "distribution": cmd_distribution,
}


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file (flags override it)")
    common.add_argument("--seq", help="base sequence, e.g. path, grid:d=2, set, unary:s=2,m=3")
    common.add_argument("--n", type=int, help="base structure index")
    common.add_argument("--formula", "--event", dest="formula", help="formula text, or @FILE")
    common.add_argument("--at", action="append", help="anchor assignment x=3 (repeatable or comma separated)")
    common.add_argument("--net", help="network file")
    common.add_argument("--prob", action="append", help="network line such as 'R(x): 0.3' (repeatable)")
    common.add_argument("--type", action="append", help="named type NAME=a,b[@radius] taken from the base at --type-n")
    common.add_argument("--type-n", dest="type_n", type=int, help="base index used for --type (default 32)")
    common.add_argument("--lambda", dest="lambda", type=int, help="radius")
    common.add_argument("--arity", type=int)
    common.add_argument("--kind", choices=("closure", "nbhd"))
    common.add_argument("--probes", help="comma separated probe sizes")
    common.add_argument("--samples", type=int, help="Monte Carlo samples for estimate")
    common.add_argument("--worlds", type=int, help="sampled worlds per probe for compile/check/distribution")
    common.add_argument("--seed", type=int, help="seed (default $PLASTAR_SEED or 0)")
    common.add_argument("--epsilon", type=float)
    common.add_argument("--stab-tol", dest="stab_tol", type=float)
    common.add_argument("--floor", type=float)
    common.add_argument("--budget", type=int, help="world enumeration budget for exact")
    common.add_argument("--scan-budget", dest="scan_budget", type=int)
    common.add_argument("--ct-cap", dest="ct_cap", type=int)
    common.add_argument("--jobs", type=int, help="worker processes (output does not depend on it)")
    p = argparse.ArgumentParser(prog="plastar", description="Probability logic with aggregations on random structures.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "sample":
            sp.add_argument("--count", type=int, default=1)
        if name == "compile":
            sp.add_argument("--output", "-o", help="write the basic formula here")
        if name in ("check", "distribution"):
            sp.add_argument("--basic", help="compiled basic formula file (compiled on the fly when absent)")
        if name == "classify":
            sp.add_argument("--bound", help="comma separated bound variables (default: all)")
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USER if e.code else EXIT_OK
    try:
        cfg = build_config(args)
        for extra in ("count", "output", "basic", "bound"):
            setattr(cfg, extra, getattr(args, extra, None))
        COMMANDS[args.command](cfg, out)
        return EXIT_OK
    except BUDGET_ERRORS as e:
        print(f"error: budget exceeded: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except USER_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USER
    except Exception as e:  # internal assertion or bug
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
