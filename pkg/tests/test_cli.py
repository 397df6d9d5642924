import io

import pytest

from plastar.cli import EXIT_BUDGET, EXIT_OK, EXIT_USER, main


def run(*argv):
    out = io.StringIO()
    rc = main(list(argv), out=out)
    return rc, out.getvalue()


def rows(text):
    return [line for line in text.splitlines() if line and not line.startswith("#")]


def test_eval_exists_edge():
    rc, out = run("eval", "--seq", "path", "--n", "10", "--formula", "exists y . E(x,y)", "--at", "x=3")
    assert rc == EXIT_OK and out.strip() == "1"


def test_eval_constant():
    rc, out = run("eval", "--formula", "0.25")
    assert (rc, out.strip()) == (EXIT_OK, "0.25")


def test_malformed_formula_is_a_user_error(capsys):
    rc, _ = run("eval", "--formula", "and(top, ", "--at", "x=1")
    assert rc == EXIT_USER
    assert "position" in capsys.readouterr().err


def test_missing_anchor_is_a_user_error():
    rc, _ = run("eval", "--seq", "path", "--formula", "E(x,y)", "--at", "x=1")
    assert rc == EXIT_USER


def test_bad_probes_rejected():
    rc, _ = run("compile", "--formula", "top", "--probes", "64,32")
    assert rc == EXIT_USER


def test_unknown_command():
    assert run("frobnicate")[0] == EXIT_USER


def test_types_listing():
    rc, out = run("types", "--seq", "path", "--n", "12", "--lambda", "1", "--arity", "1")
    assert rc == EXIT_OK
    table = rows(out)
    # sink-side, source-side and interior vertices
    assert any("rare" in r for r in table) and any("Uniformly" in r or "Strongly" in r for r in table)
    assert sum(int(r.split()[1]) for r in table) == 13


def test_classify_source_vertex():
    rc, out = run("classify", "--seq", "path", "--n", "20", "--lambda", "1", "--at", "y=0")
    assert rc == EXIT_OK
    row = rows(out)[0].split()
    assert row[1].startswith("Bounded") and row[3] == "rare"


def test_exact_and_budget():
    rc, out = run("exact", "--seq", "set", "--n", "4", "--prob", "R(x): 0.5", "--formula", "exists x . R(x)")
    assert (rc, out.strip()) == (EXIT_OK, "0.9375")
    rc, _ = run("exact", "--seq", "set", "--n", "40", "--prob", "R(x): 0.5", "--formula", "exists x . R(x)")
    assert rc == EXIT_BUDGET


def test_exact_needs_network():
    assert run("exact", "--formula", "top")[0] == EXIT_USER


def test_sample_is_reproducible():
    args = ("sample", "--seq", "path", "--n", "8", "--prob", "R(x): 0.5", "--seed", "7", "--count", "2")
    a, b = run(*args), run(*args)
    assert a == b and a[0] == EXIT_OK
    assert a[1].count("# world") == 2


def test_seed_from_environment(monkeypatch):
    args = ("sample", "--seq", "set", "--n", "30", "--prob", "R(x): 0.5")
    monkeypatch.setenv("PLASTAR_SEED", "11")
    from_env = run(*args)[1]
    assert from_env == run(*args, "--seed", "11")[1]
    assert from_env != run(*args, "--seed", "12")[1]


def test_estimate_independent_of_jobs():
    args = ("estimate", "--seq", "set", "--n", "4", "--prob", "R(x): 0.5", "--formula", "exists x . R(x)",
            "--samples", "120000", "--seed", "3")
    one = run(*args)
    three = run(*args, "--jobs", "3")
    assert one == three and one[0] == EXIT_OK
    est, radius, n = rows(one[1])[0].split()
    assert abs(float(est) - 0.9375) <= float(radius) and n == "120000"


def test_config_file_and_flag_precedence(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("seq = path  # a directed path\nn = 10\nformula = exists y . E(x,y)\nat = x=10\n")
    assert run("eval", "--config", str(conf))[1].strip() == "0"
    assert run("eval", "--config", str(conf), "--at", "x=2")[1].strip() == "1"


def test_formula_from_file(tmp_path):
    f = tmp_path / "phi.txt"
    f.write_text("max[E(x, y) : y : top]\n")
    rc, out = run("eval", "--seq", "path", "--formula", f"@{f}", "--at", "x=3")
    assert (rc, out.strip()) == (EXIT_OK, "1")


def test_compile_check_distribution_round_trip(tmp_path):
    basic = tmp_path / "r.basic"
    common = ("--seq", "path", "--prob", "R(x): 0.3", "--formula", "R(x)", "--probes", "8,16", "--worlds", "4")
    rc, out = run("compile", *common, "-o", str(basic))
    assert rc == EXIT_OK
    assert "mode=exact" in out and "mode=empirical" not in out
    assert basic.read_text().startswith("basic level=0 vars=x")
    rc, out = run("check", *common, "--basic", str(basic))
    assert rc == EXIT_OK and out.strip().endswith("pass")
    rc, out = run("distribution", "--seq", "path", "--prob", "R(x): 0.3", "--formula", "R(x)",
                  "--basic", str(basic), "--at", "x=10", "--probes", "64", "--worlds", "2000")
    assert rc == EXIT_OK
    table = {float(c): float(b) for c, b, _ in (r.split() for r in rows(out))}
    assert table[1.0] == pytest.approx(0.3, abs=0.04)


def test_compile_with_named_type():
    rc, out = run("compile", "--seq", "path", "--prob", "R(x): 0.3", "--type", "chi=5,12@0",
                  "--formula", "am[R(y) : y : @chi(x, y)]", "--probes", "64,128,256", "--worlds", "16")
    assert rc == EXIT_OK
    values = [float(line.split("-> ")[1].split()[0]) for line in out.splitlines() if line.startswith("case")]
    assert values and all(0.26 <= v <= 0.34 for v in values)


def test_noisy_or_compile_is_a_user_error():
    rc, _ = run("compile", "--seq", "path", "--prob", "R(x): 0.3", "--type", "chi=5,12@0",
                "--formula", "noisy_or[R(y) : y : @chi(x, y)]", "--probes", "16,32", "--worlds", "2")
    assert rc == EXIT_USER
