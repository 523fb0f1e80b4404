import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dampnet import build_network, load_network, parse_network, serialize_network
from dampnet.cli import main
from dampnet.netfile import NetworkFileError, bundled_networks

GOOD = """\
# comment line
alpha: 2
vertices: v1 v2 v3
edge: id=e1 tail=v1 head=v2 length=1 a=0.5 b=4 c=0.25  # trailing comment
edge: c=1 b=1 a=4 length=0.5 head=v3 tail=v2 id=e2
"""


def _body(text):
    return "\n".join(line for line in text.splitlines() if not line.startswith("# created:"))


def _table(text):
    rows = [line for line in text.splitlines() if line and not line.startswith("#")]
    return rows[0].split(","), [r.split(",") for r in rows[1:]]


def test_parse_good():
    nf = parse_network(GOOD)
    assert nf.alpha == 2.0
    assert nf.network.vertices == ("v1", "v2", "v3")
    assert nf.network.edges[1].length == 0.5 and nf.network.edges[1].tail == "v2"


@pytest.mark.parametrize("text, line, word", [
    ("vertices: v1 v2\nedge: id=e1 tail=v1 head=v2 length=x a=1 b=1 c=1\n", 2, "length"),
    ("vertices: v1 v2\nedge: id=e1 tail=v1 head=v2 length=1 a=1 b=1\n", 2, "c"),
    ("vertices: v1 v2\nedge: id=e1 tail=v1 head=v9 length=1 a=1 b=1 c=1\n", 2, "v9"),
    ("vertices: v1 v2\nedge: id=e1 tail=v1 head=v2 length=1 a=0 b=1 c=1\n", 2, "a"),
    ("vertices: v1 v2\nedge: id=e1 tail=v1 head=v2 length=1 a=1 b=1 c=1 d=3\n", 2, "d"),
    ("vertices: v1 v2\n\nfoo: 3\n", 3, "foo"),
    ("vertices: v1 v2\nalpha: -1\n", 2, "alpha"),
    ("vertices: v1 v1\n", 1, "unique"),
    ("vertices: v1 v2\nedge id=e1\n", 2, "key: value"),
    ("vertices: v1 v2\nedge: id=e1 tail=v1 head=v2 length=inf a=1 b=1 c=1\n", 2, "finite"),
])
def test_parse_errors_carry_line(text, line, word):
    with pytest.raises(NetworkFileError, match=word) as info:
        parse_network(text, "net.txt")
    assert info.value.line == line
    assert f"net.txt:{line}:" in str(info.value)


def test_parse_missing_vertices():
    with pytest.raises(NetworkFileError, match="vertices"):
        parse_network("alpha: 1\n")


def test_parse_structural_error():
    with pytest.raises(NetworkFileError, match="connected"):
        parse_network("vertices: v1 v2 v3 v4\n"
                      "edge: id=e1 tail=v1 head=v2 length=1 a=1 b=1 c=1\n"
                      "edge: id=e2 tail=v3 head=v4 length=1 a=1 b=1 c=1\n")


def test_bundled_networks():
    assert set(bundled_networks()) >= {"paper_fig1", "paper_fig2", "single_edge"}
    assert load_network("paper_fig1").network.interior_vertices == ("v2",)
    assert load_network("single_edge.net").network.n_edges == 1
    with pytest.raises(NetworkFileError):
        load_network("no_such_network")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(*[st.floats(1e-6, 1e6, allow_subnormal=False)] * 4), min_size=1, max_size=6),
       st.floats(1e-3, 1e3))
def test_round_trip(coeffs, alpha):
    # a path network with arbitrary positive data
    verts = [f"n{i}" for i in range(len(coeffs) + 1)]
    edges = [dict(id=f"p{i}", tail=verts[i], head=verts[i + 1], length=l, a=a, b=b, c=c)
             for i, (l, a, b, c) in enumerate(coeffs)]
    net = build_network(verts, edges)
    back = parse_network(serialize_network(net, alpha))
    assert back.network == net
    assert back.alpha == alpha


def test_round_trip_bundled():
    nf = load_network("paper_fig2")
    assert parse_network(serialize_network(nf.network, nf.alpha)).network == nf.network


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_stationary_single_edge(capsys):
    code, out, _ = _run(["stationary", "--network", "single_edge", "--h", "0.125", "--g", "1"], capsys)
    assert code == 0
    header, rows = _table(out)
    assert header == ["field", "edge", "index", "x", "value"]
    for r in rows:
        x, val = float(r[3]), float(r[4])
        if r[0] == "u":
            assert abs(val - (x - 0.5)) < 1e-10
        else:
            # element mean of (x - x^2)/2 over [x - h/2, x + h/2]
            mean = (x - x * x) / 2 - 0.125**2 / 24
            assert abs(val - mean) < 1e-10
    assert sum(r[0] == "u" for r in rows) == 9 and sum(r[0] == "p" for r in rows) == 8


def test_cli_stationary_fig2_rest(capsys):
    code, out, _ = _run(["stationary", "--pd", "v1=1", "--pd", "v6=1"], capsys)
    assert code == 0
    _, rows = _table(out)
    for r in rows:
        assert abs(float(r[4]) - (0.0 if r[0] == "u" else 1.0)) < 1e-12


def test_cli_stationary_zero(capsys):
    code, out, _ = _run(["stationary", "--network", "paper_fig1"], capsys)
    assert code == 0
    assert all(float(r[4]) == 0.0 for r in _table(out)[1])


def test_cli_deterministic(capsys):
    argv = ["stationary", "--network", "paper_fig2", "--h", "0.05", "--g", "0.3", "--pd", "v1=2"]
    _, a, _ = _run(argv, capsys)
    _, b, _ = _run(argv, capsys)
    assert "# created:" in a
    assert _body(a) == _body(b)


def test_cli_seventeen_digits(capsys):
    _, out, _ = _run(["stationary", "--network", "single_edge", "--h", "0.3", "--g", "1", "--no-timestamp"], capsys)
    assert "# created:" not in out
    vals = [r[4] for r in _table(out)[1]]
    assert any(len(v.lstrip("-").replace(".", "").split("e")[0].lstrip("0")) == 17 for v in vals)


def test_cli_decay_short(capsys, tmp_path):
    out_file = tmp_path / "decay.csv"
    code, _, err = _run(["decay", "--h", "0.1", "--dt", "0.01", "--T", "12", "--samples", "0,4,8,12",
                         "--out", str(out_file), "--state-dir", str(tmp_path / "states")], capsys)
    assert code == 0
    text = out_file.read_text()
    header, rows = _table(text)
    assert header == ["t", "energy"]
    assert float(rows[0][1]) == pytest.approx(9.5, abs=1e-12)
    assert "decay_fit: gamma=" in text
    assert "gamma" in err
    assert len(list((tmp_path / "states").glob("state_*.csv"))) == 4


def test_cli_decay_refuses_zero_energy(capsys):
    code, out, err = _run(["decay", "--network", "single_edge", "--scenario", "rest", "--h", "0.5",
                           "--dt", "0.05", "--T", "8"], capsys)
    assert code == 1
    assert "positive" in err
    assert all(float(r[1]) == 0.0 for r in _table(out)[1])


def test_cli_poincare_table(capsys):
    code, out, _ = _run(["poincare", "--hs", "0.1,0.05", "--alphas", "0.1,1", "--infsup"], capsys)
    assert code == 0
    header, rows = _table(out)
    assert header == ["h", "alpha=0.10000000000000001", "alpha=1", "infsup"]
    assert len(rows) == 2 and all(float(v) > 0 for r in rows for v in r)


def test_cli_poincare_parallel_matches_serial(capsys):
    argv = ["poincare", "--hs", "0.1", "--alphas", "0.1,1,10", "--no-timestamp"]
    _, a, _ = _run(argv, capsys)
    _, b, _ = _run(argv + ["--jobs", "2"], capsys)
    assert a == b


def test_cli_converge_smoke(capsys):
    code, out, _ = _run(["converge", "--hs", "0.1,0.05", "--alphas", "1", "--dt", "0.01", "--T", "2"], capsys)
    assert code == 0
    header, rows = _table(out)
    assert header == ["alpha", "h=0.10000000000000001", "h=0.050000000000000003", "rate"]
    e1, e2 = float(rows[0][1]), float(rows[0][2])
    assert e1 > e2 > 0


def test_cli_converge_rejects_non_halving(capsys):
    code, _, err = _run(["converge", "--hs", "0.1,0.04", "--alphas", "1"], capsys)
    assert code == 1 and "factor of 2" in err


def test_cli_dump_matrices(tmp_path, capsys):
    code, _, _ = _run(["dump-matrices", "--network", "single_edge", "--h", "1", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert (tmp_path / "M_c.txt").read_text() == ("0 0 0.33333333333333331\n0 1 0.16666666666666666\n"
                                                  "1 0 0.16666666666666666\n1 1 0.33333333333333331\n")
    assert (tmp_path / "index.csv").exists()


@pytest.mark.parametrize("argv", [
    ["stationary", "--h", "0"],
    ["stationary", "--alpha", "-1"],
    ["stationary", "--pd", "v3=1"],
    ["stationary", "--pd", "v1"],
    ["stationary", "--network", "does/not/exist.net"],
    ["decay", "--theta", "0.3", "--h", "0.5", "--T", "1"],
    ["decay", "--dt", "0", "--h", "0.5"],
    ["poincare", "--alphas", "x"],
    ["frobnicate"],
])
def test_cli_validation_exit_code(argv, capsys):
    # argparse-level errors exit through SystemExit, the rest return a code
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == 1


def test_cli_numerical_exit_code(capsys, monkeypatch):
    import dampnet.cli as cli

    def boom(*a, **k):
        raise cli.SolverError("singular")

    monkeypatch.setattr(cli, "solve_stationary", boom)
    code, _, err = _run(["stationary", "--network", "single_edge"], capsys)
    assert code == 2 and "numerical" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "dampnet", "stationary", "--network", "single_edge", "--h", "1"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "field,edge,index,x,value" in res.stdout
