"""Command line front end.

Every command writes a CSV document (``.`` decimal point, ``,`` separator,
17 significant digits) preceded by ``#`` metadata lines. Only the line
starting with ``# created:`` depends on the wall clock, so two runs with the
same inputs differ in that line only.

Exit codes: 0 on success, 1 for invalid input, 2 for numerical failures.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from . import __version__
from .analysis import DomainError, fit_decay_rate, fit_rate, infsup_constant, pair_error, poincare_constant
from .assembly import LoadVector, assemble_system, boundary_load, load_from_sources, triplets
from .femspace import build_mesh, build_spaces
from .netfile import NetworkFileError, load_network
from .scenarios import SCENARIOS, get_scenario
from .solvers import SolverError, simulate, solve_stationary

log = logging.getLogger("dampnet")

TABLE_ALPHAS = (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)
TABLE_H = (0.1, 0.05, 0.025, 0.0125)
CONVERGENCE_H = tuple(0.1 * 2.0**-k for k in range(1, 7))
DECAY_SAMPLES = (0.0, 4.0, 8.0, 12.0, 16.0, 20.0)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage, which is reserved here for
    # numerical failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _vertex_value(text: str) -> tuple[str, float]:
    name, eq, val = text.partition("=")
    if not eq:
        raise argparse.ArgumentTypeError(f"expected VERTEX=VALUE, got {text!r}")
    try:
        return name.strip(), float(val)
    except ValueError:
        raise argparse.ArgumentTypeError(f"boundary value {val!r} is not a number") from None


class Report:
    """Metadata lines plus a rectangular table."""

    def __init__(self, kind: str, header: Sequence[str], meta: dict | None = None):
        self.kind = kind
        self.header = list(header)
        self.meta = dict(meta or {})
        self.rows: list[list[str]] = []
        self.trailer: list[str] = []

    def add(self, *values) -> None:
        if len(values) != len(self.header):
            raise ValueError("row width does not match header")
        self.rows.append([v if isinstance(v, str) else fmt(v) for v in values])

    def render(self, timestamp: bool = True) -> str:
        lines = [f"# dampnet {__version__} {self.kind}"]
        if timestamp:
            lines.append("# created: " + _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))
        lines += [f"# {k}: {v}" for k, v in self.meta.items()]
        lines.append(",".join(self.header))
        lines += [",".join(r) for r in self.rows]
        lines += [f"# {t}" for t in self.trailer]
        return "\n".join(lines) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _network(args):
    nf = load_network(args.network)
    alpha = nf.alpha if getattr(args, "alpha", None) is None else args.alpha
    return nf, alpha


def _positive(name: str, value: float) -> None:
    if not value > 0:
        raise UsageError(f"--{name} must be positive, got {value}")


def _system(net, h: float, alpha: float):
    _positive("h", h)
    _positive("alpha", alpha)
    spaces = build_spaces(net, build_mesh(net, h))
    return assemble_system(net, spaces, alpha)


def _common_meta(args, nf, alpha, **extra) -> dict:
    meta = {"network": args.network, "alpha": fmt(alpha)}
    meta.update({k: (fmt(v) if isinstance(v, float) else v) for k, v in extra.items()})
    return meta


def cmd_stationary(args) -> str:
    nf, alpha = _network(args)
    net = nf.network
    sys_ = _system(net, args.h, alpha)
    pd = {v: 0.0 for v in net.boundary_vertices}
    for v, val in args.pd or []:
        if v not in pd:
            raise UsageError(f"--pd: {v!r} is not a boundary vertex (boundary: {', '.join(net.boundary_vertices)})")
        pd[v] = val
    f = None if args.f == 0 else (lambda x, c=args.f: np.full_like(x, c))
    g = None if args.g == 0 else (lambda x, c=args.g: np.full_like(x, c))
    loads = load_from_sources(sys_, f=f, g=g)
    loads = LoadVector(loads.flux + boundary_load(sys_, pd), loads.pressure)
    st = solve_stationary(sys_, loads)
    spaces = sys_.spaces
    mesh = spaces.mesh
    rep = Report("stationary", ["field", "edge", "index", "x", "value"],
                 _common_meta(args, nf, alpha, h=mesh.h, f=args.f, g=args.g,
                              pd=" ".join(f"{v}={fmt(pd[v])}" for v in net.boundary_vertices)))
    u_full = spaces.expand(st.u)
    for j, e in enumerate(net.edges):
        x = mesh.nodes(j)
        off = mesh.node_offsets[j]
        for k, xk in enumerate(x):
            rep.add("u", e.id, str(k), xk, u_full[off + k])
    for j, e in enumerate(net.edges):
        x = mesh.nodes(j)
        off = mesh.element_offsets[j]
        for k in range(mesh.counts[j]):
            rep.add("p", e.id, str(k), 0.5 * (x[k] + x[k + 1]), st.p[off + k])
    return rep.render(not args.no_timestamp)


def cmd_decay(args) -> str:
    nf, alpha = _network(args)
    net = nf.network
    _positive("dt", args.dt)
    _positive("T", args.T)
    sys_ = _system(net, args.h, alpha)
    scen = get_scenario(args.scenario, net)
    samples = args.samples if args.samples is not None else [t for t in DECAY_SAMPLES if t <= args.T]
    if any(t < 0 or t > args.T for t in samples):
        raise UsageError("--samples must lie in [0, T]")
    traj = simulate(sys_, scen.initial_state(sys_), scen.bc, None, args.theta, args.dt, args.T, samples)
    rep = Report("decay", ["t", "energy"],
                 _common_meta(args, nf, alpha, h=sys_.spaces.mesh.h, dt=args.dt, theta=args.theta, T=args.T,
                              scenario=scen.name))
    for t, e in zip(traj.times, traj.energies):
        rep.add(t, e)
    if args.state_dir:
        d = Path(args.state_dir)
        d.mkdir(parents=True, exist_ok=True)
        for k, t in enumerate(traj.times):
            body = "kind,index,value\n" + "".join(f"u,{i},{fmt(v)}\n" for i, v in enumerate(traj.u[k]))
            body += "".join(f"p,{i},{fmt(v)}\n" for i, v in enumerate(traj.p[k]))
            (d / f"state_{k:04d}.csv").write_text(f"# t: {fmt(t)}\n" + body)
    text = rep.render(not args.no_timestamp)
    try:
        fit = fit_decay_rate(zip(traj.times, traj.energies), (args.fit_start, np.inf))
    except DomainError as exc:
        _emit(text, args.out)
        raise DomainError(f"decay fit refused: {exc}") from exc
    rep.trailer.append(
        f"decay_fit: gamma={fmt(fit.gamma)} amplitude={fmt(fit.amplitude)} "
        f"t_min={fmt(fit.t_min)} t_max={fmt(fit.t_max)} rms_log_residual={fmt(fit.residual)}"
    )
    print(f"gamma = {fit.gamma:.6g}", file=sys.stderr)
    return rep.render(not args.no_timestamp)


def _poincare_cell(payload):
    net, h, alpha = payload
    return poincare_constant(_system(net, h, alpha))


def cmd_poincare(args) -> str:
    nf, _ = _network(args)
    net = nf.network
    alphas = args.alphas or list(TABLE_ALPHAS)
    hs = args.hs or list(TABLE_H)
    for a in alphas:
        _positive("alphas", a)
    cells = [(net, h, a) for h in hs for a in alphas]
    values = _map(_poincare_cell, cells, args.jobs)
    header = ["h"] + [f"alpha={fmt(a)}" for a in alphas]
    if args.infsup:
        header.append("infsup")
    rep = Report("poincare", header, {"network": args.network, "quantity": "squared discrete Poincare constant"})
    for i, h in enumerate(hs):
        row = [h] + values[i * len(alphas):(i + 1) * len(alphas)]
        if args.infsup:
            row.append(infsup_constant(_system(net, h, alphas[0])))
        rep.add(*row)
    return rep.render(not args.no_timestamp)


def _pair_cell(payload):
    net, scen_name, h, alpha, dt, theta, T, norm = payload
    return pair_error(net, get_scenario(scen_name, net), h, alpha, dt, theta, T, norm)


def cmd_converge(args) -> str:
    nf, _ = _network(args)
    net = nf.network
    alphas = args.alphas or list(TABLE_ALPHAS)
    hs = args.hs or list(CONVERGENCE_H)
    h_arr = np.asarray(hs)
    if len(hs) > 1 and np.any(np.abs(h_arr[:-1] / h_arr[1:] - 2) > 1e-12):
        raise UsageError("--hs must decrease by a factor of 2 at every step")
    _positive("dt", args.dt)
    _positive("T", args.T)
    get_scenario(args.scenario, net)
    cells = [(net, args.scenario, h, a, args.dt, args.theta, args.T, args.norm) for a in alphas for h in hs]
    errors = _map(_pair_cell, cells, args.jobs)
    header = ["alpha"] + [f"h={fmt(h)}" for h in hs] + ["rate"]
    rep = Report("converge", header, {"network": args.network, "dt": fmt(args.dt), "theta": fmt(args.theta),
                                      "T": fmt(args.T), "scenario": args.scenario, "norm": args.norm,
                                      "pairing": "each column h compares meshes h and 2h"})
    for i, a in enumerate(alphas):
        e = errors[i * len(hs):(i + 1) * len(hs)]
        rate = fit_rate(hs, e) if len(hs) >= 2 else float("nan")
        rep.add(a, *e, rate)
    return rep.render(not args.no_timestamp)


def cmd_dump_matrices(args) -> str:
    nf, alpha = _network(args)
    sys_ = _system(nf.network, args.h, alpha)
    mats = {"M_c": sys_.M_c, "M_a": sys_.M_a, "M_b": sys_.M_b, "D": sys_.D, "K": sys_.K, "A0": sys_.A0,
            "H": sys_.H, "boundary": sys_.boundary_matrix}
    if args.out in (None, "-"):
        raise UsageError("dump-matrices needs --out DIRECTORY")
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    rep = Report("dump-matrices", ["name", "rows", "cols", "nnz", "file"],
                 _common_meta(args, nf, alpha, h=sys_.spaces.mesh.h))
    for name, M in mats.items():
        body = triplets(M)
        (d / f"{name}.txt").write_text(body)
        rep.add(name, str(M.shape[0]), str(M.shape[1]), str(body.count("\n")), f"{name}.txt")
    (d / "index.csv").write_text(rep.render(not args.no_timestamp))
    return ""


def _map(fn, cells, jobs: int):
    if jobs and jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, cells))
    return [fn(c) for c in cells]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dampnet", description="Damped pressure waves on pipe networks (mixed P1-P0 elements).")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, single_alpha=True):
        sp.add_argument("--network", default="paper_fig2",
                        help="network file or bundled name (paper_fig1, paper_fig2, single_edge)")
        if single_alpha:
            sp.add_argument("--alpha", type=float, default=None, help="damping scale (default: value in the file)")
        sp.add_argument("--out", default=None, help="output file (default stdout)")
        sp.add_argument("--no-timestamp", action="store_true", help="omit the '# created:' line")

    s = sub.add_parser("stationary", help="solve the stationary problem")
    common(s)
    s.add_argument("--h", type=float, default=0.1, help="target mesh size")
    s.add_argument("--f", type=float, default=0.0, help="constant flux source")
    s.add_argument("--g", type=float, default=0.0, help="constant pressure source")
    s.add_argument("--pd", type=_vertex_value, action="append", metavar="VERTEX=VALUE",
                   help="boundary pressure (repeatable; unspecified boundary vertices get 0)")
    s.set_defaults(func=cmd_stationary)

    s = sub.add_parser("decay", help="energy decay of a time-dependent scenario")
    common(s)
    s.add_argument("--h", type=float, default=0.0125)
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--theta", type=float, default=0.5)
    s.add_argument("--T", type=float, default=20.0)
    s.add_argument("--scenario", default="paper-ramp", choices=sorted(SCENARIOS))
    s.add_argument("--samples", type=_float_list, default=None, help="sample times (default 0,4,...,20)")
    s.add_argument("--fit-start", type=float, default=4.0, help="fit uses samples with t >= this")
    s.add_argument("--state-dir", default=None, help="also write one state CSV per sample here")
    s.set_defaults(func=cmd_decay)

    s = sub.add_parser("poincare", help="table of squared discrete Poincare constants")
    common(s, single_alpha=False)
    s.add_argument("--alphas", type=_float_list, default=None)
    s.add_argument("--hs", type=_float_list, default=None)
    s.add_argument("--infsup", action="store_true", help="append the discrete inf-sup constant per h")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_poincare)

    s = sub.add_parser("converge", help="mesh convergence table")
    common(s, single_alpha=False)
    s.add_argument("--alphas", type=_float_list, default=None)
    s.add_argument("--hs", type=_float_list, default=None, help="fine mesh sizes, halving")
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--theta", type=float, default=0.5)
    s.add_argument("--T", type=float, default=20.0)
    s.add_argument("--scenario", default="paper-ramp", choices=sorted(SCENARIOS))
    s.add_argument("--norm", default="energy", choices=("energy", "l2"))
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_converge)

    s = sub.add_parser("dump-matrices", help="write assembled matrices as 'row col value' triplets")
    common(s)
    s.add_argument("--h", type=float, default=0.1)
    s.set_defaults(func=cmd_dump_matrices)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = args.func(args)
    except (SolverError, spla.ArpackNoConvergence, scipy.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"dampnet: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (UsageError, NetworkFileError, ValueError, OSError) as exc:
        print(f"dampnet: error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"dampnet: numerical failure: {exc}", file=sys.stderr)
        return 2
    if text:
        _emit(text, args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
