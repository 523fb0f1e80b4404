"""Reading and writing network description files.

The format is line oriented. Blank lines and ``#`` comments are ignored;
every other line is ``key: value``::

    # two pipes meeting at v2
    alpha: 1
    vertices: v1 v2 v3
    edge: id=e1 tail=v1 head=v2 length=1 a=0.5 b=4 c=0.25
    edge: id=e2 tail=v2 head=v3 length=1 a=4 b=1 c=1

``vertices`` appears exactly once, ``alpha`` at most once (default 1), and
there is one ``edge`` line per edge with all seven fields given as
``name=value`` pairs in any order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .network import Edge, Network, NetworkError, build_network

EDGE_FIELDS = ("id", "tail", "head", "length", "a", "b", "c")


class NetworkFileError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<string>"):
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)
        self.line = line


@dataclass(frozen=True)
class NetworkFile:
    network: Network
    alpha: float = 1.0


def _number(text: str, what: str, lineno: int, source: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise NetworkFileError(f"{what}: {text!r} is not a number", lineno, source) from None
    if not math.isfinite(val):
        raise NetworkFileError(f"{what}: {text!r} is not finite", lineno, source)
    return val


def parse_network(text: str, source: str = "<string>") -> NetworkFile:
    vertices: list[str] | None = None
    alpha: float | None = None
    edges: list[dict] = []
    edge_lines: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise NetworkFileError(f"expected 'key: value', got {line!r}", lineno, source)
        key, value = key.strip(), value.strip()
        if key == "vertices":
            if vertices is not None:
                raise NetworkFileError("'vertices' given twice", lineno, source)
            vertices = value.split()
            if len(set(vertices)) != len(vertices):
                raise NetworkFileError("vertex ids must be unique", lineno, source)
        elif key == "alpha":
            if alpha is not None:
                raise NetworkFileError("'alpha' given twice", lineno, source)
            alpha = _number(value, "alpha", lineno, source)
            if alpha <= 0:
                raise NetworkFileError(f"alpha must be positive, got {alpha}", lineno, source)
        elif key == "edge":
            fields: dict[str, str] = {}
            for item in value.split():
                name, eq, val = item.partition("=")
                if not eq or not val:
                    raise NetworkFileError(f"edge field {item!r} is not name=value", lineno, source)
                if name not in EDGE_FIELDS:
                    raise NetworkFileError(f"unknown edge field {name!r}", lineno, source)
                if name in fields:
                    raise NetworkFileError(f"edge field {name!r} given twice", lineno, source)
                fields[name] = val
            missing = [f for f in EDGE_FIELDS if f not in fields]
            if missing:
                raise NetworkFileError(f"edge is missing field(s) {', '.join(missing)}", lineno, source)
            edge = {k: fields[k] for k in ("id", "tail", "head")}
            for k in ("length", "a", "b", "c"):
                edge[k] = _number(fields[k], f"edge {fields['id']} field {k}", lineno, source)
                if edge[k] <= 0:
                    raise NetworkFileError(f"edge {fields['id']} field {k} must be positive", lineno, source)
            edges.append(edge)
            edge_lines.append(lineno)
        else:
            raise NetworkFileError(f"unknown key {key!r}", lineno, source)
    if vertices is None:
        raise NetworkFileError("missing 'vertices' line", None, source)
    known = set(vertices)
    for edge, lineno in zip(edges, edge_lines):
        for end in ("tail", "head"):
            if edge[end] not in known:
                raise NetworkFileError(f"edge {edge['id']} {end} {edge[end]!r} is not a listed vertex", lineno, source)
    try:
        net = build_network(vertices, edges)
    except NetworkError as exc:
        raise NetworkFileError(str(exc), None, source) from exc
    return NetworkFile(net, 1.0 if alpha is None else alpha)


def serialize_network(net: Network, alpha: float = 1.0) -> str:
    lines = [f"alpha: {alpha!r}", "vertices: " + " ".join(net.vertices)]
    for e in net.edges:
        lines.append(
            f"edge: id={e.id} tail={e.tail} head={e.head} length={e.length!r} a={e.a!r} b={e.b!r} c={e.c!r}"
        )
    return "\n".join(lines) + "\n"


def bundled_networks() -> list[str]:
    root = resources.files("dampnet") / "networks"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".net"))


def load_network(path_or_name: str | Path) -> NetworkFile:
    """Load a network file, or a bundled network by name (e.g. ``paper_fig2``)."""
    path = Path(path_or_name)
    if path.is_file():
        return parse_network(path.read_text(), str(path))
    name = str(path_or_name)
    name = name[:-4] if name.endswith(".net") else name
    res = resources.files("dampnet") / "networks" / f"{Path(name).name}.net"
    if res.is_file():
        return parse_network(res.read_text(), f"{Path(name).name}.net")
    raise NetworkFileError(f"no such file or bundled network (bundled: {', '.join(bundled_networks())})",
                           None, str(path_or_name))


def paper_network() -> Network:
    """The seven-pipe test network with its default coefficients."""
    return load_network("paper_fig2").network


__all__ = ["NetworkFile", "NetworkFileError", "parse_network", "serialize_network", "load_network",
           "bundled_networks", "paper_network", "Edge"]
