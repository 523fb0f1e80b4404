"""Directed geometric graphs (pipe networks) and their incidence algebra.

A network is a connected directed graph whose edges carry a length and the
three material coefficients ``a`` (damping), ``b`` (compressibility) and
``c`` (inertia). Edge direction only fixes the sign convention of fluxes.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg


class NetworkError(ValueError):
    """Base class for invalid network descriptions."""


class DisconnectedNetworkError(NetworkError):
    pass


class NoBoundaryVertexError(NetworkError):
    pass


class InvalidEdgeError(NetworkError):
    pass


@dataclass(frozen=True)
class Edge:
    id: str
    tail: str
    head: str
    length: float
    a: float
    b: float
    c: float


@dataclass(frozen=True)
class Network:
    """Validated pipe network.

    Use :func:`build_network` to construct one; the constructor itself does
    not validate.
    """

    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]
    c_min: float = field(default=0.0)
    c_max: float = field(default=0.0)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def vertex_index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.vertices)}

    @property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_vertices, dtype=int)
        idx = self.vertex_index
        for e in self.edges:
            deg[idx[e.tail]] += 1
            deg[idx[e.head]] += 1
        return deg

    @property
    def interior_vertices(self) -> tuple[str, ...]:
        return tuple(v for v, d in zip(self.vertices, self.degrees) if d >= 2)

    @property
    def boundary_vertices(self) -> tuple[str, ...]:
        return tuple(v for v, d in zip(self.vertices, self.degrees) if d < 2)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([e.length for e in self.edges])

    def coefficient(self, name: str) -> np.ndarray:
        return np.array([getattr(e, name) for e in self.edges])

    def incident(self, vertex: str) -> list[tuple[int, int]]:
        """(edge index, orientation sign) pairs for edges touching ``vertex``."""
        out = []
        for j, e in enumerate(self.edges):
            if e.tail == vertex:
                out.append((j, -1))
            if e.head == vertex:
                out.append((j, +1))
        return out


def build_network(vertices: Sequence[str], edges: Iterable[Mapping | Edge]) -> Network:
    """Validate a network description and return a :class:`Network`.

    ``edges`` items are :class:`Edge` instances or mappings with keys
    ``id, tail, head, length, a, b, c``.

    Raises
    ------
    InvalidEdgeError
        Unknown endpoint, self-loop, duplicate id, or a nonpositive length or
        coefficient.
    DisconnectedNetworkError
        The graph is not connected.
    NoBoundaryVertexError
        No vertex has degree one.
    """
    vertices = tuple(str(v) for v in vertices)
    if not vertices:
        raise NetworkError("network has no vertices")
    if len(set(vertices)) != len(vertices):
        dup = sorted({v for v in vertices if vertices.count(v) > 1})
        raise NetworkError(f"duplicate vertex id(s): {', '.join(dup)}")
    known = set(vertices)

    parsed: list[Edge] = []
    seen: set[str] = set()
    for item in edges:
        if isinstance(item, Edge):
            e = item
        else:
            try:
                e = Edge(
                    id=str(item["id"]),
                    tail=str(item["tail"]),
                    head=str(item["head"]),
                    length=float(item["length"]),
                    a=float(item["a"]),
                    b=float(item["b"]),
                    c=float(item["c"]),
                )
            except KeyError as exc:
                raise InvalidEdgeError(f"edge description missing field {exc}") from None
        if e.id in seen:
            raise InvalidEdgeError(f"duplicate edge id {e.id!r}")
        seen.add(e.id)
        for end in (e.tail, e.head):
            if end not in known:
                raise InvalidEdgeError(f"edge {e.id!r} references unknown vertex {end!r}")
        if e.tail == e.head:
            raise InvalidEdgeError(f"edge {e.id!r} is a self-loop at {e.tail!r}")
        if not (np.isfinite(e.length) and e.length > 0):
            raise InvalidEdgeError(f"edge {e.id!r} has nonpositive length {e.length}")
        for name in ("a", "b", "c"):
            val = getattr(e, name)
            if not (np.isfinite(val) and val > 0):
                raise InvalidEdgeError(f"edge {e.id!r} has nonpositive coefficient {name}={val}")
        parsed.append(e)
    if not parsed:
        raise NetworkError("network has no edges")

    net = Network(vertices, tuple(parsed))
    # connectivity by BFS over the undirected graph
    reached = _bfs_order(net, vertices[0])[0]
    if len(reached) != len(vertices):
        missing = [v for v in vertices if v not in reached]
        raise DisconnectedNetworkError(
            f"network is disconnected; unreachable from {vertices[0]!r}: {', '.join(missing)}"
        )
    if not net.boundary_vertices:
        raise NoBoundaryVertexError("network has no boundary vertex (degree one)")

    coeffs = np.array([[e.a, e.b, e.c] for e in parsed])
    return Network(vertices, tuple(parsed), float(coeffs.min()), float(coeffs.max()))


def _bfs_order(net: Network, root: str) -> tuple[set[str], list[int]]:
    adj: dict[str, list[tuple[int, str]]] = {v: [] for v in net.vertices}
    for j, e in enumerate(net.edges):
        adj[e.tail].append((j, e.head))
        adj[e.head].append((j, e.tail))
    reached = {root}
    tree_edges: list[int] = []
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for j, w in adj[v]:
            if w not in reached:
                reached.add(w)
                tree_edges.append(j)
                queue.append(w)
    return reached, tree_edges


def incidence_matrix(net: Network) -> np.ndarray:
    """Vertex-by-edge incidence matrix with -1 at the tail and +1 at the head."""
    N = np.zeros((net.n_vertices, net.n_edges), dtype=int)
    idx = net.vertex_index
    for j, e in enumerate(net.edges):
        N[idx[e.tail], j] = -1
        N[idx[e.head], j] = 1
    return N


@dataclass(frozen=True)
class TreeDecomposition:
    root: str
    tree_edges: tuple[int, ...]
    rows: tuple[int, ...]  # vertex indices with the root removed
    block: np.ndarray


def spanning_tree(net: Network) -> TreeDecomposition:
    """BFS spanning tree rooted at the first boundary vertex.

    The returned ``block`` is the incidence matrix restricted to the non-root
    vertices and the tree edges; it is square and invertible.
    """
    root = net.boundary_vertices[0]
    _, tree = _bfs_order(net, root)
    tree = tuple(sorted(tree))
    rows = tuple(i for i, v in enumerate(net.vertices) if v != root)
    block = incidence_matrix(net)[np.ix_(rows, tree)].astype(float)
    return TreeDecomposition(root, tree, rows, block)


def solve_nodal_fluxes(net: Network, nodal: Mapping[str, float]) -> np.ndarray:
    """Constant edge fluxes whose signed sum at each interior vertex is prescribed.

    Fluxes on edges outside the spanning tree are zero.
    """
    interior = net.interior_vertices
    missing = [v for v in interior if v not in nodal]
    if missing:
        raise NetworkError(f"no nodal flux given for interior vertex(es) {', '.join(missing)}")
    tree = spanning_tree(net)
    idx = net.vertex_index
    rhs = np.zeros(len(tree.rows))
    pos = {r: k for k, r in enumerate(tree.rows)}
    for v in interior:
        rhs[pos[idx[v]]] = float(nodal[v])
    # non-root boundary rows get a zero target
    try:
        x = scipy.linalg.solve(tree.block, rhs)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - tree block is regular
        raise RuntimeError("spanning-tree block is singular") from exc
    out = np.zeros(net.n_edges)
    out[list(tree.tree_edges)] = x
    return out


@dataclass(frozen=True)
class ConstantFluxBasis:
    """Orthonormal basis of edgewise-constant fluxes conserved at interior vertices."""

    basis: np.ndarray  # shape (n_edges, dim)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def interior_incidence(net: Network) -> np.ndarray:
    idx = net.vertex_index
    rows = [idx[v] for v in net.interior_vertices]
    return incidence_matrix(net)[rows].astype(float)


def h0div_basis(net: Network) -> ConstantFluxBasis:
    N0 = interior_incidence(net)
    if N0.shape[0] == 0:
        return ConstantFluxBasis(np.eye(net.n_edges))
    # null space from a column-pivoted QR of N0^T: trailing columns of Q
    Q, R, _ = scipy.linalg.qr(N0.T, pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(N0.shape) * np.finfo(float).eps * (diag[0] if diag.size else 1.0)
    rank = int(np.sum(diag > tol))
    return ConstantFluxBasis(Q[:, rank:].copy())
