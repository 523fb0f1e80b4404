"""Uniform per-edge meshes and the P1/P0 mixed spaces on a network.

Fluxes are continuous piecewise linear on every edge and conserved at the
interior vertices; pressures are piecewise constant. Flux degrees of freedom
come in two flavours:

* *full* coordinates: one nodal value per mesh point per edge, edges
  concatenated in network order, nodes ordered from tail to head;
* *reduced* coordinates: the full vector with one endpoint value per interior
  vertex eliminated through the conservation condition. ``Z`` maps reduced to
  full coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .network import Network

EdgeFunction = Union[Callable[[np.ndarray], np.ndarray], Sequence[Callable], Mapping[str, Callable]]

# 3-point Gauss-Legendre rule on [0, 1]
GAUSS_X = np.array([0.5 - math.sqrt(15) / 10, 0.5, 0.5 + math.sqrt(15) / 10])
GAUSS_W = np.array([5 / 18, 8 / 18, 5 / 18])


class ConformityError(ValueError):
    """A flux violates conservation at an interior vertex."""


@dataclass(frozen=True)
class Mesh:
    lengths: np.ndarray  # per edge
    counts: np.ndarray  # subintervals per edge

    @property
    def h_edge(self) -> np.ndarray:
        return self.lengths / self.counts

    @property
    def h(self) -> float:
        return float(self.h_edge.max())

    @property
    def n_elements(self) -> int:
        return int(self.counts.sum())

    @property
    def element_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.counts)])

    @property
    def node_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.counts + 1)])

    def element_edge(self) -> np.ndarray:
        """Edge index of every element."""
        return np.repeat(np.arange(len(self.counts)), self.counts)

    def element_h(self) -> np.ndarray:
        return np.repeat(self.h_edge, self.counts)

    def element_left(self) -> np.ndarray:
        """Local coordinate of each element's left end."""
        return np.concatenate([np.arange(m) * h for m, h in zip(self.counts, self.h_edge)])

    def nodes(self, edge: int) -> np.ndarray:
        return np.linspace(0.0, self.lengths[edge], int(self.counts[edge]) + 1)


def build_mesh(net: Network, target_h: float) -> Mesh:
    """Uniform mesh with ``ceil(l / target_h)`` subintervals on every edge."""
    if not target_h > 0:
        raise ValueError(f"target_h must be positive, got {target_h}")
    lengths = net.lengths
    # tolerance keeps l/h = 10.000000000000002 from rounding up to 11
    counts = np.maximum(1, np.ceil(lengths / target_h - 1e-9)).astype(int)
    return Mesh(lengths, counts)


@dataclass(frozen=True)
class DofMap:
    net: Network
    mesh: Mesh
    Z: sp.csr_matrix  # full <- reduced
    kept: np.ndarray  # full indices of the reduced coordinates
    constraints: sp.csr_matrix  # interior conservation rows on full coords
    boundary: tuple[tuple[str, int, int, int], ...]  # (vertex, edge, full dof, n^e(v))

    @property
    def n_full(self) -> int:
        return int(self.mesh.node_offsets[-1])

    @property
    def n_flux(self) -> int:
        return self.Z.shape[1]

    @property
    def n_pressure(self) -> int:
        return self.mesh.n_elements

    def expand(self, u: np.ndarray) -> np.ndarray:
        """Reduced flux coefficients -> full nodal values."""
        return self.Z @ u

    def reduce(self, u_full: np.ndarray) -> np.ndarray:
        """Full nodal values of a conservative flux -> reduced coordinates."""
        return np.asarray(u_full)[self.kept]

    def endpoint_dof(self, edge: int, sign: int) -> int:
        """Full index of the tail (sign -1) or head (sign +1) node of ``edge``."""
        offs = self.mesh.node_offsets
        return int(offs[edge]) if sign < 0 else int(offs[edge + 1] - 1)

    def edge_values(self, u: np.ndarray) -> list[np.ndarray]:
        full = self.expand(u)
        offs = self.mesh.node_offsets
        return [full[offs[j]:offs[j + 1]] for j in range(self.net.n_edges)]

    def conservation_residual(self, u_full: np.ndarray) -> np.ndarray:
        return self.constraints @ u_full


def build_spaces(net: Network, mesh: Mesh) -> DofMap:
    """Degree-of-freedom bookkeeping for the P1 flux / P0 pressure pair.

    At each interior vertex the endpoint value of the incident edge with the
    smallest index is eliminated in favour of the others.
    """
    offs = mesh.node_offsets
    n_full = int(offs[-1])

    def endpoint(j: int, s: int) -> int:
        return int(offs[j]) if s < 0 else int(offs[j + 1] - 1)

    rows, cols, vals = [], [], []
    eliminated: dict[int, list[tuple[int, float]]] = {}
    for r, v in enumerate(net.interior_vertices):
        inc = net.incident(v)
        for j, s in inc:
            rows.append(r)
            cols.append(endpoint(j, s))
            vals.append(float(s))
        j0, s0 = min(inc)
        # s0 * u0 + sum s * u = 0  =>  u0 = -s0 * sum s * u
        eliminated[endpoint(j0, s0)] = [(endpoint(j, s), -s0 * s) for j, s in inc if (j, s) != (j0, s0)]
    constraints = sp.csr_matrix((vals, (rows, cols)), shape=(len(net.interior_vertices), n_full))

    kept = np.array([i for i in range(n_full) if i not in eliminated], dtype=int)
    col_of = {int(i): k for k, i in enumerate(kept)}
    zr, zc, zv = [], [], []
    for k, i in enumerate(kept):
        zr.append(int(i))
        zc.append(k)
        zv.append(1.0)
    for i, combo in eliminated.items():
        for other, w in combo:
            zr.append(i)
            zc.append(col_of[other])
            zv.append(w)
    Z = sp.csr_matrix((zv, (zr, zc)), shape=(n_full, len(kept)))

    boundary = []
    for v in net.boundary_vertices:
        for j, s in net.incident(v):
            boundary.append((v, j, endpoint(j, s), s))
    return DofMap(net, mesh, Z, kept, constraints, tuple(boundary))


def per_edge(fn: EdgeFunction, net: Network) -> list[Callable]:
    """Normalise a function spec to one callable per edge.

    Accepts a single callable (used on every edge), a sequence of callables in
    edge order, or a mapping from edge id to callable.
    """
    if callable(fn):
        return [fn] * net.n_edges
    if isinstance(fn, Mapping):
        return [fn[e.id] for e in net.edges]
    fns = list(fn)
    if len(fns) != net.n_edges:
        raise ValueError(f"expected {net.n_edges} edge functions, got {len(fns)}")
    return fns


def _eval(f: Callable, x: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.asarray(f(x), dtype=float), x.shape)


def interpolate_flux(spaces: DofMap, v: EdgeFunction, tol: float = 1e-10) -> np.ndarray:
    """Nodal interpolant of a conservative flux, in reduced coordinates."""
    fns = per_edge(v, spaces.net)
    full = np.concatenate([_eval(f, spaces.mesh.nodes(j)) for j, f in enumerate(fns)])
    res = spaces.conservation_residual(full)
    if res.size and np.max(np.abs(res)) > tol:
        raise ConformityError(f"flux not conserved at interior vertices (residual {np.max(np.abs(res)):.3e})")
    return spaces.reduce(full)


def quadrature_points(mesh: Mesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-element Gauss points (local edge coordinate), weights and edge index."""
    left = mesh.element_left()[:, None]
    h = mesh.element_h()[:, None]
    x = left + h * GAUSS_X[None, :]
    w = h * GAUSS_W[None, :]
    return x, w, mesh.element_edge()


def _eval_at_quad(spaces: DofMap, q: EdgeFunction) -> tuple[np.ndarray, np.ndarray]:
    fns = per_edge(q, spaces.net)
    x, w, edge = quadrature_points(spaces.mesh)
    vals = np.empty_like(x)
    eoff = spaces.mesh.element_offsets
    for j, f in enumerate(fns):
        sl = slice(eoff[j], eoff[j + 1])
        vals[sl] = _eval(f, x[sl])
    return vals, w


def project_pressure(spaces: DofMap, q: EdgeFunction) -> np.ndarray:
    """Elementwise mean values (L2 projection onto piecewise constants)."""
    vals, w = _eval_at_quad(spaces, q)
    return (vals * w).sum(axis=1) / w.sum(axis=1)


def flux_at(spaces: DofMap, u: np.ndarray, edge: int, x: np.ndarray) -> np.ndarray:
    """Evaluate a discrete flux on ``edge`` at local coordinates ``x``."""
    vals = spaces.edge_values(u)[edge]
    return np.interp(x, spaces.mesh.nodes(edge), vals)


@dataclass(frozen=True)
class Prolongation:
    P_V: sp.csr_matrix  # fine reduced <- coarse reduced
    P_Q: sp.csr_matrix  # fine elements <- coarse elements


def _full_prolongation(mesh: Mesh) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    coffs = mesh.node_offsets
    foffs = np.concatenate([[0], np.cumsum(2 * mesh.counts + 1)])
    for j, m in enumerate(mesh.counts):
        for k in range(m + 1):
            rows.append(foffs[j] + 2 * k)
            cols.append(coffs[j] + k)
            vals.append(1.0)
        for k in range(m):
            for kk in (k, k + 1):
                rows.append(foffs[j] + 2 * k + 1)
                cols.append(coffs[j] + kk)
                vals.append(0.5)
    return sp.csr_matrix((vals, (rows, cols)), shape=(int(foffs[-1]), int(coffs[-1])))


def refine(mesh: Mesh, spaces: DofMap) -> tuple[Mesh, DofMap, Prolongation]:
    """Bisect every element; return the fine mesh, spaces and prolongations."""
    fine = Mesh(mesh.lengths, 2 * mesh.counts)
    fspaces = build_spaces(spaces.net, fine)
    P_full = _full_prolongation(mesh)
    P_V = sp.csr_matrix((P_full @ spaces.Z)[fspaces.kept])
    n = mesh.n_elements
    P_Q = sp.csr_matrix((np.ones(2 * n), (np.arange(2 * n), np.repeat(np.arange(n), 2))), shape=(2 * n, n))
    return fine, fspaces, Prolongation(P_V, P_Q)


def prolongation_between(coarse: DofMap, fine: DofMap) -> Prolongation:
    """Prolongation for a pair of meshes related by one uniform bisection."""
    if not np.array_equal(fine.mesh.counts, 2 * coarse.mesh.counts):
        raise ValueError("meshes are not nested by a single uniform refinement")
    _, fs, prol = refine(coarse.mesh, coarse)
    assert np.array_equal(fs.kept, fine.kept)
    return prol
