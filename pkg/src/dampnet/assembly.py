"""Assembly of the mixed finite element forms in reduced flux coordinates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .femspace import DofMap, EdgeFunction, _eval_at_quad, quadrature_points
from .network import h0div_basis


@dataclass(frozen=True)
class SystemMatrices:
    """Discrete operators of the damped wave system.

    Flux matrices act on reduced coordinates, pressure matrices on element
    values. ``A0`` is dense; everything else is sparse CSR.
    """

    spaces: DofMap
    alpha: float
    M_c: sp.csr_matrix
    M_a: sp.csr_matrix
    M_b: sp.csr_matrix
    D: sp.csr_matrix
    K: sp.csr_matrix
    A0: np.ndarray
    H: sp.csr_matrix
    M_I: sp.csr_matrix  # unweighted flux mass
    M_pI: sp.csr_matrix  # unweighted pressure mass
    basis: np.ndarray  # constant conservative fluxes, n_edges x d
    W: np.ndarray  # a-weighted pairing, d x n_flux
    G: np.ndarray  # a-weighted Gram matrix of the basis, d x d
    boundary_matrix: sp.csr_matrix  # n_flux x n_boundary_vertices
    c_min: float
    c_max: float

    @property
    def n_flux(self) -> int:
        return self.M_c.shape[0]

    @property
    def n_pressure(self) -> int:
        return self.M_b.shape[0]


@dataclass(frozen=True)
class LoadVector:
    flux: np.ndarray
    pressure: np.ndarray

    def __add__(self, other: "LoadVector") -> "LoadVector":
        return LoadVector(self.flux + other.flux, self.pressure + other.pressure)

    @classmethod
    def zeros(cls, sys: SystemMatrices) -> "LoadVector":
        return cls(np.zeros(sys.n_flux), np.zeros(sys.n_pressure))


def _element_nodes(spaces: DofMap) -> tuple[np.ndarray, np.ndarray]:
    mesh = spaces.mesh
    offs = mesh.node_offsets
    left = np.concatenate([offs[j] + np.arange(m) for j, m in enumerate(mesh.counts)])
    return left, left + 1


def _p1_matrix(spaces: DofMap, weight: np.ndarray, local: np.ndarray) -> sp.csr_matrix:
    """Full-coordinate P1 matrix from per-element weights times a 2x2 pattern."""
    i0, i1 = _element_nodes(spaces)
    idx = np.stack([i0, i1], axis=1)
    rows = np.repeat(idx, 2, axis=1).ravel()
    cols = np.tile(idx, (1, 2)).ravel()
    vals = (weight[:, None] * local.ravel()[None, :]).ravel()
    n = spaces.n_full
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


MASS = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
STIFF = np.array([[1.0, -1.0], [-1.0, 1.0]])


def _reduce(spaces: DofMap, M: sp.spmatrix) -> sp.csr_matrix:
    Z = spaces.Z
    return sp.csr_matrix(Z.T @ M @ Z)


def divergence_full(spaces: DofMap) -> sp.csr_matrix:
    """Rows: elements; entry pattern u_right - u_left on full coordinates."""
    i0, i1 = _element_nodes(spaces)
    n = len(i0)
    rows = np.concatenate([np.arange(n), np.arange(n)])
    cols = np.concatenate([i0, i1])
    vals = np.concatenate([-np.ones(n), np.ones(n)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, spaces.n_full))


def assemble_system(net, spaces: DofMap, alpha: float = 1.0) -> SystemMatrices:
    """Assemble every form with per-edge constant coefficients, ``a`` scaled by ``alpha``.

    ``alpha = 0`` is accepted to switch damping off (used in tests); the
    projection term ``A0`` then vanishes as well.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    mesh = spaces.mesh
    eh = mesh.element_h()
    edge = mesh.element_edge()
    a = alpha * net.coefficient("a")
    b = net.coefficient("b")
    c = net.coefficient("c")

    M_c = _reduce(spaces, _p1_matrix(spaces, c[edge] * eh, MASS))
    M_a = _reduce(spaces, _p1_matrix(spaces, a[edge] * eh, MASS))
    M_I = _reduce(spaces, _p1_matrix(spaces, eh, MASS))
    K = _reduce(spaces, _p1_matrix(spaces, 1.0 / (b[edge] * eh), STIFF))
    S_I = _reduce(spaces, _p1_matrix(spaces, 1.0 / eh, STIFF))
    H = sp.csr_matrix(M_I + S_I)
    M_b = sp.diags(b[edge] * eh).tocsr()
    M_pI = sp.diags(eh).tocsr()
    D = sp.csr_matrix(divergence_full(spaces) @ spaces.Z)

    basis = h0div_basis(net).basis
    # W[k] = (a u, basis_k) for every reduced u; integral of a P1 function on an
    # element is h * (u_left + u_right) / 2
    i0, i1 = _element_nodes(spaces)
    n_full = spaces.n_full
    wl = np.zeros((n_full, basis.shape[1]))
    contrib = (a[edge] * eh / 2)[:, None] * basis[edge]
    np.add.at(wl, i0, contrib)
    np.add.at(wl, i1, contrib)
    W = np.asarray((spaces.Z.T @ wl).T)
    G = basis.T @ ((a * net.lengths)[:, None] * basis)
    if alpha > 0:
        A0 = W.T @ scipy.linalg.cho_solve(scipy.linalg.cho_factor(G), W)
    else:
        A0 = np.zeros((spaces.n_flux, spaces.n_flux))
    A0 = 0.5 * (A0 + A0.T)

    bverts = net.boundary_vertices
    col = {v: k for k, v in enumerate(bverts)}
    rows, cols, vals = [], [], []
    kept_pos = {int(i): k for k, i in enumerate(spaces.kept)}
    for v, j, dof, s in spaces.boundary:
        rows.append(kept_pos[dof])
        cols.append(col[v])
        vals.append(-float(s))
    Bd = sp.csr_matrix((vals, (rows, cols)), shape=(spaces.n_flux, len(bverts)))

    coeffs = np.concatenate([a, b, c]) if alpha > 0 else np.concatenate([b, c])
    return SystemMatrices(
        spaces=spaces,
        alpha=float(alpha),
        M_c=M_c,
        M_a=M_a,
        M_b=M_b,
        D=D,
        K=K,
        A0=A0,
        H=H,
        M_I=M_I,
        M_pI=M_pI,
        basis=basis,
        W=W,
        G=G,
        boundary_matrix=Bd,
        c_min=float(coeffs.min()),
        c_max=float(coeffs.max()),
    )


def pi0_apply(sys: SystemMatrices, u: np.ndarray) -> np.ndarray:
    """a-weighted projection onto constant conservative fluxes.

    Returns the per-edge constant values; use :func:`constant_flux_to_reduced`
    to get reduced nodal coordinates.
    """
    try:
        coef = scipy.linalg.cho_solve(scipy.linalg.cho_factor(sys.G), sys.W @ u)
    except scipy.linalg.LinAlgError as exc:
        raise RuntimeError("Gram matrix of constant fluxes is singular") from exc
    return sys.basis @ coef


def constant_flux_to_reduced(spaces: DofMap, edge_values: np.ndarray) -> np.ndarray:
    edge = np.repeat(np.arange(spaces.net.n_edges), spaces.mesh.counts + 1)
    return spaces.reduce(np.asarray(edge_values)[edge])


def boundary_load(sys: SystemMatrices, p_D: Mapping[str, float]) -> np.ndarray:
    """Flux right-hand side contribution of prescribed boundary pressures."""
    bverts = sys.spaces.net.boundary_vertices
    missing = [v for v in bverts if v not in p_D]
    if missing:
        raise ValueError(f"no boundary pressure for vertex(es) {', '.join(missing)}")
    return sys.boundary_matrix @ np.array([float(p_D[v]) for v in bverts])


def load_from_sources(sys: SystemMatrices, f: EdgeFunction | None = None, g: EdgeFunction | None = None) -> LoadVector:
    """Consistent loads ``(f, v_h)`` and ``(g, q_h)`` by 3-point Gauss quadrature."""
    spaces = sys.spaces
    flux = np.zeros(sys.n_flux)
    pressure = np.zeros(sys.n_pressure)
    if f is not None:
        vals, w = _eval_at_quad(spaces, f)
        x, _, _ = quadrature_points(spaces.mesh)
        xi = (x - spaces.mesh.element_left()[:, None]) / spaces.mesh.element_h()[:, None]
        i0, i1 = _element_nodes(spaces)
        full = np.zeros(spaces.n_full)
        np.add.at(full, i0, (vals * w * (1 - xi)).sum(axis=1))
        np.add.at(full, i1, (vals * w * xi).sum(axis=1))
        flux = spaces.Z.T @ full
    if g is not None:
        vals, w = _eval_at_quad(spaces, g)
        pressure = (vals * w).sum(axis=1)
    return LoadVector(np.asarray(flux), np.asarray(pressure))


def triplets(M) -> str:
    """``row col value`` lines for the nonzeros of ``M``."""
    C = sp.coo_matrix(M)
    order = np.lexsort((C.col, C.row))
    return "".join(f"{C.row[k]} {C.col[k]} {C.data[k]:.17g}\n" for k in order)
