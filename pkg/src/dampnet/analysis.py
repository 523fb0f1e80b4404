"""Stability diagnostics: energies, decay fits, Poincare and inf-sup constants,
and the mesh convergence harness."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .assembly import SystemMatrices, assemble_system
from .femspace import build_mesh, build_spaces, prolongation_between
from .network import Network
from .solvers import State, Trajectory, energy_of, iterate


class DomainError(ValueError):
    """Input outside the domain of a diagnostic (e.g. log of a zero energy)."""


def energy(sys: SystemMatrices, state: State) -> float:
    """Discrete energy ``(u.M_c.u + p.M_b.p) / 2``."""
    if state.u.shape != (sys.n_flux,) or state.p.shape != (sys.n_pressure,):
        raise ValueError("state dimensions do not match the system")
    return energy_of(sys, state.u, state.p)


def modified_energy(sys: SystemMatrices, traj: Trajectory, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Kinetic energy of the time derivative and its modified counterpart.

    Time derivatives are second order finite differences of the stored
    samples (one-sided at the ends). Returns ``(E, E_eps)`` per sample with
    ``E = (|c^1/2 du/dt|^2 + |b^1/2 dp/dt|^2) / 2`` and
    ``E_eps = E + eps * (c du/dt, u)``.
    """
    if len(traj) < 3:
        raise ValueError("modified energy needs at least 3 samples")
    t = np.asarray(traj.times, dtype=float)
    steps = np.diff(t)
    # a scalar spacing keeps differences of constant samples exactly zero
    spacing = steps.mean() if np.allclose(steps, steps[0], rtol=1e-9, atol=0) else t
    du = np.gradient(traj.u, spacing, axis=0, edge_order=2)
    dp = np.gradient(traj.p, spacing, axis=0, edge_order=2)
    Mc_du = (sys.M_c @ du.T).T
    E = 0.5 * (np.einsum("ij,ij->i", du, Mc_du) + np.einsum("ij,ij->i", dp, (sys.M_b @ dp.T).T))
    cross = np.einsum("ij,ij->i", Mc_du, traj.u)
    return E, E + eps * cross


@dataclass(frozen=True)
class DecayFit:
    gamma: float
    amplitude: float
    t_min: float
    t_max: float
    residual: float  # root mean square of the log-fit residuals
    n_samples: int


def fit_decay_rate(samples: Iterable[tuple[float, float]], window: tuple[float, float] = (4.0, np.inf)) -> DecayFit:
    """Least-squares fit of ``log E = log C - gamma t`` over the window."""
    data = np.array([(t, e) for t, e in samples if window[0] <= t <= window[1]], dtype=float)
    if len(data) < 2:
        raise ValueError(f"need at least 2 samples in window {window}, got {len(data)}")
    t, E = data[:, 0], data[:, 1]
    if np.any(E <= 0):
        raise DomainError("energies in the fit window must be positive")
    slope, intercept = np.polyfit(t, np.log(E), 1)
    resid = np.log(E) - (intercept + slope * t)
    return DecayFit(float(-slope), float(np.exp(intercept)), float(t.min()), float(t.max()),
                    float(np.sqrt(np.mean(resid**2))), len(t))


@dataclass(frozen=True)
class SpectralReport:
    poincare_sq: float
    infsup: float
    h: float
    alpha: float


def poincare_constant(sys: SystemMatrices, tol: float = 1e-10, return_vector: bool = False):
    """Square of the discrete generalized Poincare constant.

    Largest eigenvalue of ``M_c u = lam (K + A0) u``. ``K + A0`` is Cholesky
    factorized, the problem is turned into the symmetric standard problem
    ``L^-1 M_c L^-T y = lam y`` and its top eigenvalue is found with Lanczos
    (ARPACK).
    """
    B = sys.K.toarray() + sys.A0
    try:
        L = scipy.linalg.cholesky(B, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise RuntimeError("K + A0 is not positive definite; the projection term does not control constants") from exc
    Mc = sys.M_c
    n = B.shape[0]

    def matvec(y):
        x = scipy.linalg.solve_triangular(L, y, lower=True, trans="T")
        return scipy.linalg.solve_triangular(L, Mc @ x, lower=True)

    op = spla.LinearOperator((n, n), matvec=matvec, dtype=float)
    v0 = np.ones(n) / np.sqrt(n)
    if n <= 3:
        Linv = scipy.linalg.solve_triangular(L, np.eye(n), lower=True)
        w, V = np.linalg.eigh(Linv @ Mc.toarray() @ Linv.T)
        lam, y = w[-1], V[:, -1]
    else:
        w, V = spla.eigsh(op, k=1, which="LA", tol=tol, v0=v0, maxiter=10000)
        lam, y = w[0], V[:, 0]
    if not return_vector:
        return float(lam)
    u = scipy.linalg.solve_triangular(L, y, lower=True, trans="T")
    return float(lam), u


def rayleigh_quotient(sys: SystemMatrices, u: np.ndarray) -> float:
    return float(u @ (sys.M_c @ u)) / float(u @ (sys.K @ u) + u @ (sys.A0 @ u))


def infsup_constant(sys: SystemMatrices) -> float:
    """Discrete inf-sup constant of the divergence in the H(div) norm.

    Square root of the smallest eigenvalue of ``(D H^-1 D^T) q = lam M q``
    with ``M`` the unweighted pressure mass matrix.
    """
    lu = spla.splu(sys.H.tocsc())
    DT = sys.D.T.toarray()
    S = sys.D @ lu.solve(DT)
    S = 0.5 * (S + S.T)
    w = scipy.linalg.eigh(S, sys.M_pI.toarray(), eigvals_only=True, subset_by_index=[0, 0])
    return float(np.sqrt(max(w[0], 0.0)))


def spectral_report(net: Network, h: float, alpha: float) -> SpectralReport:
    spaces = build_spaces(net, build_mesh(net, h))
    sys = assemble_system(net, spaces, alpha)
    return SpectralReport(poincare_constant(sys), infsup_constant(sys), spaces.mesh.h, alpha)


@dataclass(frozen=True)
class ConvergenceTable:
    h: np.ndarray
    errors: np.ndarray
    rate: float
    alpha: float
    norm: str


def fit_rate(h: Sequence[float], errors: Sequence[float], last: int = 3) -> float:
    """Slope of ``log e`` against ``log h`` over the last ``last`` points."""
    h = np.asarray(h, dtype=float)[-last:]
    e = np.asarray(errors, dtype=float)[-last:]
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


def pair_error(net: Network, scenario, h: float, alpha: float = 1.0, dt: float = 1e-3, theta: float = 0.5,
               T: float = 20.0, norm: str = "energy", horizons: Sequence[float] = ()) -> float | list[float]:
    """``max_n |u_h - u_2h|^2 + |p_h - p_2h|^2`` over the time steps up to ``T``.

    The coarse solution is prolonged to the fine mesh. ``norm="energy"``
    weights the flux by ``c`` and the pressure by ``b``; ``norm="l2"`` is
    unweighted. With ``horizons`` given, returns the maxima over
    ``t <= horizon`` for each horizon (all must be ``<= T``).
    """
    if norm not in ("energy", "l2"):
        raise ValueError(f"unknown norm {norm!r}")
    fine = build_spaces(net, build_mesh(net, h))
    coarse = build_spaces(net, build_mesh(net, 2 * h))
    if not np.array_equal(fine.mesh.counts, 2 * coarse.mesh.counts):
        raise ValueError(f"meshes for h={h} and 2h are not nested")
    prol = prolongation_between(coarse, fine)
    sf = assemble_system(net, fine, alpha)
    sc = assemble_system(net, coarse, alpha)
    Mu, Mp = (sf.M_c, sf.M_b) if norm == "energy" else (sf.M_I, sf.M_pI)
    hz = sorted(horizons) if horizons else [T]
    best = [0.0] * len(hz)
    runs = zip(
        iterate(sc, scenario.initial_state(sc), scenario.bc, scenario.sources(sc), theta, dt, T),
        iterate(sf, scenario.initial_state(sf), scenario.bc, scenario.sources(sf), theta, dt, T),
    )
    for c_state, f_state in runs:
        du = f_state.u - prol.P_V @ c_state.u
        dp = f_state.p - prol.P_Q @ c_state.p
        err = float(du @ (Mu @ du) + dp @ (Mp @ dp))
        for k, H in enumerate(hz):
            if f_state.t <= H + 1e-12 and err > best[k]:
                best[k] = err
    return best if horizons else best[0]


def convergence_study(net: Network, scenario, h_list: Sequence[float] | None = None, alpha: float = 1.0,
                      dt: float = 1e-3, theta: float = 0.5, T: float = 20.0, norm: str = "energy") -> ConvergenceTable:
    """Discretization error ``e_h`` for a sequence of uniformly refined meshes.

    ``h_list`` defaults to ``0.1 * 2**-k`` for ``k = 1..6``; each entry is the
    fine mesh of a pair ``(h, 2h)``.
    """
    if h_list is None:
        h_list = [0.1 * 2.0**-k for k in range(1, 7)]
    h_arr = np.asarray(h_list, dtype=float)
    if np.any(np.abs(h_arr[:-1] / h_arr[1:] - 2) > 1e-12):
        raise ValueError("h_list must decrease by a factor of 2 at every step")
    errors = np.array([pair_error(net, scenario, h, alpha, dt, theta, T, norm) for h in h_arr])
    rate = fit_rate(h_arr, errors) if len(h_arr) >= 2 else float("nan")
    return ConvergenceTable(h_arr, errors, rate, alpha, norm)
