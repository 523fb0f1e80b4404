"""Stationary saddle-point solves, elliptic projection and theta-scheme time stepping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import LoadVector, SystemMatrices, boundary_load, divergence_full, load_from_sources
from .femspace import _eval_at_quad, per_edge

log = logging.getLogger(__name__)

BoundaryData = Callable[[float], Mapping[str, float]]
SourceData = Callable[[float], LoadVector]


class SolverError(RuntimeError):
    """Numerical failure in a linear solve."""


@dataclass(frozen=True)
class State:
    t: float
    u: np.ndarray
    p: np.ndarray


@dataclass
class Trajectory:
    times: np.ndarray
    u: np.ndarray  # samples x n_flux
    p: np.ndarray  # samples x n_pressure
    energies: np.ndarray
    theta: float
    dt: float
    T: float
    step_energies: np.ndarray | None = field(default=None)

    def state(self, k: int) -> State:
        return State(float(self.times[k]), self.u[k], self.p[k])

    def __len__(self) -> int:
        return len(self.times)


def saddle_matrix(sys: SystemMatrices) -> sp.csc_matrix:
    """Symmetric form ``[[M_a, D^T], [D, 0]]`` of the stationary operator."""
    return sp.bmat([[sys.M_a, sys.D.T], [sys.D, None]], format="csc")


def solve_stationary(sys: SystemMatrices, loads: LoadVector) -> State:
    """Solve ``M_a u - D^T p = F``, ``D u = G``.

    The unknown ``-p`` turns the block operator symmetric; it is factorized
    with a sparse LU.
    """
    A = saddle_matrix(sys)
    rhs = np.concatenate([loads.flux, loads.pressure])
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SolverError(
            "stationary saddle-point matrix is singular; the discrete stability "
            "conditions (conforming spaces, div V_h = Q_h, constants in V_h) are violated"
        ) from exc
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError("stationary solve produced non-finite values")
    n = sys.n_flux
    u, p = x[:n], -x[n:]
    res = np.linalg.norm(A @ x - rhs)
    if res > 1e-8 * (1 + np.linalg.norm(rhs)):
        raise SolverError(f"stationary residual {res:.3e} too large")
    return State(0.0, u, p)


def stationary_residual(sys: SystemMatrices, state: State, loads: LoadVector) -> tuple[float, float]:
    r1 = sys.M_a @ state.u - sys.D.T @ state.p - loads.flux
    r2 = sys.D @ state.u - loads.pressure
    return float(np.linalg.norm(r1)), float(np.linalg.norm(r2))


def elliptic_projection(sys: SystemMatrices, u, p) -> State:
    """Discrete pair reproducing the stationary right-hand sides of ``(u, p)``.

    ``u`` and ``p`` are either discrete coefficient vectors (reduced flux,
    element pressures), in which case they are returned unchanged, or edge
    functions (see :func:`dampnet.femspace.per_edge`), in which case the
    right-hand sides ``(a u, v_h) - (p, div v_h)`` and ``(div u, q_h)`` are
    assembled by quadrature and the stationary problem is solved.
    """
    if isinstance(u, np.ndarray) and isinstance(p, np.ndarray):
        if u.shape != (sys.n_flux,) or p.shape != (sys.n_pressure,):
            raise ValueError("coefficient vectors do not match the system")
        return State(0.0, u.copy(), p.copy())
    flux_rhs, pressure_rhs = projection_rhs(sys, u, p)
    return solve_stationary(sys, LoadVector(flux_rhs, pressure_rhs))


def projection_rhs(sys: SystemMatrices, u, p) -> tuple[np.ndarray, np.ndarray]:
    """Assemble ``(a u, v_h) - (p, div v_h)`` and ``(div u, q_h)`` for edge functions."""
    spaces = sys.spaces
    a = sys.alpha * spaces.net.coefficient("a")
    ufns = per_edge(u, spaces.net)
    au = [lambda x, f=f, s=s: s * np.asarray(f(x), dtype=float) for f, s in zip(ufns, a)]
    flux = load_from_sources(sys, f=au).flux
    # div v_h is (v_r - v_l) / h on each element
    pvals, w = _eval_at_quad(spaces, p)
    pint = (pvals * w).sum(axis=1)
    flux = flux - sys.D.T @ (pint / spaces.mesh.element_h())
    # (div u, 1_T) = u(x_r) - u(x_l), exactly
    nodal = np.concatenate([np.broadcast_to(np.asarray(f(spaces.mesh.nodes(j)), dtype=float),
                                            (spaces.mesh.counts[j] + 1,)) for j, f in enumerate(ufns)])
    pressure = divergence_full(spaces) @ nodal
    return np.asarray(flux), np.asarray(pressure)


def _validate_theta_dt(theta: float, dt: float, T: float) -> None:
    if not 0.5 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [1/2, 1], got {theta}")
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    if not T > 0:
        raise ValueError(f"final time must be positive, got {T}")


class ThetaStepper:
    """One-step theta scheme with a single factorization.

    The pressure block ``M_b`` is diagonal, so the pressure is eliminated and
    the remaining symmetric positive definite flux system is factorized once.
    """

    def __init__(self, sys: SystemMatrices, theta: float, dt: float):
        _validate_theta_dt(theta, dt, 1.0)
        self.sys = sys
        self.theta = theta
        self.dt = dt
        self.mb_inv = 1.0 / sys.M_b.diagonal()
        td = theta * dt
        self.A_uu = sp.csc_matrix(sys.M_c + td * sys.M_a)
        S = self.A_uu + td * td * (sys.D.T @ sp.diags(self.mb_inv) @ sys.D)
        try:
            self.lu = spla.splu(sp.csc_matrix(S))
        except RuntimeError as exc:
            raise SolverError("time-stepping matrix is singular") from exc
        ed = (1 - theta) * dt
        self.expl_u = sp.csr_matrix(sys.M_c - ed * sys.M_a)
        self.DT = sp.csr_matrix(sys.D.T)
        self.D = sys.D

    def step(self, u: np.ndarray, p: np.ndarray, F: np.ndarray | None, G: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
        """Advance one step; ``F``, ``G`` are the loads at ``t + theta*dt``."""
        dt, th = self.dt, self.theta
        ed = (1 - th) * dt
        r_u = self.expl_u @ u + ed * (self.DT @ p)
        r_p = self.sys.M_b @ p - ed * (self.D @ u)
        if F is not None:
            r_u = r_u + dt * F
        if G is not None:
            r_p = r_p + dt * G
        td = th * dt
        u1 = self.lu.solve(r_u + td * (self.DT @ (self.mb_inv * r_p)))
        p1 = self.mb_inv * (r_p - td * (self.D @ u1))
        return u1, p1

    def residual(self, u0, p0, u1, p1, F=None, G=None) -> tuple[float, float]:
        """Relative residuals of both block equations for one step."""
        sys, dt, th = self.sys, self.dt, self.theta
        F = 0 if F is None else F
        G = 0 if G is None else G
        r1 = (sys.M_c @ (u1 - u0) + th * dt * (sys.M_a @ u1 - sys.D.T @ p1)
              + (1 - th) * dt * (sys.M_a @ u0 - sys.D.T @ p0) - dt * F)
        r2 = sys.M_b @ (p1 - p0) + th * dt * (sys.D @ u1) + (1 - th) * dt * (sys.D @ u0) - dt * G
        s1 = np.linalg.norm(sys.M_c @ u1) + dt * np.linalg.norm(sys.D.T @ p1) + 1e-300
        s2 = np.linalg.norm(sys.M_b @ p1) + dt * np.linalg.norm(sys.D @ u1) + 1e-300
        return float(np.linalg.norm(r1) / s1), float(np.linalg.norm(r2) / s2)


def iterate(
    sys: SystemMatrices,
    init: State,
    bc: BoundaryData | None = None,
    sources: SourceData | None = None,
    theta: float = 0.5,
    dt: float = 1e-3,
    T: float = 1.0,
) -> Iterator[State]:
    """Yield the initial state and then every time step up to ``T``."""
    _validate_theta_dt(theta, dt, T)
    stepper = ThetaStepper(sys, theta, dt)
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a multiple of dt={dt}")
    u, p = np.array(init.u, dtype=float), np.array(init.p, dtype=float)
    yield State(0.0, u, p)
    for n in range(n_steps):
        t_mid = (n + theta) * dt
        F = G = None
        if bc is not None:
            F = boundary_load(sys, bc(t_mid))
        if sources is not None:
            ld = sources(t_mid)
            F = ld.flux if F is None else F + ld.flux
            G = ld.pressure
        u, p = stepper.step(u, p, F, G)
        yield State((n + 1) * dt, u, p)


def energy_of(sys: SystemMatrices, u: np.ndarray, p: np.ndarray) -> float:
    return 0.5 * float(u @ (sys.M_c @ u) + p @ (sys.M_b @ p))


def simulate(
    sys: SystemMatrices,
    init: State,
    bc: BoundaryData | None = None,
    sources: SourceData | None = None,
    theta: float = 0.5,
    dt: float = 1e-3,
    T: float = 1.0,
    sample_times: Sequence[float] | None = None,
    record_steps: bool = False,
) -> Trajectory:
    """Integrate the semi-discrete system with the theta scheme.

    Parameters
    ----------
    bc
        Boundary pressures as a function of time; ``None`` means homogeneous.
    sources
        Assembled loads as a function of time; ``None`` means zero.
    sample_times
        Times at which the state is stored. They are snapped to the time grid
        and must lie in ``[0, T]``. Defaults to ``0`` and ``T``.
    record_steps
        Also keep the energy after every step in ``Trajectory.step_energies``.
    """
    _validate_theta_dt(theta, dt, T)
    if sample_times is None:
        sample_times = [0.0, T]
    sample_times = sorted(set(float(s) for s in sample_times))
    if sample_times[0] < 0 or sample_times[-1] > T + 1e-12:
        raise ValueError("sample times must lie in [0, T]")
    if sample_times[0] != 0.0:
        sample_times = [0.0] + sample_times
    idx = {int(round(s / dt)): s for s in sample_times}

    times, us, ps, energies, steps = [], [], [], [], []
    for n, st in enumerate(iterate(sys, init, bc, sources, theta, dt, T)):
        if record_steps or n in idx:
            e = energy_of(sys, st.u, st.p)
            if record_steps:
                steps.append(e)
        if n in idx:
            times.append(st.t)
            us.append(st.u.copy())
            ps.append(st.p.copy())
            energies.append(e)
    return Trajectory(
        times=np.array(times),
        u=np.array(us),
        p=np.array(ps),
        energies=np.array(energies),
        theta=theta,
        dt=dt,
        T=T,
        step_energies=np.array(steps) if record_steps else None,
    )
