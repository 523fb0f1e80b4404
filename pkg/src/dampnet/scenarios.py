"""Named initial/boundary data sets for the time-dependent experiments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .assembly import SystemMatrices
from .solvers import State


@dataclass(frozen=True)
class Scenario:
    """Initial state, boundary pressures and sources for a simulation.

    The initial state is zero flux and a constant pressure. Both lie in the
    discrete spaces, so the elliptic projection leaves them unchanged.
    """

    name: str
    boundary_vertices: tuple[str, ...]
    initial_pressure: float = 0.0
    boundary_pressure: Callable[[float], float] | None = None

    def initial_state(self, sys: SystemMatrices) -> State:
        return State(0.0, np.zeros(sys.n_flux), np.full(sys.n_pressure, float(self.initial_pressure)))

    def bc(self, t: float) -> Mapping[str, float] | None:
        value = 0.0 if self.boundary_pressure is None else float(self.boundary_pressure(t))
        return {v: value for v in self.boundary_vertices}

    def sources(self, sys: SystemMatrices):
        return None


def ramp(t: float) -> float:
    """``1 - t`` on ``[0, 1)``, zero afterwards."""
    return 1.0 - t if t < 1.0 else 0.0


def paper_ramp(net) -> Scenario:
    """Start at rest with unit pressure and ramp the boundary pressure down to zero."""
    return Scenario("paper-ramp", net.boundary_vertices, 1.0, ramp)


def at_rest(net) -> Scenario:
    """Zero initial data and homogeneous boundary pressure."""
    return Scenario("rest", net.boundary_vertices, 0.0, None)


def free_decay(net) -> Scenario:
    """Unit initial pressure with homogeneous boundary pressure from the start."""
    return Scenario("free-decay", net.boundary_vertices, 1.0, None)


SCENARIOS = {"paper-ramp": paper_ramp, "rest": at_rest, "free-decay": free_decay}


def get_scenario(name: str, net) -> Scenario:
    try:
        return SCENARIOS[name](net)
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}") from None
