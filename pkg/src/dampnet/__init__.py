"""Mixed finite element simulation of damped pressure waves on pipe networks."""

from .network import (
    DisconnectedNetworkError,
    Edge,
    InvalidEdgeError,
    Network,
    NetworkError,
    NoBoundaryVertexError,
    build_network,
    h0div_basis,
    incidence_matrix,
    solve_nodal_fluxes,
    spanning_tree,
)
from .femspace import ConformityError, DofMap, Mesh, build_mesh, build_spaces, interpolate_flux, project_pressure, refine
from .assembly import LoadVector, SystemMatrices, assemble_system, boundary_load, load_from_sources, pi0_apply
from .solvers import SolverError, State, Trajectory, elliptic_projection, simulate, solve_stationary
from .analysis import (
    ConvergenceTable,
    DecayFit,
    DomainError,
    SpectralReport,
    convergence_study,
    energy,
    fit_decay_rate,
    infsup_constant,
    modified_energy,
    poincare_constant,
)
from .netfile import NetworkFile, NetworkFileError, load_network, parse_network, serialize_network
from .scenarios import Scenario, get_scenario

__version__ = "0.1.0"
