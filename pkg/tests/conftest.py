import numpy as np
import pytest

from dampnet import assemble_system, build_mesh, build_network, build_spaces, load_network, solve_nodal_fluxes

# Coefficient vectors of the seven-pipe test network, typed in independently
# of the bundled file so the file itself is under test.
FIG2_A0 = np.array([0.5, 0.5, 4, 4, 4, 0.5, 0.5])
FIG2_B = np.array([4, 4, 1, 1, 1, 4, 4.0])
FIG2_C = np.array([0.25, 0.25, 1, 1, 1, 0.25, 0.25])


def single_edge_net(length=1.0, a=1.0, b=1.0, c=1.0):
    return build_network(["v1", "v2"], [dict(id="e1", tail="v1", head="v2", length=length, a=a, b=b, c=c)])


def fig1_net():
    edges = [("e1", "v1", "v2"), ("e2", "v2", "v3"), ("e3", "v2", "v4")]
    return build_network(["v1", "v2", "v3", "v4"],
                         [dict(id=i, tail=t, head=h, length=1, a=1, b=1, c=1) for i, t, h in edges])


@pytest.fixture
def single_edge():
    return single_edge_net()


@pytest.fixture
def fig1():
    return fig1_net()


@pytest.fixture(scope="session")
def fig2():
    return load_network("paper_fig2").network


def system_for(net, h, alpha=1.0):
    return assemble_system(net, build_spaces(net, build_mesh(net, h)), alpha)


@pytest.fixture(scope="session")
def fig2_sys(fig2):
    return system_for(fig2, 0.1, 1.0)


def conservative_polys(net, rng, degree=5):
    """Random per-edge polynomials made conservative by adding edge constants."""
    coefs = [rng.standard_normal(degree + 1) for _ in range(net.n_edges)]
    polys = [np.polynomial.Polynomial(c) for c in coefs]
    nodal = {}
    for v in net.interior_vertices:
        nodal[v] = sum(s * polys[j](net.edges[j].length if s > 0 else 0.0) for j, s in net.incident(v))
    shift = solve_nodal_fluxes(net, nodal)
    return [p - shift[j] for j, p in enumerate(polys)]


# Pass/fail lines written by the acceptance module, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
