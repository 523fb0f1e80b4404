import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dampnet import (
    DisconnectedNetworkError,
    InvalidEdgeError,
    NetworkError,
    NoBoundaryVertexError,
    build_network,
    h0div_basis,
    incidence_matrix,
    solve_nodal_fluxes,
    spanning_tree,
)
from dampnet.network import interior_incidence

from conftest import FIG2_A0, FIG2_B, FIG2_C

PRINTED_D = np.array([
    [-1, 0, 0, 0, 0, 0, 0],
    [1, -1, -1, 0, 0, 0, 0],
    [0, 1, 0, -1, -1, 0, 0],
    [0, 0, 0, 0, 1, 1, -1],
    [0, 0, 1, 1, 0, -1, 0],
    [0, 0, 0, 0, 0, 0, 1],
])


def _edge(i, t, h, **kw):
    d = dict(id=i, tail=t, head=h, length=1.0, a=1.0, b=1.0, c=1.0)
    d.update(kw)
    return d


def test_fig1_vertex_classes(fig1):
    assert fig1.interior_vertices == ("v2",)
    assert fig1.boundary_vertices == ("v1", "v3", "v4")


def test_fig2_structure(fig2):
    assert fig2.n_vertices == 6 and fig2.n_edges == 7
    assert set(fig2.boundary_vertices) == {"v1", "v6"}
    np.testing.assert_array_equal(fig2.lengths, np.ones(7))
    np.testing.assert_array_equal(fig2.coefficient("a"), FIG2_A0)
    np.testing.assert_array_equal(fig2.coefficient("b"), FIG2_B)
    np.testing.assert_array_equal(fig2.coefficient("c"), FIG2_C)
    assert fig2.c_min == 0.25 and fig2.c_max == 4.0


def test_single_edge_has_no_interior(single_edge):
    assert single_edge.interior_vertices == ()
    np.testing.assert_array_equal(incidence_matrix(single_edge), [[-1], [1]])


def test_fig1_incidence_nonzeros(fig1):
    N = incidence_matrix(fig1)
    expected = np.zeros((4, 3), dtype=int)
    expected[0, 0] = expected[1, 1] = expected[1, 2] = -1
    expected[1, 0] = expected[2, 1] = expected[3, 2] = 1
    np.testing.assert_array_equal(N, expected)


def test_fig2_incidence_matches_printed(fig2):
    np.testing.assert_array_equal(incidence_matrix(fig2), PRINTED_D)


@pytest.mark.parametrize("bad, exc, word", [
    (dict(length=0.0), InvalidEdgeError, "length"),
    (dict(a=-1.0), InvalidEdgeError, "a"),
    (dict(c=0.0), InvalidEdgeError, "c"),
    (dict(head="v1"), InvalidEdgeError, "e1"),
    (dict(head="zz"), InvalidEdgeError, "zz"),
])
def test_invalid_edges_are_named(bad, exc, word):
    with pytest.raises(exc, match=word):
        build_network(["v1", "v2"], [_edge("e1", "v1", "v2", **bad)])


def test_disconnected_rejected():
    with pytest.raises(DisconnectedNetworkError):
        build_network(["v1", "v2", "v3", "v4"], [_edge("e1", "v1", "v2"), _edge("e2", "v3", "v4")])


def test_cycle_without_boundary_rejected():
    with pytest.raises(NoBoundaryVertexError):
        build_network(["v1", "v2", "v3"], [_edge("e1", "v1", "v2"), _edge("e2", "v2", "v3"), _edge("e3", "v3", "v1")])


def test_duplicate_edge_id_rejected():
    with pytest.raises(NetworkError, match="e1"):
        build_network(["v1", "v2", "v3"], [_edge("e1", "v1", "v2"), _edge("e1", "v2", "v3")])


def test_parallel_edges_accepted():
    net = build_network(["v1", "v2", "v3"], [_edge("e1", "v1", "v2"), _edge("e2", "v1", "v2"), _edge("e3", "v2", "v3")])
    assert net.n_edges == 3


def test_fig2_tree_drops_dashed_edges(fig2):
    tree = spanning_tree(fig2)
    assert tree.root == "v1"
    assert tree.tree_edges == (0, 1, 2, 4, 6)
    # same as removing the first row and the fourth and sixth column of D
    block = np.delete(np.delete(PRINTED_D, 0, axis=0), [3, 5], axis=1)
    np.testing.assert_array_equal(tree.block, block)
    assert abs(np.linalg.det(tree.block)) > 1e-12


def test_fig1_tree_block(fig1):
    tree = spanning_tree(fig1)
    assert tree.tree_edges == (0, 1, 2)
    assert abs(np.linalg.det(tree.block)) == pytest.approx(1.0)


def test_path_tree_block_triangular():
    net = build_network(["v1", "v2", "v3"], [_edge("e1", "v1", "v2"), _edge("e2", "v2", "v3")])
    B = spanning_tree(net).block
    # rows (v2, v3), columns (e1, e2): triangular with unit diagonal
    assert np.array_equal(B, np.triu(B)) or np.array_equal(B, np.tril(B))
    np.testing.assert_array_equal(np.abs(np.diag(B)), [1, 1])


def _nodal_residual(net, u, nodal):
    N = incidence_matrix(net)
    idx = net.vertex_index
    return max(abs(N[idx[v]] @ u - nodal[v]) for v in net.interior_vertices)


def test_nodal_fluxes_fig1(fig1):
    u = solve_nodal_fluxes(fig1, {"v2": 1.0})
    np.testing.assert_allclose(u, [1.0, 0.0, 0.0], atol=1e-14)


def test_nodal_fluxes_zero(fig2):
    np.testing.assert_array_equal(solve_nodal_fluxes(fig2, {v: 0.0 for v in fig2.interior_vertices}), np.zeros(7))


def test_nodal_fluxes_fig2_single_source(fig2):
    nodal = {v: 0.0 for v in fig2.interior_vertices}
    nodal["v3"] = 2.0
    u = solve_nodal_fluxes(fig2, nodal)
    assert _nodal_residual(fig2, u, nodal) < 1e-12
    assert u[3] == 0.0 and u[5] == 0.0


def test_nodal_fluxes_missing_vertex(fig2):
    with pytest.raises(NetworkError, match="v3"):
        solve_nodal_fluxes(fig2, {"v2": 1.0})


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=4, max_size=4))
def test_nodal_fluxes_random(vals):
    from dampnet import load_network

    net = load_network("paper_fig2").network
    nodal = dict(zip(net.interior_vertices, vals))
    assert _nodal_residual(net, solve_nodal_fluxes(net, nodal), nodal) < 1e-12


@pytest.mark.parametrize("name, dim", [("single", 1), ("fig1", 2), ("fig2", 3)])
def test_h0div_dimension_and_orthonormality(name, dim, single_edge, fig1, fig2):
    net = {"single": single_edge, "fig1": fig1, "fig2": fig2}[name]
    B = h0div_basis(net)
    assert B.dim == dim
    np.testing.assert_allclose(B.basis.T @ B.basis, np.eye(dim), atol=1e-12)
    if net.interior_vertices:
        assert np.max(np.abs(interior_incidence(net) @ B.basis)) < 1e-12
    assert dim == net.n_edges - np.linalg.matrix_rank(interior_incidence(net)) if net.interior_vertices else dim == 1


def test_h0div_single_edge_is_one(single_edge):
    np.testing.assert_array_equal(h0div_basis(single_edge).basis, [[1.0]])


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 9), st.randoms(use_true_random=False))
def test_incidence_columns_sum_to_zero(n, rnd):
    # random tree plus a few extra edges, with a pendant boundary vertex
    verts = [f"v{i}" for i in range(n + 1)]
    edges = [_edge("b", verts[0], verts[1])]
    for i in range(2, n + 1):
        j = rnd.randrange(1, i)
        edges.append(_edge(f"t{i}", verts[j], verts[i]) if rnd.random() < 0.5 else _edge(f"t{i}", verts[i], verts[j]))
    for k in range(rnd.randrange(0, 3)):
        i, j = rnd.sample(range(1, n + 1), 2)
        edges.append(_edge(f"x{k}", verts[i], verts[j]))
    net = build_network(verts, edges)
    N = incidence_matrix(net)
    np.testing.assert_array_equal(N.sum(axis=0), 0)
    tree = spanning_tree(net)
    assert len(tree.tree_edges) == net.n_vertices - 1
    assert abs(np.linalg.det(tree.block)) > 1e-12
    B = h0div_basis(net).basis
    np.testing.assert_allclose(B.T @ B, np.eye(B.shape[1]), atol=1e-12)
