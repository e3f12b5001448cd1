import numpy as np
import pytest

from core.errors import ConfigError, WalkBoundaryError
from core.models import GraphKind, PhaseDistribution, PhaseField
from core.walk import (
    A,
    A_INV,
    B,
    B_INV,
    autocorrelation_decay,
    basis_state,
    build_lattice,
    build_tree,
    coin_u4,
    decay_table,
    dilation_check,
    escape_check,
    evolve,
    fit_decay,
    horizontal_vertex,
    inverse,
    line_phases,
    step,
    vertex_of,
    walk_phases,
)

TORUS = PhaseField(distribution=PhaseDistribution.TORUS, seed=17)


def _neighbors_are_symmetric(graph):
    nbr = graph.neighbors
    for v in range(graph.n_vertices):
        for letter in range(4):
            w = nbr[v, letter]
            if w >= 0:
                assert nbr[w, inverse(letter)] == v


def test_tree_structure():
    tree = build_tree(3)
    assert tree.n_vertices == 2 * 3 ** 3 - 1
    assert np.all(np.diff(tree.keys) > 0)
    assert np.all(tree.neighbors[0] >= 0)
    degrees = (tree.neighbors >= 0).sum(axis=1)
    assert set(degrees.tolist()) == {1, 4}
    _neighbors_are_symmetric(tree)


def test_tree_words():
    tree = build_tree(3)
    v = vertex_of(tree, [A, B, B])
    assert tree.neighbors[tree.neighbors[tree.neighbors[0, A], B], B] == v
    assert horizontal_vertex(tree, -2) == vertex_of(tree, [A_INV, A_INV])
    with pytest.raises(ConfigError):
        vertex_of(tree, [A, A_INV])
    with pytest.raises(ConfigError):
        vertex_of(tree, [B] * 4)


def test_lattice_structure():
    lattice = build_lattice(5)
    assert lattice.n_vertices == 25
    assert lattice.keys[lattice.origin].tolist() == [0, 0]
    _neighbors_are_symmetric(lattice)
    # the lattice is abelian
    assert vertex_of(lattice, [A, B]) == vertex_of(lattice, [B, A])
    assert lattice.keys[vertex_of(lattice, [B_INV, B_INV])].tolist() == [0, -2]
    with pytest.raises(ConfigError):
        vertex_of(lattice, [A] * 3)


@pytest.mark.parametrize("build, arg", [(build_tree, 0), (build_tree, 15), (build_lattice, 4), (build_lattice, 3)])
def test_graph_size_checks(build, arg):
    with pytest.raises(ConfigError):
        build(arg)


def test_walk_phases():
    tree = build_tree(2)
    omega = walk_phases(tree, TORUS)
    assert omega.shape == (tree.n_vertices, 4)
    assert np.array_equal(omega, walk_phases(tree, TORUS))
    assert np.all(walk_phases(tree) == 0.0)
    with pytest.raises(ConfigError):
        walk_phases(tree, PhaseField(distribution=PhaseDistribution.WORD, word=[0.0, 0.1]))


def test_line_phases_relabel_horizontal_slots():
    tree = build_tree(3)
    omega = walk_phases(tree, TORUS)
    line = line_phases(tree, omega, 2)
    assert line.shape == (10,)
    v = horizontal_vertex(tree, 1)
    assert line[2 * 3] == omega[v, A]
    assert line[2 * 3 + 1] == omega[v, A_INV]


def test_steps_are_unitary_inside_the_graph(drift):
    tree = build_tree(6)
    omega = walk_phases(tree, TORUS)
    states = evolve(basis_state(tree, 0, A, omega), coin_u4(drift, 0.4), 4)
    assert len(states) == 5
    for state in states:
        assert state.norm() == pytest.approx(1.0, abs=1e-12)


def test_step_refuses_to_leave_the_graph(drift):
    tree = build_tree(1)
    leaf = vertex_of(tree, [A])
    state = basis_state(tree, leaf, A, walk_phases(tree))
    with pytest.raises(WalkBoundaryError):
        step(state, coin_u4(drift))


@pytest.mark.parametrize("kind, extra", [(GraphKind.TREE, {}), (GraphKind.LATTICE, {"side": 15})])
def test_dilation(drift, random_embeddings, kind, extra):
    for emb in (drift, random_embeddings[0]):
        deviation = dilation_check(emb, TORUS, n_max=5, depth=7, graph_kind=kind, **extra)
        assert deviation < 1e-12


@pytest.mark.parametrize("kind, extra", [(GraphKind.TREE, {}), (GraphKind.LATTICE, {"side": 15})])
def test_escape(drift, kind, extra):
    assert escape_check(drift, TORUS, n_max=5, depth=7, graph_kind=kind, **extra) < 1e-12


def test_depth_checks(drift):
    with pytest.raises(ConfigError):
        dilation_check(drift, TORUS, n_max=6, depth=7)
    with pytest.raises(ConfigError):
        dilation_check(drift, TORUS, n_max=5, depth=7, graph_kind="lattice", side=11)
    with pytest.raises(ConfigError):
        escape_check(drift, TORUS, n_max=-1, depth=7)


def test_fit_decay():
    seq = 0.5 ** np.arange(12)
    constant, passed = fit_decay(seq, 0.6)
    assert constant == pytest.approx(1.0)
    assert passed
    _, passed = fit_decay(1.1 ** np.arange(12), 0.6)
    assert not passed


def test_autocorrelation_decay(drift):
    report = autocorrelation_decay(drift, TORUS, n_max=5, depth=7)
    assert report.certified and report.passed
    assert report.rate_bound == pytest.approx(0.7927 + 0.05, abs=1e-3)
    assert report.sequence[0] == pytest.approx(1.0)
    rows = decay_table(report)
    assert len(rows) == 6
    assert rows[0] == {"n": 0, "re": 1.0, "im": 0.0, "abs": 1.0}


def test_uncertified_decay(g0):
    report = autocorrelation_decay(g0, TORUS, n_max=3, depth=5)
    assert report.sequence.size == 4
    if not report.certified:
        assert report.rate_bound is None and report.passed is None
