import numpy as np
import pytest

from pushsum_lab.protocol import (
    NetworkState,
    NumericalError,
    consensus_distance,
    init_network,
    matrix_form_round,
    protocol_round,
    state_rows,
)
from pushsum_lab.topology import EdgeSet, GraphSpec, generate_edges
from pushsum_lab.weighting import Moreau, MoreauParams, UniformOutDegree, WeightMatrix


def full(n):
    return EdgeSet(n, np.ones((n, n), dtype=bool))


def test_init_network():
    s = init_network([[1.0], [3.0]])
    np.testing.assert_array_equal(s.a, [1, 1])
    np.testing.assert_array_equal(s.y, [[1], [3]])
    np.testing.assert_array_equal(s.buffer[0], [[1], [1]])
    np.testing.assert_array_equal(s.buffer[1], [[3], [3]])
    assert s.round == 0 and s.weights is None
    one = init_network([[2.5, -1.0]])
    np.testing.assert_array_equal(one.y, one.x)
    with pytest.raises(ValueError):
        init_network([1.0, 2.0])


def test_full_uniform_averages():
    s = protocol_round(init_network([[0.0], [2.0]]), np.zeros((2, 1)), full(2), UniformOutDegree())
    np.testing.assert_array_equal(s.x, [[1], [1]])
    np.testing.assert_array_equal(s.a, [1, 1])
    np.testing.assert_array_equal(s.y, [[1], [1]])
    np.testing.assert_array_equal(consensus_distance(s, "L1"), [0, 0])


def test_self_loop_round_is_identity_mixing(rng):
    x0 = rng.normal(size=(3, 2))
    eps = rng.normal(size=(3, 2))
    for method in (UniformOutDegree(), Moreau()):
        s = protocol_round(init_network(x0), eps, EdgeSet(3), method, validate=True)
        np.testing.assert_array_equal(s.x, x0 + eps)
        np.testing.assert_array_equal(s.a, np.ones(3))
        np.testing.assert_array_equal(s.y, x0 + eps)


def test_round_does_not_mutate_input(rng):
    s0 = init_network(rng.normal(size=(4, 2)))
    snapshot = (s0.x.copy(), s0.a.copy(), s0.buffer.copy())
    protocol_round(s0, rng.normal(size=(4, 2)), full(4), Moreau())
    np.testing.assert_array_equal(s0.x, snapshot[0])
    np.testing.assert_array_equal(s0.a, snapshot[1])
    np.testing.assert_array_equal(s0.buffer, snapshot[2])
    assert s0.round == 0


def test_buffer_rule():
    # node 0 -> node 1 only; B = 2
    n, d = 3, 1
    s = init_network(np.array([[1.0], [2.0], [3.0]]), period_b=2)
    e = EdgeSet(n, [(0, 1)])
    eps = np.array([[10.0], [20.0], [30.0]])
    s1 = protocol_round(s, eps, e, UniformOutDegree())
    half = np.array([11.0, 22.0, 33.0])
    # received: node 1 now holds node 0's half-step value
    assert s1.buffer[1, 0, 0] == half[0]
    # never heard within the window: reset to own half-step value
    assert s1.buffer[0, 1, 0] == half[0]
    assert s1.buffer[2, 0, 0] == half[2]
    # own entry always refreshed through the self-loop
    for i in range(n):
        assert s1.buffer[i, i, 0] == half[i]
    # next round without the link: within the window the old value survives
    s2 = protocol_round(s1, np.zeros((n, d)), EdgeSet(n), UniformOutDegree())
    assert s2.buffer[1, 0, 0] == half[0]
    # two rounds without the link: the window has moved on
    s3 = protocol_round(s2, np.zeros((n, d)), EdgeSet(n), UniformOutDegree())
    assert s3.buffer[1, 0, 0] == s2.x[1, 0]


def test_weights_use_buffers_before_update():
    # identical buffers at round 1 give the dist_sq = 0 Moreau column even
    # though the half-step values differ
    s = init_network(np.zeros((3, 1)))
    eps = np.array([[0.0], [100.0], [-100.0]])
    s1 = protocol_round(s, eps, full(3), Moreau(MoreauParams(v=0.1)))
    low = 0.1 * 0.9 / 1.1 / 3
    np.testing.assert_allclose(s1.weights.entries[1, 0], low, rtol=1e-14)


def test_conservation_random_moreau(rng):
    spec = GraphSpec("Random", 6, seed=4)
    s = init_network(rng.normal(size=(6, 3)), spec.period_b)
    total = s.x.sum(axis=0)
    for t in range(1, 51):
        eps = rng.normal(size=(6, 3))
        total = total + eps.sum(axis=0)
        s = protocol_round(s, eps, generate_edges(spec, t), Moreau())
        np.testing.assert_allclose(s.x.sum(axis=0), total, rtol=0, atol=1e-10)
    assert abs(s.a.sum() - 6) <= 1e-10


def test_matrix_form_examples(rng):
    x = rng.normal(size=(3, 2))
    eps = rng.normal(size=(3, 2))
    xn, an, yn = matrix_form_round(x, np.ones(3), eps, WeightMatrix(np.eye(3)))
    np.testing.assert_array_equal(xn, x + eps)
    xn, an, yn = matrix_form_round([[0.0, 4.0], [2.0, 0.0]], np.ones(2), np.zeros((2, 2)), np.full((2, 2), 0.5))
    np.testing.assert_array_equal(xn, [[1.0, 2.0], [1.0, 2.0]])
    with pytest.raises(ValueError):
        matrix_form_round(x, np.ones(2), eps, np.eye(3))


def test_oracle_equivalence(rng):
    n, d = 5, 3
    spec = GraphSpec("Random", n, seed=8)
    s = init_network(rng.normal(size=(n, d)), spec.period_b)
    x, a = s.x.copy(), s.a.copy()
    for t in range(1, 101):
        eps = rng.normal(size=(n, d))
        s = protocol_round(s, eps, generate_edges(spec, t), Moreau(MoreauParams(0.2, 0.5)))
        x, a, y = matrix_form_round(x, a, eps, s.weights)
        np.testing.assert_allclose(s.x, x, rtol=0, atol=1e-12)
        np.testing.assert_allclose(s.a, a, rtol=0, atol=1e-12)
        np.testing.assert_allclose(s.y, y, rtol=0, atol=1e-12)


def test_buffer_staleness_invariant(rng):
    n, d = 5, 2
    spec = GraphSpec("Random", n, period_b=3, p_inner=0.3, p_inter=0.1, seed=2)
    s = init_network(rng.normal(size=(n, d)), spec.period_b)
    halves = []
    for t in range(1, 30):
        eps = rng.normal(size=(n, d))
        halves.append(s.x + eps)
        s = protocol_round(s, eps, generate_edges(spec, t), UniformOutDegree())
        recent = halves[-spec.period_b :]
        for i in range(n):
            for j in range(n):
                ok = any(np.array_equal(s.buffer[i, j], h[j]) for h in recent)
                ok = ok or np.array_equal(s.buffer[i, j], halves[-1][i])
                assert ok


def test_validate_matches_fast_path(rng):
    spec = GraphSpec("Random", 6, seed=5)
    s = init_network(rng.normal(size=(6, 2)), spec.period_b)
    for t in range(1, 6):
        eps = rng.normal(size=(6, 2))
        e = generate_edges(spec, t)
        fast = protocol_round(s, eps, e, Moreau())
        slow = protocol_round(s, eps, e, Moreau(), validate=True)
        np.testing.assert_allclose(fast.weights.entries, slow.weights.entries, rtol=0, atol=1e-15)
        np.testing.assert_allclose(fast.x, slow.x, rtol=0, atol=1e-13)
        s = fast


def test_underflow_guard():
    s = init_network(np.ones((2, 1)))
    s = NetworkState(s.x, np.array([1e-301, 1.0]), s.y, s.buffer)
    with pytest.raises(NumericalError):
        protocol_round(s, np.zeros((2, 1)), EdgeSet(2), UniformOutDegree())


def test_shape_checks():
    s = init_network(np.ones((2, 1)))
    with pytest.raises(ValueError):
        protocol_round(s, np.zeros((3, 1)), EdgeSet(2), UniformOutDegree())
    with pytest.raises(ValueError):
        protocol_round(s, np.zeros((2, 1)), EdgeSet(3), UniformOutDegree())


def test_consensus_distance_examples():
    s = init_network(np.array([[0.0], [2.0]]))
    np.testing.assert_array_equal(consensus_distance(s, "L1"), [1, 1])
    np.testing.assert_array_equal(consensus_distance(s, "L2"), [1, 1])
    assert consensus_distance(init_network(np.ones((1, 3))), "L2")[0] == 0
    with pytest.raises(ValueError):
        consensus_distance(s, "Linf")


def test_state_rows():
    rows = state_rows(init_network(np.array([[3.0, 4.0], [0.0, 0.0]])))
    assert rows[0] == (0, 0, 1.0, 5.0, 1.5 + 2.0, pytest.approx(2.5))
