import numpy as np
import pytest

from pushsum_lab.algorithms import (
    CSV_FIELDS,
    AssumptionError,
    OptimizerKind,
    OptimizerSpec,
    OptimizerState,
    msgap_perturbation,
    run_experiment,
    saddopt_round,
    scalars_per_edge,
    sgap_perturbation,
)
from pushsum_lab.problems import ProblemSpec, QuadraticProblem, make_problem
from pushsum_lab.protocol import init_network, protocol_round
from pushsum_lab.topology import EdgeSet, GraphSpec, generate_edges
from pushsum_lab.weighting import Moreau, MoreauParams, UniformOutDegree


def two_node():
    return QuadraticProblem(np.ones((2, 1, 1)), np.array([[-1.0], [1.0]]))


def quad(n=4, d=3, sigma=0.1, seed=0):
    return make_problem(ProblemSpec("Quadratic", d, n, heterogeneity=1.0, noise_sigma=sigma, seed=seed))


def test_sgap_perturbation():
    np.testing.assert_array_equal(sgap_perturbation(np.zeros((2, 3)), 0.5), np.zeros((2, 3)))
    np.testing.assert_allclose(sgap_perturbation([[2.0]], 0.1), [[-0.2]])
    g = np.random.default_rng(0).normal(size=(4, 3))
    np.testing.assert_allclose(np.linalg.norm(sgap_perturbation(g, 0.3), axis=1), 0.3 * np.linalg.norm(g, axis=1))


def test_msgap_perturbation():
    st = OptimizerState.zeros(1, 1)
    st, eps = msgap_perturbation(st, [[1.0]], 0.2, 0.9)
    np.testing.assert_allclose(st.momentum, [[1.0]])
    np.testing.assert_allclose(eps, [[-0.2]])
    st, _ = msgap_perturbation(OptimizerState.zeros(1, 1), [[1.0]], 1.0, 0.5)
    _, eps = msgap_perturbation(st, [[1.0]], 1.0, 0.5)
    np.testing.assert_allclose(eps, [[-1.5]])
    g = np.random.default_rng(1).normal(size=(3, 2))
    _, eps0 = msgap_perturbation(OptimizerState.zeros(3, 2), g, 0.4, 0.0)
    np.testing.assert_array_equal(eps0, sgap_perturbation(g, 0.4))


@pytest.mark.parametrize("bad", [dict(gamma=0.0), dict(gamma=-1.0), dict(beta=1.0), dict(beta=-0.1)])
def test_optimizer_spec_rejects(bad):
    kw = dict(kind="MSGAP", gamma=0.1, beta=0.5)
    kw.update(bad)
    with pytest.raises(ValueError):
        OptimizerSpec(**kw)


def test_kind_flags():
    assert OptimizerKind.MSGAP.adaptive and OptimizerKind.MSGAP.momentum
    assert not OptimizerKind.SGP.adaptive and not OptimizerKind.SGP.momentum
    assert not OptimizerKind.SADDOPT.adaptive


def test_scalars_per_edge():
    assert scalars_per_edge("SGP", 10, UniformOutDegree()) == 11
    assert scalars_per_edge("MSGP", 10, Moreau()) == 11
    assert scalars_per_edge("SGAP", 10, Moreau()) == 12
    assert scalars_per_edge("SGAP", 10, UniformOutDegree()) == 11
    assert scalars_per_edge("SADDOPT", 10, UniformOutDegree()) == 21


def test_payload_full_n6_d10():
    p = quad(n=6, d=10, sigma=0.0)
    g = GraphSpec("Full", 6)
    sad = run_experiment(p, g, OptimizerSpec("SADDOPT", 0.05), UniformOutDegree(), 3, 0)
    sgp = run_experiment(p, g, OptimizerSpec("SGP", 0.05), UniformOutDegree(), 3, 0)
    assert sad.records[1].scalars_sent == 6 * 6 * 21
    assert sgp.records[1].scalars_sent == 6 * 6 * 11
    assert sgp.records[0].scalars_sent == 0


def test_two_node_converges():
    log = run_experiment(two_node(), GraphSpec("Full", 2), OptimizerSpec("SGAP", 0.1), UniformOutDegree(), 500, 0)
    assert log.records[-1].grad_norm_sq <= 1e-8
    assert len(log.records) == 500
    assert [r.t for r in log.records] == list(range(500))


def test_single_record_when_t_is_one():
    log = run_experiment(quad(), GraphSpec("Full", 4), OptimizerSpec("SGAP", 0.1), Moreau(), 1, 0)
    assert len(log.records) == 1 and log.records[0].t == 0
    assert log.records[0].bound_l1 is None


@pytest.mark.parametrize("kind", ["SGAP", "MSGAP", "SGP", "MSGP", "SADDOPT"])
def test_runs_are_deterministic(kind):
    args = (quad(), GraphSpec("Random", 4, seed=2), OptimizerSpec(kind, 0.05, 0.5 if kind.startswith("M") else 0.0))
    a = run_experiment(*args, Moreau(), 40, 11).to_csv()
    b = run_experiment(*args, Moreau(), 40, 11).to_csv()
    assert a == b
    c = run_experiment(*args, Moreau(), 40, 12).to_csv()
    assert a != c


def test_msgap_beta0_matches_sgap():
    args = (quad(), GraphSpec("Divide", 4))
    a = run_experiment(*args, OptimizerSpec("SGAP", 0.05), Moreau(), 60, 3, trace=True)
    b = run_experiment(*args, OptimizerSpec("MSGAP", 0.05, 0.0), Moreau(), 60, 3, trace=True)
    for xa, xb in zip(a.trace.x, b.trace.x):
        assert np.array_equal(xa, xb)
    assert a.to_csv() == b.to_csv()


def test_sgp_equals_sgap_with_uniform_weights():
    args = (quad(), GraphSpec("Exp", 4))
    a = run_experiment(*args, OptimizerSpec("SGP", 0.05), Moreau(), 40, 3, trace=True)
    b = run_experiment(*args, OptimizerSpec("SGAP", 0.05), UniformOutDegree(), 40, 3, trace=True)
    for xa, xb in zip(a.trace.x, b.trace.x):
        assert np.array_equal(xa, xb)


def test_gradients_taken_at_corrected_parameters():
    p = quad(n=3, d=2, sigma=0.0)
    g = GraphSpec("Random", 3, seed=1)
    log = run_experiment(p, g, OptimizerSpec("SGAP", 0.1), Moreau(), 6, 0, trace=True)
    tr = log.trace
    ys = [tr.x0] + tr.y
    for t in range(len(tr.grads)):
        np.testing.assert_allclose(tr.grads[t], p.local_grads(ys[t]), atol=1e-14)


def test_run_matches_manual_protocol_loop():
    p = quad(n=3, d=2, sigma=0.3)
    spec = GraphSpec("Random", 3, seed=7)
    method = Moreau(MoreauParams(0.2, 0.1))
    x0 = np.arange(6.0).reshape(3, 2)
    log = run_experiment(p, spec, OptimizerSpec("SGAP", 0.05), method, 10, 4, x0=x0)
    s = init_network(x0, spec.period_b)
    for t in range(1, 10):
        eps = -0.05 * p.sample_grads(s.y, 4, t - 1)
        s = protocol_round(s, eps, generate_edges(spec, t), method)
    np.testing.assert_array_equal(log.final_x_bar, s.x_bar)


def test_saddopt_reduces_to_averaging_with_zero_gradients():
    p = QuadraticProblem(np.zeros((3, 1, 1)), np.zeros((3, 1)))
    net = init_network(np.array([[0.0], [3.0], [6.0]]))
    st = OptimizerState(np.zeros((3, 1)), tracking=np.zeros((3, 1)), prev_grad=np.zeros((3, 1)))
    e = EdgeSet(3, np.ones((3, 3), dtype=bool))
    st, net = saddopt_round(st, net, p, e, 0.5, 0, 1)
    np.testing.assert_allclose(net.y, [[3.0]] * 3)


def test_saddopt_single_node_is_gradient_descent():
    p = QuadraticProblem(np.full((1, 1, 1), 2.0), np.array([[1.0]]))
    net = init_network(np.array([[5.0]]))
    g0 = p.local_grads(net.y)
    st = OptimizerState(np.zeros((1, 1)), tracking=g0.copy(), prev_grad=g0)
    x = 5.0
    for t in range(1, 6):
        st, net = saddopt_round(st, net, p, EdgeSet(1), 0.1, 0, t)
        x = x - 0.1 * 2.0 * (x - 1.0)
        assert net.y[0, 0] == pytest.approx(x, rel=1e-14)


def test_saddopt_converges_on_divide():
    p = quad(n=6, d=3, sigma=0.0)
    log = run_experiment(p, GraphSpec("Divide", 6), OptimizerSpec("SADDOPT", 0.05), UniformOutDegree(), 400, 0)
    assert log.records[-1].grad_norm_sq < 1e-10
    assert log.records[-1].bound_l1 is None and log.lemma6_lhs is None


def test_identity_residuals_recorded():
    log = run_experiment(quad(), GraphSpec("Random", 4, seed=3), OptimizerSpec("MSGAP", 0.05, 0.7), Moreau(), 80, 1)
    l5 = log.column("lemma5_resid")[1:]
    l10 = log.column("lemma10_resid")[1:]
    assert l5.max() <= 1e-10 and l10.max() <= 1e-10
    assert 0 <= log.lemma6_lhs <= log.lemma6_rhs


def test_bound_column_dominates_consensus():
    log = run_experiment(quad(n=6), GraphSpec("Divide", 6), OptimizerSpec("SGAP", 0.05), Moreau(), 100, 0)
    b = log.column("bound_l1")[1:]
    c = log.column("cons_l1_max")[1:]
    assert (c <= b).all()


def test_assumption_violation_rejected():
    with pytest.raises(AssumptionError):
        run_experiment(quad(n=8), GraphSpec("Exp", 8, period_b=1), OptimizerSpec("SGAP", 0.1), Moreau(), 10, 0)


def test_node_count_mismatch():
    with pytest.raises(ValueError):
        run_experiment(quad(n=4), GraphSpec("Full", 5), OptimizerSpec("SGAP", 0.1), Moreau(), 10, 0)


def test_csv_format(tmp_path):
    log = run_experiment(quad(), GraphSpec("Full", 4), OptimizerSpec("SGAP", 0.1), Moreau(), 5, 0)
    path = tmp_path / "m.csv"
    text = log.to_csv(path)
    assert path.read_text() == text
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_FIELDS)
    assert len(lines) == 6
    first = lines[1].split(",")
    assert first[CSV_FIELDS.index("bound_l1")] == ""
    # floats are written with round-trip precision
    rec = log.records[3]
    assert float(lines[4].split(",")[1]) == rec.loss
    summary = log.summary()
    assert summary["rounds"] == 4 and summary["bounds"]["C"] == log.bounds.lemma_c


def test_state_dump():
    log = run_experiment(quad(), GraphSpec("Full", 4), OptimizerSpec("SGAP", 0.1), Moreau(), 5, 0, dump_state=True)
    assert len(log.state_dump) == 4 * 5
    assert log.state_dump[-1][0] == 4


def test_weight_hook_can_replace_matrix():
    seen = []

    def hook(t, w):
        seen.append(t)
        return w

    run_experiment(quad(), GraphSpec("Full", 4), OptimizerSpec("SGAP", 0.1), Moreau(), 6, 0, weight_hook=hook)
    assert seen == [1, 2, 3, 4, 5]
