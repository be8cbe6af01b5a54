"""Optimisers driving the push-sum protocol, and the experiment loop.

SGAP / MSGAP feed SGD / heavy-ball perturbations to the adaptive-weighting
protocol. SGP / MSGP are the same perturbations over uniform out-degree
weights. SADDOPT is push-sum gradient tracking, kept as a baseline and as a
reference point for communication cost.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ._rng import STREAM_INIT, keyed_rng
from .analysis import BoundParams, compute_bound_params
from .protocol import (
    A_UNDERFLOW,
    NetworkState,
    NumericalError,
    consensus_distance,
    init_network,
    protocol_round,
    state_rows,
)
from .topology import GraphSpec, generate_edges, max_out_degree, validate_assumption1
from .weighting import Moreau, UniformOutDegree

__all__ = [
    "OptimizerKind",
    "OptimizerSpec",
    "OptimizerState",
    "MetricsRecord",
    "MetricsLog",
    "Trace",
    "AssumptionError",
    "sgap_perturbation",
    "msgap_perturbation",
    "saddopt_round",
    "scalars_per_edge",
    "run_experiment",
    "CSV_FIELDS",
]

CSV_FIELDS = (
    "t",
    "loss",
    "grad_norm_sq",
    "cons_l1_max",
    "cons_l1_mean",
    "cons_l2_mean",
    "bound_l1",
    "scalars_sent",
    "lemma5_resid",
    "lemma10_resid",
)


class OptimizerKind(str, Enum):
    SGAP = "SGAP"
    MSGAP = "MSGAP"
    SGP = "SGP"
    MSGP = "MSGP"
    SADDOPT = "SADDOPT"

    @property
    def adaptive(self) -> bool:
        return self in (OptimizerKind.SGAP, OptimizerKind.MSGAP)

    @property
    def momentum(self) -> bool:
        return self in (OptimizerKind.MSGAP, OptimizerKind.MSGP)


class AssumptionError(ValueError):
    """The graph sequence is not B-strongly connected over the run."""


@dataclass(frozen=True)
class OptimizerSpec:
    kind: OptimizerKind
    gamma: float
    beta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", OptimizerKind(self.kind))
        if not self.gamma > 0:
            raise ValueError(f"learning rate gamma must be > 0, got {self.gamma}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"momentum rate beta must lie in [0, 1), got {self.beta}")


@dataclass
class OptimizerState:
    momentum: np.ndarray
    tracking: np.ndarray | None = None
    prev_grad: np.ndarray | None = None

    @classmethod
    def zeros(cls, n, d):
        return cls(momentum=np.zeros((n, d)))


def sgap_perturbation(grad, gamma):
    return -gamma * np.asarray(grad, dtype=float)


def msgap_perturbation(state: OptimizerState, grad, gamma, beta):
    """Heavy-ball step: ``m <- beta m + g``, ``eps = -gamma m``."""
    m = beta * state.momentum + np.asarray(grad, dtype=float)
    return OptimizerState(momentum=m), -gamma * m


def saddopt_round(state: OptimizerState, network: NetworkState, problem, e, gamma, seed, t):
    """One push-sum gradient-tracking round over uniform out-degree weights.

    ``x <- W x - gamma z``, ``a <- W a``, ``y = x / a``,
    ``z <- W z + g(y_new) - g(y_old)``. Gradients of round ``t`` are keyed
    by ``(seed, t)``; ``state.prev_grad`` holds those at the old ``y``.
    """
    w = UniformOutDegree().matrix(e)
    wm = w.entries
    x = wm @ network.x - gamma * state.tracking
    a = wm @ network.a
    if (a <= A_UNDERFLOW).any():
        raise NumericalError(f"normaliser underflow at round {network.round + 1}: min a = {a.min():.3e}")
    y = x / a[:, None]
    g_new = problem.sample_grads(y, seed, t)
    z = wm @ state.tracking + g_new - state.prev_grad
    new_net = NetworkState(
        x=x, a=a, y=y, buffer=network.buffer, round=network.round + 1,
        period_b=network.period_b, link_history=network.link_history, weights=w,
    )
    return OptimizerState(momentum=state.momentum, tracking=z, prev_grad=g_new), new_net


def scalars_per_edge(kind: OptimizerKind, dim: int, method) -> int:
    """Scalars one node pushes over one link per round (self-loops included)."""
    kind = OptimizerKind(kind)
    if kind is OptimizerKind.SADDOPT:
        return 2 * dim + 1
    extra = 1 if kind.adaptive and isinstance(method, Moreau) else 0
    return dim + 1 + extra


@dataclass
class MetricsRecord:
    t: int
    loss: float
    grad_norm_sq: float
    cons_l1_max: float
    cons_l1_mean: float
    cons_l2_mean: float
    bound_l1: float | None
    scalars_sent: int
    lemma5_resid: float | None
    lemma10_resid: float | None


@dataclass
class Trace:
    """Full per-round history, kept only when a run is asked for it."""

    x0: np.ndarray
    x: list = field(default_factory=list)
    a: list = field(default_factory=list)
    y: list = field(default_factory=list)
    eps: list = field(default_factory=list)
    grads: list = field(default_factory=list)
    momentum: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    edges: list = field(default_factory=list)


@dataclass
class MetricsLog:
    records: list[MetricsRecord]
    bounds: BoundParams | None = None
    final_x_bar: np.ndarray | None = None
    lemma6_lhs: float | None = None
    lemma6_rhs: float | None = None
    empirical_min_weight: float | None = None
    trace: Trace | None = None
    state_dump: list | None = None

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in self.records:
            w.writerow(["" if (v := getattr(r, f)) is None else repr(v) for f in CSV_FIELDS])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary(self) -> dict:
        last = self.records[-1]
        out = {
            "rounds": last.t,
            "final_loss": last.loss,
            "final_grad_norm_sq": last.grad_norm_sq,
            "final_cons_l1_max": last.cons_l1_max,
            "mean_cons_l1": float(np.mean(self.column("cons_l1_mean"))),
            "total_scalars_sent": int(sum(r.scalars_sent for r in self.records)),
            "final_x_bar": None if self.final_x_bar is None else self.final_x_bar.tolist(),
            "lemma6_lhs": self.lemma6_lhs,
            "lemma6_rhs": self.lemma6_rhs,
            "empirical_min_weight": self.empirical_min_weight,
        }
        if self.bounds is not None:
            b = self.bounds
            out["bounds"] = {
                "delta": b.delta, "diameter_delta": b.diameter_delta, "period_b": b.period_b,
                "C": b.lemma_c, "lambda": b.lam, "log_lambda": b.log_lam,
            }
        return out


def _check_finite(rec: MetricsRecord):
    for name in CSV_FIELDS:
        v = getattr(rec, name)
        if v is not None and not math.isfinite(v):
            raise NumericalError(f"non-finite {name}={v} at round {rec.t}")


def run_experiment(
    problem,
    graph_spec: GraphSpec,
    optimizer_spec: OptimizerSpec,
    weighting,
    T: int,
    seed: int,
    x0=None,
    trace: bool = False,
    dump_state: bool = False,
    weight_hook=None,
) -> MetricsLog:
    """Run ``T - 1`` rounds and return one metrics record per round plus the initial one.

    Gradients of round ``t`` are taken at the corrected parameters left by
    round ``t - 1``. SGP/MSGP always mix with uniform out-degree weights;
    SGAP/MSGAP use ``weighting``. ``x0`` defaults to one keyed standard-normal
    vector shared by all nodes. ``weight_hook(t, W) -> W`` may replace a
    round's weight matrix (used to inject faults in tests).
    """
    # overflow is caught by the finiteness check on every record
    with np.errstate(over="ignore", invalid="ignore"):
        return _run(problem, graph_spec, optimizer_spec, weighting, T, seed, x0, trace, dump_state, weight_hook)


def _run(problem, graph_spec, optimizer_spec, weighting, T, seed, x0, trace, dump_state, weight_hook):
    if T < 1:
        raise ValueError("T must be >= 1")
    n, d = problem.n_nodes, problem.dim
    if graph_spec.n_nodes != n:
        raise ValueError(f"graph has {graph_spec.n_nodes} nodes, problem has {n}")
    kind = optimizer_spec.kind
    gamma, beta = optimizer_spec.gamma, optimizer_spec.beta
    method = weighting if kind.adaptive else UniformOutDegree()
    if kind is OptimizerKind.SADDOPT:
        method = UniformOutDegree()

    horizon = max(T - 1, graph_spec.period_b)
    conn = validate_assumption1(graph_spec, horizon)
    if not conn.is_b_strongly_connected:
        raise AssumptionError(f"window starting at round {conn.first_violating_window} is not strongly connected")
    k_max = max_out_degree(graph_spec, horizon)
    bounds = compute_bound_params(method.delta(k_max), conn.diameter_delta, graph_spec.period_b)

    if x0 is None:
        x0 = np.tile(keyed_rng(seed, STREAM_INIT).normal(size=d), (n, 1))
    net = init_network(x0, graph_spec.period_b)
    opt = OptimizerState.zeros(n, d)
    tr = Trace(x0=net.x.copy()) if trace else None
    dump = state_rows(net) if dump_state else None
    per_edge = scalars_per_edge(kind, d, method)

    if kind is OptimizerKind.SADDOPT:
        opt.prev_grad = problem.sample_grads(net.y, seed, 0)
        opt.tracking = opt.prev_grad.copy()

    x0_l1 = float(np.abs(net.x).sum())
    eps_acc = 0.0
    lam = bounds.lam
    gsq_sum = 0.0
    gap_sum = 0.0
    min_weight = math.inf

    def record(t, bound, scalars, l5, l10):
        xb = net.x_bar
        g = problem.grad(xb)
        c1 = consensus_distance(net, "L1")
        c2 = consensus_distance(net, "L2")
        rec = MetricsRecord(
            t, problem.loss(xb), float(g @ g), float(c1.max()), float(c1.mean()), float(c2.mean()),
            bound, scalars, l5, l10,
        )
        _check_finite(rec)
        return rec

    records = [record(0, None, 0, None, None)]
    xbar_prev = net.x_bar
    zbar_prev = xbar_prev

    for t in range(1, T):
        e = generate_edges(graph_spec, t)
        if kind is OptimizerKind.SADDOPT:
            opt, net = saddopt_round(opt, net, problem, e, gamma, seed, t)
            eps = None
        else:
            g = problem.sample_grads(net.y, seed, t - 1)
            if kind.momentum:
                opt, eps = msgap_perturbation(opt, g, gamma, beta)
            else:
                eps = sgap_perturbation(g, gamma)
            if weight_hook is None:
                net = protocol_round(net, eps, e, method)
            else:
                net = protocol_round(net, eps, e, _Hooked(method, weight_hook, t))
        min_weight = min(min_weight, float(net.weights.entries[net.weights.entries > 0].min()))

        if eps is None:
            bound = l5 = l10 = None
        else:
            eps_acc = lam * eps_acc + float(np.abs(eps).sum())
            bound = bounds.coefficient(t, n, "L1") * (lam ** (t - 1) * x0_l1 + eps_acc)
            gbar = g.mean(axis=0)
            mbar = opt.momentum.mean(axis=0) if kind.momentum else gbar
            b = beta if kind.momentum else 0.0
            xbar = net.x_bar
            zbar = (xbar - b * xbar_prev) / (1.0 - b)
            l10 = float(np.linalg.norm(xbar - (xbar_prev - gamma * mbar)))
            l5 = float(np.linalg.norm(zbar - zbar_prev + gamma / (1.0 - b) * gbar))
            gsq_sum += float(gbar @ gbar)
            gap_sum += float(np.sum((zbar - xbar) ** 2))
            xbar_prev, zbar_prev = xbar, zbar

        records.append(record(t, bound, per_edge * len(e), l5, l10))

        if tr is not None:
            tr.x.append(net.x.copy())
            tr.a.append(net.a.copy())
            tr.y.append(net.y.copy())
            tr.eps.append(eps if eps is not None else np.zeros((n, d)))
            tr.grads.append(g if eps is not None else opt.prev_grad.copy())
            tr.momentum.append(opt.momentum.copy() if kind.momentum else (g if eps is not None else opt.momentum))
            tr.weights.append(net.weights)
            tr.edges.append(e)
        if dump is not None:
            dump.extend(state_rows(net))

    log = MetricsLog(
        records=records,
        bounds=bounds,
        final_x_bar=net.x_bar,
        empirical_min_weight=None if math.isinf(min_weight) else min_weight,
        trace=tr,
        state_dump=dump,
    )
    if kind is not OptimizerKind.SADDOPT:
        b = beta if kind.momentum else 0.0
        log.lemma6_lhs = gap_sum
        log.lemma6_rhs = gamma**2 * b**2 / (1.0 - b) ** 4 * gsq_sum
    return log


class _Hooked:
    """Weighting wrapper that lets a test hook rewrite one round's matrix."""

    def __init__(self, method, hook, t):
        self.method, self.hook, self.t = method, hook, t

    def matrix(self, e, buffers):
        return self.hook(self.t, self.method.matrix(e, buffers))

    def column(self, e, i, buffer_row):
        return self.method.column(e, i, buffer_row)
