"""Adaptive-weighting push-sum, one synchronous round at a time.

Each node keeps a parameter ``x``, a normaliser ``a``, the corrected estimate
``y = x / a`` and a buffer holding the last value it received from every peer.
A round perturbs ``x``, lets every node pick its weight column from its own
buffer, refreshes the buffers with what arrived this round, and mixes.

:func:`matrix_form_round` is the same step written as plain matrix products;
it ignores the buffers and serves as an independent check on
:func:`protocol_round`.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .topology import EdgeSet, aggregate_window
from .weighting import WeightMatrix, assemble_matrix

__all__ = [
    "NumericalError",
    "NodeState",
    "NetworkState",
    "init_network",
    "protocol_round",
    "matrix_form_round",
    "consensus_distance",
    "state_rows",
]

A_UNDERFLOW = 1e-300


class NumericalError(ArithmeticError):
    """A run produced a value the protocol cannot continue from."""


@dataclass(frozen=True)
class NodeState:
    x: np.ndarray
    a: float
    y: np.ndarray
    buffer: np.ndarray


@dataclass
class NetworkState:
    """Network-wide state with nodes stacked along the first axis.

    ``buffer[i, j]`` is node i's last-known parameter of node j.
    ``weights`` is the matrix used by the most recent round (None at round 0).
    """

    x: np.ndarray
    a: np.ndarray
    y: np.ndarray
    buffer: np.ndarray
    round: int = 0
    period_b: int = 1
    link_history: deque = field(default_factory=deque)
    weights: WeightMatrix | None = None

    @property
    def n_nodes(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def node(self, i: int) -> NodeState:
        return NodeState(self.x[i].copy(), float(self.a[i]), self.y[i].copy(), self.buffer[i].copy())

    @property
    def x_bar(self) -> np.ndarray:
        return self.x.mean(axis=0)


def init_network(x0, period_b: int = 1) -> NetworkState:
    """Start every node at its own ``x0`` row with ``a = 1`` and a self-filled buffer."""
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 2:
        raise ValueError(f"x0 must be an (N, d) array, got shape {x0.shape}")
    n, d = x0.shape
    if period_b < 1:
        raise ValueError("period_b must be >= 1")
    return NetworkState(
        x=x0.copy(),
        a=np.ones(n),
        y=x0.copy(),
        buffer=np.repeat(x0[:, None, :], n, axis=1),
        round=0,
        period_b=period_b,
        link_history=deque(maxlen=period_b),
    )


def protocol_round(state: NetworkState, eps, e: EdgeSet, method, validate: bool = False) -> NetworkState:
    """Advance ``state`` by one round and return the new state.

    ``eps`` is the per-node perturbation (N x d) added before mixing. With
    ``validate`` set, the weight matrix is rebuilt column by column and checked
    against the round's edges.
    """
    n, d = state.x.shape
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (n, d):
        raise ValueError(f"perturbation shape {eps.shape} does not match state {(n, d)}")
    if e.n_nodes != n:
        raise ValueError(f"edge set has {e.n_nodes} nodes, state has {n}")

    x_half = state.x + eps

    # weights come from the buffers as they stood before this round's messages
    if validate:
        w = assemble_matrix([method.column(e, i, state.buffer[i]) for i in range(n)], e)
    else:
        w = method.matrix(e, state.buffer)
    wm = w.entries

    history = deque(state.link_history, maxlen=state.period_b)
    history.append(e)
    recent = aggregate_window(list(history)).mask
    # received[i, j]: j sent to i this round; stale[i, j]: nothing from j within B rounds
    received = e.mask.T
    stale = ~recent.T
    buffer = state.buffer.copy()
    buffer[received] = np.broadcast_to(x_half[None, :, :], (n, n, d))[received]
    buffer[stale] = np.broadcast_to(x_half[:, None, :], (n, n, d))[stale]

    a = wm @ state.a
    if (a <= A_UNDERFLOW).any():
        raise NumericalError(f"normaliser underflow at round {state.round + 1}: min a = {a.min():.3e}")
    x = wm @ x_half
    y = x / a[:, None]

    return replace(
        state,
        x=x,
        a=a,
        y=y,
        buffer=buffer,
        round=state.round + 1,
        link_history=history,
        weights=w,
    )


def matrix_form_round(x_mat, a_vec, eps_mat, w):
    """``X <- W (X + eps)``, ``a <- W a``, ``Y = X / a`` row-wise."""
    x_mat = np.asarray(x_mat, dtype=float)
    a_vec = np.asarray(a_vec, dtype=float)
    eps_mat = np.asarray(eps_mat, dtype=float)
    wm = np.asarray(w, dtype=float)
    n = wm.shape[0]
    if wm.shape != (n, n) or x_mat.shape[0] != n or a_vec.shape != (n,) or eps_mat.shape != x_mat.shape:
        raise ValueError("inconsistent shapes in matrix_form_round")
    x_new = wm @ (x_mat + eps_mat)
    a_new = wm @ a_vec
    return x_new, a_new, x_new / a_new[:, None]


def consensus_distance(state: NetworkState, norm: str = "L1") -> np.ndarray:
    """Per-node distance ``||y_i - mean_j x_j||`` in the L1 or L2 norm."""
    gap = state.y - state.x_bar
    if norm == "L1":
        return np.abs(gap).sum(axis=1)
    if norm == "L2":
        return np.sqrt((gap * gap).sum(axis=1))
    raise ValueError(f"unknown norm {norm!r}")


def state_rows(state: NetworkState):
    """Per-node dump rows ``(round, node, a, |x|, L1 gap, L2 gap)``."""
    l1 = consensus_distance(state, "L1")
    l2 = consensus_distance(state, "L2")
    xn = np.linalg.norm(state.x, axis=1)
    return [(state.round, i, float(state.a[i]), float(xn[i]), float(l1[i]), float(l2[i])) for i in range(state.n_nodes)]
