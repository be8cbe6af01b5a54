"""Column-stochastic mixing weights.

Column ``i`` of a weight matrix holds the weights node ``i`` attaches to the
copies of its value it pushes to each out-neighbour; entry ``(j, i)`` is the
share received by ``j``. Two rules are provided: the classic uniform
out-degree split and the Moreau rule, which maps buffered parameter distances
to weights through a bounded increasing function.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .topology import EdgeSet

__all__ = [
    "MoreauParams",
    "WeightMatrix",
    "WeightError",
    "UniformOutDegree",
    "Moreau",
    "c_prime",
    "moreau_column",
    "uniform_column",
    "assemble_matrix",
    "check_definition1",
    "COLUMN_SUM_TOL",
]

COLUMN_SUM_TOL = 1e-12


class WeightError(ValueError):
    """Raised when a weight matrix breaks column stochasticity or sparsity."""


@dataclass(frozen=True)
class MoreauParams:
    v: float = 0.1
    steepness_k: float = 0.01
    step_gamma: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.v < 1.0:
            raise ValueError(f"v must lie in (0, 1), got {self.v}")
        if self.steepness_k <= 0:
            raise ValueError(f"steepness_k must be positive, got {self.steepness_k}")
        if self.step_gamma <= 0:
            raise ValueError(f"step_gamma must be positive, got {self.step_gamma}")


def c_prime(dist_sq, p: MoreauParams):
    """Penalty derivative, increasing from ``(1-v)v/(2γ(1+v))`` towards ``(1-v)/(2γ)``.

    Accepts scalars or arrays of squared distances.
    """
    v, k, g = p.v, p.steepness_k, p.step_gamma
    return (1.0 - v) / (2.0 * g * (1.0 + v)) * (1.0 + v - np.exp(-k * np.asarray(dist_sq, dtype=float)))


@dataclass(frozen=True)
class WeightMatrix:
    """Dense ``N x N`` column-stochastic matrix, ``entries[i, j] = w_{i,j}``."""

    entries: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def uniform_column(e: EdgeSet, i: int) -> np.ndarray:
    """Push-sum column: ``1/K_i`` to every out-neighbour, self included."""
    if not e.mask[i, i]:
        raise WeightError(f"node {i} has no self-loop")
    row = e.mask[i]
    return row / row.sum()


def moreau_column(e: EdgeSet, i: int, buffer_row, p: MoreauParams) -> np.ndarray:
    """Moreau weights of node ``i`` computed from its own buffer.

    ``buffer_row[j]`` is node i's last-known parameter of node j. ``K_i``
    counts all out-neighbours including ``i`` itself, while the weighted sum
    runs over the other out-neighbours only.
    """
    if not e.mask[i, i]:
        raise WeightError(f"node {i} has no self-loop")
    buffer_row = np.asarray(buffer_row, dtype=float)
    nbrs = e.mask[i].copy()
    k_i = nbrs.sum()
    nbrs[i] = False
    col = np.zeros(e.n_nodes)
    diff = buffer_row[nbrs] - buffer_row[i]
    dist_sq = np.einsum("jd,jd->j", diff, diff)
    col[nbrs] = 2.0 * p.step_gamma / k_i * c_prime(dist_sq, p)
    col[i] = 1.0 - col[nbrs].sum()
    assert col[i] > 0.0, "Moreau self-weight must stay positive"
    return col


def _moreau_matrix(e: EdgeSet, buffers: np.ndarray, p: MoreauParams) -> np.ndarray:
    # vectorised form of stacking moreau_column for every node
    n = e.n_nodes
    mask = e.mask.copy()
    k = mask.sum(axis=1)
    np.fill_diagonal(mask, False)
    own = buffers[np.arange(n), np.arange(n)]
    diff = buffers - own[:, None, :]
    dist_sq = np.einsum("ijd,ijd->ij", diff, diff)
    # out[i, j] is what i gives to j; the matrix is its transpose
    out = np.where(mask, 2.0 * p.step_gamma / k[:, None] * c_prime(dist_sq, p), 0.0)
    out[np.arange(n), np.arange(n)] = 1.0 - out.sum(axis=1)
    return out.T


@dataclass(frozen=True)
class UniformOutDegree:
    """Classic push-sum weighting."""

    def column(self, e, i, buffer_row=None):
        return uniform_column(e, i)

    def matrix(self, e: EdgeSet, buffers=None) -> WeightMatrix:
        mask = e.mask
        return WeightMatrix((mask / mask.sum(axis=1, keepdims=True)).T)

    def delta(self, k_max: int) -> float:
        """Smallest non-zero weight when no node has more than ``k_max`` out-neighbours."""
        return 1.0 / k_max

    @property
    def name(self):
        return "uniform"


@dataclass(frozen=True)
class Moreau:
    params: MoreauParams = field(default_factory=MoreauParams)

    def column(self, e, i, buffer_row):
        return moreau_column(e, i, buffer_row, self.params)

    def matrix(self, e: EdgeSet, buffers) -> WeightMatrix:
        return WeightMatrix(_moreau_matrix(e, np.asarray(buffers, dtype=float), self.params))

    def delta(self, k_max: int) -> float:
        v = self.params.v
        return min(v, (1.0 - v) * v / ((1.0 + v) * k_max))

    @property
    def name(self):
        return "moreau"


def assemble_matrix(columns, e: EdgeSet | None = None) -> WeightMatrix:
    """Stack per-node columns into a validated :class:`WeightMatrix`.

    With ``e`` given, the sparsity pattern is checked against the round's links.
    """
    w = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    n = w.shape[1]
    if w.shape != (n, n):
        raise WeightError(f"expected {n} columns of length {n}, got shape {w.shape}")
    if (w < 0).any():
        raise WeightError("negative weight")
    dev = np.abs(w.sum(axis=0) - 1.0).max()
    if dev > COLUMN_SUM_TOL:
        raise WeightError(f"column sums deviate from 1 by {dev:.3e}")
    if (np.diag(w) <= 0).any():
        raise WeightError("every node must keep a positive self-weight")
    if e is not None and not np.array_equal(w > 0, e.mask.T):
        raise WeightError("weight sparsity does not match the round's edges")
    return WeightMatrix(w)


def check_definition1(w: WeightMatrix, e: EdgeSet | None, delta: float) -> bool:
    """True iff ``w`` is column stochastic, matches ``e``'s sparsity and has no
    non-zero entry below ``delta``.

    With ``e=None`` only the diagonal is required to be positive.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    m = np.asarray(w.entries)
    if (m < 0).any() or np.abs(m.sum(axis=0) - 1.0).max() > COLUMN_SUM_TOL:
        return False
    pos = m > 0
    if e is not None:
        if not np.array_equal(pos, e.mask.T):
            return False
    elif not np.diag(pos).all():
        return False
    # relative slack of a few ulps: analytic delta and computed weights round differently
    return bool((m[pos] >= delta * (1.0 - 1e-12)).all())
