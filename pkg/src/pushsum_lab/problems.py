"""Synthetic decentralised objectives ``f(x) = (1/N) sum_i f_i(x)``.

Two families are provided, both with exact local gradients, an analytic
smoothness constant and a keyed stochastic-gradient oracle:

* :class:`QuadraticProblem`: ``f_i(x) = 0.5 (x - c_i)^T A_i (x - c_i)``, with
  additive Gaussian gradient noise of total variance ``sigma^2``.
* :class:`LogisticProblem`: l2-regularised logistic regression on two
  Gaussian classes, with the two node clusters holding mostly (or only) one
  class each. Gradient noise comes from minibatch sampling.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit, log_expit

from ._rng import STREAM_DATA, STREAM_NOISE, keyed_rng

__all__ = [
    "ProblemKind",
    "ProblemSpec",
    "DiversityReport",
    "QuadraticProblem",
    "LogisticProblem",
    "make_quadratic",
    "make_logistic",
    "make_problem",
    "stochastic_gradient",
    "measure_diversity",
    "LOGISTIC_REG",
]

LOGISTIC_REG = 1e-3


class ProblemKind(str, Enum):
    QUADRATIC = "Quadratic"
    LOGISTIC = "Logistic"


@dataclass(frozen=True)
class ProblemSpec:
    """Problem family and its knobs.

    ``heterogeneity`` spreads the quadratic centres, or sets how strongly the
    logistic label split follows the clusters (1 means disjoint labels).
    ``smoothness_l`` caps the quadratic curvature spectrum at ``[1, L]``;
    ``class_sep`` is the distance of each logistic class mean from the origin.
    """

    kind: ProblemKind
    dim_d: int
    n_nodes: int
    heterogeneity: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0
    smoothness_l: float = 4.0
    samples_per_node: int = 200
    batch_size: int = 16
    class_sep: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ProblemKind(self.kind))
        if self.dim_d < 1:
            raise ValueError(f"dim_d must be >= 1, got {self.dim_d}")
        if self.n_nodes < 1:
            raise ValueError(f"n_nodes must be >= 1, got {self.n_nodes}")
        if self.noise_sigma < 0 or self.heterogeneity < 0:
            raise ValueError("noise_sigma and heterogeneity must be non-negative")
        if self.smoothness_l < 1:
            raise ValueError("smoothness_l must be >= 1")
        if not 1 <= self.batch_size <= self.samples_per_node:
            raise ValueError("batch_size must lie in [1, samples_per_node]")


@dataclass(frozen=True)
class DiversityReport:
    kappa_sq: float
    sigma_sq: float
    smoothness_L: float


class _Problem:
    n_nodes: int
    dim: int
    smoothness_L: float

    def local_loss(self, i, x):
        raise NotImplementedError

    def local_grad(self, i, x):
        raise NotImplementedError

    def stochastic_gradient(self, i, x, rng):
        raise NotImplementedError

    def loss(self, x) -> float:
        return float(np.mean([self.local_loss(i, x) for i in range(self.n_nodes)]))

    def grad(self, x) -> np.ndarray:
        return np.mean([self.local_grad(i, x) for i in range(self.n_nodes)], axis=0)

    def local_grads(self, points) -> np.ndarray:
        """Exact gradient of ``f_i`` at ``points[i]`` for every node."""
        return np.stack([self.local_grad(i, points[i]) for i in range(self.n_nodes)])

    def sample_grads(self, points, seed, t) -> np.ndarray:
        """Stochastic gradients at ``points[i]``, node i keyed by ``(seed, t, i)``."""
        return np.stack(
            [self.stochastic_gradient(i, points[i], keyed_rng(seed, STREAM_NOISE, t, i)) for i in range(self.n_nodes)]
        )


class QuadraticProblem(_Problem):
    def __init__(self, curvatures, centers, noise_sigma=0.0):
        self.A = np.asarray(curvatures, dtype=float)
        self.c = np.asarray(centers, dtype=float)
        n, d = self.c.shape
        if self.A.shape != (n, d, d):
            raise ValueError(f"curvatures must have shape {(n, d, d)}, got {self.A.shape}")
        self.n_nodes, self.dim = n, d
        self.noise_sigma = float(noise_sigma)
        self.smoothness_L = float(max(np.linalg.eigvalsh(a).max() for a in self.A))
        self._Ac = np.einsum("nij,nj->ni", self.A, self.c)

    def local_loss(self, i, x):
        r = np.asarray(x, dtype=float) - self.c[i]
        return 0.5 * float(r @ self.A[i] @ r)

    def local_grad(self, i, x):
        return self.A[i] @ (np.asarray(x, dtype=float) - self.c[i])

    def local_grads(self, points):
        return np.einsum("nij,nj->ni", self.A, points) - self._Ac

    def loss(self, x):
        r = np.asarray(x, dtype=float) - self.c
        return 0.5 * float(np.einsum("ni,nij,nj->", r, self.A, r)) / self.n_nodes

    def grad(self, x):
        return self.A.mean(axis=0) @ np.asarray(x, dtype=float) - self._Ac.mean(axis=0)

    def minimizer(self) -> np.ndarray:
        return np.linalg.solve(self.A.sum(axis=0), self._Ac.sum(axis=0))

    def stochastic_gradient(self, i, x, rng):
        g = self.local_grad(i, x)
        if self.noise_sigma == 0.0:
            return g
        return g + rng.normal(0.0, self.noise_sigma / np.sqrt(self.dim), size=self.dim)


class LogisticProblem(_Problem):
    """Per-node datasets ``(features[i], signs[i])`` with signs in {-1, +1}."""

    def __init__(self, features, signs, batch_size, reg=LOGISTIC_REG):
        self.features = np.asarray(features, dtype=float)
        self.signs = np.asarray(signs, dtype=float)
        n, m, d = self.features.shape
        self.n_nodes, self.dim, self.n_samples = n, d, m
        self.batch_size = int(batch_size)
        self.reg = float(reg)
        # logistic curvature is at most 1/4 of the feature second moment
        self.smoothness_L = float(
            max(np.linalg.eigvalsh(f.T @ f / m).max() for f in self.features) / 4.0 + self.reg
        )

    def _loss(self, feats, signs, x):
        return float(-log_expit(signs * (feats @ x)).mean() + 0.5 * self.reg * (x @ x))

    def _grad(self, feats, signs, x):
        coef = -signs * expit(-signs * (feats @ x))
        return feats.T @ coef / len(signs) + self.reg * x

    def local_loss(self, i, x):
        return self._loss(self.features[i], self.signs[i], np.asarray(x, dtype=float))

    def local_grad(self, i, x):
        return self._grad(self.features[i], self.signs[i], np.asarray(x, dtype=float))

    def local_grads(self, points):
        z = np.einsum("nmd,nd->nm", self.features, points)
        coef = -self.signs * expit(-self.signs * z)
        return np.einsum("nmd,nm->nd", self.features, coef) / self.n_samples + self.reg * points

    def loss(self, x):
        x = np.asarray(x, dtype=float)
        z = self.features @ x
        return float(-log_expit(self.signs * z).mean() + 0.5 * self.reg * (x @ x))

    def stochastic_gradient(self, i, x, rng):
        if self.batch_size >= self.n_samples:
            return self.local_grad(i, x)
        idx = rng.choice(self.n_samples, size=self.batch_size, replace=False)
        return self._grad(self.features[i][idx], self.signs[i][idx], np.asarray(x, dtype=float))

    def dump_csv(self, path):
        """Write the synthetic dataset as ``node,label,f0..f{d-1}`` rows."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "label", *(f"f{k}" for k in range(self.dim))])
            for i in range(self.n_nodes):
                for row, s in zip(self.features[i], self.signs[i]):
                    w.writerow([i, int(s > 0), *(repr(float(v)) for v in row)])


def _cluster_labels(n_nodes, cluster_split=None):
    labels = np.ones(n_nodes, dtype=int)
    labels[list(range(n_nodes // 2)) if cluster_split is None else list(cluster_split)] = 0
    return labels


def make_quadratic(spec: ProblemSpec) -> QuadraticProblem:
    """Random SPD curvatures with spectrum in ``[1, L]`` and centres ``c0 + h * z_i``."""
    rng = keyed_rng(spec.seed, STREAM_DATA)
    n, d = spec.n_nodes, spec.dim_d
    A = np.empty((n, d, d))
    for i in range(n):
        q, _ = np.linalg.qr(rng.normal(size=(d, d)))
        eig = rng.uniform(1.0, spec.smoothness_l, size=d)
        eig[0] = spec.smoothness_l
        A[i] = (q * eig) @ q.T
        A[i] = 0.5 * (A[i] + A[i].T)
    base = rng.normal(size=d)
    centers = base + spec.heterogeneity * rng.normal(size=(n, d))
    return QuadraticProblem(A, centers, spec.noise_sigma)


def make_logistic(spec: ProblemSpec, cluster_split=None) -> LogisticProblem:
    """Two Gaussian classes split across two node clusters.

    Class means are ``offset -/+ class_sep * direction`` with ``offset``
    orthogonal to ``direction`` and of length ``class_sep``.

    Cluster-0 nodes draw class 0 (sign -1) with probability ``(1 + h) / 2``,
    cluster-1 nodes class 1, so ``h = 0`` gives every node the same balanced
    mixture and ``h = 1`` gives disjoint label support.
    """
    h = min(spec.heterogeneity, 1.0)
    n, d, m = spec.n_nodes, spec.dim_d, spec.samples_per_node
    rng = keyed_rng(spec.seed, STREAM_DATA)
    direction = rng.normal(size=d)
    direction /= np.linalg.norm(direction)
    # shared offset orthogonal to the separating direction; without it the
    # two classes are mirror images and label skew changes nothing
    offset = rng.normal(size=d)
    offset -= (offset @ direction) * direction
    norm = np.linalg.norm(offset)
    offset = spec.class_sep * offset / norm if norm > 0 else np.zeros(d)
    labels = _cluster_labels(n, cluster_split)
    p_own = 0.5 * (1.0 + h)
    feats = np.empty((n, m, d))
    signs = np.empty((n, m))
    for i in range(n):
        own = rng.random(m) < p_own
        cls = np.where(own, labels[i], 1 - labels[i])
        s = np.where(cls == 1, 1.0, -1.0)
        feats[i] = offset + s[:, None] * spec.class_sep * direction + rng.normal(size=(m, d))
        signs[i] = s
    return LogisticProblem(feats, signs, spec.batch_size)


def make_problem(spec: ProblemSpec, cluster_split=None):
    if spec.kind is ProblemKind.QUADRATIC:
        return make_quadratic(spec)
    return make_logistic(spec, cluster_split)


def stochastic_gradient(problem, i, x, rng_key) -> np.ndarray:
    """Sampled gradient of node ``i`` at ``x``; ``rng_key`` is a tuple of ints
    or a ready ``numpy.random.Generator``."""
    rng = rng_key if isinstance(rng_key, np.random.Generator) else keyed_rng(*rng_key)
    return problem.stochastic_gradient(i, x, rng)


def measure_diversity(problem, reference_points, n_draws: int = 200, seed: int = 0) -> DiversityReport:
    """Lower estimates of the diversity and sampling-variance bounds.

    ``kappa_sq`` is the largest ``(1/N) sum_i |grad f_i - grad f|^2`` over the
    reference points; ``sigma_sq`` the largest per-node sampling variance
    estimated from ``n_draws`` keyed draws.
    """
    points = np.atleast_2d(np.asarray(reference_points, dtype=float))
    kappa_sq = 0.0
    sigma_sq = 0.0
    for k, x in enumerate(points):
        g = np.stack([problem.local_grad(i, x) for i in range(problem.n_nodes)])
        kappa_sq = max(kappa_sq, float(((g - g.mean(axis=0)) ** 2).sum(axis=1).mean()))
        for i in range(problem.n_nodes):
            draws = np.stack(
                [problem.stochastic_gradient(i, x, keyed_rng(seed, STREAM_NOISE, k, i, r)) for r in range(n_draws)]
            )
            sigma_sq = max(sigma_sq, float(((draws - g[i]) ** 2).sum(axis=1).mean()))
    return DiversityReport(kappa_sq, sigma_sq, problem.smoothness_L)
