"""Numerical checks of the consensus theory.

Everything here works on plain matrices and recorded trajectories. Backward
products ``W(t) ... W(s)`` are formed by direct multiplication, independent of
the protocol code, so they act as oracles for it.

Indexing: ``w_sequence[0]`` is the matrix of round 1. In a trajectory,
``eps[s-1]`` is the perturbation added in round ``s`` (before mixing with
``W(s)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .topology import EdgeSet, check_windows
from .weighting import COLUMN_SUM_TOL, WeightMatrix, check_definition1

__all__ = [
    "BoundParams",
    "VerificationReport",
    "PreconditionError",
    "compute_bound_params",
    "consensus_bound",
    "verify_lemma1",
    "verify_lemma2",
    "verify_theorem1",
    "verify_identities",
    "compare_regimes",
    "SLACK",
]

SLACK = 1e-9
IDENTITY_TOL = 1e-10


class PreconditionError(ValueError):
    """Input sequence does not meet the assumptions a check relies on."""


@dataclass(frozen=True)
class BoundParams:
    """Constants of the consensus bounds.

    ``lam`` can round to 1.0 in double precision when ``delta**(Δ B)`` is
    tiny; ``log_lam`` keeps the exact sign information in that case.
    """

    delta: float
    diameter_delta: int
    period_b: int
    lemma_c: float
    lam: float
    log_lam: float
    lemma_k: int = 2

    @property
    def window(self) -> int:
        """The product length ``Δ B``."""
        return self.diameter_delta * self.period_b

    @property
    def floor(self) -> float:
        """``delta ** (Δ B)``, the smallest entry of a ``Δ B``-round product."""
        return self.delta**self.window

    def coefficient(self, t: int, n_nodes: int, norm: str = "L1") -> float:
        """Multiplier in front of the bound at round ``t``."""
        c = self.lemma_c
        late = t >= self.window
        if norm == "L1":
            return c / n_nodes if late else c
        if norm == "L2":
            return c / math.sqrt(n_nodes) if late else c * math.sqrt(n_nodes)
        raise ValueError(f"unknown norm {norm!r}")


def compute_bound_params(delta: float, diameter_delta: int, period_b: int) -> BoundParams:
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if diameter_delta < 1 or period_b < 1:
        raise ValueError("diameter and period must be >= 1")
    db = diameter_delta * period_b
    floor = delta**db
    if floor == 0.0:
        raise ValueError(f"delta**{db} underflows; the bounds are meaningless")
    if floor == 1.0:
        log_lam = -math.inf
        lam = 0.0
    else:
        log_lam = math.log1p(-floor) / db
        lam = math.exp(log_lam)
    return BoundParams(delta, diameter_delta, period_b, 4.0 / floor, lam, log_lam)


def compare_regimes(params: BoundParams, n_nodes: int) -> tuple[float, float]:
    """Late-round coefficient without and with the row-sum improvement."""
    return params.lemma_c, params.lemma_c / n_nodes


@dataclass
class VerificationReport:
    check: str
    passed: bool
    worst_margin: float
    worst_round: int | None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "passed": self.passed,
            "worst_margin": self.worst_margin,
            "worst_round": self.worst_round,
            "details": self.details,
        }


def _report(check, margins, rounds=None, **details):
    margins = np.asarray(margins, dtype=float)
    if margins.size == 0:
        return VerificationReport(check, True, math.inf, None, details)
    k = int(np.argmin(margins))
    rounds = np.arange(1, margins.size + 1) if rounds is None else np.asarray(rounds)
    worst = float(margins[k])
    return VerificationReport(check, worst >= -SLACK, worst, int(rounds[k]), details)


def _as_arrays(w_sequence):
    return [np.asarray(w.entries if isinstance(w, WeightMatrix) else w, dtype=float) for w in w_sequence]


def _check_sequence(mats, params: BoundParams):
    """Definition-1 entries plus windowed strong connectivity within the stated Δ."""
    if not mats:
        raise PreconditionError("empty weight sequence")
    n = mats[0].shape[0]
    for t, m in enumerate(mats, start=1):
        if m.shape != (n, n) or not check_definition1(WeightMatrix(m), None, params.delta):
            raise PreconditionError(f"round {t}: matrix violates the weight-matrix definition at delta={params.delta}")
    if len(mats) < params.period_b:
        return
    edges = [EdgeSet(n, (m > 0).T) for m in mats]
    rep = check_windows(edges, params.period_b)
    if not rep.is_b_strongly_connected:
        raise PreconditionError(f"window starting at round {rep.first_violating_window} is not strongly connected")
    if rep.diameter_delta > params.diameter_delta:
        raise PreconditionError(f"measured diameter {rep.diameter_delta} exceeds {params.diameter_delta}")


def verify_lemma1(w_sequence, params: BoundParams) -> VerificationReport:
    """Geometric convergence of backward products to rank-one limits.

    For every ``t`` the limit row vector ``phi(t)`` is estimated as the row
    means of ``W(t)...W(1)``; then ``|[W(t)...W(s)]_ij - phi_i(t)| <= 2 lam^(t-s)``
    is checked for all ``s <= t`` and all ``i, j``.
    """
    mats = _as_arrays(w_sequence)
    _check_sequence(mats, params)
    n = mats[0].shape[0]
    k = params.lemma_k
    per_round = []
    stochastic_err = 0.0
    colsum_err = 0.0
    for t in range(1, len(mats) + 1):
        # products P(t, s) for s = t, t-1, ..., 1, built right to left
        prods = []
        p = np.eye(n)
        for s in range(t, 0, -1):
            p = p @ mats[s - 1]
            prods.append((s, p))
        phi = prods[-1][1].mean(axis=1)
        stochastic_err = max(stochastic_err, abs(phi.sum() - 1.0), float(max(0.0, -phi.min())))
        worst = math.inf
        for s, p in prods:
            colsum_err = max(colsum_err, float(np.abs(p.sum(axis=0) - 1.0).max()))
            bound = k * math.exp((t - s) * params.log_lam) if params.lam > 0 else (k if t == s else 0.0)
            worst = min(worst, bound - float(np.abs(p - phi[:, None]).max()))
        per_round.append(worst)
    rep = _report(
        "lemma1",
        per_round,
        per_round_margin=per_round,
        phi_stochastic_error=stochastic_err,
        product_colsum_error=colsum_err,
    )
    if stochastic_err > SLACK or colsum_err > SLACK:
        rep.passed = False
    return rep


def verify_lemma2(w_sequence, params: BoundParams) -> VerificationReport:
    """Row sums of ``W(t)...W(1)`` stay above ``delta**(ΔB)``, and above
    ``N delta**(ΔB)`` once ``t >= ΔB``."""
    mats = _as_arrays(w_sequence)
    _check_sequence(mats, params)
    n = mats[0].shape[0]
    floor = params.floor
    rowsum = np.ones(n)
    r, thresholds = [], []
    for t, m in enumerate(mats, start=1):
        rowsum = m @ rowsum
        r.append(float(rowsum.min()))
        thresholds.append(floor if t < params.window else n * floor)
    r = np.array(r)
    thresholds = np.array(thresholds)
    late = np.arange(1, len(mats) + 1) >= params.window
    improvement = float((r[late] / floor).min()) if late.any() else None
    return _report(
        "lemma2",
        r - thresholds,
        min_row_sum=r.tolist(),
        threshold=thresholds.tolist(),
        late_improvement_factor=improvement,
        n_nodes=n,
    )


def _norms(mat, norm):
    return np.abs(mat).sum() if norm == "L1" else np.sqrt((mat * mat).sum())


def consensus_bound(params: BoundParams, n_nodes: int, x0_norm: float, eps_norms, norm: str = "L1") -> np.ndarray:
    """Bound values for rounds ``1..len(eps_norms)``.

    ``eps_norms[s-1]`` is the (entrywise L1 or Frobenius) norm of the
    perturbation added in round ``s``.
    """
    out = np.empty(len(eps_norms))
    acc = 0.0
    lam = params.lam
    for t in range(1, len(eps_norms) + 1):
        acc = lam * acc + eps_norms[t - 1]
        decay = lam ** (t - 1)
        out[t - 1] = params.coefficient(t, n_nodes, norm) * (decay * x0_norm + acc)
    return out


def verify_theorem1(trajectory, params: BoundParams, norm: str = "L1") -> VerificationReport:
    """Per-round consensus-distance bound on a recorded trajectory.

    ``trajectory`` needs ``x0`` and per-round lists ``x``, ``y`` and ``eps``.
    """
    eps = getattr(trajectory, "eps", None)
    if eps is None or len(eps) != len(trajectory.x):
        raise ValueError("trajectory is missing its perturbation history")
    n = trajectory.x0.shape[0]
    bound = consensus_bound(params, n, _norms(trajectory.x0, norm), [_norms(e, norm) for e in eps], norm)
    observed = []
    for x, y in zip(trajectory.x, trajectory.y):
        gap = y - x.mean(axis=0)
        d = np.abs(gap).sum(axis=1) if norm == "L1" else np.sqrt((gap * gap).sum(axis=1))
        observed.append(float(d.max()))
    observed = np.array(observed)
    rounds = np.arange(1, len(observed) + 1)
    early = rounds < params.window
    return _report(
        f"theorem1_{norm.lower()}",
        bound - observed,
        observed=observed.tolist(),
        bound=bound.tolist(),
        early_rounds=int(early.sum()),
        late_rounds=int((~early).sum()),
    )


def verify_identities(trajectory, gamma: float, beta: float) -> VerificationReport:
    """Exact per-round identities of momentum push-sum SGD.

    Checks the average recursion ``xbar(t) = xbar(t-1) - gamma mbar(t)``, the
    auxiliary-sequence recursion ``zbar(t+1) - zbar(t) = -gamma/(1-beta) gbar(t)``,
    conservation of ``sum_i x_i`` and ``sum_i a_i``, and the summed gap
    inequality between ``zbar`` and ``xbar``.
    """
    x0 = trajectory.x0
    n = x0.shape[0]
    xbars = [x0.mean(axis=0)] + [x.mean(axis=0) for x in trajectory.x]
    gbars = [g.mean(axis=0) for g in trajectory.grads]
    mbars = [m.mean(axis=0) for m in trajectory.momentum]

    def zbar(t):
        if t == 0:
            return xbars[0]
        return (xbars[t] - beta * xbars[t - 1]) / (1.0 - beta)

    lemma10, lemma5, mass, norm_a = [], [], [], []
    total = x0.sum(axis=0)
    for t in range(1, len(xbars)):
        lemma10.append(float(np.linalg.norm(xbars[t] - (xbars[t - 1] - gamma * mbars[t - 1]))))
        lemma5.append(float(np.linalg.norm(zbar(t) - zbar(t - 1) + gamma / (1.0 - beta) * gbars[t - 1])))
        total = total + trajectory.eps[t - 1].sum(axis=0)
        mass.append(float(np.abs(trajectory.x[t - 1].sum(axis=0) - total).max()))
        norm_a.append(abs(float(trajectory.a[t - 1].sum()) - n))

    gap = sum(float(np.sum((zbar(t) - xbars[t]) ** 2)) for t in range(len(xbars)))
    rhs = gamma**2 * beta**2 / (1.0 - beta) ** 4 * sum(float(g @ g) for g in gbars)
    residuals = np.array([lemma10, lemma5, mass, norm_a]) if lemma10 else np.zeros((4, 0))
    margins = IDENTITY_TOL - residuals.max(axis=0) if residuals.size else []
    rep = _report(
        "identities",
        margins,
        lemma10_max=max(lemma10, default=0.0),
        lemma5_max=max(lemma5, default=0.0),
        mass_max=max(mass, default=0.0),
        normalizer_max=max(norm_a, default=0.0),
        lemma6_lhs=gap,
        lemma6_rhs=rhs,
        lemma6_slack=rhs - gap,
    )
    # identities get no extra slack beyond their own tolerance
    rep.passed = bool(residuals.size == 0 or residuals.max() <= IDENTITY_TOL) and rhs - gap >= 0.0
    return rep
