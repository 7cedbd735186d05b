"""Gradient-inversion adversary, leakage metrics and bound calculators.

The attacker observes a client's shared gradient and searches for inputs
whose gradient matches it, by plain gradient descent on
``||g(d) - target||^2`` with every iterate clamped to the unit box.
Labels are assumed known to the attacker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import Dataset, Model, grad_params, grad_params_input_vjp


class AttackDiverged(FloatingPointError):
    """The matching objective became non-finite; ``trace`` holds the iterations so far."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(eq=False)
class AttackTrace:
    iterates: list = field(default_factory=list)   # n x d arrays, one per iteration
    mismatch: list = field(default_factory=list)   # ||g(d_i) - target||
    distances: list = field(default_factory=list)  # mean per-row distance to the true data
    diverged: bool = False

    def __len__(self):
        return len(self.iterates)

    def prefix(self, length: int) -> "AttackTrace":
        if not 0 <= length <= len(self):
            raise ValueError("prefix length out of range")
        return AttackTrace(self.iterates[:length], self.mismatch[:length],
                           self.distances[:length], self.diverged and length == len(self))

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]


def mean_row_distance(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def invert(model: Model, target_grad, shape, labels, iters: int, lr: float, seed: int,
           true_data=None) -> AttackTrace:
    """Reconstruct an ``shape = (n, d)`` batch whose gradient matches ``target_grad``."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    n, d = shape
    target = np.asarray(target_grad, dtype=float).reshape(-1)
    if target.size != model.params.size:
        raise ValueError("target gradient length differs from the parameter count")
    labels = np.asarray(labels, dtype=float).reshape(-1)
    if labels.size != n:
        raise ValueError("one label per reconstructed row is required")
    truth = None
    if true_data is not None:
        truth = true_data.features if isinstance(true_data, Dataset) else np.asarray(true_data, float)
        if truth.shape != (n, d):
            raise ValueError("true data shape differs from the attack shape")

    X = np.random.default_rng(seed).uniform(0.0, 1.0, size=(n, d))
    trace = AttackTrace()
    for _ in range(iters):
        data = Dataset(X, labels)
        residual = grad_params(model, data) - target
        step = 2.0 * grad_params_input_vjp(model, data, residual)
        X_next = X - lr * step
        if not (np.all(np.isfinite(residual)) and np.all(np.isfinite(X_next))):
            trace.diverged = True
            raise AttackDiverged("gradient-matching objective became non-finite", trace)
        X = np.clip(X_next, 0.0, 1.0)
        mismatch = float(np.linalg.norm(grad_params(model, Dataset(X, labels)) - target))
        if not math.isfinite(mismatch):
            trace.diverged = True
            raise AttackDiverged("gradient-matching objective became non-finite", trace)
        trace.iterates.append(X.copy())
        trace.mismatch.append(mismatch)
        if truth is not None:
            trace.distances.append(mean_row_distance(X, truth))
    return trace


def domain_diameter(dim: int) -> float:
    """Diameter of the unit box ``[0, 1]^dim``."""
    return math.sqrt(dim)


def raw_leakage(trace: AttackTrace, true_data, D: float) -> float:
    """Unclamped leakage ``(D - mean distance) / D``; 0 for an empty trace."""
    if D <= 0:
        raise ValueError("D must be positive")
    if len(trace) == 0:
        return 0.0
    truth = true_data.features if isinstance(true_data, Dataset) else np.asarray(true_data, float)
    mean_dist = float(np.mean([mean_row_distance(it, truth) for it in trace.iterates]))
    return (D - mean_dist) / D


def privacy_leakage_empirical(trace: AttackTrace, true_data, D: float) -> float:
    """Leakage clamped to [0, 1]; see :func:`raw_leakage`."""
    return min(max(raw_leakage(trace, true_data, D), 0.0), 1.0)


def leakage_clamped(raw: float) -> bool:
    return raw < 0.0 or raw > 1.0


def distortion_extent(d, d_breve) -> float:
    """Norm of the difference between the two datasets' mean rows."""
    a = d.features if isinstance(d, Dataset) else np.asarray(d, float)
    b = d_breve.features if isinstance(d_breve, Dataset) else np.asarray(d_breve, float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a.mean(axis=0) - b.mean(axis=0)))


P_MIN, P_MAX = 1e-3, 1.5


@dataclass(frozen=True)
class EmpiricalConstants:
    c2: float
    c1: float
    c_b: float
    c_a: float
    p: float
    r2_regret: float
    n_probes: int
    n_excluded: int

    def regret_term(self, iters: int) -> float:
        """``c2 * c_b * I^(p - 1)``."""
        return self.c2 * self.c_b * iters ** (self.p - 1.0)


def _regret_points(traces):
    iters, cumulative = [], []
    for tr in traces:
        s = np.cumsum(np.asarray(tr.mismatch if isinstance(tr, AttackTrace) else tr, float))
        iters.extend(range(1, s.size + 1))
        cumulative.extend(s)
    iters, cumulative = np.array(iters, float), np.array(cumulative)
    keep = cumulative > 0
    return iters[keep], cumulative[keep]


def _offset_power_fit(I, S, p):
    """Least-squares ``S ~ c I^p + b`` at fixed ``p``; returns (log-residual, c, b)."""
    A = np.stack([I**p, np.ones_like(I)], axis=1)
    (c, b), *_ = np.linalg.lstsq(A, S, rcond=None)
    pred = c * I**p + b
    if c <= 0 or np.any(pred <= 0):
        return math.inf, c, b
    return float(np.sum((np.log(S) - np.log(pred)) ** 2)), c, b


def fit_regret(traces) -> tuple[float, float, float, float]:
    """Fit the regret exponent on all prefixes; returns ``(p, c2, c1, r2)``.

    The cumulative mismatch is modelled as ``c I^p + b``: the offset absorbs
    the constant that a plain log-log slope would fold into ``p`` (for
    ``1/sqrt(i)`` terms the sum is ``2 sqrt(I) - 1.46...``).  ``p`` is chosen
    on a grid, then refined, by the residual of ``ln S``.  ``c2`` is the
    smallest constant with ``c2 I^p`` above every prefix and ``c1`` the
    largest one below.
    """
    traces = list(traces)
    if len(traces) < 3 or len({len(t) for t in traces}) < 3:
        raise ValueError("need at least 3 traces of distinct lengths")
    I, S = _regret_points(traces)
    if I.size < 3 or np.ptp(I) == 0:
        raise ValueError("not enough positive cumulative-mismatch points to fit")
    grid = np.linspace(P_MIN, P_MAX, 1500)
    scores = [_offset_power_fit(I, S, p)[0] for p in grid]
    k = int(np.argmin(scores))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    for _ in range(60):
        m1, m2 = lo + (hi - lo) / 3, hi - (hi - lo) / 3
        if _offset_power_fit(I, S, m1)[0] <= _offset_power_fit(I, S, m2)[0]:
            hi = m2
        else:
            lo = m1
    p = float(np.clip((lo + hi) / 2, P_MIN, P_MAX))
    if not math.isfinite(_offset_power_fit(I, S, p)[0]):
        p = float(grid[k])
    sse = _offset_power_fit(I, S, p)[0]
    lnS = np.log(S)
    total = float(np.sum((lnS - lnS.mean()) ** 2))
    r2 = 1.0 - sse / total if total > 0 and math.isfinite(sse) else float("nan")
    scaled = S / I**p
    return p, float(scaled.max()), float(scaled.min()), r2


def lipschitz_ratio(model: Model, a: Dataset, b: Dataset) -> float | None:
    """``||x - x'|| / ||g(x) - g(x')||``, or None for a degenerate probe."""
    dg = float(np.linalg.norm(grad_params(model, a) - grad_params(model, b)))
    dx = float(np.linalg.norm(a.features - b.features))
    if dg == 0.0 or dx == 0.0:
        return None
    return dx / dg


def constants_from_measurements(traces, ratios) -> EmpiricalConstants:
    """Fit from mismatch traces and precomputed probe ratios (None = excluded)."""
    usable = [r for r in ratios if r is not None]
    if not usable:
        raise ValueError("every probe pair is degenerate")
    p, c2, c1, r2 = fit_regret(traces)
    return EmpiricalConstants(c2, c1, max(usable), min(usable), p, r2,
                              len(usable), len(ratios) - len(usable))


def fit_constants(traces, probe_pairs, model: Model) -> EmpiricalConstants:
    """Regret constants from ``traces``; distance ratios ``c_b >= c_a`` from ``probe_pairs``."""
    ratios = [lipschitz_ratio(model, a, b) for a, b in probe_pairs]
    return constants_from_measurements(traces, ratios)


@dataclass(frozen=True)
class LeakageBound:
    value: float
    gate: bool


def leakage_upper_bound(delta: float, iters: int, consts: EmpiricalConstants, D: float) -> LeakageBound:
    """``1 - (delta + r) / (4D)`` with ``r = c2 c_b I^(p-1)``; valid once ``delta >= 2r``."""
    if D <= 0:
        raise ValueError("D must be positive")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    r = consts.regret_term(iters)
    return LeakageBound(1.0 - (delta + r) / (4.0 * D), delta >= 2.0 * r)


def epsilon1_threshold(eps: float, D: float, consts: EmpiricalConstants, iters: int) -> float:
    """Smallest distortion radius that keeps leakage at most ``eps``."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    if D <= 0:
        raise ValueError("D must be positive")
    c = consts.regret_term(iters) / (4.0 * D)
    return max(0.0, 4.0 * D * (1.0 - c - eps))
