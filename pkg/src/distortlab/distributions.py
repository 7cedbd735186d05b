"""Finite distributions and the divergence toolkit.

All logarithms are natural.  Total variation is half the L1 distance, which
equals the positive-part mass ``sum(max(p - q, 0))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

SUM_TOL = 1e-9


class SupportMismatch(ValueError):
    """Two distributions are not defined over the same ordered support."""


@dataclass(frozen=True, eq=False)
class DiscreteDist:
    support: tuple
    probs: np.ndarray

    def __post_init__(self):
        support = tuple(self.support)
        probs = np.asarray(self.probs, dtype=float).reshape(-1)
        if len(support) != probs.size:
            raise ValueError("support and probs differ in length")
        if len(set(support)) != len(support):
            raise ValueError("support atoms must be unique")
        if probs.size == 0:
            raise ValueError("empty distribution")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ValueError("probabilities must be finite and non-negative")
        total = float(probs.sum())
        if abs(total - 1.0) > SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        if total != 1.0:
            probs = probs / total
        probs.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_probs(cls, probs, support: Sequence[Hashable] | None = None):
        probs = np.asarray(probs, dtype=float)
        if support is None:
            support = range(probs.size)
        return cls(tuple(support), probs)

    @classmethod
    def point_mass(cls, support, atom):
        support = tuple(support)
        probs = np.zeros(len(support))
        probs[support.index(atom)] = 1.0
        return cls(support, probs)

    @classmethod
    def uniform(cls, support):
        support = tuple(support)
        return cls(support, np.full(len(support), 1.0 / len(support)))

    def __len__(self):
        return len(self.support)

    def prob(self, atom) -> float:
        return float(self.probs[self.support.index(atom)])

    def allclose(self, other: "DiscreteDist", atol=1e-12) -> bool:
        return self.support == other.support and np.allclose(self.probs, other.probs, atol=atol, rtol=0)

    def __repr__(self):
        return f"DiscreteDist({dict(zip(self.support, np.round(self.probs, 6).tolist()))})"


def _aligned(P: DiscreteDist, Q: DiscreteDist):
    if P.support != Q.support:
        raise SupportMismatch(f"{P.support!r} vs {Q.support!r}")
    return P.probs, Q.probs


def kl(P: DiscreteDist, Q: DiscreteDist) -> float:
    """KL(P || Q) in nats; ``math.inf`` when P puts mass where Q has none."""
    p, q = _aligned(P, Q)
    mask = p > 0
    if np.any(q[mask] == 0):
        return math.inf
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def tv(P: DiscreteDist, Q: DiscreteDist) -> float:
    p, q = _aligned(P, Q)
    return 0.5 * float(np.abs(p - q).sum())


def _check_alpha(alpha):
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")


def mixture(P: DiscreteDist, Q: DiscreteDist, alpha: float) -> DiscreteDist:
    """``alpha * P + (1 - alpha) * Q``."""
    _check_alpha(alpha)
    p, q = _aligned(P, Q)
    m = alpha * p + (1.0 - alpha) * q
    return DiscreteDist(P.support, m / m.sum())


def js_alpha(P: DiscreteDist, Q: DiscreteDist, alpha: float = 0.5) -> float:
    """Skewed Jensen-Shannon divergence.

    ``alpha * KL(P || M) + (1 - alpha) * KL(Q || M)`` with
    ``M = alpha * P + (1 - alpha) * Q``.  Finite for every pair; zero at
    ``alpha`` in {0, 1}.
    """
    M = mixture(P, Q, alpha)
    left = alpha * kl(P, M) if alpha > 0 else 0.0
    right = (1.0 - alpha) * kl(Q, M) if alpha < 1 else 0.0
    return max(left + right, 0.0)


def root_e(x: float) -> float:
    """``x ** (1/e)``."""
    if x < 0:
        raise ValueError("root_e is defined for non-negative inputs only")
    if x == 0:
        return 0.0
    return math.exp(math.log(x) / math.e)


def js_alpha_kl_bound(P: DiscreteDist, Q: DiscreteDist, alpha: float = 0.5) -> float:
    """``max(2 alpha KL(P||M), 2 (1 - alpha) KL(Q||M))``, an upper bound on JS_alpha."""
    M = mixture(P, Q, alpha)
    left = 2.0 * alpha * kl(P, M) if alpha > 0 else 0.0
    right = 2.0 * (1.0 - alpha) * kl(Q, M) if alpha < 1 else 0.0
    return max(left, right, 0.0)


def log_ratio_bound(a: float, b: float) -> tuple[float, float]:
    """Return ``(|ln(a/b)|, |a - b| / min(a, b))`` for positive ``a, b``."""
    if a <= 0 or b <= 0:
        raise ValueError("both arguments must be positive")
    return abs(math.log(a / b)), abs(a - b) / min(a, b)


def random_dist(rng: np.random.Generator, n: int, concentration: float = 1.0,
                support=None) -> DiscreteDist:
    """Dirichlet draw, used by the property harnesses and world generators."""
    probs = rng.dirichlet(np.full(n, concentration))
    return DiscreteDist.from_probs(probs / probs.sum(), support)
