"""Exact Bayesian privacy/utility accounting over finite worlds.

A :class:`FiniteWorld` enumerates a data space, a parameter space, the
attacker's prior over data, the posterior kernel ``f(d | w)`` and a utility
table ``U(w, d)``.  Everything below is a finite sum, so each inequality is
checked exactly rather than estimated.

Naming: ``max_leakage`` is the uniform posterior-vs-prior deviation of a
world (log-ratio or absolute form).  It is unrelated to the data distortion
of :mod:`distortlab.distort`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .distributions import DiscreteDist, SupportMismatch, js_alpha, root_e, tv

CHECK_TOL = 1e-9
JS_ALPHA = "js_alpha"
TV = "tv"
GJSD = "gjsd"
DTV = "dtv"


class UnboundedLeakage(ValueError):
    """A zero prior or kernel entry makes the log-ratio leakage infinite."""


@dataclass(frozen=True, eq=False)
class FiniteWorld:
    data_atoms: tuple
    param_atoms: tuple
    prior: DiscreteDist
    kernel: np.ndarray
    utility: np.ndarray

    def __post_init__(self):
        data_atoms = tuple(self.data_atoms)
        param_atoms = tuple(self.param_atoms)
        kernel = np.asarray(self.kernel, dtype=float)
        utility = np.asarray(self.utility, dtype=float)
        shape = (len(param_atoms), len(data_atoms))
        if kernel.shape != shape or utility.shape != shape:
            raise ValueError(f"kernel and utility must be indexed [w][d] with shape {shape}")
        if self.prior.support != data_atoms:
            raise SupportMismatch("prior must be over data_atoms")
        if np.any(kernel < 0) or not np.all(np.isfinite(kernel)):
            raise ValueError("kernel entries must be finite and non-negative")
        if np.any(np.abs(kernel.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("every kernel row must sum to 1")
        if not np.all(np.isfinite(utility)):
            raise ValueError("utility table must be finite")
        for name, value in (("data_atoms", data_atoms), ("param_atoms", param_atoms),
                            ("kernel", kernel), ("utility", utility)):
            object.__setattr__(self, name, value)

    def row_utilities(self) -> np.ndarray:
        """``U(w, D)``: per-parameter utility averaged uniformly over data atoms."""
        return self.utility.mean(axis=1)


@dataclass(frozen=True)
class ProtectionPair:
    """Parameter distributions without (``p_o``) and with (``p_d``) protection."""

    p_o: DiscreteDist
    p_d: DiscreteDist

    def __post_init__(self):
        if self.p_o.support != self.p_d.support:
            raise SupportMismatch("p_o and p_d must share the parameter support")

    @property
    def tv(self) -> float:
        return tv(self.p_o, self.p_d)


def _check_pair(world, pair):
    if pair.p_o.support != world.param_atoms:
        raise SupportMismatch("pair is not over the world's param_atoms")


def posterior_belief(world: FiniteWorld, w) -> DiscreteDist:
    try:
        i = world.param_atoms.index(w)
    except ValueError:
        raise KeyError(f"unknown parameter atom {w!r}") from None
    return DiscreteDist(world.data_atoms, world.kernel[i])


def marginal_belief(world: FiniteWorld, P: DiscreteDist) -> DiscreteDist:
    """Attacker belief about the data after seeing a parameter drawn from ``P``."""
    if P.support != world.param_atoms:
        raise SupportMismatch("P must be over the world's param_atoms")
    f = P.probs @ world.kernel
    return DiscreteDist(world.data_atoms, f / f.sum())


def max_leakage_log(world: FiniteWorld) -> float:
    prior = world.prior.probs
    if np.any(prior == 0) or np.any(world.kernel == 0):
        raise UnboundedLeakage("log-ratio leakage is unbounded with zero probabilities")
    return float(np.max(np.abs(np.log(world.kernel / prior[None, :]))))


def max_leakage_tv(world: FiniteWorld) -> float:
    return float(np.max(np.abs(world.kernel - world.prior.probs[None, :])))


def privacy_leakage_jsalpha(world: FiniteWorld, pair: ProtectionPair, alpha: float) -> float:
    _check_pair(world, pair)
    return root_e(js_alpha(marginal_belief(world, pair.p_d), world.prior, alpha))


def privacy_leakage_tv(world: FiniteWorld, pair: ProtectionPair) -> float:
    """Prior-weighted absolute deviation ``sum_d p(d) |f_A(d) - p(d)|``.

    This is not the total variation distance: every term carries the prior
    weight ``p(d)``.
    """
    _check_pair(world, pair)
    f_a = marginal_belief(world, pair.p_d).probs
    prior = world.prior.probs
    return float(np.sum(prior * np.abs(f_a - prior)))


def expected_utility(world: FiniteWorld, P: DiscreteDist) -> float:
    if P.support != world.param_atoms:
        raise SupportMismatch("P must be over the world's param_atoms")
    return float(P.probs @ world.row_utilities())


def utility_loss_bayes(worlds: Sequence[FiniteWorld], pairs: Sequence[ProtectionPair]) -> float:
    if len(worlds) != len(pairs):
        raise ValueError(f"{len(worlds)} worlds but {len(pairs)} pairs")
    if not worlds:
        raise ValueError("need at least one client")
    losses = [expected_utility(w, p.p_o) - expected_utility(w, p.p_d)
              for w, p in zip(worlds, pairs)]
    return float(np.mean(losses))


class MajorityGap(NamedTuple):
    gap: float
    violated: bool


def majority_gap(world: FiniteWorld, pair: ProtectionPair,
                 tv_reference: float | None = None) -> MajorityGap:
    """Largest utility margin around the optimum whose protected mass is small.

    Returns the supremum of ``g`` such that the ``p_d`` mass of
    ``{w : p_d(w) > 0, |U(w) - U*| <= g}`` stays within ``tv_reference / 2``.
    ``tv_reference`` defaults to ``tv(p_d, p_o)``; pass the aggregated-pair
    distance to follow the multi-client definition.  The supremum is usually
    not attained: the mass first exceeds the threshold exactly at the returned
    gap.  A gap of 0 means no positive margin qualifies and is flagged.
    """
    _check_pair(world, pair)
    support = pair.p_d.probs > 0
    if not np.any(support):
        raise ValueError("p_d has empty support")
    threshold = 0.5 * (pair.tv if tv_reference is None else tv_reference)
    utilities = world.row_utilities()
    gaps = np.abs(utilities - utilities.max())[support]
    mass = pair.p_d.probs[support]
    order = np.argsort(gaps, kind="stable")
    gaps, mass = gaps[order], mass[order]
    levels, starts = np.unique(gaps, return_index=True)
    cumulative = np.cumsum(mass)
    ends = np.append(starts[1:], gaps.size) - 1
    for level, end in zip(levels, ends):
        if cumulative[end] > threshold + 1e-12:
            gap = float(level)
            return MajorityGap(gap, gap <= 0.0)
    # Unreachable for tv <= 1: the full mass 1 always exceeds tv / 2 <= 1/2.
    return MajorityGap(float(levels[-1]), False)


@dataclass
class TradeoffReport:
    kind: str
    lhs: float
    eps_p_mean: float
    bound_term: float
    holds: bool
    slack: float
    gamma: float | None = None
    delta_bar: float | None = None
    eps_u: float | None = None
    assumption_violated: bool = False
    # Second-form bounds: main-text and appendix constants differ, both kept.
    second_form_main: float | None = None
    second_form_main_lhs: float | None = None
    second_form_main_holds: bool | None = None
    second_form_appendix: float | None = None
    second_form_appendix_holds: bool | None = None
    notes: list = field(default_factory=list)


def verify_tradeoff(kind: str, worlds: Sequence[FiniteWorld], pairs: Sequence[ProtectionPair],
                    aggregated_pair: ProtectionPair | None = None,
                    alpha: float = 0.5) -> TradeoffReport:
    """Evaluate the privacy-utility trade-off inequality for one client set.

    First form (always evaluated)::

        mean_k L(F*_k, F^B_k) <= mean_k eps_p_k + mean_k B_k

    where for ``kind=js_alpha``: ``L = JS_alpha^(1/e)``,
    ``B_k = [2 alpha (1-alpha) (e^{2 d_k} - 1) tv_k]^(1/e)`` with the
    log-ratio max leakage ``d_k``; for ``kind=tv``: ``L`` is the total
    variation distance, ``eps_p`` the prior-weighted deviation and
    ``B_k = 2 d_k tv_k`` with the absolute max leakage.

    The second form, which trades the bound term for the utility loss, is
    evaluated when an aggregated pair with non-zero distance is supplied and
    every majority gap is positive.
    """
    if kind not in (JS_ALPHA, TV):
        raise ValueError(f"unknown trade-off kind {kind!r}")
    if len(worlds) != len(pairs) or not worlds:
        raise ValueError("need one pair per world and at least one world")
    lhs_terms, eps_terms, bound_terms, leaks, tvs = [], [], [], [], []
    for world, pair in zip(worlds, pairs):
        _check_pair(world, pair)
        f_star = marginal_belief(world, pair.p_o)
        t = pair.tv
        if kind == JS_ALPHA:
            leak = max_leakage_log(world)
            lhs_terms.append(root_e(js_alpha(f_star, world.prior, alpha)))
            eps_terms.append(privacy_leakage_jsalpha(world, pair, alpha))
            bound_terms.append(root_e(2 * alpha * (1 - alpha) * math.expm1(2 * leak) * t))
        else:
            leak = max_leakage_tv(world)
            lhs_terms.append(tv(f_star, world.prior))
            eps_terms.append(privacy_leakage_tv(world, pair))
            bound_terms.append(2 * leak * t)
        leaks.append(leak)
        tvs.append(t)
    lhs = float(np.mean(lhs_terms))
    eps_p = float(np.mean(eps_terms))
    bound = float(np.mean(bound_terms))
    slack = eps_p + bound - lhs
    report = TradeoffReport(kind=kind, lhs=lhs, eps_p_mean=eps_p, bound_term=bound,
                            holds=slack >= -CHECK_TOL, slack=slack)

    if aggregated_pair is None:
        report.notes.append("no aggregated pair: second form skipped")
        return report
    tv_a = aggregated_pair.tv
    gaps = [majority_gap(w, p, tv_reference=tv_a) for w, p in zip(worlds, pairs)]
    report.assumption_violated = any(g.violated for g in gaps)
    report.delta_bar = float(sum(g.gap for g in gaps))
    report.eps_u = utility_loss_bayes(worlds, pairs)
    if tv_a == 0:
        report.notes.append("gamma undefined: aggregated pair has zero distance")
        return report
    if report.assumption_violated:
        report.notes.append("positive majority gap assumption violated: second form skipped")
        return report
    leak = max(leaks)
    growth = math.expm1(2 * leak)
    ratio = report.eps_u / report.delta_bar
    if kind == JS_ALPHA:
        report.gamma = float(np.mean([root_e(t) for t in tvs])) / tv_a
        c = 2 * alpha * (1 - alpha) * growth
        report.second_form_main = eps_p + 2 * report.gamma * root_e(c) * ratio
        report.second_form_appendix = eps_p + report.gamma * c * ratio
        second_lhs = lhs
        appendix_lhs = lhs
    else:
        report.gamma = float(np.mean(tvs)) / tv_a
        report.second_form_main = eps_p + report.gamma / 4 * growth * ratio
        report.second_form_appendix = eps_p + 4 * report.gamma * leak * ratio
        # The main-text statement bounds the mean square-root JS divergence.
        second_lhs = float(np.mean([math.sqrt(js_alpha(marginal_belief(w, p.p_o), w.prior, 0.5))
                                    for w, p in zip(worlds, pairs)]))
        appendix_lhs = lhs
    report.second_form_main_lhs = second_lhs
    report.second_form_main_holds = second_lhs <= report.second_form_main + CHECK_TOL
    report.second_form_appendix_holds = appendix_lhs <= report.second_form_appendix + CHECK_TOL
    return report


class BoundCheck(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def bound_lemma_check(kind: str, world: FiniteWorld, pair: ProtectionPair,
                      alpha: float = 0.5) -> BoundCheck:
    """Per-client belief-shift bounds.

    ``gjsd``: ``JS_alpha(F_A || F*) <= 2 alpha (1-alpha) (e^{2 d} - 1) tv(P_o, P_d)``
    with the log-ratio max leakage ``d``.

    ``dtv``: ``tv(F_A, F*) <= 2 d tv(P_o, P_d)`` with the absolute max leakage.
    """
    _check_pair(world, pair)
    f_a = marginal_belief(world, pair.p_d)
    f_star = marginal_belief(world, pair.p_o)
    if kind == GJSD:
        lhs = js_alpha(f_a, f_star, alpha)
        rhs = 2 * alpha * (1 - alpha) * math.expm1(2 * max_leakage_log(world)) * pair.tv
    elif kind == DTV:
        lhs = tv(f_a, f_star)
        rhs = 2 * max_leakage_tv(world) * pair.tv
    else:
        raise ValueError(f"unknown lemma kind {kind!r}")
    return BoundCheck(lhs, rhs, lhs <= rhs + CHECK_TOL)


class UtilityBoundCheck(NamedTuple):
    eps_u: float
    lower_bound: float
    holds: bool
    assumption_ok: bool
    optimal_unprotected: bool


def utility_lower_bound_check(worlds: Sequence[FiniteWorld], pairs: Sequence[ProtectionPair],
                              aggregated_pair: ProtectionPair) -> UtilityBoundCheck:
    """``eps_u >= (1 / 2K) sum_k gap_k * tv(aggregated pair)``.

    The bound needs two premises, both reported rather than enforced: every
    majority gap is positive, and each unprotected distribution ``p_o`` puts
    all its mass on utility-maximising parameters.
    """
    tv_a = aggregated_pair.tv
    gaps = [majority_gap(w, p, tv_reference=tv_a) for w, p in zip(worlds, pairs)]
    eps_u = utility_loss_bayes(worlds, pairs)
    lower = sum(g.gap for g in gaps) * tv_a / (2 * len(worlds))
    optimal = all(_supported_on_optimum(w, p.p_o) for w, p in zip(worlds, pairs))
    return UtilityBoundCheck(eps_u, lower, eps_u >= lower - CHECK_TOL,
                             not any(g.violated for g in gaps), optimal)


def _supported_on_optimum(world, P, tol=1e-12):
    u = world.row_utilities()
    return bool(np.all(u[P.probs > 0] >= u.max() - tol))


# -- random corpora ---------------------------------------------------------

def random_world(rng: np.random.Generator, n_data: int, n_params: int,
                 concentration: float = 1.0) -> FiniteWorld:
    """Random world with a Bayes-consistent prior.

    The data prior is the kernel averaged under a random parameter prior, so
    ``f(d) = sum_w pi(w) f(d | w)``.  Kernel rows are Dirichlet draws and
    therefore strictly positive (almost surely), keeping log-ratio leakage
    finite.
    """
    kernel = rng.dirichlet(np.full(n_data, concentration), size=n_params)
    pi = rng.dirichlet(np.ones(n_params))
    prior = pi @ kernel
    utility = rng.uniform(0.0, 1.0, size=(n_params, n_data))
    return FiniteWorld(tuple(f"d{i}" for i in range(n_data)),
                       tuple(f"w{j}" for j in range(n_params)),
                       DiscreteDist(tuple(f"d{i}" for i in range(n_data)), prior / prior.sum()),
                       kernel, utility)


def random_pair(rng: np.random.Generator, world: FiniteWorld,
                optimal_unprotected: bool = False) -> ProtectionPair:
    atoms = world.param_atoms
    if optimal_unprotected:
        u = world.row_utilities()
        p_o = DiscreteDist.point_mass(atoms, atoms[int(np.argmax(u))])
    else:
        p_o = DiscreteDist(atoms, rng.dirichlet(np.ones(len(atoms))))
    p_d = DiscreteDist(atoms, rng.dirichlet(np.ones(len(atoms))))
    return ProtectionPair(p_o, p_d)


def aggregate_pairs(pairs: Sequence[ProtectionPair]) -> ProtectionPair:
    """Uniform mixture of client pairs over a shared parameter index set."""
    if not pairs:
        raise ValueError("need at least one pair")
    support = pairs[0].p_o.support
    if any(len(p.p_o.support) != len(support) for p in pairs):
        raise SupportMismatch("clients must share the parameter space size to aggregate")
    p_o = np.mean([p.p_o.probs for p in pairs], axis=0)
    p_d = np.mean([p.p_d.probs for p in pairs], axis=0)
    return ProtectionPair(DiscreteDist(support, p_o), DiscreteDist(support, p_d))


@dataclass
class CorpusEntry:
    seed: int
    worlds: list
    pairs: list
    aggregated_pair: ProtectionPair


def random_corpus_entry(rng: np.random.Generator, seed: int, n_clients: int = 2,
                        data_sizes=(2, 4), param_sizes=(2, 5),
                        optimal_unprotected: bool = False) -> CorpusEntry:
    """One multi-client scenario; all clients share the parameter-space size."""
    n_params = int(rng.integers(param_sizes[0], param_sizes[1] + 1))
    worlds, pairs = [], []
    for _ in range(n_clients):
        n_data = int(rng.integers(data_sizes[0], data_sizes[1] + 1))
        world = random_world(rng, n_data, n_params)
        worlds.append(world)
        pairs.append(random_pair(rng, world, optimal_unprotected))
    return CorpusEntry(seed, worlds, pairs, aggregate_pairs(pairs))
