"""Data-distortion defences.

Projected-gradient modes operate per sample:

``learn_to_distort``
    descend the loss while keeping ``||delta_i|| >= eps1`` (exterior of a
    ball).  Steps are normalised gradients of length ``inner_lr * eps1``, so
    the search scale follows the radius and ``eps1 = 0`` leaves the data
    untouched.
``adversarial``
    ascend the loss inside ``||delta_i|| <= eps``.
``unlearnable``
    descend the loss inside ``||delta_i|| <= eps``.

Non-learned mechanisms: Gaussian noise, uniform quantisation and top-k
sparsification.  ``mpc_stub`` and ``he_stub`` are named placeholders that
refuse to run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .federation import FederationConfig, FederationHistory, run_federation
from .numerics import (
    Dataset,
    Model,
    NonFiniteError,
    input_gradients,
    loss_mean,
    per_sample_loss,
    project_inside_ball,
    project_outside_ball,
)
from .seeding import derive_rng

MODES = ("learn_to_distort", "adversarial", "unlearnable", "gaussian",
         "quantize", "sparsify", "identity", "mpc_stub", "he_stub")
PGD_MODES = ("learn_to_distort", "adversarial", "unlearnable")
CONSTRAINT_TOL = 1e-9


class UnimplementedMechanism(NotImplementedError):
    """Cryptographic mechanisms have no executable semantics here."""


@dataclass(frozen=True)
class DistortionPlan:
    mode: str = "identity"
    eps1: float = 0.0
    eps: float = 0.0
    sigma2_candidates: tuple = ()
    levels: int = 0
    keep_fraction: float = 1.0
    inner_steps: int = 20
    inner_lr: float = 0.1
    mc_draws: int = 64
    seed: int = 0

    def validate(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown distortion mode {self.mode!r}")
        if self.eps1 < 0 or self.eps < 0:
            raise ValueError("eps1 and eps must be non-negative")
        if self.mode in PGD_MODES:
            if self.inner_steps < 1:
                raise ValueError("inner_steps must be >= 1")
            if self.inner_lr < 0:
                raise ValueError("inner_lr must be non-negative")
        if self.mode == "gaussian":
            if not self.sigma2_candidates:
                raise ValueError("gaussian mode needs a non-empty sigma2_candidates set")
            if any(s < 0 for s in self.sigma2_candidates):
                raise ValueError("noise variances must be non-negative")
        if self.mode == "quantize" and self.levels < 2:
            raise ValueError("quantize needs levels >= 2")
        if self.mode == "sparsify" and not 0 < self.keep_fraction <= 1:
            raise ValueError("keep_fraction must lie in (0, 1]")
        return self


@dataclass(eq=False)
class DistortedBatch:
    delta: np.ndarray            # requested distortion, before clamping to [0, 1]
    distorted: Dataset
    effective_delta: np.ndarray  # distorted - clean, after clamping
    sigma2: Optional[float] = None

    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.delta, axis=1)


def _finish(batch: Dataset, delta, sigma2=None) -> DistortedBatch:
    delta = np.asarray(delta, dtype=float)
    if not np.all(np.isfinite(delta)):
        raise NonFiniteError("distortion produced non-finite values")
    distorted = Dataset(np.clip(batch.features + delta, 0.0, 1.0), batch.labels)
    return DistortedBatch(delta, distorted, distorted.features - batch.features, sigma2)


def fallback_directions(seed: int, n: int, d: int) -> np.ndarray:
    """Unit row per sample, each from its own (seed, sample index) stream."""
    rows = np.empty((n, d))
    for i in range(n):
        v = derive_rng(seed, "fallback-direction", i).standard_normal(d)
        rows[i] = v / np.linalg.norm(v)
    return rows


def _unit_rows(G):
    norms = np.linalg.norm(G, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return np.where(norms > 0, G / safe, 0.0), norms[:, 0] > 0


def inner_distort(model: Model, batch: Dataset, plan: DistortionPlan, seed: int | None = None) -> DistortedBatch:
    """Per-sample projected gradient search for the distortion."""
    plan.validate()
    if plan.mode not in PGD_MODES:
        raise ValueError(f"inner_distort does not handle mode {plan.mode!r}")
    seed = plan.seed if seed is None else seed
    X, y = batch.features, batch.labels
    n, d = X.shape
    if plan.mode == "learn_to_distort":
        eps1 = plan.eps1
        fallback = fallback_directions(seed, n, d)
        unit, has_grad = _unit_rows(input_gradients(model, X, y))
        start = np.where(has_grad[:, None], -unit, fallback)
        delta = eps1 * start
        step = plan.inner_lr * eps1
        for _ in range(plan.inner_steps):
            unit, _ = _unit_rows(input_gradients(model, X + delta, y))
            delta = delta - step * unit
            delta = np.stack([project_outside_ball(delta[i], eps1, fallback[i]) for i in range(n)])
    else:
        sign = 1.0 if plan.mode == "adversarial" else -1.0
        delta = np.zeros_like(X)
        for _ in range(plan.inner_steps):
            G = input_gradients(model, X + delta, y)
            delta = delta + sign * plan.inner_lr * G
            delta = np.stack([project_inside_ball(delta[i], plan.eps) for i in range(n)])
    if not np.all(np.isfinite(per_sample_loss(model, X + delta, y))):
        raise NonFiniteError("loss became non-finite during the inner search")
    return _finish(batch, delta)


def constraint_satisfied(batch: DistortedBatch, plan: DistortionPlan) -> np.ndarray:
    norms = batch.row_norms()
    if plan.mode == "learn_to_distort":
        return norms >= plan.eps1 - CONSTRAINT_TOL
    if plan.mode in ("adversarial", "unlearnable"):
        return norms <= plan.eps + CONSTRAINT_TOL
    return np.ones(norms.shape, dtype=bool)


def gaussian_mechanism(batch: Dataset, sigma2: float, seed: int) -> DistortedBatch:
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    rng = np.random.default_rng(seed)
    noise = math.sqrt(sigma2) * rng.standard_normal(batch.features.shape)
    return _finish(batch, noise, sigma2)


def choose_sigma(model: Model, batch: Dataset, candidates, seed: int, draws: int = 64) -> float:
    """Variance in ``candidates`` with the lowest Monte-Carlo expected loss.

    Every candidate is scored on the same standard-normal draws (scaled by
    its standard deviation), and ties go to the smaller variance.
    """
    candidates = sorted(float(s) for s in candidates)
    if not candidates:
        raise ValueError("empty candidate set")
    if any(s < 0 for s in candidates):
        raise ValueError("noise variances must be non-negative")
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((draws, *batch.features.shape))
    best, best_loss = None, math.inf
    for s in candidates:
        losses = [loss_mean(model, Dataset(np.clip(batch.features + math.sqrt(s) * z, 0, 1), batch.labels))
                  for z in base]
        score = float(np.mean(losses))
        if score < best_loss:
            best, best_loss = s, score
    return best


def quantize(batch: Dataset, levels: int) -> DistortedBatch:
    if levels < 2:
        raise ValueError("need at least two levels")
    q = np.round(batch.features * (levels - 1)) / (levels - 1)
    return _finish(batch, q - batch.features)


def sparsify(batch: Dataset, keep_fraction: float) -> DistortedBatch:
    """Keep the ``ceil(fraction * d)`` largest-magnitude entries of each row."""
    if not 0 < keep_fraction <= 1:
        raise ValueError("keep_fraction must lie in (0, 1]")
    X = batch.features
    keep = math.ceil(keep_fraction * X.shape[1])
    order = np.argsort(-np.abs(X), axis=1, kind="stable")
    mask = np.zeros_like(X, dtype=bool)
    np.put_along_axis(mask, order[:, :keep], True, axis=1)
    return _finish(batch, np.where(mask, X, 0.0) - X)


def utility_loss_empirical(model: Model, clean: Dataset, distorted: Dataset) -> float:
    """Mean loss on distorted inputs minus mean loss on clean inputs, same model."""
    if clean.features.shape != distorted.features.shape:
        raise ValueError("clean and distorted data differ in shape")
    return loss_mean(model, distorted) - loss_mean(model, clean)


def apply_plan(model: Model, batch: Dataset, plan: DistortionPlan, seed: int | None = None) -> DistortedBatch:
    """Dispatch on ``plan.mode``."""
    plan.validate()
    seed = plan.seed if seed is None else seed
    mode = plan.mode
    if mode in PGD_MODES:
        return inner_distort(model, batch, plan, seed)
    if mode == "gaussian":
        sigma2 = choose_sigma(model, batch, plan.sigma2_candidates, seed, plan.mc_draws)
        return gaussian_mechanism(batch, sigma2, derive_rng(seed, "gaussian-noise").integers(2**63))
    if mode == "quantize":
        return quantize(batch, plan.levels)
    if mode == "sparsify":
        return sparsify(batch, plan.keep_fraction)
    if mode == "identity":
        return _finish(batch, np.zeros_like(batch.features))
    raise UnimplementedMechanism(f"{mode} has no executable semantics in this framework")


@dataclass
class DistortionHook:
    """Federation hook applying a plan to each client's clean data every round.

    Every produced batch is kept in ``log`` keyed by ``(round, client)``.
    """

    plan: DistortionPlan
    log: dict = field(default_factory=dict)

    def __post_init__(self):
        self.plan.validate()
        if self.plan.mode in ("mpc_stub", "he_stub"):
            raise UnimplementedMechanism(f"{self.plan.mode} has no executable semantics in this framework")

    def __call__(self, model, dataset, client_id, round_index):
        if self.plan.mode == "identity":
            return None
        seed = int(derive_rng(self.plan.seed, "distort", client_id, round_index).integers(2**63))
        batch = apply_plan(model, dataset, self.plan, seed)
        self.log[(round_index, client_id)] = batch
        return batch.distorted


def train_learn_to_distort(config: FederationConfig, plan: DistortionPlan,
                           datasets=None) -> tuple[Model, dict, FederationHistory]:
    """Alternate the inner distortion search with local model steps inside FedAvg.

    Returns the final global model, the per-(round, client) distortion log and
    the federation history.
    """
    hook = DistortionHook(plan)
    history = run_federation(config, hook, datasets)
    final = history.model.with_params(history.records[-1].global_params)
    return final, hook.log, history
