"""Deterministic FedAvg simulation with a data-distortion hook.

Each round every client optionally distorts its clean data, runs full-batch
gradient descent from the current global parameters and shares the update
``theta_k - theta``; the server adds the unweighted mean update.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .numerics import Dataset, Model, gd_step, grad_params, init_model, loss_mean
from .seeding import derive_rng

MAX_CLIENTS = 64
MAX_DIM = 64
MAX_SAMPLES = 4096
TASKS = ("regression", "binary")


@dataclass(frozen=True)
class SyntheticSpec:
    n_clients: int
    samples_per_client: int
    input_dim: int
    task: str = "regression"
    separation: float = 1.0
    noise: float = 0.05

    def validate(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if not 1 <= self.n_clients <= MAX_CLIENTS:
            raise ValueError(f"n_clients must be in [1, {MAX_CLIENTS}]")
        if not 1 <= self.input_dim <= MAX_DIM:
            raise ValueError(f"input_dim must be in [1, {MAX_DIM}]")
        # Single-sample clients are allowed for regression only; a binary
        # client needs both classes.
        low = 1 if self.task == "regression" else 2
        if not low <= self.samples_per_client <= MAX_SAMPLES:
            raise ValueError(f"samples_per_client must be in [{low}, {MAX_SAMPLES}]")
        if self.separation < 0 or self.noise < 0:
            raise ValueError("separation and noise must be non-negative")


def generate_synthetic(spec: SyntheticSpec, seed: int) -> list[Dataset]:
    """Per-client synthetic data in the unit box.

    Regression: ``y = separation * w.(x - 1/2) + noise`` with a shared
    ``w``.  Binary: two Gaussian blobs centred at ``1/2 -/+ separation/2``
    along a shared unit direction, balanced labels.
    """
    spec.validate()
    task_rng = derive_rng(seed, "task")
    d = spec.input_dim
    direction = task_rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    datasets = []
    for k in range(spec.n_clients):
        rng = derive_rng(seed, "client-data", k)
        n = spec.samples_per_client
        if spec.task == "regression":
            x = rng.uniform(0.0, 1.0, size=(n, d))
            y = spec.separation * (x - 0.5) @ direction + spec.noise * rng.standard_normal(n)
        else:
            y = np.zeros(n)
            y[rng.permutation(n)[: n // 2]] = 1.0
            centre = 0.5 + (y[:, None] - 0.5) * spec.separation * direction[None, :]
            x = centre + 0.15 * rng.standard_normal((n, d))
        datasets.append(Dataset(np.clip(x, 0.0, 1.0), y))
    return datasets


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1
    lr: float = 0.1

    def validate(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")


@dataclass
class ClientState:
    id: int
    dataset: Dataset
    distorted: Optional[Dataset] = None
    local_params: Optional[np.ndarray] = None

    def training_data(self) -> Dataset:
        return self.distorted if self.distorted is not None else self.dataset


@dataclass
class FederationState:
    global_params: np.ndarray
    clients: list
    round_index: int = 0
    rng_seed: int = 0
    last_updates: list = field(default_factory=list)


# hook(model at current global params, clean dataset, client id, round index)
# -> distorted Dataset, or None for no distortion.
DistortionHook = Callable[[Model, Dataset, int, int], Optional[Dataset]]


def identity_hook(model, dataset, client_id, round_index):
    return None


def local_train(model: Model, client: ClientState, epochs: int, lr: float) -> np.ndarray:
    """Full-batch gradient descent from ``model.params``; returns ``theta_k - theta``."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    data = client.training_data()
    theta = model.params
    local = model
    for _ in range(epochs):
        local = local.with_params(gd_step(local.params, grad_params(local, data), lr))
    return local.params - theta


def aggregate(theta, updates) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if len(updates) == 0:
        raise ValueError("no updates to aggregate")
    stacked = np.asarray(updates, dtype=float)
    if stacked.ndim != 2 or stacked.shape[1] != theta.size:
        raise ValueError("every update must match the parameter length")
    return theta + stacked.mean(axis=0)


def run_round(state: FederationState, model: Model, train: TrainConfig,
              hook: DistortionHook = identity_hook) -> FederationState:
    """One FedAvg round; ``model`` supplies kind and shape, ``state`` the parameters."""
    train.validate()
    current = model.with_params(state.global_params)
    clients = []
    updates = []
    for client in state.clients:
        distorted = hook(current, client.dataset, client.id, state.round_index)
        if distorted is not None and distorted.features.shape != client.dataset.features.shape:
            raise ValueError("distortion changed the dataset shape")
        new_client = replace(client, distorted=distorted)
        update = local_train(current, new_client, train.epochs, train.lr)
        new_client.local_params = state.global_params + update
        updates.append(update)
        clients.append(new_client)
    return FederationState(
        global_params=aggregate(state.global_params, updates),
        clients=clients,
        round_index=state.round_index + 1,
        rng_seed=state.rng_seed,
        last_updates=updates,
    )


def global_clean_loss(model: Model, params, clients) -> float:
    """Unweighted mean over clients of each client's clean-data loss."""
    m = model.with_params(params)
    return float(np.mean([loss_mean(m, c.dataset) for c in clients]))


@dataclass(frozen=True)
class FederationConfig:
    model_kind: str
    data: SyntheticSpec
    rounds: int
    train: TrainConfig = TrainConfig()
    hidden: int = 0
    init_scale: float = 0.1
    seed: int = 0

    def validate(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        self.data.validate()
        self.train.validate()


@dataclass
class RoundRecord:
    round_index: int
    global_params: np.ndarray
    updates: list
    clean_loss: float
    distorted: list


@dataclass
class FederationHistory:
    model: Model
    initial_loss: float
    records: list

    def __len__(self):
        return len(self.records)

    @property
    def final_loss(self) -> float:
        return self.records[-1].clean_loss


def initial_state(config: FederationConfig, datasets=None):
    datasets = generate_synthetic(config.data, config.seed) if datasets is None else datasets
    model = init_model(config.model_kind, config.data.input_dim, config.hidden,
                       derive_rng(config.seed, "model-init"), config.init_scale)
    clients = [ClientState(k, ds) for k, ds in enumerate(datasets)]
    return model, FederationState(model.params.copy(), clients, 0, config.seed)


def run_federation(config: FederationConfig, hook: DistortionHook = identity_hook,
                   datasets=None) -> FederationHistory:
    """Run ``config.rounds`` rounds and record the full trajectory."""
    config.validate()
    model, state = initial_state(config, datasets)
    history = FederationHistory(model, global_clean_loss(model, state.global_params, state.clients), [])
    for _ in range(config.rounds):
        state = run_round(state, model, config.train, hook)
        history.records.append(RoundRecord(
            round_index=state.round_index,
            global_params=state.global_params.copy(),
            updates=[u.copy() for u in state.last_updates],
            clean_loss=global_clean_loss(model, state.global_params, state.clients),
            distorted=[c.distorted for c in state.clients],
        ))
    return history
