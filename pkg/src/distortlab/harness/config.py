"""TOML scenario configs with strict key checking.

Every key, its default and its allowed range:

==========================  ==================  ===============================
key                         default             constraint
==========================  ==================  ===============================
scenario                    "scenario"          non-empty string
seed                        0                   integer >= 0
task.model                  "linear"            linear | logistic | mlp
task.hidden                 0                   1..16 for mlp, else 0
task.input_dim              8                   1..64
task.data                   "regression"        regression | binary
task.separation             1.0                 >= 0
task.noise                  0.05                >= 0
task.init_scale             0.1                 >= 0
federation.n_clients        2                   1..64
federation.samples_per_client 1                 1..4096 (>= 2 for binary)
federation.rounds           2                   >= 1
federation.epochs           1                   >= 1
federation.lr               0.1                 > 0
distortion.mode             "identity"          see distort.MODES
distortion.eps1             0.0                 >= 0
distortion.eps              0.0                 >= 0
distortion.inner_steps      20                  >= 1
distortion.inner_lr         0.1                 >= 0
distortion.sigma2_candidates []                 list of numbers >= 0
distortion.levels           0                   >= 2 for quantize
distortion.keep_fraction    1.0                 (0, 1]
distortion.mc_draws         64                  >= 1
attack.iters                500                 >= 1
attack.lr                   0.2                 > 0
attack.n_seeds              10                  >= 1
attack.target_client        0                   < n_clients
sweep.eps1                  [0.0, 0.5, 1.0, 2.0] distinct values >= 0
bayes.corpus_size           500                 >= 1
bayes.alphas                [0.1, 0.25, 0.5, 0.75, 0.9]  each in [0, 1]
bayes.n_clients             2                   >= 1
bayes.max_data              4                   >= 2
bayes.max_params            5                   >= 2
output.dir                  "out"               path
==========================  ==================  ===============================
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..distort import MODES, DistortionPlan
from ..federation import MAX_CLIENTS, MAX_DIM, MAX_SAMPLES, FederationConfig, SyntheticSpec, TrainConfig
from ..numerics import MAX_HIDDEN


class ConfigError(ValueError):
    """Raised for unreadable or invalid configs; ``field`` names the culprit."""

    def __init__(self, message, field_name=None):
        super().__init__(message)
        self.field = field_name


@dataclass(frozen=True)
class TaskSection:
    model: str = "linear"
    hidden: int = 0
    input_dim: int = 8
    data: str = "regression"
    separation: float = 1.0
    noise: float = 0.05
    init_scale: float = 0.1


@dataclass(frozen=True)
class FederationSection:
    n_clients: int = 2
    samples_per_client: int = 1
    rounds: int = 2
    epochs: int = 1
    lr: float = 0.1


@dataclass(frozen=True)
class DistortionSection:
    mode: str = "identity"
    eps1: float = 0.0
    eps: float = 0.0
    inner_steps: int = 20
    inner_lr: float = 0.1
    sigma2_candidates: tuple = ()
    levels: int = 0
    keep_fraction: float = 1.0
    mc_draws: int = 64


@dataclass(frozen=True)
class AttackSection:
    iters: int = 500
    lr: float = 0.2
    n_seeds: int = 10
    target_client: int = 0


@dataclass(frozen=True)
class SweepSection:
    eps1: tuple = (0.0, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class BayesSection:
    corpus_size: int = 500
    alphas: tuple = (0.1, 0.25, 0.5, 0.75, 0.9)
    n_clients: int = 2
    max_data: int = 4
    max_params: int = 5


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"


SECTIONS = {
    "task": TaskSection,
    "federation": FederationSection,
    "distortion": DistortionSection,
    "attack": AttackSection,
    "sweep": SweepSection,
    "bayes": BayesSection,
    "output": OutputSection,
}


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "scenario"
    seed: int = 0
    task: TaskSection = field(default_factory=TaskSection)
    federation: FederationSection = field(default_factory=FederationSection)
    distortion: DistortionSection = field(default_factory=DistortionSection)
    attack: AttackSection = field(default_factory=AttackSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    bayes: BayesSection = field(default_factory=BayesSection)
    output: OutputSection = field(default_factory=OutputSection)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return validate(replace(self, seed=seed))

    def with_eps1(self, eps1: float) -> "ScenarioConfig":
        return replace(self, distortion=replace(self.distortion, eps1=float(eps1)))

    def federation_config(self, run_seed: int) -> FederationConfig:
        t, f = self.task, self.federation
        data = SyntheticSpec(f.n_clients, f.samples_per_client, t.input_dim, t.data, t.separation, t.noise)
        return FederationConfig(t.model, data, f.rounds, TrainConfig(f.epochs, f.lr),
                                t.hidden, t.init_scale, run_seed)

    def distortion_plan(self, plan_seed: int) -> DistortionPlan:
        d = self.distortion
        return DistortionPlan(d.mode, d.eps1, d.eps, tuple(d.sigma2_candidates), d.levels,
                              d.keep_fraction, d.inner_steps, d.inner_lr, d.mc_draws, plan_seed)


def _coerce(section_cls, name, raw: dict, where: str):
    known = {f.name: f for f in fields(section_cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{where}{key}: unknown key", f"{where}{key}")
    values = {}
    for key, value in raw.items():
        default = known[key].default
        path = f"{where}{key}"
        if isinstance(default, bool) or isinstance(value, bool):
            raise ConfigError(f"{path}: booleans are not accepted", path)
        if isinstance(default, tuple):
            if not isinstance(value, list) or not all(isinstance(v, (int, float)) for v in value):
                raise ConfigError(f"{path}: expected a list of numbers", path)
            value = tuple(float(v) for v in value)
        elif isinstance(default, int) and not isinstance(default, bool):
            if not isinstance(value, int):
                raise ConfigError(f"{path}: expected an integer", path)
        elif isinstance(default, float):
            if not isinstance(value, (int, float)):
                raise ConfigError(f"{path}: expected a number", path)
            value = float(value)
        elif isinstance(default, str):
            if not isinstance(value, str):
                raise ConfigError(f"{path}: expected a string", path)
        values[key] = value
    return section_cls(**values)


def _require(cond, path, message):
    if not cond:
        raise ConfigError(f"{path}: {message}", path)


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    t, f, d, a, s, b = cfg.task, cfg.federation, cfg.distortion, cfg.attack, cfg.sweep, cfg.bayes
    _require(cfg.scenario, "scenario", "must be non-empty")
    _require("," not in cfg.scenario and "\n" not in cfg.scenario, "scenario", "must not contain commas or newlines")
    _require(cfg.seed >= 0, "seed", "must be >= 0")
    _require(t.model in ("linear", "logistic", "mlp"), "task.model", "must be linear, logistic or mlp")
    if t.model == "mlp":
        _require(1 <= t.hidden <= MAX_HIDDEN, "task.hidden", f"must be in [1, {MAX_HIDDEN}] for mlp")
    else:
        _require(t.hidden == 0, "task.hidden", "only mlp takes a hidden width")
    _require(t.data in ("regression", "binary"), "task.data", "must be regression or binary")
    _require((t.model == "linear") == (t.data == "regression"), "task.data",
             "linear pairs with regression; logistic and mlp with binary")
    _require(1 <= t.input_dim <= MAX_DIM, "task.input_dim", f"must be in [1, {MAX_DIM}]")
    _require(t.separation >= 0, "task.separation", "must be >= 0")
    _require(t.noise >= 0, "task.noise", "must be >= 0")
    _require(t.init_scale >= 0, "task.init_scale", "must be >= 0")
    _require(1 <= f.n_clients <= MAX_CLIENTS, "federation.n_clients", f"must be in [1, {MAX_CLIENTS}]")
    low = 1 if t.data == "regression" else 2
    _require(low <= f.samples_per_client <= MAX_SAMPLES, "federation.samples_per_client",
             f"must be in [{low}, {MAX_SAMPLES}]")
    _require(f.rounds >= 1, "federation.rounds", "must be >= 1")
    _require(f.epochs >= 1, "federation.epochs", "must be >= 1")
    _require(f.lr > 0, "federation.lr", "must be > 0")
    _require(d.mode in MODES, "distortion.mode", f"must be one of {', '.join(MODES)}")
    _require(d.eps1 >= 0, "distortion.eps1", "must be >= 0")
    _require(d.eps >= 0, "distortion.eps", "must be >= 0")
    _require(d.inner_steps >= 1, "distortion.inner_steps", "must be >= 1")
    _require(d.inner_lr >= 0, "distortion.inner_lr", "must be >= 0")
    _require(all(v >= 0 for v in d.sigma2_candidates), "distortion.sigma2_candidates", "must be >= 0")
    if d.mode == "gaussian":
        _require(d.sigma2_candidates, "distortion.sigma2_candidates", "gaussian mode needs candidates")
    if d.mode == "quantize":
        _require(d.levels >= 2, "distortion.levels", "quantize needs >= 2 levels")
    _require(0 < d.keep_fraction <= 1, "distortion.keep_fraction", "must lie in (0, 1]")
    _require(d.mc_draws >= 1, "distortion.mc_draws", "must be >= 1")
    _require(a.iters >= 1, "attack.iters", "must be >= 1")
    _require(a.lr > 0, "attack.lr", "must be > 0")
    _require(a.n_seeds >= 1, "attack.n_seeds", "must be >= 1")
    _require(0 <= a.target_client < f.n_clients, "attack.target_client", "must index an existing client")
    _require(all(v >= 0 for v in s.eps1), "sweep.eps1", "values must be >= 0")
    _require(len(set(s.eps1)) == len(s.eps1), "sweep.eps1", "duplicate grid values")
    _require(b.corpus_size >= 1, "bayes.corpus_size", "must be >= 1")
    _require(b.alphas and all(0 <= x <= 1 for x in b.alphas), "bayes.alphas", "values must lie in [0, 1]")
    _require(b.n_clients >= 1, "bayes.n_clients", "must be >= 1")
    _require(b.max_data >= 2, "bayes.max_data", "must be >= 2")
    _require(b.max_params >= 2, "bayes.max_params", "must be >= 2")
    return cfg


def config_from_dict(raw: dict) -> ScenarioConfig:
    top = {}
    sections = {}
    for key, value in raw.items():
        if key in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"[{key}] must be a table", key)
            sections[key] = _coerce(SECTIONS[key], key, value, f"{key}.")
        elif key in ("scenario", "seed"):
            top[key] = value
        else:
            raise ConfigError(f"{key}: unknown key", key)
    top_cfg = _coerce(ScenarioConfig, "", top, "")
    return validate(replace(top_cfg, **sections))


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw)
