"""Experiment configuration, presets and dotted-path overrides."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..diagnostics import DiagnosticsConfig
from ..distribution import make_spec
from ..errors import ConfigError
from ..trainer import TrainConfig, theorem_schedule

PRESETS = ("fig1", "fig2_lowdim", "fig2_highdim", "theorem")

PREDICATES = (
    "clean_all_correct",
    "noisy_all_incorrect",
    "test_error_within",
    "amplification",
    "alignment",
    "almost_orth",
    "norm_growth",
    "val_acc_min",
    "val_peak_drop",
)


@dataclass
class DistributionSection:
    d: int = 2
    sigma2: float = 0.02
    eta: float = 0.15
    mean_mode: str = "canonical"
    noise_mode: str | None = None

    def spec(self, rng=None):
        return make_spec(self.d, math.sqrt(self.sigma2), self.eta, self.mean_mode, rng,
                         noise_mode=self.noise_mode)


@dataclass
class TrainSection:
    alpha: float = 0.1
    # None means the early-stopping schedule 1 + ceil(1/(4 alpha))
    T: int | None = None
    omega_init: float = 1e-3
    snapshot_policy: str = "endpoints"
    snapshot_k: int = 10
    subgrad_at_zero: float = 0.0

    @property
    def resolved_T(self) -> int:
        return self.T if self.T is not None else theorem_schedule(self.alpha)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(alpha=self.alpha, T=self.resolved_T, omega_init=self.omega_init,
                           snapshot_policy=self.snapshot_policy, snapshot_k=self.snapshot_k,
                           seed=seed, subgrad_at_zero=self.subgrad_at_zero)


@dataclass
class OutputSection:
    dir: str = "runs/out"
    svg: bool = True
    grid_res: int = 200
    grid_bounds: list = field(default_factory=lambda: [-2.0, 2.0, -2.0, 2.0])
    svg_max_points: int = 1500
    checkpoints: bool = True
    dataset_csv: bool = False


@dataclass
class ExperimentConfig:
    name: str = "custom"
    distribution: DistributionSection = field(default_factory=DistributionSection)
    n_train: int = 1000
    n_test: int = 10000
    m: int = 100
    train: TrainSection = field(default_factory=TrainSection)
    diagnostics: dict = field(default_factory=dict)
    # "all", "none", "final", or an explicit list of iterations
    diag_iterations: object = "final"
    test_error_at: str = "final"
    # evaluate train/validation accuracy every k iterations (0 = off)
    curve_every: int = 0
    test_error_slack: float = 0.03
    val_acc_min: float = 0.80
    val_peak_drop: float = 0.02
    acceptance: list = field(default_factory=list)
    seeds: list = field(default_factory=lambda: [1])
    outputs: OutputSection = field(default_factory=OutputSection)

    def validate(self) -> "ExperimentConfig":
        if self.n_train < 1:
            raise ConfigError(f"n_train must be >= 1, got {self.n_train}")
        if self.n_test < 0:
            raise ConfigError("n_test must be >= 0")
        if self.m < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if self.curve_every < 0:
            raise ConfigError("curve_every must be >= 0")
        if self.test_error_at not in ("final", "all", "none"):
            raise ConfigError(f"unknown test_error_at {self.test_error_at!r}")
        unknown = [p for p in self.acceptance if p not in PREDICATES]
        if unknown:
            raise ConfigError(f"unknown acceptance predicates {unknown}")
        # each sub-config validates itself on construction
        self.distribution.spec(0)
        self.train.train_config(self.seeds[0])
        self.diagnostics_config()
        T = self.train.resolved_T
        for t in self.diag_iteration_list():
            if not 0 <= t <= T:
                raise ConfigError(f"diagnostic iteration {t} outside [0, {T}]")
        return self

    def diagnostics_config(self) -> DiagnosticsConfig:
        names = {f.name for f in fields(DiagnosticsConfig)}
        bad = set(self.diagnostics) - names
        if bad:
            raise ConfigError(f"unknown diagnostics fields {sorted(bad)}")
        return DiagnosticsConfig(**self.diagnostics)

    def diag_iteration_list(self) -> list[int]:
        T = self.train.resolved_T
        it = self.diag_iterations
        if it == "all":
            return list(range(T + 1))
        if it == "final":
            return [T]
        if it in ("none", None):
            return []
        if isinstance(it, str):
            return sorted({int(s) for s in it.split(",") if s})
        return sorted({int(t) for t in it})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        obj = copy.deepcopy(obj)
        kw = {}
        for f in fields(cls):
            if f.name not in obj:
                continue
            v = obj.pop(f.name)
            if f.name == "distribution":
                v = DistributionSection(**v)
            elif f.name == "train":
                v = TrainSection(**v)
            elif f.name == "outputs":
                v = OutputSection(**v)
            kw[f.name] = v
        if obj:
            raise ConfigError(f"unknown config fields {sorted(obj)}")
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        doc = json.loads(Path(path).read_text())
        if "config" in doc and "name" not in doc:
            doc = doc["config"]  # a run manifest
        return cls.from_dict(doc)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: ExperimentConfig, assignment: str) -> ExperimentConfig:
    """Apply one ``dotted.path=value`` override; ``value`` is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override must look like key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    doc = cfg.to_dict()
    node = doc
    parts = key.strip().split(".")
    for p in parts[:-1]:
        if not isinstance(node, dict) or p not in node:
            raise ConfigError(f"unknown config path {key!r}")
        node = node[p]
    leaf = parts[-1]
    if not isinstance(node, dict) or (leaf not in node and parts[0] != "diagnostics"):
        raise ConfigError(f"unknown config path {key!r}")
    node[leaf] = _parse_value(raw)
    return ExperimentConfig.from_dict(doc)


def preset(name: str) -> ExperimentConfig:
    """Named experiment configurations.

    ``fig1``: the 2-D decision-boundary run.  ``fig2_lowdim`` and
    ``fig2_highdim``: long runs past interpolation with n >> d and d >> n.
    ``theorem``: an early-stopped high-dimensional run in the regime where the
    separation guarantees are expected to hold.
    """
    if name == "fig1":
        m = 500
        return ExperimentConfig(
            name="fig1",
            distribution=DistributionSection(d=2, sigma2=1 / 50, eta=0.15),
            n_train=5000, n_test=10000, m=m,
            train=TrainSection(alpha=0.05, T=3000, omega_init=math.sqrt(1 / (32 * m)),
                               snapshot_policy="endpoints"),
            diag_iterations="final",
            acceptance=["clean_all_correct", "noisy_all_incorrect"],
            outputs=OutputSection(dir="runs/fig1", svg=True, grid_res=200, dataset_csv=True),
        )
    if name in ("fig2_lowdim", "fig2_highdim"):
        m = 400
        if name == "fig2_lowdim":
            d, n, T, every = _FIG2_LOWDIM
            accept = ["val_peak_drop"]
        else:
            d, n, T, every = _FIG2_HIGHDIM
            accept = ["val_acc_min"]
        return ExperimentConfig(
            name=name,
            distribution=DistributionSection(d=d, sigma2=d ** -1.2, eta=0.15),
            n_train=n, n_test=6000, m=m,
            train=TrainSection(alpha=0.1, T=T, omega_init=math.sqrt(0.01 / (m * d)),
                               snapshot_policy="endpoints"),
            diag_iterations="none",
            test_error_at="none",
            curve_every=every,
            acceptance=accept,
            seeds=[1, 2, 3],
            outputs=OutputSection(dir=f"runs/{name}", svg=False, checkpoints=False),
        )
    if name == "theorem":
        d, n, m = 500, 2000, 128
        return ExperimentConfig(
            name="theorem",
            distribution=DistributionSection(d=d, sigma2=1 / (16 * d), eta=0.05),
            n_train=n, n_test=20000, m=m,
            train=TrainSection(alpha=0.1, T=None, omega_init=math.sqrt(1e-10 / (m * d)),
                               snapshot_policy="all"),
            diag_iterations="all",
            acceptance=["clean_all_correct", "noisy_all_incorrect", "test_error_within",
                        "amplification", "alignment", "almost_orth", "norm_growth"],
            outputs=OutputSection(dir="runs/theorem", svg=False),
        )
    raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


# (d, n, T, curve_every) for the two overfitting regimes
_FIG2_LOWDIM = (10, 200, 30000, 500)
_FIG2_HIGHDIM = (1000, 50, 20000, 250)


def assumption_proxies(cfg: ExperimentConfig, delta: float = 0.01) -> dict:
    """For each standing assumption, the range of the constant C it allows.

    Each entry gives ``C_max`` (or ``[C_min, C_max]`` for the step size) such
    that the inequality holds with that C at the configured sizes.
    """
    d, n, m = cfg.distribution.d, cfg.n_train, cfg.m
    sigma2 = cfg.distribution.sigma2
    eta = cfg.distribution.eta
    w2 = cfg.train.omega_init ** 2
    alpha = cfg.train.alpha
    inf = float("inf")
    out = {
        "A1_dimension": {"C_max": d / max(math.log(n / delta) ** 2, math.log(m / delta))},
        "A2_sigma": {"C_max": 1 / math.sqrt(sigma2 * d) if sigma2 > 0 else inf},
        "A3_samples": {"C_max": n / math.log(m / delta)},
        "A4_noise": {"C_max": 1 / eta if eta > 0 else inf},
        "A5_width": {"C_max": m / math.log(1 / delta)},
        "A6_init": {"C_max": (1 / (w2 * m * d)) ** 0.25},
        "A7_stepsize": {"C_min": 1 / (4 * alpha ** 2), "C_max": 1 / alpha ** 2},
    }
    joint = min(v["C_max"] for v in out.values())
    lo = out["A7_stepsize"]["C_min"]
    out["joint"] = {"C_max": joint, "consistent": lo <= joint, "delta": delta}
    return {k: {kk: (None if isinstance(vv, float) and math.isinf(vv) else vv) for kk, vv in v.items()}
            for k, v in out.items()}
