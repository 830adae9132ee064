"""Full-batch gradient descent on the empirical logistic risk."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ._rng import stream
from .distribution import Dataset, DistributionSpec, sample_dataset
from .errors import ConfigError, DivergenceError, ShapeError
from .network import NetworkParams, init_network, relu_derivative, save_checkpoint

SNAPSHOT_POLICIES = ("all", "endpoints", "every_k")

Hook = Callable[[int, NetworkParams], None]


def logistic_loss(z):
    """``log(1 + exp(-z))`` without overflow for large ``|z|``.

    Uses ``log1p(exp(-z))`` for ``z >= 0`` and ``-z + log1p(exp(z))`` otherwise.
    """
    z = np.asarray(z, dtype=np.float64)
    e = np.log1p(np.exp(-np.abs(z)))
    out = np.where(z >= 0, e, e - z)
    return float(out) if np.ndim(out) == 0 else out


def logistic_loss_deriv(z):
    """``-1 / (1 + exp(z))``, evaluated in a form that never overflows."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    out = np.where(z >= 0, -e / (1.0 + e), -1.0 / (1.0 + e))
    return float(out) if out.ndim == 0 else out


def _check_data(params: NetworkParams, dataset: Dataset):
    if dataset.d != params.d:
        raise ShapeError(f"dataset has d={dataset.d} but network expects d={params.d}")


def _forward_pass(W, a, X):
    pre = X @ W.T
    return pre, np.maximum(pre, 0.0) @ a


def _gradient_from(pre, f, params: NetworkParams, X, y):
    coef = logistic_loss_deriv(y * f) * y / X.shape[0]
    D = relu_derivative(pre, params.subgrad_at_zero)
    return params.a[:, None] * ((D * coef[:, None]).T @ X)


def empirical_risk(params: NetworkParams, dataset: Dataset) -> float:
    _check_data(params, dataset)
    _, f = _forward_pass(params.W, params.a, dataset.points)
    return float(np.mean(logistic_loss(dataset.labels * f)))


def gradient(params: NetworkParams, dataset: Dataset) -> np.ndarray:
    """Gradient of the empirical risk with respect to ``W``.

    Row ``j`` is ``(1/n) sum_i l'(y_i f(x_i)) y_i a_j relu'(<w_j, x_i>) x_i``.
    """
    _check_data(params, dataset)
    X = dataset.points
    y = dataset.labels.astype(np.float64)
    pre, f = _forward_pass(params.W, params.a, X)
    return _gradient_from(pre, f, params, X, y)


def gd_step(params: NetworkParams, dataset: Dataset, alpha: float) -> NetworkParams:
    if not alpha > 0:
        raise ConfigError(f"step size must be > 0, got {alpha}")
    return params.with_weights(params.W - alpha * gradient(params, dataset))


def theorem_schedule(alpha: float) -> int:
    """Early-stopping time ``1 + ceil(1/(4 alpha))``."""
    if not alpha > 0:
        raise ConfigError(f"step size must be > 0, got {alpha}")
    q = 1.0 / (4.0 * alpha)
    r = round(q)
    if abs(q - r) < 1e-9 * max(1.0, q):
        q = r
    return 1 + math.ceil(q)


@dataclass(frozen=True)
class TrainConfig:
    alpha: float
    T: int
    omega_init: float
    snapshot_policy: str = "every_k"
    snapshot_k: int = 10
    seed: int = 0
    subgrad_at_zero: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if self.T < 1:
            raise ConfigError(f"T must be >= 1, got {self.T}")
        if not self.omega_init > 0:
            raise ConfigError(f"omega_init must be > 0, got {self.omega_init}")
        if self.snapshot_policy not in SNAPSHOT_POLICIES:
            raise ConfigError(f"unknown snapshot policy {self.snapshot_policy!r}")
        if self.snapshot_k < 1:
            raise ConfigError("snapshot_k must be >= 1")

    def keeps(self, t: int) -> bool:
        if t == 0 or t == self.T or self.snapshot_policy == "all":
            return True
        if self.snapshot_policy == "endpoints":
            return False
        return t % self.snapshot_k == 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainTrace:
    config: TrainConfig
    snapshots: list = field(default_factory=list)
    t: list = field(default_factory=list)
    empirical_risk: list = field(default_factory=list)
    clean_acc: list = field(default_factory=list)
    noisy_acc: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    frob_norm: list = field(default_factory=list)
    max_neuron_norm: list = field(default_factory=list)
    # max over neurons with a_j != 0 of ||w_j|| / |a_j|
    max_scaled_neuron_norm: list = field(default_factory=list)
    attachments: dict = field(default_factory=dict)

    @property
    def iterations(self) -> list[int]:
        return [t for t, _ in self.snapshots]

    def params_at(self, t: int) -> NetworkParams:
        for s, p in self.snapshots:
            if s == t:
                return p
        raise KeyError(f"no snapshot at iteration {t}")

    @property
    def initial(self) -> NetworkParams:
        return self.snapshots[0][1]

    @property
    def final(self) -> NetworkParams:
        return self.snapshots[-1][1]

    def scalar_rows(self):
        for k in range(len(self.t)):
            yield (self.t[k], self.empirical_risk[k], self.clean_acc[k], self.noisy_acc[k],
                   self.frob_norm[k], self.max_neuron_norm[k])


def _acc(correct: np.ndarray, mask: np.ndarray) -> float:
    k = int(mask.sum())
    return float(correct[mask].sum()) / k if k else float("nan")


def train(data, m: int, config: TrainConfig, hook: Optional[Hook] = None,
          n: Optional[int] = None) -> TrainTrace:
    """Run ``config.T`` full-batch GD steps from a seeded initialization.

    ``data`` is a :class:`Dataset`, or a :class:`DistributionSpec` together
    with ``n`` (the sample is then drawn from the seed's ``data`` stream).
    ``hook(t, params)`` is called for every ``t = 0..T``.
    """
    if isinstance(data, DistributionSpec):
        if n is None:
            raise ConfigError("n is required when training from a distribution spec")
        dataset = sample_dataset(data, n, stream(config.seed, "data"))
    else:
        dataset = data
    params = init_network(m, dataset.d, config.omega_init, config.subgrad_at_zero,
                          stream(config.seed, "init"))
    X = dataset.points
    y = dataset.labels.astype(np.float64)
    noisy = dataset.noisy
    clean = ~noisy
    live = params.a != 0
    abs_a = np.abs(params.a[live])
    trace = TrainTrace(config=config)
    trace.attachments["n_clean"] = int(clean.sum())
    trace.attachments["n_noisy"] = int(noisy.sum())

    for t in range(config.T + 1):
        pre, f = _forward_pass(params.W, params.a, X)
        margins = y * f
        loss = float(np.mean(logistic_loss(margins)))
        if not math.isfinite(loss) or not np.all(np.isfinite(f)):
            raise DivergenceError(t, "loss")
        correct = margins > 0
        norms = np.sqrt(np.einsum("ij,ij->i", params.W, params.W))
        trace.t.append(t)
        trace.empirical_risk.append(loss)
        trace.clean_acc.append(_acc(correct, clean))
        trace.noisy_acc.append(_acc(correct, noisy))
        trace.train_acc.append(float(correct.mean()))
        trace.frob_norm.append(float(np.sqrt(norms @ norms)))
        trace.max_neuron_norm.append(float(norms.max()))
        trace.max_scaled_neuron_norm.append(float((norms[live] / abs_a).max()) if live.any() else 0.0)
        if hook is not None:
            hook(t, params)
        if config.keeps(t):
            trace.snapshots.append((t, params))
        if t == config.T:
            break
        W = params.W - config.alpha * _gradient_from(pre, f, params, X, y)
        if not np.all(np.isfinite(W)):
            raise DivergenceError(t + 1, "weights")
        params = params.with_weights(W)
    return trace


def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_trace_csv(trace: TrainTrace, path) -> Path:
    path = Path(path)
    lines = ["t,empirical_risk,clean_acc,noisy_acc,frob_norm,max_neuron_norm"]
    for row in trace.scalar_rows():
        lines.append(",".join([str(row[0])] + [_fmt(v) for v in row[1:]]))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_trace_csv(path) -> dict[str, np.ndarray]:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


def write_checkpoints(trace: TrainTrace, directory, provenance: dict | None = None) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for t, p in trace.snapshots:
        prov = dict(provenance or {})
        prov.update(seed=trace.config.seed, iteration=t)
        out.append(save_checkpoint(p, directory / f"W_t{t:06d}", prov))
    return out


def write_manifest(path, config: TrainConfig, spec: DistributionSpec | None = None,
                   **extra) -> Path:
    path = Path(path)
    doc = {"train_config": config.to_dict()}
    if spec is not None:
        doc["distribution"] = spec.to_dict()
    doc.update(extra)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path
