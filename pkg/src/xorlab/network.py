"""Two-layer ReLU network with a frozen second layer.

``f(x; W) = sum_j a_j * relu(<w_j, x>)`` where half of the ``a_j`` equal
``+1/sqrt(m)`` and half ``-1/sqrt(m)`` (for odd ``m`` the last one is 0).
Only ``W`` is ever trained.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._rng import as_generator
from .errors import InvalidInitError, ShapeError


def second_layer(m: int) -> np.ndarray:
    """Frozen output weights: first half ``+1/sqrt(m)``, then ``-1/sqrt(m)``."""
    half = m // 2
    a = np.zeros(m)
    a[:half] = 1.0 / np.sqrt(m)
    a[half:2 * half] = -1.0 / np.sqrt(m)
    return a


@dataclass(frozen=True)
class NetworkParams:
    W: np.ndarray
    a: np.ndarray
    subgrad_at_zero: float = 0.0

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64)
        a = np.array(self.a, dtype=np.float64)
        if W.ndim != 2:
            raise ShapeError(f"W must be 2-D, got shape {W.shape}")
        if a.shape != (W.shape[0],):
            raise ShapeError(f"a must have shape ({W.shape[0]},), got {a.shape}")
        if not 0.0 <= self.subgrad_at_zero <= 1.0:
            raise ValueError("subgrad_at_zero must lie in [0, 1]")
        W.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "a", a)

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def positive(self) -> np.ndarray:
        return self.a > 0

    @property
    def negative(self) -> np.ndarray:
        return self.a < 0

    def with_weights(self, W: np.ndarray) -> "NetworkParams":
        """Copy with new first-layer weights; ``a`` is shared, never changed."""
        return NetworkParams(W=W, a=self.a, subgrad_at_zero=self.subgrad_at_zero)


def init_network(m: int, d: int, omega_init: float, subgrad_at_zero: float = 0.0,
                 rng=None) -> NetworkParams:
    if m < 1 or d < 1:
        raise ShapeError(f"m and d must be positive, got m={m}, d={d}")
    if not omega_init > 0:
        raise InvalidInitError(f"omega_init must be > 0, got {omega_init}")
    g = as_generator(rng)
    W = omega_init * g.standard_normal((m, d))
    return NetworkParams(W=W, a=second_layer(m), subgrad_at_zero=subgrad_at_zero)


def _vector(params: NetworkParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.d,):
        raise ShapeError(f"expected input of shape ({params.d},), got {x.shape}")
    return x


def _batch(params: NetworkParams, points) -> np.ndarray:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.d:
        raise ShapeError(f"expected points of shape (n, {params.d}), got {X.shape}")
    return X


def hidden_features(params: NetworkParams, x) -> np.ndarray:
    return np.maximum(params.W @ _vector(params, x), 0.0)


def forward(params: NetworkParams, x) -> float:
    return float(hidden_features(params, x) @ params.a)


def forward_batch(params: NetworkParams, points) -> np.ndarray:
    X = _batch(params, points)
    return np.maximum(X @ params.W.T, 0.0) @ params.a


def subnetwork_forward(params: NetworkParams, J, x) -> float:
    """Output of the subnetwork made of neurons ``J`` only."""
    idx = np.asarray(J, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= params.m):
        raise IndexError(f"neuron index out of range [0, {params.m})")
    mask = np.zeros(params.m, dtype=bool)
    mask[idx] = True
    h = hidden_features(params, x)
    return float(np.where(mask, h, 0.0) @ params.a)


def relu_derivative(pre: np.ndarray, subgrad_at_zero: float) -> np.ndarray:
    """Elementwise ReLU derivative with ``subgrad_at_zero`` used at exactly 0."""
    out = (pre > 0).astype(np.float64)
    if subgrad_at_zero:
        out[pre == 0] = subgrad_at_zero
    return out


def activation_pattern(params: NetworkParams, x) -> np.ndarray:
    return relu_derivative(params.W @ _vector(params, x), params.subgrad_at_zero)


def activation_pattern_batch(params: NetworkParams, points) -> np.ndarray:
    """(n, m) matrix of ReLU derivatives at every (sample, neuron) pair."""
    return relu_derivative(_batch(params, points) @ params.W.T, params.subgrad_at_zero)


# Checkpoints: a JSON header next to a CSV body holding W in row-major order.

def save_checkpoint(params: NetworkParams, path, provenance: dict | None = None) -> Path:
    """Write ``<path>.json`` (header) and ``<path>.csv`` (weights); return the header path."""
    base = Path(path)
    if base.suffix in (".json", ".csv"):
        base = base.with_suffix("")
    header = {
        "format": "xorlab-checkpoint-1",
        "m": params.m,
        "d": params.d,
        "subgrad_at_zero": params.subgrad_at_zero,
        "a_layout": "half_plus_then_minus",
        "a_scale": 1.0 / float(np.sqrt(params.m)),
        "provenance": provenance or {},
        "body": base.name + ".csv",
    }
    body = base.with_suffix(".csv")
    with body.open("w") as fh:
        for row in params.W:
            fh.write(",".join(format(float(v), ".17g") for v in row))
            fh.write("\n")
    head = base.with_suffix(".json")
    head.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return head


def load_checkpoint(path) -> NetworkParams:
    base = Path(path)
    if base.suffix in (".json", ".csv"):
        base = base.with_suffix("")
    header = json.loads(base.with_suffix(".json").read_text())
    if header.get("a_layout") != "half_plus_then_minus":
        raise ValueError(f"unsupported second-layer layout {header.get('a_layout')!r}")
    m, d = int(header["m"]), int(header["d"])
    body = base.parent / header.get("body", base.name + ".csv")
    W = np.loadtxt(body, delimiter=",", dtype=np.float64, ndmin=2)
    if W.shape != (m, d):
        raise ShapeError(f"checkpoint body has shape {W.shape}, header says ({m}, {d})")
    return NetworkParams(W=W, a=second_layer(m), subgrad_at_zero=float(header["subgrad_at_zero"]))
