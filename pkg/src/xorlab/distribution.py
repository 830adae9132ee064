"""Noisy 2-XOR cluster data.

Four Gaussian clusters sit at ``+mu1, -mu1, +mu2, -mu2``.  Points from the
``mu1`` clusters carry clean label +1 and points from the ``mu2`` clusters
carry clean label -1; each observed label is then flipped independently with
probability ``eta``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import as_generator, split
from .errors import InvalidDimensionError, InvalidNoiseError, ShapeError

# Cluster codes.  ``code ^ 1`` is the opposing cluster of the same class.
PLUS_MU1, MINUS_MU1, PLUS_MU2, MINUS_MU2 = 0, 1, 2, 3
CLUSTER_NAMES = ("+m1", "-m1", "+m2", "-m2")
CLUSTER_LABELS = np.array([1, 1, -1, -1], dtype=np.int64)

NOISE_MODES = ("uniform_flip", "none")
MEAN_MODES = ("canonical", "random_orthonormal")

_UNIT_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DistributionSpec:
    d: int
    mu1: np.ndarray
    mu2: np.ndarray
    sigma: float
    eta: float
    noise_mode: str = "uniform_flip"
    cluster_family: str = "gaussian"

    def __post_init__(self):
        if self.d < 2:
            raise InvalidDimensionError(f"d must be >= 2, got {self.d}")
        if not (0.0 <= self.eta < 0.5):
            raise InvalidNoiseError(f"eta must lie in [0, 1/2), got {self.eta}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"unknown noise_mode {self.noise_mode!r}")
        if self.cluster_family != "gaussian":
            raise ValueError(f"unsupported cluster_family {self.cluster_family!r}")
        object.__setattr__(self, "mu1", _frozen(self.mu1))
        object.__setattr__(self, "mu2", _frozen(self.mu2))
        for name in ("mu1", "mu2"):
            mu = getattr(self, name)
            if mu.shape != (self.d,):
                raise ShapeError(f"{name} must have shape ({self.d},), got {mu.shape}")
            if abs(np.linalg.norm(mu) - 1.0) > _UNIT_TOL:
                raise ValueError(f"{name} must be a unit vector")
        if abs(float(self.mu1 @ self.mu2)) > _UNIT_TOL:
            raise ValueError("mu1 and mu2 must be orthogonal")

    @property
    def means(self) -> np.ndarray:
        """(4, d) array of cluster means in code order."""
        return np.stack([self.mu1, -self.mu1, self.mu2, -self.mu2])

    @property
    def effective_eta(self) -> float:
        return self.eta if self.noise_mode == "uniform_flip" else 0.0

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "mu1": self.mu1.tolist(),
            "mu2": self.mu2.tolist(),
            "sigma": self.sigma,
            "eta": self.eta,
            "noise_mode": self.noise_mode,
            "cluster_family": self.cluster_family,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DistributionSpec":
        return cls(**obj)


def make_spec(d: int, sigma: float, eta: float, mean_mode: str = "canonical",
              rng=None, noise_mode: str | None = None) -> DistributionSpec:
    """Build a distribution spec.

    ``canonical`` puts the means on the first two coordinate axes;
    ``random_orthonormal`` Gram-Schmidts two Gaussian vectors drawn from
    ``rng``.  ``noise_mode`` defaults to ``none`` when ``eta == 0``.
    """
    if d < 2:
        raise InvalidDimensionError(f"d must be >= 2, got {d}")
    if not (0.0 <= eta < 0.5):
        raise InvalidNoiseError(f"eta must lie in [0, 1/2), got {eta}")
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if mean_mode == "canonical":
        mu1 = np.zeros(d)
        mu2 = np.zeros(d)
        mu1[0] = 1.0
        mu2[1] = 1.0
    elif mean_mode == "random_orthonormal":
        g = as_generator(rng)
        u, v = g.standard_normal((2, d))
        mu1 = u / np.linalg.norm(u)
        v = v - (v @ mu1) * mu1
        # second pass removes the residual left by floating point
        v = v - (v @ mu1) * mu1
        mu2 = v / np.linalg.norm(v)
    else:
        raise ValueError(f"unknown mean_mode {mean_mode!r}")
    if noise_mode is None:
        noise_mode = "uniform_flip" if eta > 0 else "none"
    return DistributionSpec(d=d, mu1=mu1, mu2=mu2, sigma=float(sigma), eta=float(eta),
                            noise_mode=noise_mode)


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray
    clean_labels: np.ndarray
    labels: np.ndarray
    cluster: np.ndarray
    noisy: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 2:
            raise ShapeError("points must be an (n, d) array")
        n = pts.shape[0]
        arrays = {}
        for name, dtype in (("clean_labels", np.int64), ("labels", np.int64),
                            ("cluster", np.int64), ("noisy", bool)):
            a = np.array(getattr(self, name), dtype=dtype)
            if a.shape != (n,):
                raise ShapeError(f"{name} must have shape ({n},), got {a.shape}")
            a.setflags(write=False)
            arrays[name] = a
        object.__setattr__(self, "points", pts)
        for name, a in arrays.items():
            object.__setattr__(self, name, a)
        if not np.all(np.isin(arrays["cluster"], (0, 1, 2, 3))):
            raise ValueError("cluster codes must be in {0,1,2,3}")
        if not np.array_equal(arrays["clean_labels"], CLUSTER_LABELS[arrays["cluster"]]):
            raise ValueError("clean labels must follow the XOR rule of the clusters")
        expected = np.where(arrays["noisy"], -arrays["clean_labels"], arrays["clean_labels"])
        if not np.array_equal(arrays["labels"], expected):
            raise ValueError("labels must equal clean labels exactly off the noisy set")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def noisy_set(self) -> np.ndarray:
        return np.flatnonzero(self.noisy)

    @property
    def clean_set(self) -> np.ndarray:
        return np.flatnonzero(~self.noisy)

    @property
    def cluster_of(self) -> list[str]:
        return [CLUSTER_NAMES[c] for c in self.cluster]

    def cluster_indices(self, code: int, part: str = "all") -> np.ndarray:
        """Indices of cluster ``code``; ``part`` is ``all``, ``clean`` or ``noisy``."""
        mask = self.cluster == code
        if part == "clean":
            mask &= ~self.noisy
        elif part == "noisy":
            mask &= self.noisy
        elif part != "all":
            raise ValueError(f"unknown part {part!r}")
        return np.flatnonzero(mask)


def sample_dataset(spec: DistributionSpec, n: int, rng) -> Dataset:
    """Draw ``n`` i.i.d. samples.

    The cluster choices and within-cluster offsets come from one child stream
    of ``rng`` and the label flips from a second, so changing ``eta`` leaves the
    point cloud untouched.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    point_rng, flip_rng = split(rng, 2)
    cluster = point_rng.integers(0, 4, size=n)
    z = point_rng.standard_normal((n, spec.d))
    points = spec.means[cluster] + spec.sigma * z
    clean = CLUSTER_LABELS[cluster]
    u = flip_rng.random(n)
    noisy = u < spec.effective_eta
    labels = np.where(noisy, -clean, clean)
    return Dataset(points=points, clean_labels=clean, labels=labels, cluster=cluster, noisy=noisy)


@dataclass(frozen=True)
class SampleThresholds:
    C1: float = 2.0
    delta: float = 0.01


@dataclass
class ClusterStats:
    name: str
    count: int
    fraction: float
    min_mean_projection: float | None
    max_orth_projection: float | None
    max_sq_deviation: float | None

    @property
    def empty(self) -> bool:
        return self.count == 0


@dataclass
class SamplePropertyReport:
    clusters: list[ClusterStats]
    noisy_fraction: float
    thresholds: SampleThresholds
    bounds: dict
    passes: dict
    empty_clusters: list[str]

    @property
    def all_pass(self) -> bool:
        return all(self.passes.values())


def check_sample_properties(dataset: Dataset, spec: DistributionSpec,
                            thresholds: SampleThresholds | None = None) -> SamplePropertyReport:
    """Measure the concentration properties a well-behaved sample should have.

    For each cluster mean ``mu`` this reports the smallest projection onto
    ``mu``, the largest absolute projection onto the opposing-class mean, and
    the largest squared distance to ``mu``; globally it reports the noisy
    fraction and per-cluster occupancy, each checked against its bound with
    constant ``C1``.
    """
    if dataset.n == 0:
        raise ValueError("dataset is empty")
    th = thresholds or SampleThresholds()
    n = dataset.n
    spread = th.C1 * spec.sigma * math.sqrt(spec.d)
    rate = th.C1 * math.sqrt(math.log(1.0 / th.delta) / n)
    bounds = {
        "min_mean_projection": 1.0 - spread,
        "max_orth_projection": spread,
        "max_sq_deviation": th.C1 * spec.sigma ** 2 * spec.d,
        "noisy_fraction": spec.effective_eta + rate,
        "cluster_fraction": (0.25 - rate, 0.25 + rate),
    }
    means = spec.means
    stats = []
    for code, name in enumerate(CLUSTER_NAMES):
        idx = dataset.cluster_indices(code)
        if idx.size == 0:
            stats.append(ClusterStats(name, 0, 0.0, None, None, None))
            continue
        mu = means[code]
        orth = spec.mu2 if code < 2 else spec.mu1
        x = dataset.points[idx]
        diff = x - mu
        stats.append(ClusterStats(
            name=name,
            count=int(idx.size),
            fraction=idx.size / n,
            min_mean_projection=float(np.min(x @ mu)),
            max_orth_projection=float(np.max(np.abs(x @ orth))),
            max_sq_deviation=float(np.max(np.einsum("ij,ij->i", diff, diff))),
        ))
    present = [s for s in stats if not s.empty]
    lo, hi = bounds["cluster_fraction"]
    noisy_fraction = float(dataset.noisy.sum()) / n
    passes = {
        "mean_projection": all(s.min_mean_projection >= bounds["min_mean_projection"] for s in present),
        "orth_projection": all(s.max_orth_projection <= bounds["max_orth_projection"] for s in present),
        "sq_deviation": all(s.max_sq_deviation <= bounds["max_sq_deviation"] for s in present),
        "noisy_fraction": noisy_fraction <= bounds["noisy_fraction"],
        "cluster_fraction": all(lo <= s.fraction <= hi for s in stats),
    }
    return SamplePropertyReport(
        clusters=stats,
        noisy_fraction=noisy_fraction,
        thresholds=th,
        bounds=bounds,
        passes=passes,
        empty_clusters=[s.name for s in stats if s.empty],
    )


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_dataset_csv(dataset: Dataset, path) -> Path:
    path = Path(path)
    header = [f"x_{k}" for k in range(dataset.d)] + ["clean_label", "label", "cluster", "is_noisy"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(dataset.n):
            row = [_fmt(v) for v in dataset.points[i]]
            row += [int(dataset.clean_labels[i]), int(dataset.labels[i]),
                    CLUSTER_NAMES[dataset.cluster[i]], int(dataset.noisy[i])]
            w.writerow(row)
    return path


def read_dataset_csv(path) -> Dataset:
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        d = len(header) - 4
        if header[:d] != [f"x_{k}" for k in range(d)] or header[d:] != [
                "clean_label", "label", "cluster", "is_noisy"]:
            raise ValueError("unrecognised dataset CSV header")
        rows = list(r)
    code = {name: k for k, name in enumerate(CLUSTER_NAMES)}
    points = np.array([[float(v) for v in row[:d]] for row in rows], dtype=np.float64).reshape(len(rows), d)
    return Dataset(
        points=points,
        clean_labels=[int(row[d]) for row in rows],
        labels=[int(row[d + 1]) for row in rows],
        cluster=[code[row[d + 2]] for row in rows],
        noisy=[row[d + 3] == "1" for row in rows],
    )
