"""Train/validation accuracy curves and their aggregation across seeds."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..distribution import Dataset
from ..errors import GridAlignmentError
from ..network import NetworkParams, forward_batch
from ..trainer import TrainTrace


def accuracy(params: NetworkParams, dataset: Dataset) -> float:
    """Fraction of points with ``sgn(f(x)) = y``; ``f = 0`` counts as an error."""
    return float(np.mean(dataset.labels * forward_batch(params, dataset.points) > 0))


@dataclass
class AccuracyCurve:
    t: list = field(default_factory=list)
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)

    @property
    def peak_val(self) -> float:
        return max(self.val)

    @property
    def final_val(self) -> float:
        return self.val[-1]


class AccuracyRecorder:
    """Training hook that records train and validation accuracy every ``every`` steps.

    The last iteration ``T`` is always recorded.
    """

    def __init__(self, train: Dataset, val: Dataset, every: int, T: int):
        if every < 1:
            raise ValueError("every must be >= 1")
        self.train_set, self.val_set = train, val
        self.every, self.T = every, T
        self.curve = AccuracyCurve()

    def __call__(self, t: int, params: NetworkParams):
        if t % self.every and t != self.T:
            return
        self.curve.t.append(t)
        self.curve.train.append(accuracy(params, self.train_set))
        self.curve.val.append(accuracy(params, self.val_set))


def curve_from_trace(trace: TrainTrace, val: Dataset) -> AccuracyCurve:
    """Curve at the trace's snapshot iterations (train accuracy from the trace itself)."""
    c = AccuracyCurve()
    for t, p in trace.snapshots:
        c.t.append(t)
        c.train.append(trace.train_acc[trace.t.index(t)])
        c.val.append(accuracy(p, val))
    return c


@dataclass
class CurveTable:
    t: np.ndarray
    train_mean: np.ndarray
    train_sd: np.ndarray
    val_mean: np.ndarray
    val_sd: np.ndarray
    n_seeds: int

    def write_csv(self, path) -> Path:
        path = Path(path)
        lines = ["t,train_mean,train_sd,val_mean,val_sd"]
        for k in range(len(self.t)):
            lines.append(f"{int(self.t[k])},{self.train_mean[k]:.17g},{self.train_sd[k]:.17g},"
                         f"{self.val_mean[k]:.17g},{self.val_sd[k]:.17g}")
        path.write_text("\n".join(lines) + "\n")
        return path


def accuracy_curves(curves, val_datasets=None) -> CurveTable:
    """Aggregate per-seed curves into mean and standard deviation per iteration.

    ``curves`` holds :class:`AccuracyCurve` objects, or :class:`TrainTrace`
    objects paired with ``val_datasets``.  All seeds must share one iteration
    grid.  The standard deviation uses ``ddof=1`` and is 0 for a single seed.
    """
    curves = list(curves)
    if not curves:
        raise ValueError("no curves to aggregate")
    if isinstance(curves[0], TrainTrace):
        if val_datasets is None or len(val_datasets) != len(curves):
            raise ValueError("one validation dataset per trace is required")
        curves = [curve_from_trace(tr, v) for tr, v in zip(curves, val_datasets)]
    grid = list(curves[0].t)
    for c in curves[1:]:
        if list(c.t) != grid:
            raise GridAlignmentError("seeds were evaluated on different iteration grids")
    train = np.array([c.train for c in curves], dtype=float)
    val = np.array([c.val for c in curves], dtype=float)
    k = len(curves)

    def sd(a):
        return a.std(axis=0, ddof=1) if k > 1 else np.zeros(a.shape[1])

    return CurveTable(t=np.array(grid), train_mean=train.mean(axis=0), train_sd=sd(train),
                      val_mean=val.mean(axis=0), val_sd=sd(val), n_seeds=k)


def read_curves_csv(path) -> dict[str, np.ndarray]:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}
