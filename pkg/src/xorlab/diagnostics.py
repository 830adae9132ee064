"""Measurable predicates for the feature-learning analysis.

Every function here is a pure function of weight snapshots, a dataset and
the distribution spec.  Nothing is asserted: callers get reports carrying
the measured quantities and pass/fail flags.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from ._rng import as_generator
from .distribution import CLUSTER_NAMES, Dataset, DistributionSpec, sample_dataset
from .errors import IncompleteTraceError
from .network import NetworkParams, forward_batch, relu_derivative
from .trainer import TrainTrace

log = logging.getLogger(__name__)

DEFAULT_C0 = 4 ** 5 * 1024 ** 2 * math.exp(4)
DEFAULT_GAMMA = math.exp(-2) / (16 * 1024)


@dataclass(frozen=True)
class DiagnosticsConfig:
    C0: float = DEFAULT_C0
    # multiplies 1/sqrt(d) to give the candidate threshold; None means 1/(3*C0)
    correlation_threshold_scale: float | None = None
    # stand-in for 1/C2, the per-neuron activation edge as a fraction of n
    edge_constant: float = 0.05
    C1: float = 2.0
    gamma: float = DEFAULT_GAMMA
    delta: float = 0.01
    tolerance: float = 1e-9

    def __post_init__(self):
        for name in ("C0", "edge_constant", "C1", "gamma", "delta", "tolerance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.correlation_threshold_scale is not None and not self.correlation_threshold_scale > 0:
            raise ValueError("correlation_threshold_scale must be > 0")
        if not self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    @property
    def threshold_scale(self) -> float:
        if self.correlation_threshold_scale is not None:
            return self.correlation_threshold_scale
        return 1.0 / (3.0 * self.C0)

    def threshold(self, d: int) -> float:
        return self.threshold_scale / math.sqrt(d)

    @property
    def C3(self) -> float:
        return 4096 * math.exp(2) / (1 - 1 / self.C0) ** 2

    @property
    def candidate_fraction_bound(self) -> float:
        return (1 - 1 / self.C0) ** 2

    @property
    def correlation_floor(self) -> float:
        """Lower bound on t=1 normalized correlations, ``1/(16 C2)``."""
        return self.edge_constant / 16

    def to_dict(self) -> dict:
        return {
            "C0": self.C0,
            "correlation_threshold_scale": self.threshold_scale,
            "edge_constant": self.edge_constant,
            "C1": self.C1,
            "gamma": self.gamma,
            "delta": self.delta,
            "tolerance": self.tolerance,
        }


# --- correlations and candidate sets ---------------------------------------

def normalized_correlations(params: NetworkParams, mu) -> np.ndarray:
    """Cosine between each neuron and ``mu``; zero-norm neurons get 0."""
    mu = np.asarray(mu, dtype=np.float64)
    if abs(np.linalg.norm(mu) - 1.0) > 1e-9:
        raise ValueError("mu must be a unit vector")
    norms = np.linalg.norm(params.W, axis=1)
    dead = norms == 0
    if dead.any():
        log.warning("%d zero-norm neurons excluded from correlations", int(dead.sum()))
    proj = params.W @ mu
    out = np.zeros(params.m)
    np.divide(proj, norms, out=out, where=~dead)
    return out


@dataclass
class CandidateSets:
    sets: dict
    threshold: float
    m: int

    def __getitem__(self, name: str) -> np.ndarray:
        return self.sets[name]

    @property
    def sizes(self) -> dict:
        return {k: int(v.size) for k, v in self.sets.items()}

    @property
    def union(self) -> np.ndarray:
        return np.unique(np.concatenate([self.sets[k] for k in CLUSTER_NAMES]))

    @property
    def fraction(self) -> float:
        return self.union.size / self.m

    def to_dict(self) -> dict:
        return {k: v.tolist() for k, v in self.sets.items()}


def candidate_sets(params0: NetworkParams, spec: DistributionSpec,
                   cfg: DiagnosticsConfig | None = None) -> CandidateSets:
    """Neurons weakly correlated at initialization with one of the four means.

    ``J[+m1]`` and ``J[-m1]`` hold positive neurons (``a_j > 0``) whose
    normalized correlation with that mean is at least the threshold; the
    ``m2`` sets do the same for negative neurons.  ``params0`` must be the
    initialization snapshot; this cannot be checked.
    """
    cfg = cfg or DiagnosticsConfig()
    thr = cfg.threshold(spec.d)
    nonzero = np.linalg.norm(params0.W, axis=1) > 0
    sets = {}
    for code, mu in enumerate(spec.means):
        sign = params0.positive if code < 2 else params0.negative
        corr = normalized_correlations(params0, mu)
        sets[CLUSTER_NAMES[code]] = np.flatnonzero(sign & nonzero & (corr >= thr))
    return CandidateSets(sets=sets, threshold=thr, m=params0.m)


def median_correlations(params: NetworkParams, spec: DistributionSpec,
                        J: CandidateSets) -> dict:
    """Median, over each candidate set, of the correlation with its own mean."""
    out = {}
    for code, mu in enumerate(spec.means):
        idx = J[CLUSTER_NAMES[code]]
        corr = normalized_correlations(params, mu)[idx]
        out[CLUSTER_NAMES[code]] = float(np.median(corr)) if idx.size else float("nan")
    return out


# --- neuron alignment --------------------------------------------------------

@dataclass
class AlignmentReport:
    fraction: dict
    satisfied: dict
    vacuous: dict
    all_hold: bool


def alignment_check(params: NetworkParams, dataset: Dataset, J: CandidateSets) -> AlignmentReport:
    """Check that every candidate neuron fires on its whole cluster and on none of the opposite one.

    ``satisfied[name]`` is a boolean per neuron of the set.  A clause over an
    empty cluster holds vacuously and is flagged in ``vacuous``.
    """
    fraction, satisfied, vacuous = {}, {}, {}
    for code, name in enumerate(CLUSTER_NAMES):
        idx = J[name]
        own = dataset.cluster_indices(code)
        opp = dataset.cluster_indices(code ^ 1)
        vacuous[name] = own.size == 0 or opp.size == 0
        Wj = params.W[idx]
        on = relu_derivative(dataset.points[own] @ Wj.T, params.subgrad_at_zero)
        off = relu_derivative(dataset.points[opp] @ Wj.T, params.subgrad_at_zero)
        ok = np.all(on == 1.0, axis=0) & np.all(off == 0.0, axis=0)
        satisfied[name] = ok
        fraction[name] = float(ok.mean()) if idx.size else 1.0
    all_hold = all(bool(np.all(v)) for v in satisfied.values())
    return AlignmentReport(fraction=fraction, satisfied=satisfied, vacuous=vacuous, all_hold=all_hold)


# --- almost-orthogonality ----------------------------------------------------

class ProjectionRecorder:
    """Training hook storing each neuron's projections onto ``mu1`` and ``mu2``.

    Projections onto ``-mu1`` and ``-mu2`` are the negatives, so two columns
    per iteration suffice; memory is O(m T).
    """

    def __init__(self, spec: DistributionSpec):
        self.basis = np.stack([spec.mu1, spec.mu2], axis=1)
        self.projections: dict[int, np.ndarray] = {}
        self.a: np.ndarray | None = None

    def __call__(self, t: int, params: NetworkParams) -> None:
        if self.a is None:
            self.a = params.a
        self.projections[t] = params.W @ self.basis

    @classmethod
    def from_trace(cls, trace: TrainTrace, spec: DistributionSpec) -> "ProjectionRecorder":
        rec = cls(spec)
        for t, p in trace.snapshots:
            rec(t, p)
        return rec


@dataclass
class AlmostOrthReport:
    holds: bool
    max_violation_ratio: float
    ratio_by_t: dict
    t0_ratio: float
    tau: int


def almost_orth_check(record: ProjectionRecorder, J: CandidateSets, alpha: float,
                      tau: int | None = None, tolerance: float = 0.0) -> AlmostOrthReport:
    """Check ``|<w_j, mu2>| <= 3 alpha |a_j|`` on the ``mu1`` sets (and symmetrically) for ``1 <= t <= tau``.

    ``record`` must cover every iteration ``0..tau``; ``tau`` defaults to the
    last recorded iteration.  The ratio at ``t = 0`` is reported separately
    and does not enter ``holds``.
    """
    projections = record.projections
    if tau is None:
        tau = max(projections) if projections else 0
    missing = [t for t in range(tau + 1) if t not in projections]
    if missing:
        raise IncompleteTraceError(f"missing iterations {missing[:5]}")
    a = record.a
    mu1_set = np.concatenate([J["+m1"], J["-m1"]])
    mu2_set = np.concatenate([J["+m2"], J["-m2"]])

    def ratio(P):
        r = 0.0
        if mu1_set.size:
            r = max(r, float(np.max(np.abs(P[mu1_set, 1]) / (3 * alpha * np.abs(a[mu1_set])))))
        if mu2_set.size:
            r = max(r, float(np.max(np.abs(P[mu2_set, 0]) / (3 * alpha * np.abs(a[mu2_set])))))
        return r

    ratios = {t: ratio(projections[t]) for t in range(1, tau + 1)}
    worst = max(ratios.values()) if ratios else 0.0
    return AlmostOrthReport(holds=worst <= 1.0 + tolerance, max_violation_ratio=worst,
                            ratio_by_t=ratios, t0_ratio=ratio(projections[0]), tau=tau)


# --- activation edge at initialization ---------------------------------------

@dataclass
class EdgeReport:
    edges: dict
    min_edge_fraction: float
    passes: bool


def edge_counts(params0: NetworkParams, dataset: Dataset, J: CandidateSets,
                cfg: DiagnosticsConfig | None = None) -> EdgeReport:
    """Clean on-cluster minus clean opposite-cluster activations, per candidate neuron.

    For ``j`` in ``J[mu]`` this is ``sum_{clean i in I_mu} relu'(<w_j,x_i>) -
    sum_{clean i in I_-mu} relu'(<w_j,x_i>)``.  ``min_edge_fraction`` is the
    smallest edge divided by ``n``; it passes when it reaches ``edge_constant``.
    """
    cfg = cfg or DiagnosticsConfig()
    edges = {}
    lows = []
    integral = params0.subgrad_at_zero in (0.0, 1.0)
    for code, name in enumerate(CLUSTER_NAMES):
        idx = J[name]
        own = dataset.cluster_indices(code, "clean")
        opp = dataset.cluster_indices(code ^ 1, "clean")
        Wj = params0.W[idx]
        on = relu_derivative(dataset.points[own] @ Wj.T, params0.subgrad_at_zero).sum(axis=0)
        off = relu_derivative(dataset.points[opp] @ Wj.T, params0.subgrad_at_zero).sum(axis=0)
        e = on - off
        edges[name] = e.astype(np.int64) if integral else e
        if idx.size:
            lows.append(float(e.min()))
    low = min(lows) / dataset.n if lows else float("nan")
    return EdgeReport(edges=edges, min_edge_fraction=low,
                      passes=bool(lows) and low >= cfg.edge_constant)


# --- margins and errors ------------------------------------------------------

@dataclass
class MarginReport:
    margins: np.ndarray
    min_clean_margin: float | None
    max_noisy_margin: float | None
    clean_all_positive: bool
    noisy_all_negative: bool
    gamma: float
    gamma_pass: bool


def margin_report(params: NetworkParams, dataset: Dataset, J=None,
                  gamma: float = DEFAULT_GAMMA) -> MarginReport:
    """Per-sample margins ``y_i f(x_i)`` (or of the subnetwork ``J``).

    A zero margin counts as a misclassification on both sides.  The
    ``gamma`` comparison is informational.
    """
    if J is None:
        f = forward_batch(params, dataset.points)
    else:
        mask = np.zeros(params.m, dtype=bool)
        mask[np.asarray(J, dtype=np.int64)] = True
        f = np.maximum(dataset.points @ params.W.T, 0.0) @ np.where(mask, params.a, 0.0)
    margins = dataset.labels * f
    clean = margins[~dataset.noisy]
    noisy = margins[dataset.noisy]
    min_clean = float(clean.min()) if clean.size else None
    max_noisy = float(noisy.max()) if noisy.size else None
    return MarginReport(
        margins=margins,
        min_clean_margin=min_clean,
        max_noisy_margin=max_noisy,
        clean_all_positive=bool(np.all(clean > 0)),
        noisy_all_negative=bool(np.all(noisy < 0)),
        gamma=gamma,
        gamma_pass=min_clean is not None and min_clean >= gamma,
    )


@dataclass(frozen=True)
class ErrorEstimate:
    error: float
    se: float
    n: int


_CHUNK_ELEMENTS = 1 << 22


def _monte_carlo_error(score, spec: DistributionSpec, n_test: int, rng) -> ErrorEstimate:
    if n_test < 1:
        raise ValueError("n_test must be >= 1")
    g = as_generator(rng)
    chunk = max(1, _CHUNK_ELEMENTS // spec.d)
    wrong = 0
    done = 0
    while done < n_test:
        k = min(chunk, n_test - done)
        batch = sample_dataset(spec, k, g)
        wrong += int(np.sum(batch.labels * score(batch.points) <= 0))
        done += k
    p = wrong / n_test
    return ErrorEstimate(error=p, se=math.sqrt(p * (1 - p) / n_test), n=n_test)


def test_error(params: NetworkParams, spec: DistributionSpec, n_test: int, rng) -> ErrorEstimate:
    """Monte Carlo ``P(y != sgn f(x))`` on fresh noisy samples; ``sgn(0)`` is an error."""
    return _monte_carlo_error(lambda X: forward_batch(params, X), spec, n_test, rng)


test_error.__test__ = False  # keep pytest from collecting this name


def reference_score(spec: DistributionSpec, X) -> np.ndarray:
    """``|<mu1, x>| - |<mu2, x>|`` for each row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    return np.abs(X @ spec.mu1) - np.abs(X @ spec.mu2)


def reference_error(spec: DistributionSpec, n_test: int, rng) -> ErrorEstimate:
    """Monte Carlo error of ``sgn(|<mu1,x>| - |<mu2,x>|)`` against noisy labels."""
    return _monte_carlo_error(lambda X: reference_score(spec, X), spec, n_test, rng)


def reference_network(spec: DistributionSpec, subgrad_at_zero: float = 0.0) -> NetworkParams:
    """Four-neuron network whose output is half the reference score."""
    return NetworkParams(W=np.stack([spec.mu1, -spec.mu1, spec.mu2, -spec.mu2]),
                         a=np.array([0.5, 0.5, -0.5, -0.5]), subgrad_at_zero=subgrad_at_zero)


# --- feature maps -------------------------------------------------------------

def feature_displacement(params0: NetworkParams, paramsT: NetworkParams, dataset: Dataset) -> np.ndarray:
    """Per-sample ``||relu(W_T x) - relu(W_0 x)|| / ||relu(W_0 x)||``; ``inf`` when the denominator is 0."""
    if params0.W.shape != paramsT.W.shape:
        raise ValueError("snapshots must share (m, d)")
    X = dataset.points
    h0 = np.maximum(X @ params0.W.T, 0.0)
    hT = np.maximum(X @ paramsT.W.T, 0.0)
    num = np.linalg.norm(hT - h0, axis=1)
    den = np.linalg.norm(h0, axis=1)
    out = np.full(dataset.n, np.inf)
    np.divide(num, den, out=out, where=den > 0)
    zero = den == 0
    if zero.any():
        log.info("%d samples with an all-zero initial feature map", int(zero.sum()))
    return out


# --- generalization bound ------------------------------------------------------

def ramp_loss(z, gamma: float):
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    return np.minimum(1.0, np.maximum(0.0, 1.0 - np.asarray(z, dtype=np.float64) / gamma))


def ramp_risk(params: NetworkParams, dataset: Dataset, gamma: float) -> float:
    margins = dataset.labels * forward_batch(params, dataset.points)
    return float(np.mean(ramp_loss(margins, gamma)))


def generalization_bound(gamma: float, n: int, delta: float, empirical_ramp_risk: float,
                         alpha: float | None = None) -> float:
    """Ramp risk plus ``4/(gamma sqrt n)`` plus ``sqrt(2 log(4/delta) / n)``.

    ``alpha`` is accepted for call-site symmetry with the training config;
    the bound itself does not depend on the step size.
    """
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return empirical_ramp_risk + 4.0 / (gamma * math.sqrt(n)) + math.sqrt(2.0 * math.log(4.0 / delta) / n)


# --- weight growth ------------------------------------------------------------

@dataclass
class NormGrowthReport:
    holds: bool
    neuron_ratio: dict
    frob_ratio: dict


def norm_growth_check(trace: TrainTrace, alpha: float) -> NormGrowthReport:
    """``||w_j^t|| <= 2|a_j| alpha t`` and ``||W^t||_F <= 2 alpha t`` for every recorded ``t >= 1``.

    Ratios measured/bound are reported; neurons with ``a_j = 0`` are skipped.
    """
    neuron, frob = {}, {}
    for k, t in enumerate(trace.t):
        if t < 1:
            continue
        bound = 2 * alpha * t
        neuron[t] = trace.max_scaled_neuron_norm[k] / bound
        frob[t] = trace.frob_norm[k] / bound
    holds = all(r <= 1.0 for r in neuron.values()) and all(r <= 1.0 for r in frob.values())
    return NormGrowthReport(holds=holds, neuron_ratio=neuron, frob_ratio=frob)


# --- full per-iteration report --------------------------------------------------

def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


@dataclass
class DiagnosticsReport:
    t: int
    candidate: CandidateSets
    alignment: AlignmentReport
    almost_orth: AlmostOrthReport
    correlations: dict
    edges: EdgeReport
    margins: MarginReport
    test: ErrorEstimate | None
    feature_displacement: np.ndarray
    ramp_risk: float
    generalization_bound_value: float
    extras: dict = field(default_factory=dict)

    @property
    def clean_all_correct(self) -> bool:
        return self.margins.clean_all_positive

    @property
    def noisy_all_incorrect(self) -> bool:
        return self.margins.noisy_all_negative

    def to_json_obj(self) -> dict:
        fd = self.feature_displacement
        obj = {
            "t": self.t,
            "J_sizes": self.candidate.sizes,
            "J_fraction": self.candidate.fraction,
            "alignment_fraction": self.alignment.fraction,
            "alignment_all_hold": self.alignment.all_hold,
            "almost_orth": {"holds": self.almost_orth.holds,
                            "max_violation_ratio": self.almost_orth.max_violation_ratio,
                            "t0_ratio": self.almost_orth.t0_ratio},
            "median_correlation": self.correlations,
            "min_edge_fraction": self.edges.min_edge_fraction,
            "min_clean_margin": self.margins.min_clean_margin,
            "max_noisy_margin": self.margins.max_noisy_margin,
            "clean_all_correct": self.clean_all_correct,
            "noisy_all_incorrect": self.noisy_all_incorrect,
            "gamma_margin_pass": self.margins.gamma_pass,
            "test_error": self.test.error if self.test else None,
            "test_error_se": self.test.se if self.test else None,
            "feature_displacement_min": float(fd.min()) if fd.size else None,
            "ramp_risk": self.ramp_risk,
            "gen_bound": self.generalization_bound_value,
        }
        obj.update(self.extras)
        return _clean(obj)


def evaluate(t: int, params: NetworkParams, params0: NetworkParams, dataset: Dataset,
             spec: DistributionSpec, alpha: float, recorder: ProjectionRecorder,
             cfg: DiagnosticsConfig | None = None, n_test: int = 0, test_rng=None,
             J: CandidateSets | None = None) -> DiagnosticsReport:
    """Evaluate every diagnostic at iteration ``t``.

    ``recorder`` must hold projections for ``0..t``.  With ``n_test > 0`` a
    Monte Carlo test error is drawn from ``test_rng``.
    """
    cfg = cfg or DiagnosticsConfig()
    J = J if J is not None else candidate_sets(params0, spec, cfg)
    rr = ramp_risk(params, dataset, cfg.gamma)
    return DiagnosticsReport(
        t=t,
        candidate=J,
        alignment=alignment_check(params, dataset, J),
        almost_orth=almost_orth_check(recorder, J, alpha, tau=t, tolerance=cfg.tolerance),
        correlations=median_correlations(params, spec, J),
        edges=edge_counts(params0, dataset, J, cfg),
        margins=margin_report(params, dataset, gamma=cfg.gamma),
        test=test_error(params, spec, n_test, test_rng) if n_test > 0 else None,
        feature_displacement=feature_displacement(params0, params, dataset),
        ramp_risk=rr,
        generalization_bound_value=generalization_bound(cfg.gamma, dataset.n, cfg.delta, rr),
    )
