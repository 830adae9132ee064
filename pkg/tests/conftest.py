import functools
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from xorlab.distribution import Dataset, make_spec, sample_dataset

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def small_dataset(d=4, n=24, sigma=0.3, eta=0.2, seed=0):
    spec = make_spec(d, sigma, eta)
    return spec, sample_dataset(spec, n, np.random.default_rng(seed))


def dataset_from(points, cluster, noisy):
    """Build a Dataset from raw arrays, deriving labels from the XOR rule."""
    cluster = np.asarray(cluster)
    clean = np.where(cluster < 2, 1, -1)
    noisy = np.asarray(noisy, dtype=bool)
    return Dataset(points=points, clean_labels=clean, labels=np.where(noisy, -clean, clean),
                   cluster=cluster, noisy=noisy)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


THEOREM = dict(d=500, n=2000, m=128, eta=0.05, alpha=0.1)


@functools.lru_cache(maxsize=16)
def theorem_run(seed: int, omega_scale: float = 1e-5):
    """Train the early-stopped high-dimensional configuration; cached per (seed, scale).

    ``omega_scale`` multiplies ``1/sqrt(m d)`` to give the init standard deviation.
    """
    from xorlab._rng import stream
    from xorlab.diagnostics import ProjectionRecorder
    from xorlab.trainer import TrainConfig, theorem_schedule, train

    d, n, m = THEOREM["d"], THEOREM["n"], THEOREM["m"]
    spec = make_spec(d, math.sqrt(1 / (16 * d)), THEOREM["eta"])
    ds = sample_dataset(spec, n, stream(seed, "data"))
    rec = ProjectionRecorder(spec)
    cfg = TrainConfig(alpha=THEOREM["alpha"], T=theorem_schedule(THEOREM["alpha"]),
                      omega_init=omega_scale / math.sqrt(m * d), snapshot_policy="all", seed=seed)
    trace = train(ds, m, cfg, hook=rec)
    return spec, ds, trace, rec


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[k])
