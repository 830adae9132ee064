import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from xorlab._rng import split, stream
from xorlab.distribution import (CLUSTER_NAMES, Dataset, SampleThresholds, check_sample_properties,
                                 make_spec, read_dataset_csv, sample_dataset, write_dataset_csv)
from xorlab.errors import InvalidDimensionError, InvalidNoiseError

from conftest import dataset_from


def test_canonical_means_fig1_setup():
    spec = make_spec(2, math.sqrt(1 / 50), 0.15)
    assert spec.mu1.tolist() == [1.0, 0.0]
    assert spec.mu2.tolist() == [0.0, 1.0]
    assert spec.sigma ** 2 == pytest.approx(1 / 50, rel=1e-15)


def test_zero_variance_samples_are_the_means():
    spec = make_spec(3, 0.0, 0.0)
    ds = sample_dataset(spec, 8, np.random.default_rng(1))
    np.testing.assert_array_equal(ds.points, spec.means[ds.cluster])


def test_random_orthonormal_means():
    spec = make_spec(50, 0.1, 0.1, "random_orthonormal", np.random.default_rng(7))
    # recompute with plain python sums rather than BLAS
    ip = math.fsum(a * b for a, b in zip(spec.mu1.tolist(), spec.mu2.tolist()))
    n1 = math.sqrt(math.fsum(a * a for a in spec.mu1.tolist()))
    n2 = math.sqrt(math.fsum(a * a for a in spec.mu2.tolist()))
    assert abs(ip) <= 1e-12
    assert abs(n1 - 1) <= 1e-12 and abs(n2 - 1) <= 1e-12


@given(d=st.integers(2, 300), seed=st.integers(0, 2 ** 32 - 1))
def test_random_means_always_orthonormal(d, seed):
    spec = make_spec(d, 0.1, 0.1, "random_orthonormal", np.random.default_rng(seed))
    assert abs(spec.mu1 @ spec.mu2) <= 1e-12
    assert abs(np.linalg.norm(spec.mu1) - 1) <= 1e-12


@pytest.mark.parametrize("d", [0, 1])
def test_rejects_small_dimension(d):
    with pytest.raises(InvalidDimensionError):
        make_spec(d, 0.1, 0.1)


@pytest.mark.parametrize("eta", [-0.01, 0.5, 0.7])
def test_rejects_bad_noise(eta):
    with pytest.raises(InvalidNoiseError):
        make_spec(4, 0.1, eta)


def test_spec_rejects_nonorthogonal_means():
    from xorlab.distribution import DistributionSpec
    with pytest.raises(ValueError):
        DistributionSpec(d=2, mu1=[1, 0], mu2=[np.sqrt(.5), np.sqrt(.5)], sigma=0.1, eta=0.1)
    with pytest.raises(ValueError):
        DistributionSpec(d=2, mu1=[1, 0], mu2=[0, 1.001], sigma=0.1, eta=0.1)


def test_zero_noise_has_empty_noisy_set():
    ds = sample_dataset(make_spec(5, 0.2, 0.0), 100, np.random.default_rng(3))
    assert ds.noisy_set.size == 0
    np.testing.assert_array_equal(ds.labels, ds.clean_labels)


def test_noisy_fraction_fig1_seeded():
    spec = make_spec(2, math.sqrt(1 / 50), 0.15)
    ds = sample_dataset(spec, 5000, np.random.default_rng(2024))
    # re-run the seeded flip stream on its own
    _, flip = split(np.random.default_rng(2024), 2)
    expected = int(np.sum(flip.random(5000) < 0.15))
    assert ds.noisy_set.size == expected
    assert 0.13 <= expected / 5000 <= 0.17


def test_eta_change_keeps_point_cloud():
    a = sample_dataset(make_spec(6, 0.3, 0.0), 200, stream(5, "data"))
    b = sample_dataset(make_spec(6, 0.3, 0.3), 200, stream(5, "data"))
    np.testing.assert_array_equal(a.points, b.points)
    np.testing.assert_array_equal(a.cluster, b.cluster)
    assert b.noisy.any()


def test_sampling_is_deterministic():
    spec = make_spec(7, 0.4, 0.2)
    a = sample_dataset(spec, 300, stream(9, "data"))
    b = sample_dataset(spec, 300, stream(9, "data"))
    assert a.points.tobytes() == b.points.tobytes()
    np.testing.assert_array_equal(a.labels, b.labels)


def test_sample_rejects_empty():
    with pytest.raises(ValueError):
        sample_dataset(make_spec(3, 0.1, 0.1), 0, 0)


@given(seed=st.integers(0, 10 ** 6), n=st.integers(1, 200), eta=st.floats(0, 0.49))
def test_label_noise_bookkeeping(seed, n, eta):
    ds = sample_dataset(make_spec(3, 0.5, eta), n, np.random.default_rng(seed))
    prod = ds.labels * ds.clean_labels
    np.testing.assert_array_equal(prod == -1, ds.noisy)
    assert set(ds.noisy_set) | set(ds.clean_set) == set(range(n))
    assert not set(ds.noisy_set) & set(ds.clean_set)
    np.testing.assert_array_equal(ds.clean_labels == 1, ds.cluster < 2)


def test_dataset_rejects_broken_invariants():
    pts = np.zeros((2, 2))
    with pytest.raises(ValueError):
        Dataset(points=pts, clean_labels=[1, 1], labels=[1, 1], cluster=[0, 2], noisy=[False, False])
    with pytest.raises(ValueError):
        Dataset(points=pts, clean_labels=[1, -1], labels=[-1, -1], cluster=[0, 2], noisy=[False, False])


def test_cluster_mean_converges():
    spec = make_spec(4, 0.5, 0.1)
    pts = []
    for seed in range(40):
        ds = sample_dataset(spec, 400, np.random.default_rng(seed))
        pts.append(ds.points[ds.cluster == 0])
    x = np.concatenate(pts)
    tol = 5 * spec.sigma / math.sqrt(len(x))
    assert np.all(np.abs(x.mean(axis=0) - spec.mu1) <= tol)


def _brute_stats(ds, spec):
    out = {}
    for code, name in enumerate(CLUSTER_NAMES):
        mu = spec.means[code]
        orth = spec.mu2 if code < 2 else spec.mu1
        rows = [i for i in range(ds.n) if ds.cluster[i] == code]
        if not rows:
            out[name] = None
            continue
        proj = [sum(ds.points[i][k] * mu[k] for k in range(ds.d)) for i in rows]
        oproj = [abs(sum(ds.points[i][k] * orth[k] for k in range(ds.d))) for i in rows]
        dev = [sum((ds.points[i][k] - mu[k]) ** 2 for k in range(ds.d)) for i in rows]
        out[name] = (min(proj), max(oproj), max(dev), len(rows))
    return out


def test_sample_properties_zero_variance():
    spec = make_spec(3, 0.0, 0.0)
    rep = check_sample_properties(sample_dataset(spec, 400, np.random.default_rng(0)), spec)
    for c in rep.clusters:
        assert c.min_mean_projection == 1.0
        assert c.max_orth_projection == 0.0
        assert c.max_sq_deviation == 0.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_sample_properties_match_brute_force(seed):
    d = 40
    spec = make_spec(d, math.sqrt(1 / (16 * d)), 0.1, "random_orthonormal", np.random.default_rng(seed))
    ds = sample_dataset(spec, 300, np.random.default_rng(seed + 10))
    rep = check_sample_properties(ds, spec)
    brute = _brute_stats(ds, spec)
    for c in rep.clusters:
        mn, mx, dev, cnt = brute[c.name]
        assert c.count == cnt
        assert c.min_mean_projection == pytest.approx(mn, abs=1e-12)
        assert c.max_orth_projection == pytest.approx(mx, abs=1e-12)
        assert c.max_sq_deviation == pytest.approx(dev, abs=1e-12)
    assert rep.noisy_fraction == sum(ds.noisy) / ds.n


def test_theorem_regime_max_deviation_is_brute_force():
    d = 400
    spec = make_spec(d, math.sqrt(1 / (16 * d)), 0.05)
    ds = sample_dataset(spec, 2000, np.random.default_rng(4))
    rep = check_sample_properties(ds, spec)
    for code, c in enumerate(rep.clusters):
        rows = ds.points[ds.cluster == code] - spec.means[code]
        assert c.max_sq_deviation == pytest.approx(max(float(r @ r) for r in rows), abs=1e-12)
    assert rep.all_pass


def test_empty_cluster_is_flagged():
    spec = make_spec(2, 0.0, 0.0)
    ds = dataset_from(np.array([[1.0, 0], [-1.0, 0], [0, 1.0]]), [0, 1, 2], [False] * 3)
    rep = check_sample_properties(ds, spec)
    assert rep.empty_clusters == ["-m2"]
    absent = rep.clusters[3]
    assert absent.min_mean_projection is None and absent.max_sq_deviation is None
    assert absent.count == 0


def test_cluster_occupancy_frequency():
    spec = make_spec(3, 0.3, 0.1)
    ok = 0
    for seed in range(100):
        rep = check_sample_properties(sample_dataset(spec, 4000, np.random.default_rng(seed)), spec,
                                      SampleThresholds(C1=2.0, delta=0.01))
        ok += rep.passes["cluster_fraction"]
    assert ok >= 95


def test_csv_round_trip_is_lossless(tmp_path):
    spec = make_spec(3, 0.37, 0.3)
    ds = sample_dataset(spec, 50, np.random.default_rng(8))
    path = write_dataset_csv(ds, tmp_path / "ds.csv")
    header = path.read_text().splitlines()[0]
    assert header == "x_0,x_1,x_2,clean_label,label,cluster,is_noisy"
    back = read_dataset_csv(path)
    assert back.points.tobytes() == ds.points.tobytes()
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.cluster, ds.cluster)
    np.testing.assert_array_equal(back.noisy, ds.noisy)


def test_spec_dict_round_trip():
    spec = make_spec(5, 0.2, 0.1, "random_orthonormal", np.random.default_rng(2))
    back = type(spec).from_dict(spec.to_dict())
    np.testing.assert_array_equal(back.mu1, spec.mu1)
    assert back.eta == spec.eta and back.sigma == spec.sigma
