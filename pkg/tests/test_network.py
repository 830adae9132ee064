import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from hypothesis.extra.numpy import arrays

from xorlab.errors import InvalidInitError, ShapeError
from xorlab.network import (NetworkParams, activation_pattern, activation_pattern_batch, forward,
                            forward_batch, hidden_features, init_network, load_checkpoint,
                            save_checkpoint, second_layer, subnetwork_forward)

# magnitudes below 1e-100 underflow when squared inside norms
finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False).filter(lambda v: v == 0 or abs(v) > 1e-100)


def params_strategy(max_m=8, max_d=6):
    return st.tuples(st.integers(1, max_m), st.integers(1, max_d)).flatmap(
        lambda md: st.tuples(arrays(np.float64, md, elements=finite),
                             arrays(np.float64, (md[1],), elements=finite)))


def _net(W):
    return NetworkParams(W=W, a=second_layer(W.shape[0]))


@pytest.mark.parametrize("m", [1, 2, 3, 7, 8, 500])
def test_second_layer_layout(m):
    a = second_layer(m)
    s = 1 / math.sqrt(m)
    assert np.sum(a == s) == m // 2
    assert np.sum(a == -s) == m // 2
    if m % 2:
        assert a[-1] == 0.0
    assert np.all(a[: m // 2] > 0)


def test_width_two_layer():
    p = init_network(2, 3, 0.1, rng=0)
    np.testing.assert_array_equal(p.a, [1 / math.sqrt(2), -1 / math.sqrt(2)])


def test_fig1_init_shapes():
    p = init_network(500, 2, math.sqrt(1 / (32 * 500)), rng=np.random.default_rng(0))
    assert p.W.shape == (500, 2)
    assert p.W.std() == pytest.approx(math.sqrt(1 / (32 * 500)), rel=0.1)


@pytest.mark.parametrize("omega", [0.0, -1e-3])
def test_init_rejects_nonpositive_scale(omega):
    with pytest.raises(InvalidInitError):
        init_network(4, 3, omega)


def test_init_norm_band_frequency():
    m, d, w = 64, 100, 1e-4
    fails = 0
    for seed in range(100):
        p = init_network(m, d, w, rng=np.random.default_rng(seed))
        norms = np.linalg.norm(p.W, axis=1)
        fails += not np.all((norms >= 0.5 * w * math.sqrt(d)) & (norms <= 1.5 * w * math.sqrt(d)))
    assert fails <= 1


def test_init_deterministic():
    a = init_network(16, 5, 0.3, rng=np.random.default_rng(3))
    b = init_network(16, 5, 0.3, rng=np.random.default_rng(3))
    assert a.W.tobytes() == b.W.tobytes()


def test_second_layer_is_frozen():
    p = init_network(4, 2, 0.1, rng=0)
    with pytest.raises(ValueError):
        p.a[0] = 3.0
    with pytest.raises(ValueError):
        p.W[0, 0] = 3.0


def test_forward_zero_weights():
    p = _net(np.zeros((5, 3)))
    assert forward(p, [1.0, -2.0, 3.0]) == 0.0
    np.testing.assert_array_equal(forward_batch(p, np.ones((4, 3))), np.zeros(4))
    np.testing.assert_array_equal(hidden_features(p, [1.0, 2.0, 3.0]), np.zeros(5))


def test_forward_hand_example():
    p = _net(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert forward(p, [2.0, 3.0]) == pytest.approx(2 / math.sqrt(2) - 3 / math.sqrt(2), abs=1e-15)
    assert forward(p, [2.0, 3.0]) == pytest.approx(-0.70711, abs=1e-5)


def test_hidden_features_hand_example():
    p = _net(np.array([[1.0, 0.0], [0.0, 1.0]]))
    np.testing.assert_array_equal(hidden_features(p, [-1.0, 2.0]), [0.0, 2.0])


def test_shape_errors():
    p = _net(np.ones((3, 2)))
    with pytest.raises(ShapeError):
        forward(p, [1.0, 2.0, 3.0])
    with pytest.raises(ShapeError):
        forward_batch(p, np.ones((4, 3)))
    with pytest.raises(ShapeError):
        activation_pattern(p, [1.0])
    with pytest.raises(ShapeError):
        NetworkParams(W=np.ones((3, 2)), a=np.ones(2))


@given(params_strategy(), st.floats(1e-3, 1e3))
def test_positive_homogeneity(wx, c):
    W, x = wx
    p = _net(W)
    f = forward(p, x)
    # tolerance scaled by the un-cancelled sum, since the +/- halves may cancel
    tol = 1e-12 * c * float(np.abs(p.a) @ hidden_features(p, x))
    assert forward(p.with_weights(c * W), x) == pytest.approx(c * f, abs=tol)
    assert forward(p, c * x) == pytest.approx(c * f, abs=tol)


@given(params_strategy())
def test_output_and_feature_bounds(wx):
    W, x = wx
    p = _net(W)
    bound = np.linalg.norm(W) * np.linalg.norm(x)
    assert abs(forward(p, x)) <= bound * (1 + 1e-12) + 1e-300
    assert np.linalg.norm(hidden_features(p, x)) <= bound * (1 + 1e-12) + 1e-300


def test_forward_batch_matches_rows(rng):
    p = init_network(37, 11, 0.7, rng=rng)
    X = rng.standard_normal((100, 11))
    rows = np.array([forward(p, x) for x in X])
    assert np.max(np.abs(forward_batch(p, X) - rows)) < 1e-12
    assert forward_batch(p, X[:1])[0] == pytest.approx(forward(p, X[0]), abs=1e-12)


def test_subnetwork_full_and_empty(rng):
    p = init_network(9, 4, 1.0, rng=rng)
    x = rng.standard_normal(4)
    assert subnetwork_forward(p, range(9), x) == pytest.approx(forward(p, x), abs=1e-12)
    assert subnetwork_forward(p, [], x) == 0.0


@given(params_strategy(), st.data())
def test_subnetwork_additivity(wx, data):
    W, x = wx
    p = _net(W)
    m = W.shape[0]
    J = data.draw(st.sets(st.integers(0, m - 1)))
    Jc = [j for j in range(m) if j not in J]
    total = subnetwork_forward(p, sorted(J), x) + subnetwork_forward(p, Jc, x)
    assert total == pytest.approx(forward(p, x), abs=1e-12 * (1 + np.abs(W).sum() * np.abs(x).sum()))


def test_subnetwork_index_error():
    p = _net(np.ones((3, 2)))
    with pytest.raises(IndexError):
        subnetwork_forward(p, [0, 3], [1.0, 1.0])
    with pytest.raises(IndexError):
        subnetwork_forward(p, [-1], [1.0, 1.0])


def test_activation_pattern_at_zero():
    np.testing.assert_array_equal(activation_pattern(_net(np.zeros((4, 2))), [1.0, 1.0]), np.zeros(4))
    p = NetworkParams(W=np.zeros((4, 2)), a=second_layer(4), subgrad_at_zero=0.5)
    np.testing.assert_array_equal(activation_pattern(p, [1.0, 1.0]), np.full(4, 0.5))


def test_activation_pattern_values():
    p = NetworkParams(W=np.array([[1.0, 0], [-1.0, 0], [0, 1.0]]), a=second_layer(3), subgrad_at_zero=0.3)
    np.testing.assert_array_equal(activation_pattern(p, [2.0, 0.0]), [1.0, 0.0, 0.3])


def test_activation_pattern_generic_never_hits_kink():
    g = np.random.default_rng(5)
    for _ in range(1000):
        p = NetworkParams(W=g.standard_normal((6, 3)), a=second_layer(6), subgrad_at_zero=0.5)
        assert not np.any(activation_pattern(p, g.standard_normal(3)) == 0.5)


def test_activation_pattern_batch_matches_rows(rng):
    p = init_network(5, 3, 1.0, subgrad_at_zero=0.25, rng=rng)
    X = rng.standard_normal((20, 3))
    np.testing.assert_array_equal(activation_pattern_batch(p, X),
                                  np.array([activation_pattern(p, x) for x in X]))


@pytest.mark.parametrize("m", [4, 5])
def test_checkpoint_round_trip(tmp_path, rng, m):
    p = init_network(m, 3, 0.123, subgrad_at_zero=0.25, rng=rng)
    head = save_checkpoint(p, tmp_path / "ck", {"seed": 7})
    back = load_checkpoint(head)
    assert back.W.tobytes() == p.W.tobytes()
    np.testing.assert_array_equal(back.a, p.a)
    assert back.subgrad_at_zero == 0.25
    X = rng.standard_normal((10, 3))
    assert np.max(np.abs(forward_batch(back, X) - forward_batch(p, X))) <= 1e-12
    assert '"seed": 7' in head.read_text()


def test_checkpoint_rejects_bad_body(tmp_path, rng):
    p = init_network(4, 3, 0.1, rng=rng)
    head = save_checkpoint(p, tmp_path / "ck")
    (tmp_path / "ck.csv").write_text("1,2,3\n")
    with pytest.raises(ShapeError):
        load_checkpoint(head)
