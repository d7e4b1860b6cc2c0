import csv
import math

import numpy as np
import pytest

from bayesklms.datagen import (
    BoundaryStreamConfig,
    GpStreamConfig,
    RandomWalkConfig,
    TuningStreamConfig,
    boundary_center,
    boundary_labels,
    boundary_stream,
    gp_covariance,
    gp_sample_at,
    gp_stream,
    random_walk_stream,
    random_walk_weights,
    tuning_mean,
    tuning_rate,
    tuning_stream,
)


@pytest.mark.parametrize("make", [
    lambda s: gp_stream(GpStreamConfig(n=50, seed=s)),
    lambda s: tuning_stream(TuningStreamConfig(n=50, seed=s)),
    lambda s: boundary_stream(BoundaryStreamConfig(n=50, seed=s)),
    lambda s: random_walk_stream(RandomWalkConfig(n=50, sigma_q2=1e-3, seed=s)),
])
def test_streams_are_deterministic(make):
    a, b, c = make(5), make(5), make(6)
    for f in ("X", "y", "truth"):
        assert getattr(a, f).tobytes() == getattr(b, f).tobytes()
    assert a.y.tobytes() != c.y.tobytes() or a.X.tobytes() != c.X.tobytes()


def test_gp_single_point_is_standard_normal_plus_noise():
    draws = [gp_stream(GpStreamConfig(n=1, seed=s)) for s in range(4000)]
    f = np.array([d.truth[0] for d in draws])
    noise = np.array([d.y[0] - d.truth[0] for d in draws])
    assert f.var() == pytest.approx(1.0, abs=4 * math.sqrt(2 / 4000))
    assert noise.var() == pytest.approx(0.1, abs=4 * 0.1 * math.sqrt(2 / 4000))


def test_gp_covariance_closed_form():
    assert gp_covariance(3, 0.1, 3, 0.3) == pytest.approx(0.6065306597126334, rel=1e-14)


def test_gp_inputs_in_unit_interval():
    s = gp_stream(GpStreamConfig(n=300, seed=1))
    assert s.X.min() >= 0 and s.X.max() <= 1


def test_gp_monte_carlo_covariance():
    t = np.array([0, 0, 1, 3, 5, 8, 12, 12, 20, 30], dtype=float)
    x = np.array([0.1, 0.3, 0.5, 0.2, 0.9, 0.4, 0.6, 0.65, 0.0, 1.0])
    N = 5000
    F = gp_sample_at(t, x, np.random.default_rng(2024), size=N)
    emp = F @ F.T / N
    K = gp_covariance(t[:, None], x[:, None], t[None, :], x[None, :])
    se = np.sqrt((np.outer(np.diag(K), np.diag(K)) + K**2) / N)
    assert np.all(np.abs(emp - K) <= 3 * se)


def test_tuning_rate_extremes():
    cfg = TuningStreamConfig()
    mu = tuning_mean(cfg, 400)
    assert tuning_rate(cfg, mu, mu) == pytest.approx(49.40244910553017, rel=1e-12)
    assert tuning_rate(cfg, mu + 180, mu) == pytest.approx(0.016572675401761255, rel=1e-12)


def test_tuning_zero_gain_constant():
    s = tuning_stream(TuningStreamConfig(n=200, gain=0.0, seed=3))
    np.testing.assert_allclose(s.truth, math.exp(-0.1), rtol=1e-15)


def test_tuning_drift_and_truth():
    cfg = TuningStreamConfig(n=1000, seed=4)
    s = tuning_stream(cfg)
    assert tuning_mean(cfg, 0) == 0.0
    assert tuning_mean(cfg, 1000) == pytest.approx(100.0)
    t = np.arange(1000)
    mu = t / 1000 * 100
    expected = np.exp(4 * np.cos(np.radians(s.X[:, 0] - mu)) - 0.1)
    np.testing.assert_allclose(s.truth, expected, rtol=1e-12)
    assert np.all(s.X >= 0) and np.all(s.X < 360)
    assert np.all(s.y == np.floor(s.y)) and np.all(s.y >= 0)


def test_boundary_labels_at_and_away_from_center():
    cfg = BoundaryStreamConfig(n=100)
    c = boundary_center(cfg, 37)
    assert boundary_labels(cfg, c, c) == 1.0
    assert boundary_labels(cfg, c + np.array([2.0, 0.0]), c) == 0.0


def test_boundary_center_path():
    cfg = BoundaryStreamConfig(n=101)
    np.testing.assert_allclose(boundary_center(cfg, 0), [-1, -1])
    np.testing.assert_allclose(boundary_center(cfg, 50), [0, 0], atol=1e-15)
    np.testing.assert_allclose(boundary_center(cfg, 100), [1, 1])


def test_boundary_positive_fraction():
    n = 200_000
    s = boundary_stream(BoundaryStreamConfig(n=n, seed=8))
    p = math.pi * 0.25 / 16
    assert s.y.mean() == pytest.approx(p, abs=4 * math.sqrt(p * (1 - p) / n))
    np.testing.assert_array_equal(s.y, s.truth)


def test_random_walk_zero_drift_is_pure_noise():
    s = random_walk_stream(RandomWalkConfig(n=200, sigma_q2=0.0, seed=1))
    assert np.all(s.truth == 0.0)
    np.testing.assert_allclose(np.linalg.norm(s.X, axis=1), 1.0, rtol=1e-14)


def test_random_walk_variance_grows_linearly():
    cfg = RandomWalkConfig(dim=4, sigma_q2=0.02, n=30)
    norms = np.array([
        np.sum(random_walk_weights(cfg, np.random.default_rng(s)) ** 2, axis=1)
        for s in range(10_000)
    ])
    mean = norms.mean(axis=0)
    se = norms.std(axis=0, ddof=1) / 100
    t = np.arange(30)
    assert mean[0] == 0.0
    assert np.all(np.abs(mean[1:] - t[1:] * 0.02) <= 4 * se[1:])


def test_stream_csv_export(tmp_path):
    s = boundary_stream(BoundaryStreamConfig(n=5, seed=2))
    path = tmp_path / "s.csv"
    s.to_csv(path)
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    rows = list(csv.reader(raw.decode().splitlines()))
    assert rows[0] == ["t", "x_0", "x_1", "y", "truth"]
    assert len(rows) == 6
    assert float(rows[3][1]) == s.X[2, 0]


@pytest.mark.parametrize("cfg", [
    lambda: GpStreamConfig(n=0),
    lambda: BoundaryStreamConfig(radius=0),
    lambda: RandomWalkConfig(sigma_q2=-1),
    lambda: RandomWalkConfig(sigma_n2=0),
])
def test_bad_configs(cfg):
    with pytest.raises(ValueError):
        cfg()
