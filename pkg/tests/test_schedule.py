import numpy as np
import pytest

from bootdiff.errors import ConfigError
from bootdiff.rng import substream
from bootdiff.schedule import DiffusionSchedule, default_schedule


def test_sigma_is_time_identity():
    s = DiffusionSchedule(0.01, 2.0)
    t = np.array([0.01, 0.5, 2.0])
    assert np.array_equal(s.sigma(t), t)
    assert np.array_equal(s.g2(t), 2 * t)


def test_log_grid_endpoints_and_monotone():
    s = DiffusionSchedule(0.01, 2.0, Q=50)
    g = s.t_grid
    assert g.shape == (50,)
    assert np.isclose(g[0], 0.01) and np.isclose(g[-1], 2.0)
    assert np.all(np.diff(g) > 0)


def test_karras_grid_monotone_with_power_law_spacing():
    s = DiffusionSchedule(0.01, 2.0, Q=50, rule="karras")
    g = s.t_grid
    assert np.isclose(g[0], 0.01) and np.isclose(g[-1], 2.0)
    assert np.all(np.diff(g) > 0)
    # the rho=7 ladder is linear in sigma^(1/7)
    roots = g ** (1 / 7.0)
    assert np.allclose(np.diff(roots), roots[1] - roots[0])


def test_step_ladder_descending():
    s = DiffusionSchedule(0.01, 2.0, Q=20)
    lad = s.step_ladder(10)
    assert lad.shape == (11,)
    assert np.isclose(lad[0], 2.0) and np.isclose(lad[-1], 0.01)
    assert np.all(np.diff(lad) < 0)


def test_sample_sigma_within_range_and_log_uniform():
    s = DiffusionSchedule(0.01, 2.0)
    x = s.sample_sigma(substream(0, 1), 50_000)
    assert x.min() >= 0.01 and x.max() <= 2.0
    u = (np.log(x) - np.log(0.01)) / (np.log(2.0) - np.log(0.01))
    assert abs(u.mean() - 0.5) < 0.01


def test_sigma_bins_cover_range():
    s = DiffusionSchedule(0.01, 2.0)
    edges = s.sigma_bins(10)
    assert edges.shape == (11,)
    assert np.isclose(edges[0], 0.01) and np.isclose(edges[-1], 2.0)


def test_scaled():
    s = DiffusionSchedule(0.01, 2.0, Q=30)
    half = s.scaled(0.5)
    assert np.isclose(half.sigma_min, 0.005)
    assert np.isclose(half.sigma_max, 1.0)
    assert half.Q == 30 and half.rule == s.rule


def test_json_round_trip():
    s = DiffusionSchedule(0.01, 2.0, Q=17, rule="karras")
    clone = DiffusionSchedule.from_json(s.to_json())
    assert clone == s


def test_validation():
    with pytest.raises(ConfigError):
        DiffusionSchedule(0.0, 1.0)
    with pytest.raises(ConfigError):
        DiffusionSchedule(1.0, 0.5)
    with pytest.raises(ConfigError):
        DiffusionSchedule(0.01, 1.0, rule="spline")


def test_default_schedule_scales():
    s = default_schedule(U=2.0, data_std=0.25)
    assert np.isclose(s.sigma_min, 0.004)
    assert np.isclose(s.sigma_max, 20.0)
