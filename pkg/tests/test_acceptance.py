"""End-to-end verification suite.

Each test wraps one check from `bootdiff.acceptance`; the tolerances live in
the check functions and are re-asserted here from the returned details so a
weakened check cannot pass silently. The three training experiments take
minutes each; deselect them with `-m "not slow"` for a quick pass.
"""

import pytest

from bootdiff import acceptance


def test_01_gradients_match_finite_differences():
    ok, details = acceptance.check_gradients()
    assert ok, details
    assert details["worst_rel_err"] < 1e-4


def test_02_posterior_mean_matches_quadrature():
    ok, details = acceptance.check_oracle_fidelity()
    assert ok, details
    assert details["worst_rel_err"] < 1e-6


def test_03_bound_arithmetic_and_monotonicity():
    ok, details = acceptance.check_bound_arithmetic()
    assert ok, details
    assert all(details.values()), details


def test_04_mmse_decomposition_identity():
    ok, details = acceptance.check_identity()
    assert ok, details
    assert details["failed_specs"] == []


def test_05_kl_estimator_worked_value():
    ok, details = acceptance.check_kl()
    assert ok, details
    assert details["rel_err"] < 0.05
    assert not details["grid_warning"]


def test_06_loss_decomposes_for_trained_denoiser():
    ok, details = acceptance.check_loss_decomposition()
    assert ok, details
    assert abs(details["cross"]) <= 3 * details["cross_stderr"] + 1e-12


@pytest.mark.slow
def test_07_bootstrap_beats_small_data_baseline():
    ok, details = acceptance.check_data_efficiency()
    assert ok, details
    assert details["median_gain"] >= 0.20


@pytest.mark.slow
def test_08_residual_difficulty_tracks_correlation_strength():
    ok, details = acceptance.check_difficulty_scaling()
    assert ok, details
    assert details["monotone"]
    assert details["energy_ratio"] <= 0.05


@pytest.mark.slow
def test_09_variance_regularization_monotone_and_capped():
    ok, details = acceptance.check_regularization()
    assert ok, details
    assert details["monotone"]
    assert details["cap_total"] <= details["cap"] * 1.001


def test_10_manifest_rerun_reproduces_hashes(tmp_path):
    ok, details = acceptance.check_reproducibility(tmp_path)
    assert ok, details
    assert details["hashes_equal"]
