import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bootdiff.errors import ConfigError, NumericError, ShapeError
from bootdiff.linops import (GridShape, ViewOperator, make_downsample_operator,
                             make_general_operator, make_patch_operator,
                             make_patch_tiling, solve_least_squares)


@pytest.fixture
def grid():
    return GridShape(8, 8)


def test_grid_shape_m_and_index():
    g = GridShape(4, 6, 2)
    assert g.m == 48
    assert g.flat_index(0, 0, 0) == 0
    assert g.flat_index(1, 2, 1) == (1 * 6 + 2) * 2 + 1


def test_grid_shape_rejects_nonpositive():
    with pytest.raises(ConfigError):
        GridShape(0, 4)


def test_patch_selects_correct_pixels(grid):
    op = make_patch_operator(grid, 2, 4, 2, 2)
    x = np.arange(grid.m, dtype=float)
    v = op.apply_A(x)
    expect = [grid.flat_index(r, c) for r in (2, 3) for c in (4, 5)]
    assert np.array_equal(v, x[expect])


def test_patch_a_compose_b_is_identity(grid):
    op = make_patch_operator(grid, 1, 1, 3, 3)
    v = np.random.default_rng(0).standard_normal(op.m_i)
    assert np.allclose(op.apply_A(op.apply_B(v)), v)


def test_downsample_mean_pool(grid):
    op = make_downsample_operator(grid, 2)
    x = np.arange(grid.m, dtype=float)
    v = op.apply_A(x)
    assert v.shape == (16,)
    # first pooled cell covers rows 0-1, cols 0-1
    cell = [grid.flat_index(r, c) for r in (0, 1) for c in (0, 1)]
    assert np.isclose(v[0], x[cell].mean())


def test_downsample_a_compose_b_is_identity(grid):
    op = make_downsample_operator(grid, 4)
    v = np.random.default_rng(1).standard_normal(op.m_i)
    assert np.allclose(op.apply_A(op.apply_B(v)), v)


def test_noise_gain_values(grid):
    assert make_patch_operator(grid, 0, 0, 2, 2).noise_gain == 1.0
    assert np.isclose(make_downsample_operator(grid, 2).noise_gain, 0.5)


def test_tiling_partition_of_identity(grid):
    ops = make_patch_tiling(grid, 4, 4)
    assert len(ops) == 4
    total = sum(op.dense_B() @ op.dense_A() for op in ops)
    assert np.allclose(total, np.eye(grid.m))


def test_tiling_requires_divisibility(grid):
    with pytest.raises(ConfigError):
        make_patch_tiling(grid, 3, 3)


def test_batch_apply_matches_dense(grid):
    rng = np.random.default_rng(2)
    for op in (make_patch_operator(grid, 2, 2, 4, 4),
               make_downsample_operator(grid, 2)):
        X = rng.standard_normal((5, grid.m))
        assert np.allclose(op.apply_A(X), X @ op.dense_A().T)
        V = rng.standard_normal((5, op.m_i))
        assert np.allclose(op.apply_B(V), V @ op.dense_B().T)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 6), st.integers(0, 6), st.data())
def test_apply_a_is_linear(r, c, data):
    grid = GridShape(8, 8)
    op = make_patch_operator(grid, r, c, 2, 2)
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    x, y = rng.standard_normal((2, grid.m))
    a = data.draw(st.floats(-3, 3, allow_nan=False))
    assert np.allclose(op.apply_A(a * x + y),
                       a * op.apply_A(x) + op.apply_A(y), atol=1e-10)


def test_general_operator_round_trip():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((3, 7))
    B = rng.standard_normal((7, 3))
    op = make_general_operator(A, B, op_id="gen0")
    clone = ViewOperator.from_json(op.to_json())
    x = rng.standard_normal(7)
    assert np.array_equal(clone.apply_A(x), op.apply_A(x))
    assert np.array_equal(clone.apply_B(op.apply_A(x)),
                          op.apply_B(op.apply_A(x)))


def test_patch_json_round_trip(grid):
    op = make_patch_operator(grid, 2, 4, 2, 2)
    clone = ViewOperator.from_json(op.to_json())
    x = np.random.default_rng(4).standard_normal(grid.m)
    assert np.array_equal(clone.apply_A(x), op.apply_A(x))
    assert clone.id == op.id


def test_shape_errors(grid):
    op = make_patch_operator(grid, 0, 0, 2, 2)
    with pytest.raises(ShapeError):
        op.apply_A(np.zeros(grid.m + 1))
    with pytest.raises(ShapeError):
        op.apply_B(np.zeros(op.m_i + 1))


def test_solve_least_squares_matches_lstsq():
    rng = np.random.default_rng(5)
    M = rng.standard_normal((40, 6))
    y = rng.standard_normal(40)
    w = solve_least_squares(M, y)
    ref, *_ = np.linalg.lstsq(M, y, rcond=None)
    assert np.allclose(w, ref, atol=1e-8)


def test_solve_least_squares_singular_raises():
    M = np.zeros((10, 3))
    with pytest.raises(NumericError):
        solve_least_squares(M, np.ones(10))


def test_solve_least_squares_ridge_handles_collinear():
    rng = np.random.default_rng(6)
    col = rng.standard_normal((20, 1))
    M = np.hstack([col, col])
    w = solve_least_squares(M, col[:, 0], ridge=1e-6)
    assert np.isclose(w.sum(), 1.0, atol=1e-3)
