import numpy as np
import pytest

from bootdiff.neural import kernels
from bootdiff.neural.kernels import (adam_step, clamp_bwd, clamp_fwd,
                                     relu_bwd, relu_fwd, silu_bwd, silu_fwd)
from bootdiff.rng import substream


def test_backend_is_declared():
    assert kernels.BACKEND in ("numpy", "cython")
    assert kernels.numpy_impl.BACKEND == "numpy"


def test_silu_forward_values():
    z = np.array([[-2.0, 0.0, 3.0]])
    got = silu_fwd(z)
    want = z / (1 + np.exp(-z))
    assert np.allclose(got, want, atol=1e-15)


def test_silu_backward_matches_finite_differences():
    rng = substream(0, 1)
    z = rng.standard_normal((4, 7)) * 3
    da = rng.standard_normal((4, 7))
    h = 1e-6
    fd = (silu_fwd(z + h) - silu_fwd(z - h)) / (2 * h)
    assert np.allclose(silu_bwd(z, da), da * fd, atol=1e-8)


def test_relu_forward_and_backward():
    z = np.array([[-1.0, 0.0, 2.0]])
    assert np.array_equal(relu_fwd(z), [[0.0, 0.0, 2.0]])
    da = np.ones_like(z)
    assert np.array_equal(relu_bwd(z, da), [[0.0, 0.0, 1.0]])


def test_clamp_forward_and_gradient_mask():
    y = np.array([[-3.0, 0.2, 3.0]])
    assert np.array_equal(clamp_fwd(y, 1.0), [[-1.0, 0.2, 1.0]])
    dy = np.ones_like(y)
    assert np.array_equal(clamp_bwd(y, 1.0, dy), [[0.0, 1.0, 0.0]])


def test_adam_step_matches_reference():
    rng = substream(0, 2)
    p = rng.standard_normal(10)
    g = rng.standard_normal(10)
    m = np.zeros(10)
    v = np.zeros(10)
    p2, m2, v2 = p.copy(), m.copy(), v.copy()
    adam_step(p, g, m, v, 1, 1e-3, 0.9, 0.999, 1e-8)
    # textbook update written out longhand
    m2 = 0.9 * m2 + 0.1 * g
    v2 = 0.999 * v2 + 0.001 * g * g
    mh = m2 / (1 - 0.9)
    vh = v2 / (1 - 0.999)
    p2 -= 1e-3 * mh / (np.sqrt(vh) + 1e-8)
    assert np.allclose(p, p2, atol=1e-14)
    assert np.allclose(m, m2, atol=1e-14) and np.allclose(v, v2, atol=1e-14)


@pytest.mark.skipif(kernels.compiled_impl is None,
                    reason="compiled extension not built")
def test_compiled_backend_agrees_with_numpy():
    rng = substream(0, 3)
    cy = kernels.compiled_impl
    py = kernels.numpy_impl
    z = np.ascontiguousarray(rng.standard_normal((16, 33)) * 4)
    da = np.ascontiguousarray(rng.standard_normal((16, 33)))
    assert np.allclose(cy.silu_fwd(z), py.silu_fwd(z), atol=1e-14)
    assert np.allclose(cy.silu_bwd(z, da), py.silu_bwd(z, da), atol=1e-14)
    assert np.array_equal(cy.relu_fwd(z), py.relu_fwd(z))
    assert np.array_equal(cy.relu_bwd(z, da), py.relu_bwd(z, da))
    assert np.array_equal(cy.clamp_fwd(z, 1.5), py.clamp_fwd(z, 1.5))
    assert np.array_equal(cy.clamp_bwd(z, 1.5, da), py.clamp_bwd(z, 1.5, da))

    p_c = np.ascontiguousarray(rng.standard_normal(50))
    g = np.ascontiguousarray(rng.standard_normal(50))
    p_p = p_c.copy()
    m_c, v_c = np.zeros(50), np.zeros(50)
    m_p, v_p = np.zeros(50), np.zeros(50)
    for t in range(1, 6):
        cy.adam_step(p_c, g, m_c, v_c, t, 1e-2, 0.9, 0.999, 1e-8)
        py.adam_step(p_p, g, m_p, v_p, t, 1e-2, 0.9, 0.999, 1e-8)
    assert np.allclose(p_c, p_p, atol=1e-13)
    assert np.allclose(m_c, m_p, atol=1e-13)
    assert np.allclose(v_c, v_p, atol=1e-13)


def test_noncontiguous_inputs_accepted():
    z = np.asfortranarray(np.arange(12.0).reshape(3, 4) - 6)
    assert np.allclose(silu_fwd(z), z / (1 + np.exp(-z)))
    assert np.array_equal(clamp_fwd(z, 2.0), np.clip(z, -2, 2))
