import math

import numpy as np
import pytest

from bubblelator.kernels import (QuadratureError, find_bracketed_root,
                                 integrate_semiinfinite,
                                 power_segment_weights,
                                 power_trapezoid_weights, rk_step)


@pytest.mark.parametrize("tol", [1e-8, 1e-10, 1e-12])
@pytest.mark.parametrize("f,envelope,wavelength,exact", [
    (lambda z: np.exp(-z), lambda z: np.exp(-z), None, 1.0),
    (lambda z: np.exp(-z * z / 2), lambda z: np.exp(-z * z / 2), None,
     math.sqrt(math.pi / 2)),
    (lambda z: np.exp(-(1 + 10j) * z), lambda z: np.exp(-z), 2 * math.pi / 10,
     1.0 / (1.0 + 10.0j)),
])
def test_quadrature_closed_forms(tol, f, envelope, wavelength, exact):
    res = integrate_semiinfinite(f, envelope, tol=tol, wavelength=wavelength)
    assert abs(res.value - exact) <= 2 * tol * abs(exact)
    assert res.error <= 2 * tol * abs(res.value) + 1e-15


def test_quadrature_rejects_nondecaying_envelope():
    with pytest.raises(QuadratureError):
        integrate_semiinfinite(lambda z: np.ones_like(z),
                               lambda z: np.ones_like(z), tol=1e-8)


def test_quadrature_zero_integrand():
    res = integrate_semiinfinite(lambda z: np.zeros_like(z),
                                 lambda z: np.zeros_like(z))
    assert res.value == 0.0


def test_root_cosine():
    root = find_bracketed_root(math.cos, 1.0, 2.0, tol=1e-14)
    assert abs(root - math.pi / 2) < 1e-13


def test_root_characteristic_phase():
    # phase of the beta=0, nu=2 characteristic function crosses -pi/2 at
    # t = 1/sqrt(3) (closed form: G = 2/(1+it)^3)
    from bubblelator.spectral import evaluate_G

    def phase(t):
        g = evaluate_G(0.0, 2.0, 1j * t).value
        return math.atan2(g.imag, g.real) + math.pi / 2

    root = find_bracketed_root(phase, 0.5, 0.7, tol=1e-13)
    assert abs(root - 3 ** -0.5) < 1e-11


def test_root_invalid_bracket():
    with pytest.raises(ValueError):
        find_bracketed_root(lambda x: x * x + 1.0, -1.0, 1.0)


def test_root_bracket_shrinks_monotonically():
    widths = []
    find_bracketed_root(math.cos, 1.0, 2.0, tol=1e-12,
                        on_step=lambda a, b: widths.append(b - a))
    assert all(w2 < w1 for w1, w2 in zip(widths, widths[1:]))


def test_rk4_single_step_decay():
    y1 = rk_step(lambda t, y: -y, 0.0, 1.0, 0.1, order=4)
    # Taylor polynomial of the classical scheme for y' = -y
    assert abs(y1 - 0.9048375) < 1e-15
    assert abs(y1 - math.exp(-0.1)) < 1e-7


def test_rk_zero_rhs():
    y = np.array([1.0, -2.0])
    for order in (2, 4):
        out = rk_step(lambda t, u: np.zeros_like(u), 0.0, y, 0.3, order=order)
        assert np.array_equal(out, y)


def test_rk_invalid_order():
    with pytest.raises(ValueError):
        rk_step(lambda t, y: y, 0.0, 1.0, 0.1, order=3)


def _global_error(order, dt):
    y, t = 1.0, 0.0
    while t < 1.0 - 1e-12:
        y = rk_step(lambda s, u: -u, t, y, dt, order=order)
        t += dt
    return abs(y - math.exp(-1.0))


@pytest.mark.parametrize("order,lo,hi", [(2, 1.8, 2.2), (4, 3.7, 4.3)])
def test_rk_order_by_richardson(order, lo, hi):
    e1 = _global_error(order, 0.02)
    e2 = _global_error(order, 0.01)
    rate = math.log2(e1 / e2)
    assert lo <= rate <= hi


@pytest.mark.parametrize("p", [0.0, 0.5, 2.0])
def test_power_trapezoid_exact_for_linear(p):
    z = np.linspace(0.0, 2.0, 9)
    w = power_trapezoid_weights(p, z)
    # phi(z) = 3 - z integrated against z^p has a closed form
    exact = 3 * 2 ** (p + 1) / (p + 1) - 2 ** (p + 2) / (p + 2)
    assert abs(w @ (3.0 - z) - exact) < 1e-13


@pytest.mark.parametrize("p", [0.0, 0.5, 2.0])
def test_power_segment_exact_for_quadratic(p):
    z = np.linspace(0.0, 2.0, 9)
    w = power_segment_weights(p, z, 0, 8)
    # phi(z) = z^2 - z + 1, exact moments
    exact = (2 ** (p + 3) / (p + 3) - 2 ** (p + 2) / (p + 2)
             + 2 ** (p + 1) / (p + 1))
    assert abs(w @ (z * z - z + 1.0) - exact) < 1e-13


def test_power_segment_converges_fourth_order_with_singular_weight():
    from scipy.special import gamma, gammainc
    exact = gamma(1.5) * gammainc(1.5, 20.0)
    errs = []
    for n in (200, 400):
        z = np.linspace(0.0, 20.0, n + 1)
        w = power_segment_weights(0.5, z, 0, n)
        errs.append(abs(w @ np.exp(-z) - exact))
    assert errs[1] < errs[0] / 7.0  # at least ~3rd order under halving
