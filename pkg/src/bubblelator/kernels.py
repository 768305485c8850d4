"""Shared numerical kernels.

Adaptive Gauss-Kronrod quadrature for decaying (possibly oscillatory)
integrands on [0, inf), fixed-step Runge-Kutta updates, bracketed root
refinement, and power-law-weighted trapezoid rules used by the transport
solver.  Everything here is deterministic: no randomized sampling, no
global state.  Integrands are expected to accept numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class NumericalError(RuntimeError):
    """A numerical procedure failed (tolerance, stability, blow-up)."""


class QuadratureError(NumericalError):
    """Quadrature could not meet the requested tolerance."""


# 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK constants).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# symmetric node/weight layout on [-1, 1]
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK15 = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG7 = np.zeros(15)
_WG7[1:-1:2] = np.concatenate([_WG[:-1], _WG[::-1]])


@dataclass(frozen=True)
class QuadratureResult:
    """Value, error estimate and panel count of an adaptive quadrature."""
    value: complex
    error: float
    panels: int


def _eval_panels(f, a, b):
    """Gauss-Kronrod 7-15 on a batch of panels [a_i, b_i].

    Returns the Kronrod values, the |K15 - G7| error estimates, and the
    panelwise L1 mass (the conditioning scale of the cancellation).
    """
    c = 0.5 * (a + b)[:, None]
    h = 0.5 * (b - a)[:, None]
    z = c + h * _NODES[None, :]
    fz = np.asarray(f(z.ravel()), dtype=complex).reshape(z.shape)
    ik = (fz * _WK15[None, :]).sum(axis=1) * h[:, 0]
    ig = (fz * _WG7[None, :]).sum(axis=1) * h[:, 0]
    l1 = (np.abs(fz) * _WK15[None, :]).sum(axis=1) * h[:, 0]
    return ik, np.abs(ik - ig), l1


def integrate_semiinfinite(f, envelope, tol=1e-10, wavelength=None,
                           z0=0.0, max_panels=60000, abs_tol=0.0):
    """Integrate ``f`` over [z0, inf) where ``|f| <= envelope`` eventually.

    The domain is truncated at the first point where the envelope has
    dropped below ``1e-2 * tol`` times its running peak, panels are capped
    at a tenth of the oscillation ``wavelength`` (if given), and panels are
    split until the summed |K15 - G7| estimate is below
    ``max(tol * |value|, abs_tol)``.

    Parameters
    ----------
    f : callable
        Vectorized integrand; may return complex values.
    envelope : callable
        Vectorized nonnegative bound on |f|, integrable at infinity.
    tol : float
        Relative error target.
    wavelength : float or None
        Period of the oscillatory factor of ``f``, used to cap panel width.
    z0 : float
        Lower limit.
    max_panels : int
        Panel budget; exceeding it raises ``QuadratureError``.
    abs_tol : float
        Absolute error floor added to the convergence test.

    Returns
    -------
    QuadratureResult
    """
    zs = z0 + np.concatenate([[0.0], np.geomspace(1e-8, 1e8, 1600)])
    env = np.asarray(envelope(zs), dtype=float)
    if not np.all(np.isfinite(env)):
        raise QuadratureError("envelope is not finite on the scan grid")
    peak = env.max()
    if peak == 0.0:
        return QuadratureResult(0.0 + 0.0j, 0.0, 0)
    ipk = int(env.argmax())
    below = np.nonzero(env[ipk:] < 1e-2 * tol * peak)[0]
    if below.size == 0:
        raise QuadratureError("envelope does not decay below tolerance")
    z_cut = zs[ipk + below[0]]
    if z_cut <= z0:
        z_cut = z0 + 1.0

    width = z_cut - z0
    cap = width / 8.0
    if wavelength is not None and np.isfinite(wavelength):
        cap = min(cap, wavelength / 10.0)
    n0 = min(max(8, int(math.ceil(width / cap))), max_panels)
    edges = np.linspace(z0, z_cut, n0 + 1)
    a, b = edges[:-1], edges[1:]
    vals, errs, l1s = _eval_panels(f, a, b)

    eps = np.finfo(float).eps
    for _ in range(60):
        total = vals.sum()
        err = errs.sum()
        # the |K15-G7| sum cannot drop below the roundoff of the integrand
        # mass; for heavily cancelling oscillatory integrals that floor is
        # the honest double-precision limit, not a failure
        target = max(tol * abs(total), 32.0 * eps * l1s.sum(), abs_tol)
        if err <= target:
            return QuadratureResult(complex(total), float(err), len(a))
        if len(a) >= max_panels:
            break
        # split every panel that overspends its width-proportional budget
        share = target * (b - a) / (2.0 * width)
        mask = errs > share
        if not mask.any():
            mask = errs >= errs.max()
        am, bm = a[mask], b[mask]
        mid = 0.5 * (am + bm)
        na = np.concatenate([a[~mask], am, mid])
        nb = np.concatenate([b[~mask], mid, bm])
        nv, ne, nl = _eval_panels(f, np.concatenate([am, mid]),
                                  np.concatenate([mid, bm]))
        vals = np.concatenate([vals[~mask], nv])
        errs = np.concatenate([errs[~mask], ne])
        l1s = np.concatenate([l1s[~mask], nl])
        a, b = na, nb
    raise QuadratureError(
        f"tolerance {tol:g} not met within {max_panels} panels "
        f"(error estimate {errs.sum():g})")


def find_bracketed_root(f, a, b, tol=1e-14, max_iter=200, on_step=None):
    """Refine a root of ``f`` inside the sign-changing bracket [a, b].

    Bisection with secant steps that stay strictly inside the bracket, so
    the bracket width shrinks at every iteration.  Stops once the width is
    below ``tol`` (or an exact zero is hit).

    ``on_step(a, b)`` is invoked after every bracket update.
    """
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0:
        raise ValueError("f(a) and f(b) must have opposite signs")
    for it in range(max_iter):
        if b - a < tol:
            break
        x = 0.5 * (a + b)
        if it % 2 == 1 and fb != fa:
            s = (a * fb - b * fa) / (fb - fa)
            lo = a + 0.01 * (b - a)
            hi = b - 0.01 * (b - a)
            if lo < s < hi:
                x = s
        fx = f(x)
        if fx == 0.0:
            return x
        if fa * fx < 0:
            b, fb = x, fx
        else:
            a, fa = x, fx
        if on_step is not None:
            on_step(a, b)
    return 0.5 * (a + b)


def rk_step(rhs, t, y, dt, order=4):
    """One explicit Runge-Kutta step of ``y' = rhs(t, y)``.

    ``order`` selects Heun's method (2) or the classical scheme (4).
    """
    if order == 2:
        k1 = rhs(t, y)
        k2 = rhs(t + dt, y + dt * k1)
        return y + 0.5 * dt * (k1 + k2)
    if order == 4:
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
        k4 = rhs(t + dt, y + dt * k3)
        return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    raise ValueError(f"unsupported order {order!r} (use 2 or 4)")


def power_trapezoid_cells(p, z):
    """Per-cell weights of the product rule  integral z^p * phi(z) dz.

    On each cell of the grid ``z`` the smooth factor ``phi`` is linearized
    and the power-law moments are integrated exactly, which keeps second
    order accuracy when z^p has a singular derivative at z = 0.

    Returns arrays (A, B): cell j contributes A[j] * phi(z[j]) +
    B[j] * phi(z[j+1]).
    """
    z = np.asarray(z, dtype=float)
    if p <= -1.0:
        raise ValueError("need p > -1 for an integrable power")
    z0, z1 = z[:-1], z[1:]
    h = z1 - z0
    m0 = (z1 ** (p + 1) - z0 ** (p + 1)) / (p + 1)
    m1 = (z1 ** (p + 2) - z0 ** (p + 2)) / (p + 2)
    A = (z1 * m0 - m1) / h
    B = (m1 - z0 * m0) / h
    return A, B


def power_trapezoid_weights(p, z):
    """Nodal weights w with  sum w[j] * phi(z[j]) ~ integral z^p phi dz."""
    A, B = power_trapezoid_cells(p, z)
    w = np.zeros(len(z))
    w[:-1] += A
    w[1:] += B
    return w


def power_simpson_pair_weights(p, z):
    """Quadratic product weights per cell pair of the grid ``z``.

    Pair i spans [z[2i], z[2i+2]]; the smooth factor is interpolated
    quadratically through the three nodes and the z^p moments integrated
    exactly.  Returns weight arrays (a, b, c) for the left, middle, right
    node of every complete pair.  Fourth-order analogue of
    :func:`power_trapezoid_cells`.
    """
    z = np.asarray(z, dtype=float)
    n_pairs = (len(z) - 1) // 2
    zA = z[0:2 * n_pairs:2]
    zB = z[1:2 * n_pairs + 1:2]
    zC = z[2:2 * n_pairs + 2:2]
    M0 = (zC ** (p + 1) - zA ** (p + 1)) / (p + 1)
    M1 = (zC ** (p + 2) - zA ** (p + 2)) / (p + 2)
    M2 = (zC ** (p + 3) - zA ** (p + 3)) / (p + 3)

    def node_weight(u, v, den):
        return (M2 - (u + v) * M1 + u * v * M0) / den

    a = node_weight(zB, zC, (zA - zB) * (zA - zC))
    b = node_weight(zA, zC, (zB - zA) * (zB - zC))
    c = node_weight(zA, zB, (zC - zA) * (zC - zB))
    return a, b, c


def power_segment_weights(p, z, start, count):
    """Nodal weights for  integral z^p phi dz  over z[start..start+count].

    Quadratic pairs anchored at ``start``; an odd trailing cell falls back
    to the linear product rule (one O(h^3) cell keeps the composite rule
    effectively fourth order).
    """
    seg = np.asarray(z, dtype=float)[start:start + count + 1]
    w = np.zeros(count + 1)
    n_pairs = count // 2
    if n_pairs:
        a, b, c = power_simpson_pair_weights(p, seg[:2 * n_pairs + 1])
        w[0:2 * n_pairs:2] += a
        w[1:2 * n_pairs + 1:2] += b
        w[2:2 * n_pairs + 2:2] += c
    if count % 2:
        A, B = power_trapezoid_cells(p, seg[count - 1:count + 1])
        w[count - 1] += A[0]
        w[count] += B[0]
    return w
