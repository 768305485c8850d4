"""Linear-stability machinery for the rescaled flux equation.

The Laplace-type characteristic function, its imaginary-axis eigenvalue
crossings (candidate oscillation onsets), transversality and nonresonance
data, and the second-order expansion coefficients that fix the direction
of the bifurcation.  Closed forms and asymptotics for the special cases
(size-independent removal, odd integer removal exponents, weak removal)
serve as independent oracles for the quadrature route.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gamma as gamma_fn

from .kernels import (NumericalError, QuadratureError, find_bracketed_root,
                      integrate_semiinfinite)

logger = logging.getLogger(__name__)

_TWO_PI = 2.0 * math.pi


class DegenerateCrossingError(NumericalError):
    """Transversality failed: the tracked eigenvalue grazes the axis."""


class ResonanceError(NumericalError):
    """The second-harmonic symbol vanishes; the expansion breaks down."""


def char_function_zero(beta: float, nu: float) -> float:
    """Closed form of the characteristic function at the origin."""
    return ((beta + 1.0) ** ((nu - beta) / (beta + 1.0))
            * float(gamma_fn((nu + 1.0) / (beta + 1.0))))


@dataclass(frozen=True)
class CharacteristicEvaluation:
    """One evaluation of the characteristic function with its error bound."""

    lam: complex
    value: complex
    error: float


def evaluate_G(beta: float, nu: float, lam: complex,
               tol: float = 1e-10) -> CharacteristicEvaluation:
    """Evaluate G(lam) = int_0^inf z^nu exp(-z^(beta+1)/(beta+1) - lam z) dz.

    Valid for Re(lam) > -1.  lam = 0 short-circuits to the closed form;
    otherwise adaptive panels resolve the oscillation (width capped at a
    tenth of the wavelength) and the call fails if the error estimate does
    not reach ``tol`` relative to |G| -- except when the integral cancels
    so heavily that the estimate bottoms out at the double-precision
    conditioning floor eps * int |integrand|, which is accepted and
    reported as is.
    """
    if beta < 0.0 or nu < 0.0:
        raise ValueError("beta and nu must be nonnegative")
    lam = complex(lam)
    if lam.real <= -1.0:
        raise ValueError(f"need Re(lam) > -1, got {lam}")
    if lam == 0:
        return CharacteristicEvaluation(lam, complex(char_function_zero(beta, nu)), 0.0)
    bp = beta + 1.0
    # Rotate the ray into the sector where exp(-lam z) decays: the
    # integrand is analytic there and the arc at infinity vanishes, so the
    # value is unchanged while the cancellation (and with it the roundoff
    # conditioning) collapses by orders of magnitude.
    phi = math.copysign(math.pi / (4.0 * bp), lam.imag) if lam.imag else 0.0
    rot = complex(math.cos(phi), -math.sin(phi))
    c_rot = rot ** bp
    lam_rot = lam * rot
    prefactor = rot ** (nu + 1.0)

    def f(w):
        return w ** nu * np.exp(-c_rot * w ** bp / bp - lam_rot * w)

    def envelope(w):
        return w ** nu * np.exp(-c_rot.real * w ** bp / bp - lam_rot.real * w)

    wavelength = _TWO_PI / abs(lam_rot.imag) if lam_rot.imag != 0.0 else None
    res = integrate_semiinfinite(f, envelope, tol=tol, wavelength=wavelength)
    return CharacteristicEvaluation(lam, prefactor * res.value, res.error)


@dataclass(frozen=True)
class BifurcationPoint:
    """One imaginary-axis eigenvalue crossing and its expansion data.

    The scan fills the location block (t0, vartheta0, eta0, kappa0);
    :func:`hopf_coefficients` completes the second-order block.  ``eta2``
    < 0 means periodic solutions emerge below ``eta0`` (supercritical).
    """

    beta: float
    nu: float
    t0: float
    vartheta0: float
    eta0: float
    kappa0: float
    primary: bool = False
    phase_residual: float = 0.0
    delta0: float | None = None
    mu0: float | None = None
    g0hat2: complex | None = None
    g1hat1: complex | None = None
    L2hat: complex | None = None
    mu2: float | None = None
    delta2: float | None = None
    eta2: float | None = None
    kappa2: float | None = None
    crossing_sign: int | None = None

    @property
    def abs_L2hat(self) -> float | None:
        return None if self.L2hat is None else abs(self.L2hat)


class _GridEvaluator:
    """Fixed composite Gauss-Legendre rule for G(it) on many t at once.

    Evaluates along the rotated ray w e^{-i phi}, phi = pi/(4(beta+1)), so
    the oscillatory factor decays and the cancellation stays mild for every
    t > 0 in the scan.  One kernel sampling serves the whole scan;
    ``noise_at(ts)`` bounds the absolute roundoff of the rule pointwise
    (used to reject phase swings that are pure cancellation noise).
    """

    def __init__(self, beta, nu, t_max, order=24):
        bp = beta + 1.0
        phi = math.pi / (4.0 * bp)
        rot = complex(math.cos(phi), -math.sin(phi))
        zs = np.concatenate([[0.0], np.geomspace(1e-8, 1e4, 800)])
        env = zs ** nu * np.exp(-math.cos(bp * phi) * zs ** bp / bp)
        peak = env.max()
        above = np.nonzero(env > 1e-18 * peak)[0]
        z_cut = max(zs[above[-1]], 1.0)
        h = min(0.5, 24.0 / max(t_max, 1.0))
        n_panels = int(math.ceil(z_cut / h))
        x, w = np.polynomial.legendre.leggauss(order)
        uniform = np.linspace(0.0, z_cut, n_panels + 1)
        # geometric grading toward 0 tames the z^nu endpoint singularity
        # for fractional nu (panels [a, 2a] see an analytic integrand)
        graded = uniform[1] * 2.0 ** np.arange(-40.0, 0.0)
        edges = np.concatenate([[0.0], graded, uniform[1:]])
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        self.z = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        wts = (half[:, None] * w[None, :]).ravel()
        self.kernel = (wts * self.z ** nu
                       * np.exp(-(rot ** bp) * self.z ** bp / bp)
                       * rot ** (nu + 1.0))
        self.decay = math.sin(phi) * self.z
        self.freq = math.cos(phi) * self.z

    def __call__(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        out = np.empty(len(ts), dtype=complex)
        for lo in range(0, len(ts), 512):
            block = ts[lo:lo + 512]
            phase = np.outer(block, self.freq)
            damp = np.exp(-np.outer(block, self.decay))
            out[lo:lo + 512] = (damp * np.exp(-1j * phase)) @ self.kernel
        return out

    def noise_at(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        base = np.abs(self.kernel)
        out = np.empty(len(ts))
        for lo in range(0, len(ts), 512):
            block = ts[lo:lo + 512]
            out[lo:lo + 512] = np.exp(-np.outer(block, self.decay)) @ base
        return 64.0 * np.finfo(float).eps * out


def _wrap_angle(x):
    return np.mod(np.asarray(x) + math.pi, _TWO_PI) - math.pi


def find_crossings(beta: float, nu: float, t_range=(1e-3, 60.0),
                   n_grid: int = 4000, max_refine: int = 30,
                   swing_floor: float = 1e-9, tol: float = 1e-12):
    """Locate all transversal phase crossings arg G(it) = -pi/2 (mod 2pi).

    Tracks the unwrapped argument of G(it) on a refining grid, brackets
    every crossing, polishes each bracket by bisection on the phase, and
    verifies the polished point with the adaptive quadrature engine.
    Crossings whose phase swing does not rise above the quadrature noise
    floor (the regime where Re G has decayed below double precision) are
    discarded.  Returns points sorted by descending eta0 with the largest
    flagged as primary.
    """
    t_min, t_max = t_range
    if not 0.0 < t_min < t_max:
        raise ValueError(f"need 0 < t_min < t_max, got {t_range}")
    grid_eval = _GridEvaluator(beta, nu, t_max)
    ts = np.linspace(t_min, t_max, n_grid)
    gs = grid_eval(ts)

    # |G| decays with t; once it sinks into the rule's roundoff the phase
    # is unresolvable, so the scan hard-stops there (noise is a smooth
    # decreasing profile: one evaluation on the initial grid suffices)
    noise_grid = (ts.copy(), grid_eval.noise_at(ts))
    bad = np.nonzero(np.abs(gs) < 20.0 * noise_grid[1])[0]
    if bad.size:
        if bad[0] < 2:
            return []
        ts, gs = ts[:bad[0]], gs[:bad[0]]

    for _ in range(max_refine):
        w = np.unwrap(np.angle(gs))
        jumps = np.nonzero(np.abs(np.diff(w)) > 0.5 * math.pi)[0]
        if jumps.size == 0:
            break
        mids = 0.5 * (ts[jumps] + ts[jumps + 1])
        ts = np.concatenate([ts, mids])
        gs = np.concatenate([gs, grid_eval(mids)])
        order = np.argsort(ts)
        ts, gs = ts[order], gs[order]
    else:
        raise NumericalError("phase unwrapping did not stabilize under refinement")

    s = _wrap_angle(np.unwrap(np.angle(gs)) + 0.5 * math.pi)
    sign_change = (s[:-1] * s[1:] < 0.0) & (np.abs(s[:-1]) + np.abs(s[1:]) < math.pi)
    brackets = list(np.nonzero(sign_change)[0])

    # Reject brackets whose phase swing on BOTH neighbouring segments stays
    # at the cancellation noise of the rule: there Re G has decayed below
    # double precision and the hovering phase crosses -pi/2 spuriously.
    kept = []
    for j, idx in enumerate(brackets):
        lo = brackets[j - 1] + 1 if j > 0 else 0
        hi = brackets[j + 1] if j + 1 < len(brackets) else len(s) - 1
        swing = min(np.abs(s[lo:idx + 1]).max(), np.abs(s[idx + 1:hi + 1]).max())
        noise = float(np.interp(ts[idx], *noise_grid))
        floor = max(swing_floor, 10.0 * noise / max(abs(gs[idx]), 1e-300))
        if swing > floor:
            kept.append(idx)

    def phase_dev(t):
        return float(_wrap_angle(np.angle(grid_eval(t)[0]) + 0.5 * math.pi))

    g0 = char_function_zero(beta, nu)
    points = []
    for idx in kept:
        try:
            t0 = find_bracketed_root(phase_dev, ts[idx], ts[idx + 1],
                                     tol=1e-14 * max(1.0, ts[idx]))
        except ValueError:
            continue  # bracket was pure roundoff after all
        ev = evaluate_G(beta, nu, 1j * t0, tol=tol)
        vartheta0 = -ev.value.imag / t0
        if vartheta0 <= 0.0:
            continue
        phase_res = abs(ev.value.real) / abs(ev.value)
        eta0 = (vartheta0 / g0) ** (beta + 1.0)
        kappa0 = t0 * vartheta0 / g0
        points.append(BifurcationPoint(float(beta), float(nu), float(t0),
                                       float(vartheta0), float(eta0),
                                       float(kappa0),
                                       phase_residual=float(phase_res)))
    points.sort(key=lambda p: -p.eta0)
    return [replace(p, primary=(i == 0)) for i, p in enumerate(points)]


def _g_hat(beta, nu, t0, j, k, tol=1e-12):
    """Fourier data g_hat_j(k) of the expansion kernels.

    After rescaling y -> t0 z the integrand y^(nu + j(beta+1))
    exp(-mu0 y^(beta+1) - iky) is the characteristic integrand with a
    shifted power, so the same quadrature engine evaluates it.
    """
    shift = nu + j * (beta + 1.0)
    ev = evaluate_G(beta, shift, 1j * k * t0, tol=tol)
    return (-1.0) ** j * t0 ** (shift + 1.0) * ev.value


def hopf_coefficients(point: BifurcationPoint, tol: float = 1e-12) -> BifurcationPoint:
    """Complete a crossing with its second-order expansion data.

    Computes the rescaled pair (delta0, mu0), the kernel Fourier data, the
    nonresonance symbol, the expansion increments (mu2, delta2) and their
    physical counterparts (eta2, kappa2), plus the crossing direction
    -sign Re g_hat_1(1).  Raises ``DegenerateCrossingError`` when the
    crossing is non-transversal and ``ResonanceError`` when the
    second-harmonic symbol vanishes.
    """
    from .limit_model import steady_state_u0

    beta, nu, t0 = point.beta, point.nu, point.t0
    u0, _ = steady_state_u0(beta, nu, point.eta0)
    delta0 = point.kappa0 ** (nu + 2.0) / math.exp(u0)
    mu0 = point.eta0 / ((beta + 1.0) * point.kappa0 ** (beta + 1.0))

    g0hat1 = _g_hat(beta, nu, t0, 0, 1, tol)
    g0hat2 = _g_hat(beta, nu, t0, 0, 2, tol)
    g1hat1 = _g_hat(beta, nu, t0, 1, 1, tol)
    if abs(g0hat1 + 1j * delta0) > 1e-8 * delta0:
        raise NumericalError(
            f"kernel identity g_hat_0(1) = -i delta0 violated at t0={t0:g}")

    L2 = 2j * delta0 + g0hat2
    if abs(g1hat1.real) < 1e-10 * abs(g1hat1):
        raise DegenerateCrossingError(
            f"non-transversal crossing at t0={t0:g}: Re g_hat_1(1) ~ 0")
    if abs(L2) < 1e-10 * (2.0 * delta0 + abs(g0hat2)):
        raise ResonanceError(f"second-harmonic resonance at t0={t0:g}")

    mu2 = -delta0 ** 2 * g0hat2.real / (4.0 * abs(L2) ** 2 * g1hat1.real)
    delta2 = (-delta0 / 4.0
              + delta0 ** 2 * (2.0 * delta0 + g0hat2.imag) / (4.0 * abs(L2) ** 2)
              - mu2 * g1hat1.imag)
    eta2 = (nu + 2.0) * mu2 / mu0 + (beta + 1.0) * delta2 / delta0
    kappa2 = (nu + 1.0) / (beta + 1.0) * mu2 / mu0 + delta2 / delta0
    sign = -1 if g1hat1.real > 0.0 else 1
    return replace(point, delta0=float(delta0), mu0=float(mu0),
                   g0hat2=complex(g0hat2), g1hat1=complex(g1hat1),
                   L2hat=complex(L2), mu2=float(mu2), delta2=float(delta2),
                   eta2=float(eta2), kappa2=float(kappa2), crossing_sign=sign)


def beta0_exact(nu: float):
    """Closed-form crossings for size-independent removal (beta = 0).

    Returns (t0, eta0, kappa0) tuples for every branch angle
    omega_k = (pi/2)(1+4k)/(1+nu) with 0 <= 4k < nu, ordered by
    descending eta0.  Empty for nu = 0: no crossing exists there.
    """
    if nu < 0.0:
        raise ValueError("nu must be nonnegative")
    out = []
    k = 0
    while 4 * k < nu:
        w = 0.5 * math.pi * (1 + 4 * k) / (1.0 + nu)
        t0 = math.tan(w)
        eta0 = math.cos(w) ** (nu + 2.0) / math.sin(w)
        kappa0 = math.cos(w) ** (nu + 1.0)
        out.append((t0, eta0, kappa0))
        k += 1
    return out


@dataclass(frozen=True)
class OddBetaAsymptotics:
    """Saddle-point zero locations for odd beta > 1 with the envelope data."""

    beta: int
    t: np.ndarray
    s_beta: float
    c_beta: float


def oddbeta_zero_asymptotics(beta, n_zeros: int) -> OddBetaAsymptotics:
    """Approximate crossing frequencies for odd integer beta >= 3.

    Solves t^((beta+1)/beta) s_beta - (pi/4)(beta-1)/beta = pi/2 + n pi
    for n = 0..n_zeros-1.
    """
    if beta != int(beta) or int(beta) < 3 or int(beta) % 2 == 0:
        raise ValueError(f"beta must be an odd integer >= 3, got {beta}")
    beta = int(beta)
    arg = 0.5 * math.pi * (beta + 1.0) / beta
    s_b = beta / (beta + 1.0) * math.sin(arg)
    c_b = beta / (beta + 1.0) * math.cos(arg)
    n = np.arange(n_zeros, dtype=float)
    t = ((0.5 * math.pi + n * math.pi + 0.25 * math.pi * (beta - 1.0) / beta)
         / s_b) ** (beta / (beta + 1.0))
    return OddBetaAsymptotics(beta, t, s_b, c_b)


@dataclass(frozen=True)
class SmallThetaRoot:
    """Weak-removal root estimate with its stability sign.

    ``nu_star`` is the stability-boundary exponent solving Re(lam_2) = 0
    at leading order, present only when sin(pi (beta+1)/2) > 0.
    """

    lam: complex
    stability_sign: int
    nu_star: float | None


def smalltheta_root_asymptotics(beta: float, nu: float,
                                vartheta: float) -> SmallThetaRoot:
    """Leading root of the eigenvalue equation as vartheta -> 0.

    For nu = 0 the two-term expansion of the characteristic function gives
    the root and its stability sign -sign sin(pi (beta+1)/2); for nu > 0
    the real part of the correction follows the small-nu expansion
    Re lam_2 = pi nu / 4 - (Gamma(beta+1)/2) vartheta^((beta+1)/(nu+2))
    sin(pi (beta+1)/2).
    """
    if vartheta <= 0.0:
        raise ValueError("vartheta must be positive")
    sin_term = math.sin(0.5 * math.pi * (beta + 1.0))
    gb = float(gamma_fn(beta + 1.0))
    nu_star = None
    if sin_term > 0.0:
        nu_star = 2.0 / math.pi * gb * vartheta ** (0.5 * (beta + 1.0)) * sin_term
    if nu == 0.0:
        lam = (1j / math.sqrt(vartheta)) * (
            1.0 - 0.5 * gb * vartheta ** (0.5 * (1.0 + beta))
            * np.exp(-0.5j * math.pi * (beta + 1.0)))
        re = lam.real
    else:
        scale = (float(gamma_fn(nu + 1.0)) / vartheta) ** (1.0 / (nu + 2.0))
        re_lam2 = (0.25 * math.pi * nu
                   - 0.5 * gb * vartheta ** ((beta + 1.0) / (nu + 2.0)) * sin_term)
        lam = scale * (re_lam2 + 1j)
        re = re_lam2
    sign = 0 if re == 0.0 else (1 if re > 0.0 else -1)
    return SmallThetaRoot(complex(lam), sign, nu_star)


def track_root(beta: float, nu: float, vartheta: float, lam0: complex,
               tol: float = 1e-12, max_iter: int = 60) -> complex:
    """Newton-continue a root of vartheta*lam + G(lam) = 0 from lam0.

    G'(lam) = -G_(beta,nu+1)(lam) supplies the exact derivative.  Used as
    the independent finite-difference oracle for the crossing direction.
    """
    lam = complex(lam0)
    for _ in range(max_iter):
        g = evaluate_G(beta, nu, lam, tol=tol).value
        dg = -evaluate_G(beta, nu + 1.0, lam, tol=tol).value
        f = vartheta * lam + g
        step = f / (vartheta + dg)
        lam = lam - step
        if abs(step) < 1e-13 * max(1.0, abs(lam)):
            return lam
    raise NumericalError(f"root tracking did not converge from {lam0}")


def crossing_direction_fd(point: BifurcationPoint, rel_step: float = 1e-5) -> int:
    """Sign of d(Re lam)/d(vartheta) by two-sided root tracking."""
    th = point.vartheta0
    lam_p = track_root(point.beta, point.nu, th * (1.0 + rel_step), 1j * point.t0)
    lam_m = track_root(point.beta, point.nu, th * (1.0 - rel_step), 1j * point.t0)
    slope = (lam_p.real - lam_m.real) / (2.0 * rel_step * th)
    return 1 if slope > 0.0 else -1


def stability_eta_bound(beta: float, nu: float) -> float:
    """Removal rate above which no eigenvalue sits in the right half plane."""
    return (char_function_zero(beta, nu + 1.0)
            / char_function_zero(beta, nu)) ** (beta + 1.0)


# ---------------------------------------------------------------------------
# parameter sweeps and table writers


def _sweep_cell(args):
    beta, nu, t_range, n_grid = args
    try:
        points = find_crossings(beta, nu, t_range=t_range, n_grid=n_grid)
        if not points:
            return None
        return hopf_coefficients(points[0])
    except NumericalError as exc:
        logger.warning("sweep cell beta=%g nu=%g failed: %s", beta, nu, exc)
        return None


@dataclass(frozen=True)
class SweepResult:
    """Primary-crossing table over a (beta, nu) grid; None marks blanks."""

    betas: list
    nus: list
    cells: dict

    def point(self, beta, nu):
        return self.cells.get((float(beta), float(nu)))

    def write_theta_kappa_csv(self, path):
        cols = ["beta"]
        for i in range(1, len(self.nus) + 1):
            cols += [f"theta0_{i}", f"kappa0_{i}", f"theta2_{i}", f"kappa2_{i}"]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for b in self.betas:
                row = [repr(float(b))]
                for nu in self.nus:
                    p = self.point(b, nu)
                    if p is None:
                        row += ["", "", "", ""]
                    else:
                        row += [repr(float(p.eta0)), repr(float(p.kappa0)),
                                repr(float(p.eta2)), repr(float(p.kappa2))]
                fh.write(",".join(row) + "\n")

    def write_resonance_csv(self, path):
        cols = (["beta"]
                + [f"abshatL2{i}" for i in range(1, len(self.nus) + 1)]
                + [f"rehatg11{i}" for i in range(1, len(self.nus) + 1)])
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for b in self.betas:
                abs_l2, re_g = [], []
                for nu in self.nus:
                    p = self.point(b, nu)
                    abs_l2.append("" if p is None else repr(float(p.abs_L2hat)))
                    re_g.append("" if p is None else repr(float(p.g1hat1.real)))
                fh.write(",".join([repr(float(b))] + abs_l2 + re_g) + "\n")


def sweep(betas, nus, t_range=(1e-3, 60.0), n_grid: int = 4000,
          workers: int | None = None) -> SweepResult:
    """Primary bifurcation point per (beta, nu) cell.

    Cells without a crossing (or with a degenerate/resonant one) are left
    blank and logged; the sweep itself never aborts.  ``workers`` > 1
    distributes cells over processes; the merge is keyed by (beta, nu) so
    the result is identical either way.
    """
    betas = [float(b) for b in betas]
    nus = [float(n) for n in nus]
    tasks = [(b, n, t_range, n_grid) for b in betas for n in nus]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, tasks))
    else:
        results = [_sweep_cell(t) for t in tasks]
    cells = {(b, n): r for (b, n, _, _), r in zip(tasks, results)}
    return SweepResult(betas, nus, cells)


def odd_beta_study(beta: int = 3, count: int = 11, t_range=(1e-3, 60.0),
                   n_grid: int = 4000):
    """First ``count`` crossings for an odd removal exponent, with the
    relative error of the saddle-point zero prediction.

    Returns completed points sorted by ascending t0 (descending vartheta0)
    paired with the asymptotic relative errors.
    """
    points = find_crossings(beta, 0.0, t_range=t_range, n_grid=n_grid)
    points.sort(key=lambda p: p.t0)
    if len(points) < count:
        raise NumericalError(
            f"only {len(points)} crossings found, {count} requested")
    points = [hopf_coefficients(p) for p in points[:count]]
    asym = oddbeta_zero_asymptotics(beta, count).t
    relerr = [abs(a - p.t0) / p.t0 for a, p in zip(asym, points)]
    return points, relerr


def write_odd_beta_csv(path, points, relerr):
    cols = ["vartheta0", "theta0", "kappa0", "theta2", "kappa2",
            "rehatg11", "abshatL2", "relerr"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for p, re_ in zip(points, relerr):
            fh.write(",".join(repr(float(v)) for v in (
                p.vartheta0, p.eta0, p.kappa0, p.eta2, p.kappa2,
                p.g1hat1.real, p.abs_L2hat, re_)) + "\n")
