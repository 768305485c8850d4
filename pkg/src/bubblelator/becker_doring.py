"""Discrete cluster kinetics with monomer injection and cluster depletion.

Rate coefficients, zero-flux equilibria, constant-flux steady states (all
carried in log space: the partition products underflow doubles near
k ~ 1e3 already), and an explicit truncated time integrator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import NumericalError, rk_step
from .params import ModelParams, critical_size, log_flux_constant, monomer_rescale


class StabilityError(NumericalError):
    """The explicit step size violates the stability bound."""


@dataclass(frozen=True)
class RateCoefficients:
    """Power-law attachment/detachment rates and their log partition sums.

    Arrays are 0-based over k = 1..K_max: ``a[k-1] = k**alpha``,
    ``b[k-1] = k**alpha * (1 + q * k**-gamma)``.  ``log_aQ[k-1]`` is
    log(a_k Q_k) = -sum_{l<=k} log(1 + q l**-gamma) and ``log_Q`` the
    log of the partition product Q_k itself (Q_1 = 1).
    """

    K_max: int
    alpha: float
    gamma: float
    q: float
    a: np.ndarray
    b: np.ndarray
    log_aQ: np.ndarray
    log_Q: np.ndarray


def coefficients(params: ModelParams, K_max: int) -> RateCoefficients:
    """Evaluate the rate coefficients and log partition values up to K_max."""
    if K_max < 2:
        raise ValueError(f"K_max must be at least 2, got {K_max}")
    k = np.arange(1, K_max + 1, dtype=float)
    a = k ** params.alpha
    b = a * (1.0 + params.q * k ** (-params.gamma))
    log_a = params.alpha * np.log(k)
    log_b = np.log(b)
    log_Q = np.concatenate([[0.0], np.cumsum(log_a[:-1] - log_b[1:])])
    log_aQ = log_a + log_Q
    return RateCoefficients(K_max, params.alpha, params.gamma, params.q,
                            a, b, log_aQ, log_Q)


def _mass_tail_bound(coeffs: RateCoefficients, K: int) -> float:
    """Upper bound on sum_{k>K} k Q_k from the partition-sum decay.

    Uses log(1 + q l**-gamma) >= c_K l**-gamma for l >= K, an integral
    comparison, and the standard incomplete-gamma tail inequality
    Gamma(s, X) <= X**(s-1) e**-X / (1 - (s-1)/X).
    """
    alpha, gamma, q = coeffs.alpha, coeffs.gamma, coeffs.q
    c = math.log1p(q * K ** (-gamma)) * K ** gamma
    c_t = c / (1.0 - gamma)
    W = (K + 1.0) ** (1.0 - gamma)
    s = (2.0 - alpha) / (1.0 - gamma)
    if (1.0 - alpha) > c * W or c_t * W <= (s - 1.0):
        raise ValueError("K_max too small for a rigorous mass tail bound")
    log_tail = (coeffs.log_aQ[K - 1] + (s - 1.0) * math.log(W)
                - math.log(c_t) - math.log(1.0 - gamma)
                - math.log1p(-(s - 1.0) / (c_t * W)))
    return math.exp(log_tail)


@dataclass(frozen=True)
class EquilibriumState:
    """Zero-flux equilibrium Q_k * n1**k with its mass and tail bound."""

    n1_bar: float
    log_n: np.ndarray
    mass: float
    mass_tail_bound: float

    @property
    def n(self) -> np.ndarray:
        return np.exp(self.log_n)


def equilibrium(params: ModelParams, K_max: int, n1_bar: float) -> EquilibriumState:
    """Detailed-balance equilibrium densities for n1_bar <= 1.

    The mass sum is truncated once a term falls below 1e-16 of the running
    partial sum, and the analytic tail bound is added to the report.  For
    n1_bar = 1 the mass approximates the critical mass.
    """
    if not 0.0 < n1_bar <= 1.0:
        raise ValueError(
            f"zero-flux equilibria require 0 < n1_bar <= 1, got {n1_bar} "
            "(use constant_flux_state beyond saturation)")
    coeffs = coefficients(params, K_max)
    k = np.arange(1, K_max + 1, dtype=float)
    log_n = coeffs.log_Q + k * math.log(n1_bar)
    terms = k * np.exp(log_n)
    partial = np.cumsum(terms)
    small = np.nonzero(terms[1:] < 1e-16 * partial[:-1])[0]
    stop = int(small[0]) + 1 if small.size else K_max - 1
    mass = float(partial[stop])
    tail = _mass_tail_bound(coeffs, stop + 1) * n1_bar ** (stop + 1)
    return EquilibriumState(n1_bar, log_n, mass + tail, tail)


@dataclass(frozen=True)
class ConstantFluxState:
    """Bounded steady state with a single flux value, in log space.

    ``log_N[k-1]`` is the log steady density, ``log_J`` the log flux, and
    ``log_J_laplace`` the saddle-point approximation J_inf * e^u for
    comparison.  ``G`` is the exponent function -log(a_k Q_k n1**k),
    normalized so G(1) = -log(a_1 n1).
    """

    n1_bar: float
    k_crit: float
    coeffs: RateCoefficients
    log_N: np.ndarray
    log_J: float
    log_J_laplace: float

    @property
    def N(self) -> np.ndarray:
        return np.exp(self.log_N)

    @property
    def J(self) -> float:
        return math.exp(self.log_J)

    @property
    def G(self) -> np.ndarray:
        k = np.arange(1, self.coeffs.K_max + 1, dtype=float)
        return -self.coeffs.log_aQ - k * math.log(self.n1_bar)

    def flux_residuals(self) -> np.ndarray:
        """|a_{k-1} n1 N_{k-1} - b_k N_k - J| / J for k = 2..K_max."""
        up = np.exp(np.log(self.coeffs.a[:-1]) + math.log(self.n1_bar)
                    + self.log_N[:-1] - self.log_J)
        down = np.exp(np.log(self.coeffs.b[1:]) + self.log_N[1:] - self.log_J)
        return np.abs(up - down - 1.0)

    def flux_term_scale(self) -> np.ndarray:
        """max(a_{k-1} n1 N_{k-1}, b_k N_k) / J, the conditioning of the
        residual check (the identity telescopes exactly; floats can only
        verify it up to 1 ulp of the larger term)."""
        up = np.log(self.coeffs.a[:-1]) + math.log(self.n1_bar) + self.log_N[:-1]
        down = np.log(self.coeffs.b[1:]) + self.log_N[1:]
        return np.exp(np.maximum(up, down) - self.log_J)


def constant_flux_state(params: ModelParams, n1_bar: float, K_max: int) -> ConstantFluxState:
    """Solve the constant-flux recursion for a supersaturated monomer bath.

    The flux and densities come from the summation formula for the unique
    bounded solution, evaluated with log-sum-exp over the full retained
    range.  Fails if the summand has not decayed to 1e-16 of its maximum
    by K_max.
    """
    if n1_bar <= 1.0:
        raise ValueError(f"constant-flux states require n1_bar > 1, got {n1_bar}")
    coeffs = coefficients(params, K_max)
    log_n1 = math.log(n1_bar)
    ell = np.arange(1, K_max + 1, dtype=float)
    # log of 1/(a_l Q_l n1**(l+1))
    T = -coeffs.log_aQ - (ell + 1.0) * log_n1
    if T[-1] > T.max() - 37.0:
        raise NumericalError(
            f"constant-flux series has not decayed by K_max={K_max}; "
            "increase K_max to several multiples of the critical size")
    # suffix log-sum-exp: log S_k = log sum_{l>=k} exp(T_l)
    log_S = np.logaddexp.accumulate(T[::-1])[::-1]
    log_J = -log_S[0]
    log_N = log_J + coeffs.log_Q + ell * log_n1 + log_S
    u = monomer_rescale(n1_bar, params)
    log_J_laplace = log_flux_constant(params) + u
    return ConstantFluxState(n1_bar, critical_size(params), coeffs,
                             log_N, log_J, log_J_laplace)


@dataclass(frozen=True)
class ClusterState:
    """Finite truncation of the size distribution with cached fluxes."""

    n: np.ndarray
    t: float
    J: np.ndarray

    @property
    def mass(self) -> float:
        k = np.arange(1, len(self.n) + 1, dtype=float)
        return float(k @ self.n)


def make_cluster_state(params: ModelParams, n, t=0.0, closure="absorbing") -> ClusterState:
    n = np.asarray(n, dtype=float).copy()
    coeffs = coefficients(params, len(n))
    return ClusterState(n, t, _fluxes(coeffs, n, closure))


def _fluxes(coeffs: RateCoefficients, n: np.ndarray, closure: str) -> np.ndarray:
    J = coeffs.a * n[0] * n
    J[:-1] -= coeffs.b[1:] * n[1:]
    if closure == "closed":
        J[-1] = 0.0
    elif closure != "absorbing":
        raise ValueError(f"unknown closure {closure!r}")
    return J


@dataclass(frozen=True)
class SimulationTrace:
    """Time-indexed record of (t, n1, mass, flux at the critical size)."""

    t: np.ndarray
    n1: np.ndarray
    mass: np.ndarray
    J_kcrit: np.ndarray
    leaked_mass: float
    final: ClusterState

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,n1,mass,J_kcrit\n")
            for row in zip(self.t, self.n1, self.mass, self.J_kcrit):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def simulate(params: ModelParams, initial: ClusterState, horizon: float,
             dt: float, stride: int = 1, closure: str = "absorbing") -> SimulationTrace:
    """Integrate the truncated kinetics with classical RK4.

    The explicit stability bound dt * max_k(a_k n1 + b_k + R k^r) < 1 is
    checked at the start and whenever n1 doubles.  With the absorbing
    closure (n_{K+1} = 0) the mass flowing past K_max is accumulated and
    reported as ``leaked_mass``; the ``closed`` closure sets the boundary
    flux to zero and conserves mass exactly.
    """
    if horizon <= 0.0 or dt <= 0.0:
        raise ValueError("horizon and dt must be positive")
    n = np.asarray(initial.n, dtype=float).copy()
    K = len(n)
    coeffs = coefficients(params, K)
    k = np.arange(1, K + 1, dtype=float)
    removal = params.R * k ** params.r
    removal[0] = 0.0
    S = params.S

    def check_stability(n1):
        bound = float(np.max(coeffs.a * n1 + coeffs.b + removal))
        if dt * bound >= 1.0:
            raise StabilityError(
                f"dt={dt:g} violates the explicit stability bound "
                f"1/{bound:g} at n1={n1:g}")

    def rhs(_t, y):
        nn = y[:-1]
        J = _fluxes(coeffs, nn, closure)
        dn = np.empty_like(nn)
        dn[1:] = J[:-1] - J[1:]
        dn[0] = -J[0] - J.sum() + S
        dn[1:] -= removal[1:] * nn[1:]
        leak = (K + 1.0) * J[-1] if closure == "absorbing" else 0.0
        return np.concatenate([dn, [leak]])

    check_stability(n[0])
    n1_checked = n[0]
    kc = min(max(int(round(critical_size(params))), 1), K - 1)

    n_steps = int(round(horizon / dt))
    ts, n1s, masses, jks = [], [], [], []

    def record(t, y):
        ts.append(t)
        n1s.append(y[0])
        masses.append(float(k @ y[:-1]))
        jks.append(float(_fluxes(coeffs, y[:-1], closure)[kc - 1]))

    y = np.concatenate([n, [0.0]])
    record(0.0, y)
    for i in range(n_steps):
        y = rk_step(rhs, i * dt, y, dt, order=4)
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"state overflowed at t={(i + 1) * dt:g}")
        low = y[:-1].min()
        if low < -1e-13:
            raise StabilityError(
                f"negative density {low:g} at t={(i + 1) * dt:g}: dt too large")
        np.clip(y[:-1], 0.0, None, out=y[:-1])
        if y[0] > 2.0 * n1_checked:
            check_stability(y[0])
            n1_checked = y[0]
        if (i + 1) % stride == 0 or i == n_steps - 1:
            record((i + 1) * dt, y)

    final = ClusterState(y[:-1].copy(), n_steps * dt,
                         _fluxes(coeffs, y[:-1], closure))
    return SimulationTrace(np.array(ts), np.array(n1s), np.array(masses),
                           np.array(jks), float(y[-1]), final)
