"""Model parameters, exponent maps, critical size, and scale identification.

``ModelParams`` is the single source of truth for every solver in the
package.  The rescaled exponents ``beta = r / (1 - alpha)`` and
``nu = alpha / (1 - alpha)`` are derived at construction, exactly when the
inputs are given as ``fractions.Fraction``.

All exponentially large or small scale quantities (flux constant, size,
time, density, source and removal scales) are stored as natural logarithms;
nominal values are opt-in properties that raise ``OverflowError`` when the
double range is exceeded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

_LOG_2PI = math.log(2.0 * math.pi)

CONFIG_KEYS = ("alpha", "gamma", "q", "epsilon", "eta", "r")


def parse_number(text):
    """Parse a flag/config value; ``a/b`` strings become exact fractions."""
    text = str(text).strip()
    if "/" in text:
        return Fraction(text)
    try:
        return int(text)
    except ValueError:
        return float(text)


@dataclass(frozen=True)
class ModelParams:
    """Physical exponents and rates plus the derived rescaled quantities.

    Parameters
    ----------
    alpha : attachment exponent, in [0, 1).
    gamma : surface-tension exponent, in (0, 1).
    epsilon : excess monomer density, > 0.
    q : surface-tension coefficient, > 0 (default 1: the rescaled limit
        model is q-independent and q = 1 reproduces the reference
        magnitudes).
    r : removal exponent, >= 0.
    eta : rescaled removal rate, > 0.
    S, R : source and removal rates of the discrete system, >= 0.

    ``alpha`` and ``r`` may be ``Fraction`` instances, in which case
    ``beta`` and ``nu`` are computed by exact rational arithmetic before
    conversion to float.
    """

    alpha: float
    gamma: float
    epsilon: float
    q: float = 1.0
    r: float = 0.0
    eta: float = 1.0
    S: float = 0.0
    R: float = 0.0
    beta: float = field(init=False)
    nu: float = field(init=False)

    def __post_init__(self):
        alpha_raw, r_raw = self.alpha, self.r
        for name in ("alpha", "gamma", "epsilon", "q", "r", "eta", "S", "R"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.q <= 0.0:
            raise ValueError(f"q must be positive, got {self.q}")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.r < 0.0:
            raise ValueError(f"r must be nonnegative, got {self.r}")
        if self.eta <= 0.0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.S < 0.0 or self.R < 0.0:
            raise ValueError("S and R must be nonnegative")
        if isinstance(alpha_raw, Rational) and isinstance(r_raw, Rational):
            one_minus = 1 - Fraction(alpha_raw)
            beta = float(Fraction(r_raw) / one_minus)
            nu = float(Fraction(alpha_raw) / one_minus)
        else:
            beta = self.r / (1.0 - self.alpha)
            nu = self.alpha / (1.0 - self.alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "nu", nu)

    @classmethod
    def from_mapping(cls, mapping, **overrides):
        merged = dict(mapping)
        merged.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**merged)


def _inv_gamma(gamma):
    # reciprocal exponent; snap to integer so exact rationals like 1/3
    # survive the float round-trip (k_crit = 1000 exactly, not 999.99...)
    inv = 1.0 / gamma
    if abs(inv - round(inv)) < 1e-9:
        return float(round(inv))
    return inv


def critical_size(params: ModelParams) -> float:
    """Critical cluster size (q / epsilon)^(1/gamma)."""
    return (params.q / params.epsilon) ** _inv_gamma(params.gamma)


def log_flux_constant(params: ModelParams) -> float:
    """log of the Arrhenius flux scale J_inf (exponentially small)."""
    g, q, eps = params.gamma, params.q, params.epsilon
    inv_g = _inv_gamma(g)
    return (0.5 * (math.log(g) - _LOG_2PI - inv_g * math.log(q))
            + (g + 1.0) / (2.0 * g) * math.log(eps)
            - g / (1.0 - g) * q ** inv_g * eps ** (-(1.0 - g) / g))


@dataclass(frozen=True)
class ScaleSet:
    """Derived scales, stored as logarithms.

    ``k_crit`` is the critical size; the remaining quantities are natural
    logs of the flux constant, macroscopic size, time, density, source and
    removal scales.  Nominal values are opt-in via the properties, which
    raise ``OverflowError`` outside the double range.
    """

    k_crit: float
    log_J_inf: float
    log_X: float
    log_T: float
    log_F: float
    log_S: float
    log_R: float

    @property
    def J_inf(self) -> float:
        return math.exp(self.log_J_inf)

    @property
    def X(self) -> float:
        return math.exp(self.log_X)

    @property
    def T(self) -> float:
        return math.exp(self.log_T)

    @property
    def F(self) -> float:
        return math.exp(self.log_F)

    @property
    def S(self) -> float:
        return math.exp(self.log_S)

    @property
    def R(self) -> float:
        return math.exp(self.log_R)


def compute_scales(params: ModelParams) -> ScaleSet:
    """Identify the size/time/density/source/removal scales.

    Works in log space throughout: for small ``epsilon`` the nominal values
    overflow doubles.  Rejects ``epsilon >= 1`` (supercritical expansion
    point) and parameter sets whose log-space intermediates are not finite.
    """
    if not 0.0 < params.epsilon < 1.0:
        raise ValueError(
            f"compute_scales needs 0 < epsilon < 1, got {params.epsilon}")
    k_crit = critical_size(params)
    log_j = log_flux_constant(params)
    log_x = (math.log(params.epsilon) - math.log(k_crit) - log_j) / (2.0 - params.alpha)
    log_t = (1.0 - params.alpha) * log_x - math.log(params.epsilon)
    log_f = math.log(k_crit) - 2.0 * log_x
    log_s = -log_t - math.log(k_crit)
    log_r = math.log(params.eta) - log_t - params.r * log_x
    values = (k_crit, log_j, log_x, log_t, log_f, log_s, log_r)
    if not all(map(math.isfinite, values)):
        raise ValueError("scale computation left the representable range")
    return ScaleSet(*values)


def monomer_rescale(n1: float, params: ModelParams) -> float:
    """Map a monomer density to the order-one excess variable u."""
    return (n1 - 1.0 - params.epsilon) * critical_size(params)


def monomer_unrescale(u: float, params: ModelParams) -> float:
    """Inverse of :func:`monomer_rescale`."""
    return 1.0 + params.epsilon + u / critical_size(params)


def load_config(path):
    """Read a ``key = value`` parameter file.

    Lines starting with ``#`` (or inline ``#`` suffixes) are comments.
    Recognized keys: alpha, gamma, q, epsilon, eta, r.  Fractional values
    like ``1/3`` are parsed exactly.
    """
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in CONFIG_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = parse_number(value)
    return values
