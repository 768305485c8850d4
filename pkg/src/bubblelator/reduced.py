"""Low-dimensional oracle models.

The closed four-moment ODE system (cluster number, area, radius, monomer
excess) obtained from the limit model at interface-limited growth with
size-independent removal, and the idealized sharp-peak sawtooth model where
a unit-speed delta mass of supercritical clusters is nucleated at threshold
and removed after a fixed transit length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import NumericalError, rk_step


@dataclass(frozen=True)
class MomentState:
    """Moments (number N, area A, radius R) and monomer excess u."""

    N: float
    A: float
    R: float
    u: float
    tau: float = 0.0

    def as_array(self):
        return np.array([self.N, self.A, self.R, self.u])


@dataclass(frozen=True)
class MomentTrace:
    tau: np.ndarray
    N: np.ndarray
    A: np.ndarray
    R: np.ndarray
    u: np.ndarray

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,N,A,R,u\n")
            for row in zip(self.tau, self.N, self.A, self.R, self.u):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def moment_rhs(eta: float):
    """Right side of the moment system; eta = 0 gives the sourceless variant."""
    def rhs(_t, y):
        N, A, R, u = y
        return np.array([math.exp(u) - eta * N,
                         2.0 / 3.0 * R - eta * A,
                         N / 3.0 - eta * R,
                         1.0 - A])
    return rhs


def simulate_moments(eta: float, initial: MomentState, horizon: float,
                     dtau: float, stride: int = 1,
                     u_abort: float = 50.0) -> MomentTrace:
    """Integrate the moment ODEs with classical RK4 at fixed step."""
    if eta < 0.0:
        raise ValueError(f"eta must be nonnegative, got {eta}")
    if horizon <= 0.0 or dtau <= 0.0:
        raise ValueError("horizon and dtau must be positive")
    rhs = moment_rhs(eta)
    n_steps = int(round(horizon / dtau))
    y = initial.as_array()
    out = [(initial.tau, *y)]
    for i in range(n_steps):
        y = rk_step(rhs, initial.tau + i * dtau, y, dtau, order=4)
        if y[3] > u_abort:
            raise NumericalError(
                f"u exceeded {u_abort} at tau={initial.tau + (i + 1) * dtau:g}")
        if (i + 1) % stride == 0 or i == n_steps - 1:
            out.append((initial.tau + (i + 1) * dtau, *y))
    cols = np.array(out).T
    return MomentTrace(cols[0], cols[1], cols[2], cols[3], cols[4])


def moment_steady_state(eta: float) -> MomentState:
    """Closed-form fixed point: A = 1, R = 3 eta / 2, N = 9 eta^2 / 2,
    u = log(9 eta^3 / 2)."""
    if eta <= 0.0:
        raise ValueError(f"steady state needs eta > 0, got {eta}")
    return MomentState(N=4.5 * eta ** 2, A=1.0, R=1.5 * eta,
                       u=math.log(4.5 * eta ** 3))


@dataclass(frozen=True)
class SharpPeakParams:
    """Sawtooth model data: peak mass f0 > 1, nucleation threshold,
    transit length L, and initial excess below threshold."""

    f0: float
    u_nucl: float
    L: float
    u_init: float

    def __post_init__(self):
        if self.f0 <= 1.0:
            raise ValueError(
                f"need f0 > 1, got {self.f0}: with f0 <= 1 the excess never "
                "falls after nucleation and the event sequence degenerates")
        if self.L <= 0.0:
            raise ValueError(f"transit length must be positive, got {self.L}")
        if self.u_init >= self.u_nucl:
            raise ValueError("initial excess must start below the threshold")


@dataclass(frozen=True)
class SharpPeakResult:
    """Exact piecewise-linear trajectory and the nucleation/removal log."""

    t: np.ndarray
    u: np.ndarray
    events: list  # (time, "nucleation" | "removal")

    def u_at(self, t):
        return np.interp(t, self.t, self.u)

    def nucleation_times(self):
        return [t for t, kind in self.events if kind == "nucleation"]

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,u\n")
            for t, u in zip(self.t, self.u):
                fh.write(f"{float(t)!r},{float(u)!r}\n")


def simulate_sharp_peak(params: SharpPeakParams, horizon: float) -> SharpPeakResult:
    """Event-driven exact integration of the sawtooth model.

    u rises at slope 1 until the threshold, a peak is logged and u falls at
    slope 1 - f0 while the peak transits length L; removal restores slope 1
    and the cycle repeats.  No time discretization: the returned breakpoints
    are exact up to rounding.  Simultaneous events are processed in time
    order with nucleation before removal.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    t, u = 0.0, params.u_init
    flights: list[float] = []  # pending removal times, sorted
    ts, us, events = [t], [u], []
    while t < horizon:
        slope = 1.0 - params.f0 * len(flights)
        t_removal = flights[0] if flights else math.inf
        if slope > 0.0 and u < params.u_nucl:
            t_nucl = t + (params.u_nucl - u) / slope
        elif slope > 0.0 and u >= params.u_nucl:
            t_nucl = t
        else:
            t_nucl = math.inf
        t_next = min(t_nucl, t_removal, horizon)
        u += slope * (t_next - t)
        t = t_next
        ts.append(t)
        us.append(u)
        if t >= horizon:
            break
        if t_nucl <= t_removal:
            events.append((t, "nucleation"))
            flights.append(t + params.L)
            flights.sort()
        else:
            events.append((t, "removal"))
            flights.pop(0)
    return SharpPeakResult(np.array(ts), np.array(us), events)
