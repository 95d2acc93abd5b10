"""Method-of-steps time integration for networks of delay-coupled oscillators.

Both the point-scatterer system and the discretized surface equation share the
form

    mass_i * x_i''(t) + x_i(t) + sum_j c_ij * x_j''(t - tau_ij) = f_i(t),
    x(0) = x'(0) = 0,

a neutral system: the delayed terms act on the highest derivative.  The
acceleration history is therefore stored explicitly at the grid nodes and
interpolated with cubic Hermite polynomials whose slopes (third derivatives)
come from third-order finite-difference stencils.  With all delays bounded
below by tau_min > 0 and h <= 0.5 * tau_min, every delayed query -- including
ones issued from internal Runge-Kutta stage times -- lands strictly inside the
already-computed past.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, DivergenceError, SolverError, UsageError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, T] with steps = ceil(T/h) nodes past zero."""

    T: float
    h: float
    steps: int

    @staticmethod
    def fit(T: float, target_h: float) -> "TimeGrid":
        if T <= 0 or target_h <= 0:
            raise ConfigError("horizon and step must be positive")
        steps = int(np.ceil(T / target_h - 1e-12))
        return TimeGrid(T=T, h=T / steps, steps=steps)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.h


def _hermite(v0, v1, s0, s1, theta, h):
    t2 = theta * theta
    t3 = t2 * theta
    return (
        (2 * t3 - 3 * t2 + 1) * v0
        + (t3 - 2 * t2 + theta) * h * s0
        + (-2 * t3 + 3 * t2) * v1
        + (t3 - t2) * h * s1
    )


class Trace:
    """Dense solver output: values, rates, accelerations and slope estimates.

    ``value_at``/``accel_at`` interpolate with cubic Hermite polynomials;
    queries at negative times return exactly zero (zero causal history).
    """

    def __init__(self, times: np.ndarray, value: np.ndarray, rate: np.ndarray,
                 acc: np.ndarray, acc_slope: np.ndarray):
        self.times = times
        self.value = value
        self.rate = rate
        self.acc = acc
        self.acc_slope = acc_slope
        self.h = float(times[1] - times[0])
        self.horizon = float(times[-1])

    @property
    def n_nodes(self) -> int:
        return self.value.shape[1]

    def _interp(self, tq, cols, base, slope, upto=None):
        tq = np.asarray(tq, dtype=float)
        cols = np.broadcast_to(np.asarray(cols, dtype=int), tq.shape)
        out = np.zeros(tq.shape)
        live = tq > 0.0
        if not live.any():
            return out
        tql = tq[live]
        if np.any(tql > self.horizon * (1 + 1e-12)):
            raise UsageError("interpolation query beyond the trace horizon")
        k = (tql / self.h).astype(int)
        if upto is not None and np.any(k + 1 > upto):
            raise SolverError("history gap: delayed query ahead of computed nodes")
        k = np.minimum(k, len(self.times) - 2)
        theta = tql / self.h - k
        cl = cols[live]
        out[live] = _hermite(base[k, cl], base[k + 1, cl],
                             slope[k, cl], slope[k + 1, cl], theta, self.h)
        return out

    def value_at(self, tq, cols):
        """Cubic Hermite interpolation of x using (value, rate)."""
        return self._interp(tq, cols, self.value, self.rate)

    def accel_at(self, tq, cols, upto=None):
        """Cubic Hermite interpolation of x'' using stored slope estimates."""
        return self._interp(tq, cols, self.acc, self.acc_slope, upto=upto)


class DelayNetwork:
    """mass_i x_i'' + x_i + sum_j c_ij x_j''(t - tau_ij) = f_i(t)."""

    def __init__(self, masses: np.ndarray, coupling: np.ndarray,
                 delays: np.ndarray, forcing: Callable[[float], np.ndarray]):
        self.masses = np.asarray(masses, dtype=float)
        self.coupling = np.asarray(coupling, dtype=float)
        self.delays = np.asarray(delays, dtype=float)
        self.forcing = forcing
        self.n = len(self.masses)
        if np.any(self.masses <= 0):
            raise ConfigError("all oscillator masses must be positive")
        if self.coupling.shape != (self.n, self.n) or self.delays.shape != (self.n, self.n):
            raise ConfigError("coupling/delay matrices must be n x n")
        if np.any(np.abs(np.diag(self.coupling)) > 0):
            raise ConfigError("coupling diagonal must vanish")
        self._iu, self._ju = np.nonzero(self.coupling)
        self._cpair = self.coupling[self._iu, self._ju]
        self._tpair = self.delays[self._iu, self._ju]
        if len(self._tpair) and np.any(self._tpair <= 0):
            raise ConfigError("off-diagonal delays must be strictly positive")

    @property
    def min_delay(self) -> float:
        return float(self._tpair.min()) if len(self._tpair) else np.inf

    def _delayed_sum(self, t: float, trace: Trace, upto: int) -> np.ndarray:
        if not len(self._iu):
            return np.zeros(self.n)
        vals = trace.accel_at(t - self._tpair, self._ju, upto=upto)
        return np.bincount(self._iu, weights=vals * self._cpair, minlength=self.n)

    def accel_all(self, t: float, y: np.ndarray, trace: Trace, upto: int) -> np.ndarray:
        return (self.forcing(t) - y - self._delayed_sum(t, trace, upto)) / self.masses

    def acceleration(self, m: int, t: float, state: np.ndarray, trace: Trace) -> float:
        """Acceleration of oscillator m given the full state vector at time t."""
        return float(self.accel_all(t, np.asarray(state, dtype=float), trace,
                                    upto=len(trace.times) - 1)[m])

    def solve(self, grid: TimeGrid) -> Trace:
        """Classical RK4 on (x, x') with delayed accelerations from history."""
        if len(self._tpair) and grid.h > 0.5 * self.min_delay * (1 + 1e-12):
            raise ConfigError(
                f"step h={grid.h} exceeds half the minimum delay {self.min_delay}"
            )
        n, h = self.n, grid.h
        steps = grid.steps
        times = grid.times
        Y = np.zeros((steps + 1, n))
        V = np.zeros((steps + 1, n))
        A = np.zeros((steps + 1, n))
        S = np.zeros((steps + 1, n))
        trace = Trace(times, Y, V, A, S)
        A[0] = self.accel_all(0.0, Y[0], trace, upto=0)
        for ns in range(steps):
            t = times[ns]
            y, v = Y[ns], V[ns]
            k1v = self.accel_all(t, y, trace, upto=ns)
            k1y = v
            k2y = v + 0.5 * h * k1v
            k2v = self.accel_all(t + 0.5 * h, y + 0.5 * h * k1y, trace, upto=ns)
            k3y = v + 0.5 * h * k2v
            k3v = self.accel_all(t + 0.5 * h, y + 0.5 * h * k2y, trace, upto=ns)
            k4y = v + h * k3v
            k4v = self.accel_all(t + h, y + h * k3y, trace, upto=ns)
            Y[ns + 1] = y + h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
            V[ns + 1] = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
            if not np.all(np.isfinite(Y[ns + 1])):
                raise DivergenceError(ns + 1)
            mn = ns + 1
            A[mn] = self.accel_all(times[mn], Y[mn], trace, upto=ns)
            # third-order slope stencils; the provisional newest-node slope is
            # finalized one step later, before any delayed query can reach it
            if mn >= 3:
                S[mn] = (11 * A[mn] - 18 * A[mn - 1] + 9 * A[mn - 2] - 2 * A[mn - 3]) / (6 * h)
                S[mn - 1] = (2 * A[mn] + 3 * A[mn - 1] - 6 * A[mn - 2] + A[mn - 3]) / (6 * h)
            elif mn == 2:
                S[2] = (3 * A[2] - 4 * A[1] + A[0]) / (2 * h)
                S[1] = (A[2] - A[0]) / (2 * h)
            else:
                S[1] = (A[1] - A[0]) / h
                S[0] = S[1]
        return trace


def retarded_superposition(eval_fn, anchors: np.ndarray, coeffs: np.ndarray,
                           c0: float, x: np.ndarray, t) -> np.ndarray:
    """sum_j coeffs_j / (4 pi |x - z_j|) * g_j(t - |x - z_j| / c0).

    ``eval_fn(tq, cols)`` supplies the retarded samples (a Trace method).
    Returns an array shaped like ``t``.
    """
    x = np.asarray(x, dtype=float).reshape(3)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    r = np.linalg.norm(anchors - x, axis=1)
    tq = t_arr[:, None] - (r / c0)[None, :]
    cols = np.broadcast_to(np.arange(len(anchors)), tq.shape)
    g = eval_fn(tq, cols)
    return g @ (coeffs / (4.0 * np.pi * r))
