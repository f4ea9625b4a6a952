"""Ancient solutions of ``u_t = L u + h`` on ``(-inf, 0]`` by per-mode Duhamel formulas.

Unstable modes are integrated backward from their prescribed value at ``t = 0``;
neutral and stable modes forward from ``-T_max``, with the part of the
history before ``-T_max`` replaced by an exponential extrapolation of the
forcing and certified by the declared decay bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .spectral_core import EigenSystem, iota_minus, mode_coefficients
from .trajectory import FlowTrajectory

__all__ = [
    "InadmissibleForcingError",
    "HorizonTooShortError",
    "Forcing",
    "LinearAncientSolution",
    "time_grid",
    "solve_linear_ancient",
    "linear_residual",
    "verify_linear_bound",
]


class InadmissibleForcingError(ValueError):
    pass


class HorizonTooShortError(ValueError):
    pass


@dataclass(frozen=True)
class Forcing:
    """Forcing ``h(theta, t)`` for ``t <= 0`` with decay certificate ``rate``.

    ``fn`` maps ``(theta[None, :], t[:, None])`` to an array of shape
    ``(n_times, n)``.  ``bound`` is the declared ``sup exp(-rate t) ||h||``;
    if omitted it is measured on the samples.
    """

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    rate: float
    bound: float | None = None

    @classmethod
    def from_samples(cls, samples, rate: float, bound: float | None = None) -> "Forcing":
        samples = np.asarray(samples, dtype=float)
        return cls(lambda theta, t: samples, rate, bound)

    @classmethod
    def zero(cls, rate: float = 1.0) -> "Forcing":
        return cls(lambda theta, t: np.zeros(np.broadcast(theta, t).shape), rate, 0.0)

    def sample(self, grid, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        vals = np.asarray(self.fn(grid.theta[None, :], times[:, None]), dtype=float)
        return np.broadcast_to(vals, (times.size, grid.n))

    def certified_bound(self, grid, times, samples=None) -> float:
        if samples is None:
            samples = self.sample(grid, times)
        measured = float(np.max(np.exp(-self.rate * times) * grid.norm(samples)))
        if self.bound is None:
            return measured
        if measured > self.bound * (1 + 1e-9) + 1e-300:
            raise InadmissibleForcingError(
                f"sampled exp(-rate t)||h|| = {measured:.3g} exceeds the declared bound {self.bound:.3g}"
            )
        return float(self.bound)


@dataclass(frozen=True)
class LinearAncientSolution:
    trajectory: FlowTrajectory
    a: np.ndarray
    coefficients: np.ndarray  # (n_times, n_modes)
    forcing: np.ndarray  # sampled h, (n_times, n)
    eigensystem: EigenSystem
    tail_bound: float


def time_grid(T_max: float, dt: float) -> np.ndarray:
    steps = int(round(T_max / dt))
    if steps < 2 or abs(steps * dt - T_max) > 1e-9 * T_max:
        raise ValueError("T_max must be a positive multiple of dt (at least two steps)")
    return np.linspace(-T_max, 0.0, steps + 1)


def _phi1(mu):
    """``(1 - exp(-mu)) / mu`` with a series near zero."""
    mu = np.asarray(mu, dtype=float)
    small = np.abs(mu) < 1e-3
    safe = np.where(small, 1.0, mu)
    out = -np.expm1(-safe) / safe
    series = 1 - mu / 2 + mu**2 / 6 - mu**3 / 24 + mu**4 / 120
    return np.where(small, series, out)


def _g1(mu):
    """``int_0^1 exp(-mu x) x dx``."""
    mu = np.asarray(mu, dtype=float)
    small = np.abs(mu) < 1e-3
    safe = np.where(small, 1.0, mu)
    out = (-np.expm1(-safe) - safe * np.exp(-safe)) / safe**2
    series = 0.5 - mu / 3 + mu**2 / 8 - mu**3 / 30 + mu**4 / 144
    return np.where(small, series, out)


def solve_linear_ancient(es: EigenSystem, a, forcing: Forcing, T_max: float, dt: float,
                         tail_tol: float = 1e-6, samples=None) -> LinearAncientSolution:
    """Duhamel solution with trace ``Pi_-(u(., 0)) = iota_-(a)(., 0)``.

    Time integrals use exact exponential weights against the piecewise-linear
    interpolant of each forcing coefficient (second order in ``dt`` for every
    mode, including stiff ones).
    """
    if not forcing.rate > 0:
        raise InadmissibleForcingError(f"forcing decay rate must be positive, got {forcing.rate}")
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.size != es.index:
        raise ValueError(f"expected {es.index} unstable coordinates, got {a.size}")
    grid = es.grid
    times = time_grid(T_max, dt)
    h = forcing.sample(grid, times) if samples is None else np.asarray(samples, dtype=float)
    if h.shape != (times.size, grid.n):
        raise ValueError("forcing samples do not match the time grid")
    bound = forcing.certified_bound(grid, times, h)

    lam = es.lambdas
    hj = mode_coefficients(es, h)
    coeffs = np.empty_like(hj)
    nt = times.size

    I = es.index
    tail = 0.0
    if I > 0:
        lu = lam[:I]
        nu = -lu * dt
        decay = np.exp(-nu)
        w_next = dt * _g1(nu)
        w_here = dt * (_phi1(nu) - _g1(nu))
        coeffs[-1, :I] = a
        for k in range(nt - 2, -1, -1):
            coeffs[k, :I] = decay * coeffs[k + 1, :I] - (w_here * hj[k, :I] + w_next * hj[k + 1, :I])

    ls = lam[I:]
    if ls.size:
        if np.any(ls + forcing.rate <= 0):
            raise InadmissibleForcingError("forcing decays too slowly for the neutral/stable modes")
        mu = ls * dt
        decay = np.exp(-mu)
        w_here = dt * _g1(mu)
        w_next = dt * (_phi1(mu) - _g1(mu))
        # history before -T_max: forcing continued as h(-T_max) exp(rate (t + T_max))
        coeffs[0, I:] = hj[0, I:] / (ls + forcing.rate)
        tail = float(bound * np.exp(-forcing.rate * T_max) / np.min(ls + forcing.rate))
        if tail > tail_tol:
            raise HorizonTooShortError(
                f"tail estimate {tail:.3g} at t = -{T_max:g} exceeds {tail_tol:g}; lengthen the horizon"
            )
        for k in range(nt - 1):
            coeffs[k + 1, I:] = decay * coeffs[k, I:] + w_here * hj[k, I:] + w_next * hj[k + 1, I:]

    fields = coeffs @ es.phis
    traj = FlowTrajectory(grid, times, fields)
    return LinearAncientSolution(traj, a, coeffs, h, es, tail)


def linear_residual(sol: LinearAncientSolution, L) -> float:
    """Max over interior times of ``||(u(t+dt)-u(t-dt))/2dt - L u(t) - h(t)||_L2``."""
    traj = sol.trajectory
    u = traj.fields
    dudt = (u[2:] - u[:-2]) / (2 * traj.dt)
    res = dudt - L(u[1:-1]) - sol.forcing[1:-1]
    return float(np.max(traj.grid.norm(res)))


def verify_linear_bound(sol: LinearAncientSolution, rate: float, rate_prime: float) -> dict:
    """Empirical constant in ``exp(-d' t)||u - iota_-(a)|| <= c [int |exp(-d t)||h|||^2]^(1/2)``."""
    es = sol.eigensystem
    lam_I = es.lambdas[es.index - 1] if es.index else np.inf
    limit = min(rate, -lam_I)
    if not 0 < rate_prime < limit:
        raise ValueError(f"need 0 < rate' < min(rate, -lambda_I) = {limit:g}")
    traj = sol.trajectory
    t = traj.times
    base = iota_minus(es, sol.a, t) if es.index else 0.0
    lhs = np.exp(-rate_prime * t) * traj.grid.norm(traj.fields - base)
    weighted = np.exp(-rate * t) * traj.grid.norm(sol.forcing)
    rhs = float(np.sqrt(np.trapezoid(weighted**2, t)))
    peak = float(np.max(lhs))
    if rhs == 0.0:
        constant = 0.0 if peak == 0.0 else np.inf
    else:
        constant = peak / rhs
    return {
        "lhs_max": peak,
        "t_at_max": float(t[int(np.argmax(lhs))]),
        "rhs_integral": rhs,
        "constant": constant,
        "rate": rate,
        "rate_prime": rate_prime,
    }
