"""Picard construction of the ancient solution ``S(a)`` leaving the critical point
along its unstable eigenspace."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linear_solver import Forcing, solve_linear_ancient, time_grid
from .spectral_core import EigenSystem, iota_minus, weighted_norm
from .trajectory import FlowTrajectory
from .variational import GradientSplit

__all__ = [
    "DivergenceError",
    "AncientSolution",
    "construct_ancient",
    "weighted_distance",
    "tangency_check",
    "verify_quadratic_envelope",
    "fit_order",
]


class DivergenceError(RuntimeError):
    """Picard iteration stopped contracting; try a smaller parameter."""


@dataclass(frozen=True)
class AncientSolution:
    trajectory: FlowTrajectory
    a: np.ndarray
    rate: float
    distances: list = field(default_factory=list)
    iterations: int = 0
    norm_order: int = 2
    exponent: float = 0.5

    @property
    def contraction_ratios(self) -> list:
        d = self.distances
        return [d[i + 1] / d[i] for i in range(len(d) - 1) if d[i] > 0]


def _diff(traj: FlowTrajectory, other) -> FlowTrajectory:
    other = other.fields if isinstance(other, FlowTrajectory) else other
    return FlowTrajectory(traj.grid, traj.times, traj.fields - other)


def weighted_distance(sol: AncientSolution, es: EigenSystem, **norm_kw) -> float:
    """``||S(a) - iota_-(a)||`` in the exponentially weighted parabolic Hoelder norm."""
    base = iota_minus(es, sol.a, sol.trajectory.times)
    return weighted_norm(_diff(sol.trajectory, base), sol.norm_order, sol.exponent, sol.rate, **norm_kw)


def construct_ancient(split: GradientSplit, es: EigenSystem, a, rate: float = 0.5, tol: float = 1e-10,
                      T_max: float = 10.0, dt: float = 1e-3, *, norm_order: int = 2, exponent: float = 0.5,
                      max_iter: int = 50, initial_scale: float = 1.0) -> AncientSolution:
    """Iterate ``u -> solve_linear_ancient(a, remainder(u))`` from ``initial_scale * iota_-(a)``.

    Stops once the weighted distance between successive iterates drops below
    ``tol``.  Three successive distance ratios >= 1 raise DivergenceError;
    leaving the graphical domain raises DomainError.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    lam_I = es.lambdas[es.index - 1] if es.index else -np.inf
    if es.index and not 0 < rate < -lam_I:
        raise ValueError(f"decay rate must lie in (0, {-lam_I:g})")
    times = time_grid(T_max, dt)
    u = initial_scale * (iota_minus(es, a, times) if es.index else np.zeros((times.size, es.grid.n)))
    current = FlowTrajectory(es.grid, times, u)
    distances: list[float] = []
    growing = 0
    for it in range(1, max_iter + 1):
        h = split.remainder(current.fields)
        forcing = Forcing.from_samples(h, rate=2.0 * rate)
        nxt = solve_linear_ancient(es, a, forcing, T_max, dt, samples=h).trajectory
        dist = weighted_norm(_diff(nxt, current), norm_order, exponent, rate)
        if distances and dist >= distances[-1] > 0:
            growing += 1
            if growing >= 3:
                raise DivergenceError(
                    f"no contraction for |a| = {np.linalg.norm(a):.3g} after {it} iterations; use a smaller |a|"
                )
        else:
            growing = 0
        distances.append(dist)
        current = nxt
        if dist < tol:
            break
    else:
        raise DivergenceError(f"no convergence to {tol:g} within {max_iter} iterations")
    return AncientSolution(current, a, rate, distances, it, norm_order, exponent)


def fit_order(scales, values) -> float:
    """Least-squares slope of ``log(values)`` against ``log(scales)``."""
    return float(np.polyfit(np.log(scales), np.log(values), 1)[0])


def tangency_check(split: GradientSplit, es: EigenSystem, direction, scales=(0.2, 0.1, 0.05), **kw) -> dict:
    """Decay in ``s`` of ``||(S(s a) - S(-s a)) / 2s - iota_-(a)||``."""
    direction = np.atleast_1d(np.asarray(direction, dtype=float))
    scales = [float(s) for s in scales]
    if any(s <= 0 for s in scales):
        raise ValueError("scales must be positive")
    rate = kw.get("rate", 0.5)
    values = []
    for s in scales:
        plus = construct_ancient(split, es, s * direction, **kw).trajectory
        minus = construct_ancient(split, es, -s * direction, **kw).trajectory
        quotient = (plus.fields - minus.fields) / (2 * s)
        base = iota_minus(es, direction, plus.times)
        values.append(weighted_norm(FlowTrajectory(plus.grid, plus.times, quotient - base), 2, 0.5, rate))
    halving = [values[i] / values[i + 1] for i in range(len(values) - 1)]
    return {"scales": scales, "deviations": values, "order": fit_order(scales, values), "halving_factors": halving}


def verify_quadratic_envelope(sols, es: EigenSystem) -> dict:
    """Measured ``mu = max ||S(a) - iota_-(a)|| / |a|^2`` over a family of solutions."""
    if len(sols) < 3:
        raise ValueError("need at least three solutions")
    sizes = np.array([np.linalg.norm(s.a) for s in sols])
    if len(np.unique(sizes)) < len(sizes):
        raise ValueError("solutions must have distinct |a|")
    order = np.argsort(sizes)
    sizes = sizes[order]
    dists = np.array([weighted_distance(sols[i], es) for i in order])
    ratios = dists / sizes**2
    return {
        "sizes": sizes.tolist(),
        "distances": dists.tolist(),
        "ratios": ratios.tolist(),
        "mu": float(np.max(ratios)),
        "ratio_spread": float(np.max(ratios) / np.min(ratios)),
        "fitted_exponent": fit_order(sizes, dists),
        "all_finite": bool(np.all(np.isfinite(dists))),
    }
