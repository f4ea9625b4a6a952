"""Lyapunov-Schmidt reduction about the critical point ``0``.

``Psi`` inverts ``f -> H(f) + Pi_0 f`` near zero (Newton's method); composing
with the neutral injection gives the reduced functional
``A_fin(a) = A(Psi(iota_0(a)))`` whose critical points parametrize nearby
critical points of the full functional.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral_core import EigenSystem, iota_zero, mode_coefficients
from .variational import DomainError, GradientSplit, evaluate, gradient, gradient_jacobian

__all__ = [
    "NeighborhoodExceededError",
    "ReducedFunctional",
    "psi_solve",
    "a_fin",
    "grad_a_fin",
    "check_integrability",
    "critical_set_sample",
    "sample_critical_set",
]

CRITICAL_THRESHOLD = 1e-8


class NeighborhoodExceededError(RuntimeError):
    """Newton's method for Psi stalled or left the graphical domain: the data lies outside the inversion neighborhood."""


@dataclass(frozen=True)
class ReducedFunctional:
    split: GradientSplit
    es: EigenSystem
    newton_tol: float = 1e-10

    @property
    def dimension(self) -> int:
        return self.es.nullity

    def __call__(self, a):
        """Return ``(Psi(iota_0(a)), A_fin(a))``."""
        w = iota_zero(self.es, a)
        f = psi_solve(self.split, self.es, w, guess=w, tol=self.newton_tol)
        return f, float(evaluate(self.split.functional, self.split.grid, f))


def _neutral_projector(es: EigenSystem) -> np.ndarray:
    basis = es.phis[es.neutral]
    return es.grid.h * basis.T @ basis


def psi_solve(split: GradientSplit, es: EigenSystem, w, guess=None, tol: float = 1e-10,
              max_iter: int = 30, history: list | None = None):
    """Solve ``H(f) + Pi_0 f = w`` by Newton's method starting from ``guess``.

    Residual L^2 norms are appended to ``history`` when a list is given.
    """
    grid = split.grid
    w = np.asarray(w, dtype=float)
    f = np.zeros(grid.n) if guess is None else np.array(guess, dtype=float)
    P0 = _neutral_projector(es)
    fn = split.functional

    def residual(v):
        return gradient(fn, grid, v) + P0 @ v - w

    trail = []
    try:
        r = residual(f)
        res = float(grid.norm(r))
        trail.append(res)
        stalled = 0
        for _ in range(max_iter):
            if res <= tol:
                break
            J = gradient_jacobian(fn, grid, f) + P0
            f = f - np.linalg.solve(J, r)
            r = residual(f)
            new = float(grid.norm(r))
            trail.append(new)
            stalled = stalled + 1 if new > 0.5 * res else 0
            res = new
            if stalled >= 3:
                break
    except DomainError as exc:
        raise NeighborhoodExceededError(f"Newton iterate left the graphical domain: {exc}") from exc
    finally:
        if history is not None:
            history.extend(trail)
    if not res <= tol:
        raise NeighborhoodExceededError(f"Newton residual {res:.3g} did not reach {tol:g}")
    return f


def a_fin(reduced: ReducedFunctional, a) -> float:
    return reduced(a)[1]


def grad_a_fin(reduced: ReducedFunctional, a, step: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of ``A_fin``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    out = np.empty(a.size)
    for i in range(a.size):
        e = np.zeros(a.size)
        e[i] = step
        out[i] = (a_fin(reduced, a + e) - a_fin(reduced, a - e)) / (2 * step)
    return out


def critical_set_sample(reduced: ReducedFunctional, a) -> dict:
    f, value = reduced(a)
    grad = float(reduced.split.grid.norm(gradient(reduced.split.functional, reduced.split.grid, f)))
    return {"a": np.atleast_1d(a).tolist(), "field": f, "A_fin": value,
            "gradient_norm": grad, "critical": grad <= CRITICAL_THRESHOLD}


def sample_critical_set(reduced: ReducedFunctional, radius: float = 0.1, points: int = 5) -> list[dict]:
    """Sample of ``{|a| <= radius}``: a segment for one neutral direction, a
    ``points x points`` square for two."""
    if reduced.dimension == 1:
        return [critical_set_sample(reduced, [a]) for a in np.linspace(-radius, radius, points)]
    if reduced.dimension != 2:
        raise ValueError("sampling is implemented for one or two neutral directions")
    side = np.linspace(-radius / np.sqrt(2), radius / np.sqrt(2), points)
    rows = []
    for a1 in side:
        for a2 in side:
            rows.append(critical_set_sample(reduced, [a1, a2]))
    return rows


def check_integrability(reduced: ReducedFunctional, directions, scales=(0.1, 0.05, 0.025)) -> list[dict]:
    """For each Jacobi field ``phi`` build ``f_t = Psi(iota_0(t a_hat))``.

    Reports ``max_t |A(f_t) - A(0)|`` and the decay of ``||f_t / t - phi||``.
    """
    es = reduced.es
    grid = reduced.split.grid
    base = float(evaluate(reduced.split.functional, grid, np.zeros(grid.n)))
    reports = []
    for phi in directions:
        phi = np.asarray(phi, dtype=float)
        coords = mode_coefficients(es, phi)[es.neutral]
        if not np.linalg.norm(coords) > 0:
            raise ValueError("direction has no neutral component")
        gaps, devs = [], []
        for t in scales:
            f, value = reduced(t * coords)
            gaps.append(abs(value - base))
            devs.append(float(grid.norm(f / t - phi)))
        order = float(np.polyfit(np.log(scales), np.log(devs), 1)[0]) if all(d > 0 for d in devs) else np.inf
        reports.append({
            "coordinates": coords.tolist(),
            "scales": list(scales),
            "value_gaps": gaps,
            "max_value_gap": max(gaps),
            "deviations": devs,
            "deviation_order": order,
        })
    return reports
