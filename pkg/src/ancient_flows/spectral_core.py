"""Discrete Jacobi operator, its eigensystem, spectral projections and
parabolic Hoelder norms."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .trajectory import FlowTrajectory
from .variational import PeriodicGrid

__all__ = [
    "DiscreteOperator",
    "EigenSystem",
    "ResolutionError",
    "eigendecompose",
    "mode_coefficients",
    "project_unstable",
    "project_neutral",
    "project_stable",
    "iota_minus",
    "iota_zero",
    "holder_seminorm",
    "parabolic_holder_norm",
    "weighted_norm",
    "export_eigensystem",
]


class ResolutionError(ValueError):
    """Trajectory sampled too coarsely for discrete difference quotients."""


@dataclass(frozen=True)
class DiscreteOperator:
    grid: PeriodicGrid
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (self.grid.n, self.grid.n):
            raise ValueError("operator matrix does not match the grid")
        scale = np.linalg.norm(m)
        if np.linalg.norm(m - m.T) > 1e-12 * max(scale, 1.0):
            raise ValueError("operator is not symmetric")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __call__(self, u):
        return np.asarray(u, dtype=float) @ self.matrix.T


@dataclass(frozen=True)
class EigenSystem:
    """Eigenpairs of ``-L``: ``lambdas`` ascending, ``phis[j]`` the j-th mode.

    Modes are orthonormal for the grid inner product.  ``index`` counts
    eigenvalues below ``-zero_tol``, ``nullity`` those within ``zero_tol``.
    """

    grid: PeriodicGrid
    lambdas: np.ndarray
    phis: np.ndarray
    index: int
    nullity: int
    zero_tol: float

    @property
    def unstable(self) -> slice:
        return slice(0, self.index)

    @property
    def neutral(self) -> slice:
        return slice(self.index, self.index + self.nullity)

    @property
    def stable(self) -> slice:
        return slice(self.index + self.nullity, None)

    @property
    def first_stable_lambda(self) -> float:
        return float(self.lambdas[self.index + self.nullity])


def eigendecompose(L: DiscreteOperator, zero_tol: float | None = None) -> EigenSystem:
    """Full symmetric eigensolve of ``-L``.

    Each eigenvector is flipped so its first entry of largest magnitude is
    positive.  Degenerate pairs come in solver order; treat them as subspaces.
    """
    grid = L.grid
    try:
        lam, vec = np.linalg.eigh(-L.matrix)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"symmetric eigensolve failed: {exc}") from exc
    order = np.argsort(lam, kind="stable")
    lam = lam[order]
    phis = vec[:, order].T / np.sqrt(grid.h)
    lead = np.argmax(np.abs(phis), axis=1)
    signs = np.sign(phis[np.arange(phis.shape[0]), lead])
    phis = phis * signs[:, None]
    if zero_tol is None:
        zero_tol = 1e-6 * float(np.max(np.abs(lam)))
    index = int(np.sum(lam < -zero_tol))
    nullity = int(np.sum(np.abs(lam) <= zero_tol))
    lam.setflags(write=False)
    phis.setflags(write=False)
    return EigenSystem(grid, lam, phis, index, nullity, float(zero_tol))


def mode_coefficients(es: EigenSystem, u) -> np.ndarray:
    """``u_j = <u, phi_j>`` for every mode (last axis indexes modes)."""
    return es.grid.h * (np.asarray(u, dtype=float) @ es.phis.T)


def _project(es: EigenSystem, u, sl: slice):
    basis = es.phis[sl]
    coeffs = es.grid.h * (np.asarray(u, dtype=float) @ basis.T)
    return coeffs @ basis


def project_unstable(es: EigenSystem, u):
    return _project(es, u, es.unstable)


def project_neutral(es: EigenSystem, u):
    return _project(es, u, es.neutral)


def project_stable(es: EigenSystem, u):
    return _project(es, u, es.stable)


def iota_minus(es: EigenSystem, a, t):
    """``sum_j a_j exp(-lambda_j t) phi_j`` for times ``t <= 0`` (scalar or array)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.size != es.index:
        raise ValueError(f"expected {es.index} unstable coordinates, got {a.size}")
    t = np.asarray(t, dtype=float)
    if np.any(t > 0):
        raise ValueError("iota_minus is defined for t <= 0 only")
    lam = es.lambdas[es.unstable]
    weights = a * np.exp(-np.multiply.outer(t, lam))
    return weights @ es.phis[es.unstable]


def iota_zero(es: EigenSystem, a):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.size != es.nullity:
        raise ValueError(f"expected {es.nullity} neutral coordinates, got {a.size}")
    return a @ es.phis[es.neutral]


# --- parabolic Hoelder norms -------------------------------------------------


def _circle_distance(grid: PeriodicGrid, theta):
    d = np.abs(theta[:, None] - theta[None, :])
    return np.minimum(d, grid.length - d)


def _subsample(count, cap):
    if count <= cap:
        return np.arange(count)
    return np.unique(np.linspace(0, count - 1, cap).round().astype(int))


def holder_seminorm(grid: PeriodicGrid, times, values, exponent, max_times=24, max_points=64):
    """Largest difference quotient ``|v(p,t)-v(q,s)| / (d(p,q)^a + |t-s|^(a/2))``.

    Pairs are taken over a subsample of at most ``max_times`` x ``max_points``
    space-time nodes.
    """
    values = np.asarray(values, dtype=float)
    ti = _subsample(values.shape[0], max_times)
    pi = _subsample(values.shape[1], max_points)
    v = values[np.ix_(ti, pi)]
    t = np.asarray(times, dtype=float)[ti]
    ds = _circle_distance(grid, grid.theta[pi]) ** exponent
    dt = np.abs(t[:, None] - t[None, :]) ** (exponent / 2.0)
    den = dt[:, :, None, None] + ds[None, None, :, :]
    num = np.abs(v[:, None, :, None] - v[None, :, None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(den > 0, num / den, 0.0)
    return float(np.max(q))


def _components(traj: FlowTrajectory, k: int):
    if k not in (0, 1, 2):
        raise ValueError("Hoelder order k must be 0, 1 or 2")
    u = traj.fields
    sups = [u]
    if k == 0:
        semis = [u]
    elif k == 1:
        ux = traj.grid.d1(u)
        sups.append(ux)
        semis = [ux]
    else:
        ux = traj.grid.d1(u)
        uxx = traj.grid.d2(u)
        ut = traj.time_derivative()
        sups += [ux, uxx, ut]
        semis = [uxx, ut]
    return sups, semis


def _check_sampling(traj: FlowTrajectory, k: int):
    if traj.times.size < 2:
        raise ResolutionError("trajectory needs at least two time samples")
    if traj.dt > 0.25 + 1e-12:
        raise ResolutionError(f"time step {traj.dt:g} gives fewer than 4 samples per unit time")
    if k == 2 and traj.times.size < 3:
        raise ResolutionError("order-2 norm needs at least three time samples")


def _norm_on_rows(traj, rows, sups, semis, exponent, caps):
    total = 0.0
    for arr in sups:
        total += float(np.max(np.abs(arr[rows])))
    times = traj.times[rows]
    for arr in semis:
        total += holder_seminorm(traj.grid, times, arr[rows], exponent, *caps)
    return total


def parabolic_holder_norm(traj: FlowTrajectory, k: int, exponent: float, max_times=24, max_points=64):
    """Discrete ``C^{k,theta}_P`` norm over the whole sampled space-time domain."""
    if not 0 < exponent < 1:
        raise ValueError("Hoelder exponent must lie in (0, 1)")
    _check_sampling(traj, k)
    sups, semis = _components(traj, k)
    rows = np.arange(traj.times.size)
    return _norm_on_rows(traj, rows, sups, semis, exponent, (max_times, max_points))


def weighted_norm(traj: FlowTrajectory, k: int, exponent: float, rate: float,
                  window_step: float = 0.5, max_times=16, max_points=48):
    """``sup_t exp(-rate t) ||u||_{C^{k,theta}_P(window [t-1, t])}``.

    Window end points run from the last sample time backwards in steps of
    ``window_step`` while the window stays inside the trajectory.
    """
    if not 0 < exponent < 1:
        raise ValueError("Hoelder exponent must lie in (0, 1)")
    _check_sampling(traj, k)
    t0, t1 = float(traj.times[0]), float(traj.times[-1])
    if t1 - t0 < 1.0 - 1e-9:
        raise ResolutionError("weighted norm needs a trajectory spanning at least one time unit")
    sups, semis = _components(traj, k)
    pad = 1e-9
    best = 0.0
    t_end = t1
    while t_end - 1.0 >= t0 - pad:
        rows = np.nonzero((traj.times >= t_end - 1.0 - pad) & (traj.times <= t_end + pad))[0]
        val = np.exp(-rate * t_end) * _norm_on_rows(traj, rows, sups, semis, exponent, (max_times, max_points))
        best = max(best, val)
        t_end -= window_step
    return best


def export_eigensystem(es: EigenSystem, directory, stem: str = "spectrum"):
    """Write ``<stem>.csv`` (j, lambda_j) and ``<stem>_modes.csv`` (theta, phi_1..phi_n)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    eig_path = directory / f"{stem}.csv"
    with eig_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "lambda_j"])
        for j, lam in enumerate(es.lambdas, start=1):
            w.writerow([j, f"{lam:.17g}"])
    modes_path = directory / f"{stem}_modes.csv"
    with modes_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta"] + [f"phi_{j}" for j in range(1, es.phis.shape[0] + 1)])
        for i, th in enumerate(es.grid.theta):
            w.writerow([f"{th:.17g}"] + [f"{v:.17g}" for v in es.phis[:, i]])
    return eig_path, modes_path
