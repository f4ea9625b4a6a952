"""Forward time stepping of the nonparametric flow, the parametric latitude ODE,
and mode-energy diagnostics along trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .spectral_core import EigenSystem, project_neutral, project_unstable
from .trajectory import BLOWN_UP, GRAPHICALITY_LOST, OK, FlowTrajectory
from .variational import DomainError, EllipticFunctional, PeriodicGrid, evaluate, gradient, gradient_split

__all__ = [
    "ModeEnergySeries",
    "LatitudeTrajectory",
    "evolve",
    "evolve_parametric_latitude",
    "mode_energies",
    "fit_decay_rate",
    "check_caccioppoli",
    "verify_mode_inequalities",
    "mode_energy_constant",
    "energy_identity",
]


def _stepper(L: np.ndarray, dt: float, c: float):
    return lu_factor(c * np.eye(L.shape[0]) - dt * L)


def _stabilizer_level(excess: float) -> int | None:
    """Quantize the stabilizing diffusion ``kappa`` to ``2**level`` (None: no stabilization needed)."""
    if excess <= 0.05:
        return None
    return math.ceil(math.log2(excess))


def evolve(functional: EllipticFunctional, grid: PeriodicGrid, u0, t0: float, t1: float, dt: float = 1e-3,
           *, max_change: float = 0.1, max_rejections: int = 10, save_every: int = 1) -> FlowTrajectory:
    """IMEX integration of ``u_t = H(u)`` from ``t0`` to ``t1``.

    Second-order backward differentiation with the Jacobi operator implicit
    and the remainder extrapolated explicitly; the start-up step is an IMEX
    trapezoid step.  Far from the critical point the leading coefficient
    ``A_qq(u)`` exceeds its value at 0; the excess ``kappa`` is then added to
    the implicit operator as ``kappa u''`` and subtracted explicitly, which keeps
    the explicit part non-stiff.  A step whose update is non-finite or larger
    than ``max_change`` is retried on halved sub-steps; after
    ``max_rejections`` halvings the partial trajectory is returned with status
    ``blown_up``.
    """
    if not t1 > t0:
        raise ValueError("need t1 > t0")
    split = gradient_split(functional, grid)
    L0 = split.L.matrix
    D2 = grid.d2_matrix()
    lead0 = functional.A_qq(grid.theta, np.zeros(grid.n), np.zeros(grid.n))
    R = split.remainder
    u = np.array(u0, dtype=float)
    functional.check_domain(u)
    nsteps = int(round((t1 - t0) / dt))
    if nsteps < 1 or abs(nsteps * dt - (t1 - t0)) > 1e-9 * (t1 - t0):
        raise ValueError("t1 - t0 must be a positive multiple of dt")

    cache: dict[tuple, tuple] = {}

    def factor(level, kind, h):
        key = (level, kind, h)
        if key not in cache:
            L = L0 if level is None else L0 + 2.0**level * D2
            c = {"bdf": 1.5, "cn": 1.0, "euler": 1.0}[kind]
            cache[key] = (_stepper(L, h, c), L)
        return cache[key]

    def level_for(v):
        lead = functional.A_qq(grid.theta, v, grid.d1(v))
        return _stabilizer_level(float(np.max(lead - lead0)))

    def explicit(v, rv, level):
        return rv if level is None else rv - 2.0**level * grid.d2(v)

    def euler_step(v, h, level):
        lu, _ = factor(level, "euler", h)
        return lu_solve(lu, v + h * explicit(v, R(v), level))

    def trapezoid_step(v, rv, level):
        lu, L = factor(level, "cn", dt / 2)
        pred = euler_step(v, dt, level)
        rhs = v + 0.5 * dt * (v @ L.T) + 0.5 * dt * (explicit(v, rv, level) + explicit(pred, R(pred), level))
        return lu_solve(lu, rhs)

    def substeps(v, level_count, level):
        h = dt / 2**level_count
        for _ in range(2**level_count):
            v = euler_step(v, h, level)
        return v

    times = [t0]
    saved = [u.copy()]
    prev = r_prev = None
    r_u = R(u)
    status, message = OK, ""
    for k in range(nsteps):
        try:
            level = level_for(u)
            if prev is None:
                new = trapezoid_step(u, r_u, level)
            else:
                lu, _ = factor(level, "bdf", dt)
                new = lu_solve(lu, 2.0 * u - 0.5 * prev
                               + dt * (2.0 * explicit(u, r_u, level) - explicit(prev, r_prev, level)))
            halvings = 0
            while not np.all(np.isfinite(new)) or np.max(np.abs(new - u)) > max_change:
                halvings += 1
                if halvings > max_rejections:
                    break
                new = substeps(u, halvings, level)
            if halvings > max_rejections:
                status, message = BLOWN_UP, f"step rejected {max_rejections} times at t = {t0 + k * dt:.6g}"
                break
            functional.check_domain(new)
            r_new = R(new)
        except DomainError as exc:
            status, message = GRAPHICALITY_LOST, str(exc)
            break
        if halvings:
            prev = r_prev = None  # restart the two-step history after a rejection
        else:
            prev, r_prev = u, r_u
        u, r_u = new, r_new
        if (k + 1) % save_every == 0:
            times.append(t0 + (k + 1) * dt)
            saved.append(u.copy())
    return FlowTrajectory(grid, np.array(times), np.array(saved), status, message)


@dataclass(frozen=True)
class LatitudeTrajectory:
    times: np.ndarray
    phi: np.ndarray
    extinction_time: float
    status: str = OK


def _rk4(f, y, t, h):
    k1 = f(t, y)
    k2 = f(t + h / 2, y + h / 2 * k1)
    k3 = f(t + h / 2, y + h / 2 * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve_parametric_latitude(phi0: float, t0: float, t1: float, dt: float = 1e-3,
                               phi_cutoff: float = math.pi / 2 - 0.05) -> LatitudeTrajectory:
    """Latitude circle moving by its geodesic curvature: ``dphi/dt = tan(phi)``.

    Classical RK4 in ``t`` while ``|phi| <= phi_cutoff``; each output step is
    split into sub-steps so that ``h * sec(phi)^2 <= 0.01`` near the pole.  The extinction time
    (``|phi| -> pi/2``) is obtained by continuing with RK4 in the angle
    variable on ``dt/dphi = cot(phi)``, which stays smooth up to the pole.
    """
    if not abs(phi0) < math.pi / 2:
        raise ValueError("need |phi0| < pi/2")
    nsteps = int(round((t1 - t0) / dt))
    times = [t0]
    vals = [phi0]
    phi = phi0
    status = OK
    for k in range(nsteps):
        m = max(1, math.ceil(dt / (0.01 * math.cos(phi) ** 2)))
        for i in range(m):
            phi = _rk4(lambda t, y: math.tan(y), phi, t0 + (k + i / m) * dt, dt / m)
        times.append(t0 + (k + 1) * dt)
        vals.append(phi)
        if abs(phi) > phi_cutoff:
            status = "extinct"
            break
    if phi == 0.0:
        t_ext = math.inf
    else:
        a = abs(phi)  # the flow is odd in phi
        steps = 2000
        hphi = (math.pi / 2 - a) / steps
        t = times[-1]
        for _ in range(steps):
            t = _rk4(lambda p, s: 1.0 / math.tan(p), t, a, hphi)
            a += hphi
        t_ext = t
    return LatitudeTrajectory(np.array(times), np.array(vals), t_ext, status)


@dataclass(frozen=True)
class ModeEnergySeries:
    times: np.ndarray
    U_minus: np.ndarray
    U_zero: np.ndarray
    U_plus: np.ndarray
    sigma: np.ndarray
    l2: np.ndarray


def mode_energies(es: EigenSystem, traj: FlowTrajectory) -> ModeEnergySeries:
    """Unstable, neutral and stable L^2 energies plus the discrete C^2 norm per time."""
    if not traj.ok:
        raise ValueError(f"trajectory status is {traj.status}")
    grid = traj.grid
    u = traj.fields
    um = project_unstable(es, u)
    u0 = project_neutral(es, u)
    up = u - um - u0
    return ModeEnergySeries(
        traj.times,
        grid.norm(um),
        grid.norm(u0),
        grid.norm(up),
        grid.c_norm(u, 2),
        grid.norm(u),
    )


def fit_decay_rate(series: ModeEnergySeries, window) -> dict:
    """Least-squares slope of ``log sigma`` on ``[t_a, t_b]``, plus per-mode slopes."""
    ta, tb = window
    keep = (series.times >= ta - 1e-12) & (series.times <= tb + 1e-12)
    if keep.sum() < 2:
        raise ValueError("window holds fewer than two samples")
    t = series.times[keep]

    def slope(vals):
        vals = vals[keep]
        if np.any(vals <= 0):
            raise ValueError("series must be positive on the window")
        coef, res, *_ = np.polyfit(t, np.log(vals), 1, full=True)
        rms = float(np.sqrt(res[0] / t.size)) if res.size else 0.0
        return float(coef[0]), rms

    s, rms = slope(series.sigma)
    modes = {}
    for name in ("U_minus", "U_zero", "U_plus"):
        vals = getattr(series, name)[keep]
        if np.all(vals > 0):
            modes[name] = slope(getattr(series, name))[0]
    return {"slope": s, "rate": abs(s), "residual": rms, "mode_slopes": modes}


def check_caccioppoli(traj: FlowTrajectory, smallness: float = 0.2) -> dict:
    """Max over time of ``||u||_{W^{1,2}} / ||u||_{L^2}``."""
    grid = traj.grid
    u = traj.fields
    l2 = grid.norm(u)
    if np.all(l2 == 0):
        return {"applicable": False, "ratio": None, "reason": "zero trajectory"}
    c1 = float(np.max(grid.c_norm(u, 1)))
    nz = l2 > 0
    w12 = np.sqrt(l2**2 + grid.norm(grid.d1(u)) ** 2)
    ratio = float(np.max(w12[nz] / l2[nz]))
    return {"applicable": True, "ratio": ratio, "max_c1": c1, "in_smallness_regime": c1 <= smallness}


def mode_energy_constant(series: ModeEnergySeries, n: int, floor: float | None = None) -> dict:
    """Smallest ``C`` with ``U_0 + U_+ <= C sigma U_-`` on the samples.

    Energies below ``floor * ||u||`` (default ``64 n`` machine epsilons) are
    indistinguishable from rounding of the projections and count as zero for
    ``constant``; ``raw_constant`` keeps them.
    """
    if floor is None:
        floor = 64 * n * np.finfo(float).eps
    rhs = series.sigma * series.U_minus
    nz = rhs > 0
    side = series.U_zero + series.U_plus
    raw = float(np.max(side[nz] / rhs[nz])) if nz.any() else 0.0
    cleaned = np.where(side <= floor * series.l2, 0.0, side)
    constant = float(np.max(cleaned[nz] / rhs[nz])) if nz.any() else 0.0
    return {"constant": constant, "raw_constant": raw, "floor": floor}


def verify_mode_inequalities(series: ModeEnergySeries, es: EigenSystem) -> dict:
    """Smallest constants making the three mode-energy differential inequalities
    hold on the samples, with ``sigma * ||u||`` as the right-hand side.

    Time derivatives are centered differences, so the end samples are dropped.
    """
    t = series.times
    if t.size < 3:
        raise ValueError("need at least three samples")
    dt = t[2:] - t[:-2]

    def d(v):
        return (v[2:] - v[:-2]) / dt

    mid = slice(1, -1)
    rhs = (series.sigma * series.l2)[mid]
    lam_I = es.lambdas[es.index - 1] if es.index else 0.0
    lam_s = es.first_stable_lambda
    nz = rhs > 0

    def worst(vals):
        vals = vals[nz]
        return float(max(0.0, np.max(vals / rhs[nz]))) if vals.size else 0.0

    unstable = worst(-(d(series.U_minus) + lam_I * series.U_minus[mid]))
    neutral = worst(np.abs(d(series.U_zero)))
    stable = worst(d(series.U_plus) + lam_s * series.U_plus[mid])
    return {"unstable_constant": unstable, "neutral_constant": neutral, "stable_constant": stable}


def energy_identity(functional: EllipticFunctional, traj: FlowTrajectory) -> dict:
    """Compare the functional's drop with the dissipated ``int ||u_t||^2 dt``."""
    vals = evaluate(functional, traj.grid, traj.fields)
    ut = traj.time_derivative()
    diss = float(np.trapezoid(traj.grid.norm(ut) ** 2, traj.times))
    drop = float(vals[-1] - vals[0])
    steps = np.diff(vals)
    return {
        "delta_A": drop,
        "dissipation": diss,
        "mismatch": abs(drop + diss),
        "relative_mismatch": abs(drop + diss) / abs(drop) if drop else 0.0,
        "max_increase": float(np.max(steps)) if steps.size else 0.0,
        "monotone": bool(np.all(steps <= 1e-12)),
    }
