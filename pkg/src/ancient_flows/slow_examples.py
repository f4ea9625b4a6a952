"""Rotationally symmetric metrics ``ds^2 + exp(2 f(s)) dtheta^2`` built from an
arrival function ``tau``, and the latitude circles ``{s = const}`` moving by
geodesic curvature.

With ``f(s) = -int_0^s dsigma / tau'(sigma)`` the circle at distance ``s``
from the geodesic ``{s = 0}`` moves by ``ds/dt = 1/tau'(s)``, so
``tau(s(t)) - t`` is constant: the flow reaches distance ``s`` at time
``tau(s)`` up to a shift and emerges from the geodesic as ``t -> -inf``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate, interpolate, special

from .variational import EllipticFunctional, register_functional, warped_length_functional

__all__ = [
    "InadmissibleArrivalError",
    "ArrivalFunction",
    "WarpedMetric",
    "LatitudeFlow",
    "builtin_arrival",
    "BUILTIN_ARRIVALS",
    "arrival_from_csv",
    "check_admissible",
    "build_warping",
    "latitude_flow",
    "arrival_time_check",
    "l1_hypothesis_audit",
    "log_decay_check",
    "register_warped_builtins",
]


class InadmissibleArrivalError(ValueError):
    def __init__(self, check: str, detail: str):
        super().__init__(f"{check}: {detail}")
        self.check = check


@dataclass(frozen=True)
class ArrivalFunction:
    """``tau: (0, 1] -> (-inf, 0]`` with ``tau' > 0``.

    ``inv_dtau`` (``1/tau'``) may be given separately when ``tau'`` overflows
    near 0; ``log_rate(y)`` is ``d(log s)/dt = 1/(s tau'(s))`` as a function
    of ``y = log s``, for flows that reach below the float range.  ``s_min`` is
    the left end of the domain where ``tau`` is known (0 for closed forms, the
    first table entry for tabulated data).
    """

    name: str
    tau: Callable
    dtau: Callable
    inv_dtau: Callable | None = None
    s_min: float = 0.0
    log_rate: Callable | None = None

    def speed(self, s):
        """``1/tau'(s)``."""
        if self.inv_dtau is not None:
            return self.inv_dtau(s)
        return 1.0 / self.dtau(s)

    def rate_in_log(self, y: float) -> float:
        if self.log_rate is not None:
            return float(self.log_rate(y))
        s = math.exp(y)
        return float(self.speed(s)) / s


def _exp_arrival():
    return ArrivalFunction("exp", np.log, lambda s: 1.0 / s, lambda s: s, log_rate=lambda y: 1.0)


def _poly_arrival():
    return ArrivalFunction("poly", lambda s: 1.0 - 1.0 / s, lambda s: 1.0 / s**2, lambda s: s**2,
                           log_rate=math.exp)


def _sublog_speed(s):
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(s > 0, s**2 * np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)


def _sublog_arrival():
    def tau(s):
        with np.errstate(divide="ignore", over="ignore"):
            return math.e - np.exp(1.0 / np.asarray(s, dtype=float))

    def dtau(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            return np.exp(1.0 / s) / s**2

    def log_rate(y):
        s = math.exp(y)
        return s * math.exp(-1.0 / s) if s > 0 else 0.0

    return ArrivalFunction("sublog", tau, dtau, _sublog_speed, log_rate=log_rate)


BUILTIN_ARRIVALS = {"exp": _exp_arrival, "poly": _poly_arrival, "sublog": _sublog_arrival}


def builtin_arrival(name: str) -> ArrivalFunction:
    try:
        return BUILTIN_ARRIVALS[name]()
    except KeyError:
        raise KeyError(f"unknown arrival function {name!r}; known: {sorted(BUILTIN_ARRIVALS)}") from None


def arrival_from_csv(path) -> ArrivalFunction:
    """Two-column CSV ``s, tau(s)`` (header optional), interpolated monotonically."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except ValueError:
                if rows:
                    raise
    if len(rows) < 4:
        raise InadmissibleArrivalError("table", "need at least four rows")
    s, tau = np.array(rows).T
    if np.any(np.diff(s) <= 0):
        raise InadmissibleArrivalError("table", "s must be strictly increasing")
    if np.any(np.diff(tau) <= 0):
        raise InadmissibleArrivalError("monotone", "tau must be strictly increasing")
    spline = interpolate.PchipInterpolator(s, tau, extrapolate=False)
    deriv = spline.derivative()
    return ArrivalFunction(Path(path).stem, spline, deriv, s_min=float(s[0]))


def check_admissible(arr: ArrivalFunction) -> dict:
    """Run the admissibility checks; raises InadmissibleArrivalError naming the first failure."""
    lo = max(arr.s_min, 1e-6)
    samples = np.geomspace(lo, 1.0, 200)
    with np.errstate(over="ignore", divide="ignore"):
        d = np.asarray(arr.dtau(samples), dtype=float)
    if not np.all(d > 0):
        raise InadmissibleArrivalError("positive derivative", "tau' <= 0 at some sample")
    end = float(arr.tau(1.0))
    if abs(end) > 1e-10:
        raise InadmissibleArrivalError("normalization", f"tau(1) = {end:.3g}, expected 0")

    decades = np.geomspace(lo, 1.0, max(3, int(round(-np.log10(lo))) + 1))
    with np.errstate(over="ignore"):
        vals = np.asarray(arr.tau(decades), dtype=float)
    if np.any(np.isnan(vals) | (vals == np.inf)):
        raise InadmissibleArrivalError("divergence at 0", "tau is not finite or -inf near 0")
    finite = vals[np.isfinite(vals)]  # -inf (overflow) only counts towards divergence
    drops = np.diff(finite)  # growth per decade; drops[0] is the one nearest s = 0
    if not np.all(drops > 0):
        raise InadmissibleArrivalError("divergence at 0", "tau is not increasing across decades")
    divergent = bool(vals[0] < -1e3 or (drops.size >= 2 and drops[0] >= 0.9 * drops[1]))
    if not divergent:
        raise InadmissibleArrivalError("divergence at 0", f"tau({lo:g}) = {vals[0]:.3g} and decrements shrink")

    coarse = _quad(arr.speed, arr.s_min, 1.0, 1e-8)
    fine = _quad(arr.speed, arr.s_min, 1.0, 1e-12)
    if not (np.isfinite(fine) and abs(coarse - fine) <= 1e-6 * max(1.0, abs(fine))):
        raise InadmissibleArrivalError("finite integral", f"int 1/tau' does not settle ({coarse:.6g} vs {fine:.6g})")
    return {"tau_at_1": end, "tau_at_lo": float(vals[0]), "integral": fine, "integral_coarse": coarse}


def _quad(fn, a, b, tol):
    val, _ = integrate.quad(lambda x: float(fn(x)), a, b, epsabs=tol, epsrel=tol, limit=500)
    return val


@dataclass(frozen=True)
class WarpedMetric:
    """Warping ``f(s) = -int_{s_min}^s dsigma/tau'`` tabulated by adaptive quadrature."""

    arrival: ArrivalFunction
    s_table: np.ndarray
    f_table: np.ndarray
    admissibility: dict = field(default_factory=dict)

    def f(self, s, tol: float = 1e-12):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.array([-_quad(self.arrival.speed, self.arrival.s_min, v, tol) for v in s.ravel()])
        return out.reshape(s.shape)

    def df(self, s):
        return -self.arrival.speed(s)


def build_warping(arr: ArrivalFunction, points: int = 101, tol: float = 1e-12) -> WarpedMetric:
    report = check_admissible(arr)
    s = np.linspace(max(arr.s_min, 0.0), 1.0, points)
    s[0] = arr.s_min
    # cumulative quadrature over consecutive cells
    pieces = [_quad(arr.speed, a, b, tol) for a, b in zip(s[:-1], s[1:])]
    f = -np.concatenate([[0.0], np.cumsum(pieces)])
    return WarpedMetric(arr, s, f, report)


@dataclass(frozen=True)
class LatitudeFlow:
    times: np.ndarray
    s: np.ndarray
    integral: np.ndarray  # int_{t0}^t s dt', signed
    status: str
    arrival: str


def _rk4(fn, t, y, h):
    k1 = fn(t, y)
    k2 = fn(t + h / 2, y + h / 2 * k1)
    k3 = fn(t + h / 2, y + h / 2 * k2)
    k4 = fn(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def latitude_flow(metric: WarpedMetric | ArrivalFunction, s0: float, t0: float, t1: float, dt: float,
                  rtol: float = 1e-13) -> LatitudeFlow:
    """Integrate ``ds/dt = 1/tau'(s)`` from ``t0`` to ``t1`` (either direction).

    The unknown is ``log s`` (relative accuracy in ``s``, no underflow on
    long backward runs).  Output on the uniform grid of spacing ``dt``; inside
    each output step RK4 runs with step-doubling error control (and local
    extrapolation).  The running integral of ``s`` is carried along.  Leaving ``(s_min, 1]`` stops the
    integration with status ``left_domain``.
    """
    arr = metric.arrival if isinstance(metric, WarpedMetric) else metric
    if not arr.s_min < s0 <= 1.0:
        raise ValueError(f"s0 must lie in ({arr.s_min:g}, 1]")
    nsteps = int(round(abs(t1 - t0) / dt))
    if nsteps < 1 or abs(nsteps * dt - abs(t1 - t0)) > 1e-9 * max(1.0, abs(t1 - t0)):
        raise ValueError("|t1 - t0| must be a positive multiple of dt")
    sign = 1.0 if t1 > t0 else -1.0
    H = sign * dt

    def rhs(t, y):
        return np.array([arr.rate_in_log(y[0]), math.exp(y[0])])

    y = np.array([math.log(s0), 0.0])
    times, vals, ints = [t0], [s0], [0.0]
    h = H
    status = "ok"
    for k in range(nsteps):
        t = t0 + k * H
        end = t0 + (k + 1) * H
        while sign * (end - t) > 1e-14 * max(1.0, abs(end)):
            h = sign * min(abs(h), abs(end - t))
            full = _rk4(rhs, t, y, h)
            half = _rk4(rhs, t + h / 2, _rk4(rhs, t, y, h / 2), h / 2)
            ref = max(abs(half[1]), math.exp(half[0]) * abs(h), 1e-300)
            err = max(abs(half[0] - full[0]), abs(half[1] - full[1]) / ref) / 15
            scale = rtol
            if err <= scale or abs(h) < 1e-12:
                y = half + (half - full) / 15
                t = t + h
                grow = 2.0 if err < scale / 32 else 1.0
                h = sign * min(abs(H), abs(h) * grow)
            else:
                h = h / 2
        s_now = math.exp(y[0])
        if not (arr.s_min < s_now or (arr.s_min == 0 and np.isfinite(y[0]))) or s_now > 1.0:
            status = "left_domain"
            break
        times.append(end)
        vals.append(s_now)
        ints.append(y[1])
    return LatitudeFlow(np.array(times), np.array(vals), np.array(ints), status, arr.name)


def arrival_time_check(traj: LatitudeFlow, arr: ArrivalFunction) -> dict:
    """Best single shift ``c`` in ``t = tau(s(t)) + c`` and the max deviation."""
    if traj.times.size < 2:
        raise ValueError("insufficient samples: need at least two")
    usable = traj.s >= np.finfo(float).tiny  # s below the normal range carries no usable digits
    if usable.sum() < 2:
        raise ValueError("insufficient samples: fewer than two representable values of s")
    gap = traj.times[usable] - np.asarray(arr.tau(traj.s[usable]), dtype=float)
    hi, lo = float(np.max(gap)), float(np.min(gap))
    return {"shift": (hi + lo) / 2, "residual": (hi - lo) / 2, "samples": int(usable.sum()),
            "skipped_underflow": int((~usable).sum())}


def l1_hypothesis_audit(traj: LatitudeFlow, horizons=(10.0, 100.0, 1e3, 1e4)) -> dict:
    """``I(T) = int_{-T}^{t_end} s dt`` for growing ``T`` and its trend.

    Convergent when the last increment is at most half the previous one (or
    negligible); a log fit ``I = alpha log T + beta`` and a power fit
    ``I ~ T^p`` describe divergent growth.
    """
    horizons = np.sort(np.asarray(horizons, dtype=float))
    if horizons.size < 3:
        raise ValueError("need at least three horizons")
    t = traj.times
    t_end = t[0] if t[0] > t[-1] else t[-1]
    ref = traj.integral[np.argmin(np.abs(t - t_end))]
    vals = []
    for T in horizons:
        idx = np.where(np.abs(t - (t_end - T)) <= 1e-9 * max(1.0, T))[0]
        if idx.size == 0:
            raise ValueError(f"trajectory does not reach t = {t_end - T:g}")
        vals.append(abs(ref - traj.integral[idx[0]]))
    vals = np.array(vals)
    inc = np.diff(vals)
    tiny = 1e-12 * max(vals[-1], 1e-300)
    convergent = bool(inc[-1] <= tiny or inc[-1] <= 0.5 * inc[-2])
    logT = np.log(horizons)
    coef = np.polyfit(logT, vals, 1)
    log_resid = float(np.sqrt(np.mean((np.polyval(coef, logT) - vals) ** 2)) / np.mean(vals))
    power = float(np.polyfit(logT, np.log(vals), 1)[0]) if np.all(vals > 0) else float("nan")
    return {
        "horizons": horizons.tolist(),
        "integrals": vals.tolist(),
        "increments": inc.tolist(),
        "classification": "convergent" if convergent else "divergent",
        "log_fit": {"alpha": float(coef[0]), "beta": float(coef[1]), "relative_residual": log_resid},
        "growth_exponent": power,
    }


def log_decay_check(traj: LatitudeFlow, window=(-1e4, -1e2)) -> dict:
    """Spread of ``s(t) log|t|`` on ``window`` (constant for ``s ~ 1/log|t|``)."""
    lo, hi = window
    keep = (traj.times >= lo) & (traj.times <= hi)
    if keep.sum() < 2:
        raise ValueError("window holds fewer than two samples")
    prod = traj.s[keep] * np.log(np.abs(traj.times[keep]))
    mid = 0.5 * (prod.max() + prod.min())
    return {"min": float(prod.min()), "max": float(prod.max()), "center": float(mid),
            "relative_spread": float((prod.max() - prod.min()) / (2 * mid))}


# closed-form warpings f = -F, F(s) = int_0^s dsigma/tau', for the graph functionals
def _sublog_F(s):
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return np.where(s > 0, s**3 * special.expn(4, 1.0 / np.where(s > 0, s, 1.0)), 0.0)


_WARPINGS = {
    "exp": (lambda s: s**2 / 2, lambda s: s, lambda s: np.ones_like(s)),
    "poly": (lambda s: s**3 / 3, lambda s: s**2, lambda s: 2 * s),
    "sublog": (_sublog_F, _sublog_speed,
               lambda s: np.where(s > 0, (2 * s + 1) * _sublog_speed(s) / np.where(s > 0, s, 1.0) ** 2, 0.0)),
}


def _even_warped(name: str) -> EllipticFunctional:
    F, dF, d2F = _WARPINGS[name]

    def f(z):
        return -F(np.abs(z))

    def df(z):
        return -np.sign(z) * dF(np.abs(z))

    def d2f(z):
        return -d2F(np.abs(np.asarray(z, dtype=float)))

    return warped_length_functional(f"warped:{name}", f, df, d2f, z_max=1.0)


def register_warped_builtins() -> None:
    """Register ``warped:exp``, ``warped:poly``, ``warped:sublog`` (warping extended evenly to ``s < 0``)."""
    for name in _WARPINGS:
        register_functional(f"warped:{name}", lambda name=name: _even_warped(name))
