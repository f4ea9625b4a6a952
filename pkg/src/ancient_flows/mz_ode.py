"""Triples ``(x, y, z) >= 0`` obeying the differential inequalities

    |x'| <= eps (x + y + z),   y' + y <= eps (x + z),   z' - z >= -eps (x + y),

generated as solutions of ``x' = eps a (x+y+z)``, ``y' = -y + eps b (x+z)``,
``z' = z - eps c (x+y)`` with bounded coefficient functions, and the
classification of their backward behaviour.

Everything is vectorized over a trailing "trial" axis, so a batch of
independent systems integrates in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "GeneratorBugError",
    "CounterexampleAlarm",
    "MZSystem",
    "MZTrajectory",
    "random_mz_systems",
    "ancient_seeds",
    "integrate_mz",
    "inequality_residuals",
    "verify_trichotomy",
    "case_b_bound",
    "monte_carlo",
]


class GeneratorBugError(RuntimeError):
    """A generated trajectory violates the differential inequalities it was built to satisfy."""


class CounterexampleAlarm(RuntimeError):
    """Neither alternative of the trichotomy holds on a verified trajectory."""


def case_b_bound(eps: float) -> float:
    """Constant ``K`` in ``x <= K z``: ``8 eps (2 + 8 eps)``."""
    return 8.0 * eps * (2.0 + 8.0 * eps)


Coefficient = Callable[[float], np.ndarray]


@dataclass(frozen=True)
class MZSystem:
    """Coefficients ``a, b, c`` with values in ``[-1, 1]`` (scalar or per trial)."""

    eps: float
    a: Coefficient
    b: Coefficient
    c: Coefficient

    def rhs(self, s: float, state: np.ndarray) -> np.ndarray:
        """Right-hand side with coefficients damped near the boundary of the orthant.

        Only the magnitudes of the coefficients shrink (never their admissible
        sign), so the inequalities are untouched while nonnegativity is kept.
        """
        x, y, z = state
        eps = self.eps
        a, b, c = self.a(s), self.b(s), self.c(s)
        total = x + y + z
        with np.errstate(invalid="ignore", divide="ignore"):
            a = np.where(a < 0, a * np.divide(x, total, out=np.zeros_like(total), where=total > 0), a)
            den_y = y + eps * (x + z)
            b = np.where(b < 0, b * np.divide(y, den_y, out=np.zeros_like(den_y), where=den_y > 0), b)
            den_z = z + eps * (x + y)
            c = np.where(c > 0, c * np.divide(z, den_z, out=np.zeros_like(den_z), where=den_z > 0), c)
        return np.array([
            eps * a * total,
            -y + eps * b * (x + z),
            z - eps * c * (x + y),
        ])


def _smooth_coefficient(coef, freq, phase):
    def fn(s):
        return np.tanh(np.sum(coef * np.sin(freq * s + phase), axis=-1))

    return fn


def random_mz_systems(eps: float, trial_seeds, modes: int = 3) -> MZSystem:
    """Batch of systems with smooth random coefficients ``tanh(sum_m c_m sin(w_m s + p_m))``.

    Each trial draws its coefficients from its own seed.
    """
    params = {key: [] for key in "abc"}
    for seed in trial_seeds:
        rng = np.random.default_rng(int(seed))
        for key in "abc":
            params[key].append((rng.normal(0.0, 1.0, modes), rng.uniform(0.05, 1.0, modes),
                                rng.uniform(0.0, 2 * np.pi, modes)))
    fns = {}
    for key, rows in params.items():
        coef = np.array([r[0] for r in rows])
        freq = np.array([r[1] for r in rows])
        phase = np.array([r[2] for r in rows])
        fns[key] = _smooth_coefficient(coef, freq, phase)
    return MZSystem(eps, fns["a"], fns["b"], fns["c"])


def ancient_seeds(eps: float, trial_seeds, S: float, case_b_fraction: float = 0.3) -> np.ndarray:
    """Initial states at ``s = -S`` on the backward-asymptotic manifold.

    A backward-bounded solution with ``liminf y = 0`` is, at very negative
    times, a combination of the slowly varying ``x``-mode and the ``z``-mode
    decaying like ``exp(s)``; ``y`` starts at 0.  Most trials carry both
    (``z/x = rho exp(-S)`` with ``rho`` log-uniform on ``[1e-3, 1e3]``); a
    fraction lies on the pure ``z``-branch with ``x = eps u z``.
    """
    states = []
    for seed in trial_seeds:
        rng = np.random.default_rng([int(seed), 1])
        if rng.uniform() < case_b_fraction:
            states.append((eps * rng.uniform(), 0.0, 1.0))
        else:
            rho = 10.0 ** rng.uniform(-3.0, 3.0)
            states.append((1.0, 0.0, rho * np.exp(-S)))
    return np.array(states).T


@dataclass(frozen=True)
class MZTrajectory:
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    eps: float
    clamped: int = 0


def integrate_mz(system: MZSystem, seed_state, S: float = 50.0, ds: float = 0.01) -> MZTrajectory:
    """Classical RK4 from ``s = -S`` to ``0``; state arrays have shape ``(n_s,)`` or ``(n_s, trials)``."""
    if not 0 < system.eps <= 0.05:
        raise ValueError("eps must lie in (0, 0.05]")
    if S < 50:
        raise ValueError("horizon S must be at least 50")
    steps = int(round(S / ds))
    times = np.linspace(-S, 0.0, steps + 1)
    state = np.array(seed_state, dtype=float)
    out = np.empty((steps + 1,) + state.shape)
    out[0] = state
    clamped = 0
    f = system.rhs
    for k in range(steps):
        s = times[k]
        k1 = f(s, state)
        k2 = f(s + ds / 2, state + ds / 2 * k1)
        k3 = f(s + ds / 2, state + ds / 2 * k2)
        k4 = f(s + ds, state + ds * k3)
        state = state + ds / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        neg = state < 0
        if neg.any():
            clamped += int(neg.sum())
            state = np.where(neg, 0.0, state)
        out[k + 1] = state
    return MZTrajectory(times, out[:, 0], out[:, 1], out[:, 2], system.eps, clamped)


def inequality_residuals(system: MZSystem, traj: MZTrajectory) -> np.ndarray:
    """Largest relative violation of each inequality at the stored states (<= 0 when satisfied)."""
    eps = system.eps
    worst = np.full(3, -np.inf)
    for k, s in enumerate(traj.times):
        x, y, z = traj.x[k], traj.y[k], traj.z[k]
        dx, dy, dz = system.rhs(s, np.array([x, y, z]))
        scale = np.maximum(x + y + z, np.finfo(float).tiny)
        viol = np.array([
            np.max((np.abs(dx) - eps * (x + y + z)) / scale),
            np.max((dy + y - eps * (x + z)) / scale),
            np.max((-(dz - z) - eps * (x + y)) / scale),
        ])
        worst = np.maximum(worst, viol)
    return worst


def verify_trichotomy(traj: MZTrajectory, transient: float = 5.0, liminf_tol: float = 1e-12,
                      raise_on_alarm: bool = True) -> dict:
    """Check the stable-mode bound and classify into the two alternatives.

    ``y <= 2 eps (x + z)`` is checked after ``transient``.  The alternatives
    concern ``(-inf, s_*]`` and ``(-inf, 0]``; the start of the horizon stands
    in for ``-inf``:

    * case A: ``z <= 8 eps x`` on ``[-S, s_*]`` for some ``s_*`` (the largest
      such ``s_*`` is reported);
    * case B: ``x <= K z`` on ``[-S, 0]`` with ``K = 8 eps (2 + 8 eps)``.
    """
    t, x, y, z, eps = traj.times, traj.x, traj.y, traj.z, traj.eps
    if np.any(x + y + z <= 0):
        raise ValueError("hypothesis x + y + z > 0 fails")
    early = t <= t[0] + 0.1 * (t[-1] - t[0])
    liminf_proxy = np.min(y[early] / (x + y + z)[early], axis=0)
    hyp_ok = liminf_proxy <= liminf_tol

    post = t >= t[0] + transient
    with np.errstate(divide="ignore", invalid="ignore"):
        b4_ratio = np.max(np.where(post[:, None] if y.ndim > 1 else post,
                                   y / (2 * eps * (x + z)), 0.0), axis=0)
    b4_ok = b4_ratio <= 1.0

    below = z <= 8 * eps * x
    a_start = below[0]
    first_bad = np.argmax(~below, axis=0)
    all_below = np.all(below, axis=0)
    s_star = np.where(all_below, t[-1], t[np.maximum(first_bad - 1, 0)])
    case_a = a_start

    K = case_b_bound(eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        b_const = np.max(np.where(z > 0, x / z, np.where(x > 0, np.inf, 0.0)), axis=0)
    case_b = b_const <= K

    exactly_one = case_a ^ case_b
    label = np.where(case_a & ~case_b, "A", np.where(case_b & ~case_a, "B", np.where(case_a, "AB", "none")))
    report = {
        "hypothesis_ok": hyp_ok,
        "liminf_proxy": liminf_proxy,
        "b4_ok": b4_ok,
        "b4_ratio": b4_ratio,
        "case": label,
        "s_star": np.where(case_a, s_star, np.nan),
        "case_b_constant": b_const,
        "case_b_bound": K,
        "exactly_one": exactly_one,
    }
    if raise_on_alarm and not np.all(exactly_one & b4_ok):
        raise CounterexampleAlarm(f"trichotomy fails: cases {np.atleast_1d(label)[~np.atleast_1d(exactly_one & b4_ok)]}")
    return report


def monte_carlo(eps: float, trials: int, seed: int, S: float = 50.0, ds: float = 0.01,
                chunk: int = 250, case_b_fraction: float = 0.3, residual_tol: float = 1e-8) -> dict:
    """Integrate and verify ``trials`` random admissible systems; deterministic in ``seed``."""
    trial_seeds = [int(ss.generate_state(1)[0]) for ss in np.random.SeedSequence(seed).spawn(trials)]
    rows = []
    worst_residual = -np.inf
    for start in range(0, trials, chunk):
        block = trial_seeds[start:start + chunk]
        system = random_mz_systems(eps, block)
        traj = integrate_mz(system, ancient_seeds(eps, block, S, case_b_fraction), S, ds)
        resid = inequality_residuals(system, traj)
        worst_residual = max(worst_residual, float(np.max(resid)))
        if np.max(resid) > residual_tol:
            raise GeneratorBugError(f"inequality residual {np.max(resid):.3g} exceeds {residual_tol:g}")
        rep = verify_trichotomy(traj, raise_on_alarm=False)
        for i, ts in enumerate(block):
            rows.append({
                "seed": ts,
                "case": str(rep["case"][i]),
                "s_star": float(rep["s_star"][i]),
                "case_b_constant": float(rep["case_b_constant"][i]),
                "b4_ratio": float(rep["b4_ratio"][i]),
                "hypothesis_ok": bool(rep["hypothesis_ok"][i]),
                "passed": bool(rep["exactly_one"][i] and rep["b4_ok"][i] and rep["hypothesis_ok"][i]),
            })
    case_b = [r["case_b_constant"] for r in rows if r["case"] == "B"]
    summary = {
        "eps": eps,
        "trials": trials,
        "seed": seed,
        "horizon": S,
        "ds": ds,
        "pass_rate": sum(r["passed"] for r in rows) / trials,
        "case_counts": {c: sum(r["case"] == c for r in rows) for c in ("A", "B", "AB", "none")},
        "max_case_b_constant": max(case_b) if case_b else None,
        "case_b_bound": case_b_bound(eps),
        "max_inequality_residual": worst_residual,
        "max_b4_ratio": max(r["b4_ratio"] for r in rows),
    }
    return {"summary": summary, "trials": rows}
