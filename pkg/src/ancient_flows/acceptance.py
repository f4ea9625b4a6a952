"""Acceptance suite on the equator of the round 2-sphere and the ODE examples.

Each criterion returns ``Check`` records with the measured values and the
threshold they were held to.  ``run_acceptance`` is shared by the ``accept``
subcommand and ``tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .ancient_constructor import construct_ancient, tangency_check, verify_quadratic_envelope
from .critical_manifold import ReducedFunctional, check_integrability, grad_a_fin, sample_critical_set
from .flow_simulator import (check_caccioppoli, energy_identity, evolve, evolve_parametric_latitude,
                             fit_decay_rate, mode_energies, mode_energy_constant, verify_mode_inequalities)
from .mz_ode import case_b_bound, monte_carlo
from .slow_examples import arrival_time_check, builtin_arrival, l1_hypothesis_audit, latitude_flow
from .spectral_core import eigendecompose
from .variational import PeriodicGrid, get_functional, gradient_split

__all__ = ["Check", "CRITERIA", "run_acceptance", "sphere_setup"]

KEY_PATTERN = r"^[a-z][a-z0-9_]*(\.[a-z0-9_]+)*$"


@dataclass
class Check:
    key: str
    passed: bool
    measured: dict
    threshold: str
    seconds: float = 0.0
    note: str = ""

    def line(self) -> str:
        shown = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"{'PASS' if self.passed else 'FAIL'} {self.key}: {shown} (need {self.threshold})"

    def as_dict(self) -> dict:
        return {"passed": self.passed, "measured": _jsonable(self.measured), "threshold": self.threshold,
                "seconds": self.seconds, "note": self.note}


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


_SETUPS: dict = {}


def sphere_setup(n: int):
    """Cached (functional, grid, split, eigensystem) for the equator at resolution ``n``."""
    if n not in _SETUPS:
        fn = get_functional("sphere")
        grid = PeriodicGrid(n)
        split = gradient_split(fn, grid)
        _SETUPS[n] = (fn, grid, split, eigendecompose(split.L))
    return _SETUPS[n]


def _closed_form(a, times, theta):
    return 2 * np.arctan(np.tan(a / (2 * math.sqrt(2 * math.pi))) * np.exp(times))[:, None] + 0 * theta


def spectrum() -> list[Check]:
    t0 = time.perf_counter()
    _, _, _, es = sphere_setup(512)
    expected = np.array([k * k - 1.0 for k in range(5) for _ in ((0,) if k == 0 else (0, 1))])
    err = float(np.max(np.abs(es.lambdas[:9] - expected)))
    secs = time.perf_counter() - t0
    ok = err <= 1e-3 and es.index == 1 and es.nullity == 2 and secs < 5
    return [Check("spectrum_equator", ok,
                  {"max_error_k_le_4": err, "index": es.index, "nullity": es.nullity, "seconds": secs},
                  "error <= 1e-3, index 1, nullity 2, < 5 s", secs)]


def ancient_closed_form(a_values=(0.05, 0.1, 0.2)) -> list[Check]:
    _, grid, split, es = sphere_setup(256)
    out = []
    for a in a_values:
        t0 = time.perf_counter()
        sol = construct_ancient(split, es, [a], T_max=10.0, dt=1e-3)
        secs = time.perf_counter() - t0
        traj = sol.trajectory
        err = float(np.max(np.abs(traj.fields - _closed_form(a, traj.times, grid.theta))))
        out.append(Check("ancient_closed_form.a_" + f"{a:g}".replace(".", "p"), err <= 1e-4 and secs < 60,
                         {"sup_error": err, "iterations": sol.iterations, "seconds": secs},
                         "sup error <= 1e-4, < 60 s", secs))
    return out


def tangency() -> list[Check]:
    t0 = time.perf_counter()
    _, _, split, es = sphere_setup(256)
    rep = tangency_check(split, es, [1.0], scales=(0.2, 0.1, 0.05))
    secs = time.perf_counter() - t0
    return [Check("unstable_tangency", rep["order"] >= 1.9,
                  {"order": rep["order"], "deviations": rep["deviations"]}, "fitted order >= 1.9", secs)]


def quadratic_envelope(a_values=(0.05, 0.1, 0.2)) -> list[Check]:
    t0 = time.perf_counter()
    _, _, split, es = sphere_setup(256)
    sols = [construct_ancient(split, es, [a], T_max=10.0, dt=1e-3) for a in a_values]
    rep = verify_quadratic_envelope(sols, es)
    secs = time.perf_counter() - t0
    ok = rep["all_finite"] and rep["ratio_spread"] <= 2.0
    return [Check("quadratic_envelope", ok,
                  {"ratio_spread": rep["ratio_spread"], "fitted_exponent": rep["fitted_exponent"],
                   "mu": rep["mu"], "all_finite": rep["all_finite"]},
                  "distance/|a|^2 within a factor 2 across the a-set, all finite", secs,
                  note="the remainder of the sphere integrand is odd in u, so the distance scales like |a|^3")]


def dominant_decay(a: float = 0.1) -> list[Check]:
    t0 = time.perf_counter()
    _, grid, split, es = sphere_setup(256)
    consts, ineqs = [], []
    rate = None
    for dt in (1e-3, 5e-4):
        sol = construct_ancient(split, es, [a], T_max=10.0, dt=dt)
        series = mode_energies(es, sol.trajectory)
        if rate is None:
            rate = fit_decay_rate(series, (-8.0, -2.0))["rate"]
        consts.append(mode_energy_constant(series, grid.n))
        ineqs.append(verify_mode_inequalities(series, es))
    secs = time.perf_counter() - t0
    c1, c2 = consts[0]["constant"], consts[1]["constant"]
    scale = max(abs(c1), abs(c2))
    drift = 0.0 if scale == 0 else abs(c1 - c2) / scale
    return [
        Check("dominant_decay_rate", abs(rate - 1.0) <= 0.02, {"rate": rate}, "1.00 +- 0.02 on [-8, -2]", secs),
        Check("mode_energy_constant", bool(np.isfinite(c1) and np.isfinite(c2) and drift <= 0.2),
              {"constant_dt": c1, "constant_dt_half": c2, "raw_dt": consts[0]["raw_constant"],
               "raw_dt_half": consts[1]["raw_constant"], "relative_change": drift,
               "unstable_ineq_dt": ineqs[0]["unstable_constant"], "unstable_ineq_dt_half": ineqs[1]["unstable_constant"]},
              "finite, change under dt halving <= 20%", 0.0),
    ]


def _test_flows(n: int):
    theta = PeriodicGrid(n).theta
    return {
        "constant": np.full(n, 0.2),
        "mixed": 0.1 + 0.05 * np.cos(2 * theta) + 0.03 * np.sin(3 * theta),
        "large": 0.3 * np.cos(theta) + 0.2 * np.sin(3 * theta),
        "small": 0.02 + 0.01 * np.cos(2 * theta) + 0.005 * np.sin(3 * theta),
    }


def energy_and_caccioppoli() -> list[Check]:
    t0 = time.perf_counter()
    fn = get_functional("sphere")
    worst_rel, monotone, statuses = 0.0, True, []
    ratios = {}
    for n in (128, 256):
        grid = PeriodicGrid(n)
        for name, u0 in _test_flows(n).items():
            if n == 256 and name != "small":
                continue
            traj = evolve(fn, grid, u0, 0.0, 1.0, dt=1e-3)
            statuses.append(traj.status)
            rep = energy_identity(fn, traj)
            worst_rel = max(worst_rel, rep["relative_mismatch"])
            monotone &= rep["monotone"]
            if name == "small":
                ratios[n] = check_caccioppoli(traj)
    secs = time.perf_counter() - t0
    r1, r2 = ratios[128]["ratio"], ratios[256]["ratio"]
    change = abs(r1 - r2) / r2
    small = ratios[128]["in_smallness_regime"] and ratios[256]["in_smallness_regime"]
    return [
        Check("energy_identity", monotone and worst_rel <= 1e-4 and all(s == "ok" for s in statuses),
              {"max_relative_mismatch": worst_rel, "monotone": monotone}, "monotone, mismatch <= 1e-4 |dA|", secs),
        Check("caccioppoli_ratio", bool(small and np.isfinite(r1) and change <= 0.01),
              {"ratio_n128": r1, "ratio_n256": r2, "relative_change": change, "smallness": small},
              "finite, refinement change <= 1% in the smallness regime", 0.0),
    ]


def integrability() -> list[Check]:
    t0 = time.perf_counter()
    fn, grid, split, es = sphere_setup(256)
    reduced = ReducedFunctional(split, es)
    rows = sample_critical_set(reduced, radius=0.1, points=5)
    gap = max(abs(r["A_fin"] - 2 * math.pi) for r in rows)
    gnorm = max(r["gradient_norm"] for r in rows)
    g0 = float(np.max(np.abs(grad_a_fin(reduced, [0.0, 0.0]))))
    jac = check_integrability(reduced, [es.phis[es.neutral][0], es.phis[es.neutral][1]])
    secs = time.perf_counter() - t0
    return [
        Check("equator_integrability.value", gap <= 1e-6, {"max_gap_to_2pi": gap}, "<= 1e-6", secs),
        Check("equator_integrability.criticality", gnorm <= 1e-8, {"max_gradient_norm": gnorm}, "<= 1e-8", 0.0),
        Check("equator_integrability.reduced_gradient_at_0", g0 <= 1e-8, {"max_abs": g0}, "<= 1e-8", 0.0,
              note=f"Jacobi-field deviation orders {[round(r['deviation_order'], 3) for r in jac]}"),
    ]


def trichotomy(trials: int = 1000, eps: float = 0.01, seed: int = 20240601) -> list[Check]:
    t0 = time.perf_counter()
    res = monte_carlo(eps, trials, seed, S=50.0, ds=0.01)
    secs = time.perf_counter() - t0
    s = res["summary"]
    bound = 1.1 * case_b_bound(eps)
    cb = s["max_case_b_constant"] if s["max_case_b_constant"] is not None else 0.0
    return [
        Check("trichotomy_monte_carlo", s["pass_rate"] == 1.0 and secs < 60,
              {"pass_rate": s["pass_rate"], "cases": s["case_counts"], "max_b4_ratio": s["max_b4_ratio"],
               "max_inequality_residual": s["max_inequality_residual"], "seconds": secs},
              "100% of trials, < 60 s", secs),
        Check("trichotomy_case_b_constant", cb <= bound, {"max_x_over_z": cb, "bound": bound},
              "<= 1.1 * 8 eps (2 + 8 eps)", 0.0),
    ]


def slow_examples() -> list[Check]:
    t0 = time.perf_counter()
    out = []
    for name, horizon in (("exp", 30.0), ("poly", 100.0)):
        arr = builtin_arrival(name)
        rep = arrival_time_check(latitude_flow(arr, 0.5, 0.0, -horizon, 0.01), arr)
        out.append(Check(f"arrival_time.{name}", rep["residual"] <= 1e-8, {"residual": rep["residual"]},
                         "<= 1e-8 after shift fit", 0.0))
    audits = {}
    for name in ("exp", "poly", "sublog"):
        audits[name] = l1_hypothesis_audit(latitude_flow(builtin_arrival(name), 0.5, 0.0, -1e4, 1.0))
    classes = {k: v["classification"] for k, v in audits.items()}
    ok = classes == {"exp": "convergent", "poly": "divergent", "sublog": "divergent"}
    resid = audits["poly"]["log_fit"]["relative_residual"]
    secs = time.perf_counter() - t0
    out.append(Check("l1_audit.classification", ok, classes, "exp convergent; poly, sublog divergent", secs))
    out.append(Check("l1_audit.poly_log_growth", resid <= 0.05,
                     {"log_fit_residual": resid, "alpha": audits["poly"]["log_fit"]["alpha"]}, "<= 5%", 0.0))
    return out


def latitude_extinction(phis=(0.3, 0.7, 1.2)) -> list[Check]:
    t0 = time.perf_counter()
    drift, ext_err = 0.0, 0.0
    for phi0 in phis:
        tr = evolve_parametric_latitude(phi0, 0.0, 5.0, dt=1e-3)
        inv = np.sin(tr.phi) * np.exp(-tr.times)
        drift = max(drift, float(np.max(np.abs(inv - inv[0]))))
        ext_err = max(ext_err, abs(tr.extinction_time + math.log(math.sin(phi0))))
    secs = time.perf_counter() - t0
    return [
        Check("latitude_invariant", drift <= 1e-8, {"max_drift": drift}, "<= 1e-8", secs),
        Check("latitude_extinction_time", ext_err <= 1e-6, {"max_error": ext_err}, "<= 1e-6", 0.0),
    ]


CRITERIA = {
    1: spectrum,
    2: ancient_closed_form,
    3: tangency,
    4: quadratic_envelope,
    5: dominant_decay,
    6: energy_and_caccioppoli,
    7: integrability,
    8: trichotomy,
    9: slow_examples,
    10: latitude_extinction,
}


@dataclass
class AcceptanceReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def run_acceptance(selected=None, echo=print) -> AcceptanceReport:
    """Run the chosen criteria (all by default), echoing one line per check."""
    report = AcceptanceReport()
    for number in sorted(selected or CRITERIA):
        for chk in CRITERIA[number]():
            report.checks.append(chk)
            if echo:
                echo(f"[{number}] {chk.line()}")
    return report
