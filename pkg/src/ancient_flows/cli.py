"""Command-line experiment runner.

Every run writes CSV tables (one header row, floats at 17 significant digits)
and one ``run.json`` record into ``--out``.  Exit status: 0 when every check
passes, 1 on a failed check (its key is printed), 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import re
import sys
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import acceptance
from .ancient_constructor import construct_ancient, weighted_distance
from .critical_manifold import ReducedFunctional, sample_critical_set
from .flow_simulator import energy_identity, evolve, fit_decay_rate, mode_energies, mode_energy_constant
from .mz_ode import case_b_bound, monte_carlo
from .slow_examples import (BUILTIN_ARRIVALS, arrival_from_csv, arrival_time_check, build_warping,
                            builtin_arrival, l1_hypothesis_audit, latitude_flow, log_decay_check)
from .spectral_core import eigendecompose, export_eigensystem
from .variational import PeriodicGrid, evaluate, get_functional, gradient_split

SUBCOMMANDS = ("spectrum", "construct", "evolve", "characterize", "critical-manifold",
               "mz-verify", "slow-example", "accept")
CHECK_KEY = re.compile(acceptance.KEY_PATTERN)


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str
    functional: str = "sphere"
    n: int = 256
    dt: float = 1e-3
    t_max: float = 10.0
    tol: float = 1e-10
    seed: int = 0
    out: str = "runs"
    # construct / characterize
    a: tuple = (0.1,)
    rate: float = 0.5
    save_every: int = 100
    # evolve
    u0_cos: tuple = (0.1, 0.0, 0.05)
    u0_sin: tuple = ()
    # critical-manifold
    radius: float = 0.1
    points: int = 5
    # mz-verify
    eps: float = 0.01
    horizon: float = 50.0
    ds: float = 0.01
    trials: int = 1000
    # slow-example
    example: str = "exp"
    tau_file: str = ""
    s0: float = 0.5
    # accept
    criteria: tuple = ()

    POSITIVE = ("n", "dt", "t_max", "tol", "rate", "save_every", "radius", "points", "eps", "horizon", "ds",
                "trials", "s0")

    def validate(self) -> None:
        if self.subcommand not in SUBCOMMANDS:
            raise UsageError(f"subcommand: unknown {self.subcommand!r}")
        for name in self.POSITIVE:
            if not getattr(self, name) > 0:
                raise UsageError(f"{name}: must be positive, got {getattr(self, name)}")
        if self.seed < 0 or self.seed >= 2**64:
            raise UsageError("seed: must be an unsigned 64-bit integer")
        bad = [c for c in self.criteria if c not in acceptance.CRITERIA]
        if bad:
            raise UsageError(f"criteria: unknown {bad}")


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig) if f.name != "subcommand"}


def _coerce(name: str, raw):
    default = _FIELDS[name].default
    try:
        if isinstance(default, bool):
            return str(raw).lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            if isinstance(raw, (list, tuple)):
                return tuple(raw)
            items = [x for x in str(raw).replace(",", " ").split()]
            return tuple(int(x) for x in items) if name == "criteria" else tuple(float(x) for x in items)
        return str(raw)
    except ValueError:
        raise UsageError(f"{name}: cannot parse {raw!r}") from None


def parse_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"config: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value")
        key, val = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise UsageError(f"{key}: unknown configuration key (line {lineno})")
        values[key] = _coerce(key, val)
    return values


def build_config(args: argparse.Namespace) -> RunConfig:
    values = parse_config_file(args.config) if args.config else {}
    for name in _FIELDS:
        got = getattr(args, name, None)
        if got is not None:
            values[name] = _coerce(name, got)
    if "out" not in values:
        values["out"] = str(Path("runs") / args.subcommand)
    cfg = RunConfig(subcommand=args.subcommand, **values)
    cfg.validate()
    return cfg


@dataclass
class RunRecord:
    config: dict
    version: str
    wall_time: float = 0.0
    checks: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    results: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def add(self, key: str, passed: bool, value=None, threshold: str = "") -> None:
        if not CHECK_KEY.match(key):
            raise ValueError(f"malformed check key {key!r}")
        if key in self.checks:
            raise ValueError(f"check {key!r} recorded twice")
        self.checks[key] = {"passed": bool(passed), "value": acceptance._jsonable(value), "threshold": threshold}

    def as_dict(self) -> dict:
        return {"config": self.config, "version": self.version, "wall_time": self.wall_time,
                "status": "pass" if self.passed else "fail", "checks": self.checks,
                "artifacts": self.artifacts, "results": acceptance._jsonable(self.results)}


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else v for v in row])


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _setup(cfg: RunConfig):
    fn = get_functional(cfg.functional)
    grid = PeriodicGrid(cfg.n)
    split = gradient_split(fn, grid)
    return fn, grid, split, eigendecompose(split.L)


def _field_rows(traj, every: int):
    for k in range(0, traj.times.size, every):
        for th, u in zip(traj.grid.theta, traj.fields[k]):
            yield (float(traj.times[k]), float(th), float(u))


def cmd_spectrum(cfg, rec, out):
    _, grid, _, es = _setup(cfg)
    rec.artifacts += [str(p) for p in export_eigensystem(es, out)]
    rec.results.update(index=es.index, nullity=es.nullity, lambdas=es.lambdas[:9].tolist())
    if cfg.functional in ("sphere", "warped:exp"):
        expected = np.array([k * k - 1.0 for k in range(5) for _ in ((0,) if k == 0 else (0, 1))])
        err = float(np.max(np.abs(es.lambdas[:9] - expected)))
        rec.add("spectrum_equator", err <= 1e-3 and es.index == 1 and es.nullity == 2,
                {"max_error_k_le_4": err, "index": es.index, "nullity": es.nullity}, "k^2 - 1 within 1e-3")


def cmd_construct(cfg, rec, out):
    _, grid, split, es = _setup(cfg)
    a = np.array(cfg.a)
    sol = construct_ancient(split, es, a, rate=cfg.rate, tol=cfg.tol, T_max=cfg.t_max, dt=cfg.dt)
    traj = sol.trajectory
    write_csv(out / "ancient.csv", ["t", "theta", "u"], _field_rows(traj, cfg.save_every))
    write_csv(out / "picard.csv", ["iteration", "distance"], enumerate(map(float, sol.distances), 1))
    rec.artifacts += [str(out / "ancient.csv"), str(out / "picard.csv")]
    dist = weighted_distance(sol, es)
    rec.results.update(iterations=sol.iterations, weighted_distance=dist, distances=sol.distances)
    rec.add("ancient_construction.converged", sol.distances[-1] < cfg.tol, sol.distances[-1], f"< {cfg.tol:g}")
    if cfg.functional == "sphere" and a.size == 1:
        err = float(np.max(np.abs(traj.fields - acceptance._closed_form(a[0], traj.times, grid.theta))))
        rec.add("ancient_closed_form", err <= 1e-4, err, "<= 1e-4")


def cmd_evolve(cfg, rec, out):
    fn = get_functional(cfg.functional)
    grid = PeriodicGrid(cfg.n)
    th = grid.theta
    u0 = sum(c * np.cos(k * th) for k, c in enumerate(cfg.u0_cos)) + \
        sum(c * np.sin((k + 1) * th) for k, c in enumerate(cfg.u0_sin)) + np.zeros(grid.n)
    traj = evolve(fn, grid, u0, 0.0, cfg.t_max, dt=cfg.dt)
    write_csv(out / "flow.csv", ["t", "theta", "u"], _field_rows(traj, cfg.save_every))
    vals = evaluate(fn, grid, traj.fields)
    write_csv(out / "energy.csv", ["t", "A"], zip(map(float, traj.times), map(float, vals)))
    rec.artifacts += [str(out / "flow.csv"), str(out / "energy.csv")]
    rec.results.update(status=traj.status, message=traj.message, t_end=float(traj.times[-1]))
    rec.add("flow_status", traj.ok, traj.status, "ok")
    if traj.times.size >= 3:
        rep = energy_identity(fn, traj)
        rec.add("energy_identity.monotone", rep["monotone"], rep["max_increase"], "steps <= 1e-12")
        rec.add("energy_identity.balance", rep["relative_mismatch"] <= 1e-4, rep["relative_mismatch"], "<= 1e-4")


def cmd_characterize(cfg, rec, out):
    _, grid, split, es = _setup(cfg)
    sol = construct_ancient(split, es, np.array(cfg.a), rate=cfg.rate, tol=cfg.tol, T_max=cfg.t_max, dt=cfg.dt)
    series = mode_energies(es, sol.trajectory)
    rows = zip(*(map(float, v) for v in (series.times, series.U_minus, series.U_zero, series.U_plus, series.sigma)))
    write_csv(out / "mode_energies.csv", ["t", "U_minus", "U_zero", "U_plus", "sigma"], rows)
    rec.artifacts.append(str(out / "mode_energies.csv"))
    window = (-0.8 * cfg.t_max, -0.2 * cfg.t_max)
    fit = fit_decay_rate(series, window)
    expected = -es.lambdas[es.index - 1] if es.index else float("nan")
    const = mode_energy_constant(series, grid.n)
    rec.results.update(decay_fit=fit, window=window, mode_energy_constant=const)
    rec.add("dominant_decay_rate", abs(fit["rate"] - expected) <= 0.02 * expected, fit["rate"],
            f"{expected:.6g} +- 2%")
    rec.add("mode_energy_constant", bool(np.isfinite(const["constant"])), const["constant"], "finite")


def cmd_critical_manifold(cfg, rec, out):
    fn, grid, split, es = _setup(cfg)
    reduced = ReducedFunctional(split, es, newton_tol=cfg.tol)
    rows = sample_critical_set(reduced, radius=cfg.radius, points=cfg.points)
    k = reduced.dimension
    header = [f"a{i + 1}" for i in range(k)] + ["A_fin", "gradient_norm"]
    write_csv(out / "critical_set.csv", header, ([*r["a"], r["A_fin"], r["gradient_norm"]] for r in rows))
    rec.artifacts.append(str(out / "critical_set.csv"))
    base = float(evaluate(fn, grid, np.zeros(grid.n)))
    gap = max(abs(r["A_fin"] - base) for r in rows)
    gnorm = max(r["gradient_norm"] for r in rows)
    rec.results.update(base_value=base, neutral_dimension=k)
    rec.add("critical_set.value_constant", gap <= 1e-6, gap, "<= 1e-6")
    rec.add("critical_set.criticality", gnorm <= 1e-8, gnorm, "<= 1e-8")


def cmd_mz_verify(cfg, rec, out):
    res = monte_carlo(cfg.eps, cfg.trials, cfg.seed, S=cfg.horizon, ds=cfg.ds)
    cols = ["seed", "case", "s_star", "case_b_constant", "b4_ratio", "passed"]
    write_csv(out / "trials.csv", cols, ([r[c] for c in cols] for r in res["trials"]))
    (out / "summary.json").write_text(json.dumps(res["summary"], indent=2))
    rec.artifacts += [str(out / "trials.csv"), str(out / "summary.json")]
    s = res["summary"]
    rec.results.update(summary=s)
    rec.add("trichotomy.pass_rate", s["pass_rate"] == 1.0, s["pass_rate"], "1.0")
    cb = s["max_case_b_constant"] or 0.0
    rec.add("trichotomy.case_b_constant", cb <= 1.1 * case_b_bound(cfg.eps), cb,
            f"<= {1.1 * case_b_bound(cfg.eps):.6g}")


_EXPECTED_CLASS = {"exp": "convergent", "poly": "divergent", "sublog": "divergent"}


def cmd_slow_example(cfg, rec, out):
    arr = arrival_from_csv(cfg.tau_file) if cfg.tau_file else builtin_arrival(cfg.example)
    metric = build_warping(arr)
    write_csv(out / "warping.csv", ["s", "f"], zip(map(float, metric.s_table), map(float, metric.f_table)))
    traj = latitude_flow(metric, cfg.s0, 0.0, -cfg.t_max, cfg.dt)
    write_csv(out / "latitude.csv", ["t", "s"], zip(map(float, traj.times), map(float, traj.s)))
    rec.artifacts += [str(out / "warping.csv"), str(out / "latitude.csv"), str(out / "audit.json")]
    arrival = arrival_time_check(traj, arr)
    audit = {"admissibility": metric.admissibility, "status": traj.status, "arrival": arrival}
    horizons = [T for T in (10.0, 100.0, 1e3, 1e4) if T <= -traj.times[-1] + 1e-9]
    if len(horizons) >= 3 and traj.status == "ok":
        audit["l1"] = l1_hypothesis_audit(traj, horizons)
    if arr.name == "sublog" and traj.times[-1] <= -1e4:
        audit["log_decay"] = log_decay_check(traj)
    (out / "audit.json").write_text(json.dumps(acceptance._jsonable(audit), indent=2))
    rec.results.update(audit=audit)
    rec.add("arrival_time.residual", arrival["residual"] <= 1e-8, arrival["residual"], "<= 1e-8")
    if "l1" in audit and not cfg.tau_file:
        got = audit["l1"]["classification"]
        rec.add("l1_audit.classification", got == _EXPECTED_CLASS[arr.name], got, _EXPECTED_CLASS[arr.name])


def cmd_accept(cfg, rec, out):
    report = acceptance.run_acceptance(cfg.criteria or None)
    for chk in report.checks:
        rec.checks[chk.key] = chk.as_dict()
    rows = ((c.key, "pass" if c.passed else "fail", c.seconds) for c in report.checks)
    write_csv(out / "acceptance.csv", ["check", "status", "seconds"], rows)
    rec.artifacts.append(str(out / "acceptance.csv"))


DISPATCH = {
    "spectrum": cmd_spectrum,
    "construct": cmd_construct,
    "evolve": cmd_evolve,
    "characterize": cmd_characterize,
    "critical-manifold": cmd_critical_manifold,
    "mz-verify": cmd_mz_verify,
    "slow-example": cmd_slow_example,
    "accept": cmd_accept,
}


def run(cfg: RunConfig) -> RunRecord:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rec = RunRecord(config=dataclasses.asdict(cfg), version=_version())
    t0 = time.perf_counter()
    DISPATCH[cfg.subcommand](cfg, rec, out)
    rec.wall_time = time.perf_counter() - t0
    (out / "run.json").write_text(json.dumps(rec.as_dict(), indent=2, default=float))
    return rec


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common")
    g.add_argument("--config", help="flat key = value file; flags override it")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="output directory (default runs/<subcommand>)")
    g.add_argument("--n", type=int, help="grid points")
    g.add_argument("--dt", type=float)
    g.add_argument("--t-max", dest="t_max", type=float, help="time horizon")
    g.add_argument("--tol", type=float)
    g.add_argument("--functional", help='"sphere" or "warped:<exp|poly|sublog>"')

    parser = argparse.ArgumentParser(prog="ancient-flows", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("spectrum", parents=[common], help="eigenvalues of the Jacobi operator")
    for name, text in (("construct", "ancient solution leaving the critical point"),
                       ("characterize", "mode energies and decay rate along an ancient solution")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--a", type=_floats, help="unstable coordinates, comma separated")
        p.add_argument("--rate", type=float, help="exponential weight of the fixed-point space")
        p.add_argument("--save-every", dest="save_every", type=int)
    p = sub.add_parser("evolve", parents=[common], help="forward flow from a trigonometric profile")
    p.add_argument("--u0-cos", dest="u0_cos", type=_floats, help="cosine coefficients c0, c1, ...")
    p.add_argument("--u0-sin", dest="u0_sin", type=_floats, help="sine coefficients s1, s2, ...")
    p.add_argument("--save-every", dest="save_every", type=int)
    p = sub.add_parser("critical-manifold", parents=[common], help="sample the reduced functional")
    p.add_argument("--radius", type=float)
    p.add_argument("--points", type=int)
    p = sub.add_parser("mz-verify", parents=[common], help="Monte Carlo check of the ODE trichotomy")
    p.add_argument("--eps", type=float)
    p.add_argument("--horizon", type=float, help="S, integration starts at -S")
    p.add_argument("--ds", type=float)
    p.add_argument("--trials", type=int)
    p = sub.add_parser("slow-example", parents=[common], help="latitude flow with prescribed arrival time")
    p.add_argument("--example", choices=sorted(BUILTIN_ARRIVALS))
    p.add_argument("--tau-file", dest="tau_file", help="two-column CSV s, tau(s)")
    p.add_argument("--s0", type=float)
    p = sub.add_parser("accept", parents=[common], help="run the acceptance suite")
    p.add_argument("--criteria", type=lambda t: tuple(int(x) for x in t.replace(",", " ").split()),
                   help="subset of criteria numbers, e.g. 1,2,7")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = build_config(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    try:
        rec = run(cfg)
    except (ValueError, KeyError) as exc:  # inputs the numerics reject, e.g. s0 outside (0, 1]
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:  # divergence, Newton stall, counterexample alarm
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    failing = [k for k, c in rec.checks.items() if not c["passed"]]
    for key in failing:
        print(f"FAILED {key}", file=sys.stderr)
    print(f"{cfg.subcommand}: {'pass' if not failing else 'fail'} ({len(rec.checks)} checks) -> {cfg.out}")
    return 0 if not failing else 1


if __name__ == "__main__":
    sys.exit(main())
