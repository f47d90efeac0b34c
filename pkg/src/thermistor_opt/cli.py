"""Command-line frontend: ``simulate``, ``optimize`` and ``verify``.

Configuration is a flat ``key = value`` text file.  ``#`` starts a comment;
unknown or repeated keys are errors.  Example::

    lambda = 1
    horizon = 2
    time_step = 0.01
    n_elements = 50
    conductivity = shifted_sine
    control_min = 0.1
    control_max = 1
    driver = sweep

Exit codes: 0 success, 1 failed verification check, 2 invalid
configuration, 3 numerical failure (divergence, singular system).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics
from .errors import ConfigurationError, DivergenceError, OracleError, SingularSystemError
from .fem1d import Mesh1D, Tridiagonal, thomas_solve
from .model import ControlBox, ModelParams, builtin_conductivity, validate_params
from .optimal_control import (
    OptimalityReport,
    constant_gradient,
    constant_parameter_sweep,
    cost,
    directional_derivative,
    forward_backward_sweep,
    gradient_direction,
    projected_gradient_descent,
)
from .pde_solvers import (
    BoundaryControl,
    FieldHistory,
    SchemeMode,
    adjoint_solve,
    forward_solve,
    paper_forward_rows,
    sensitivity_solve,
)

log = logging.getLogger("thermistor_opt")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

DRIVERS = ("sweep", "projected_gradient", "simulate_only", "constant_beta")
REDUCTIONS = ("final", "mean", "integral")

REQUIRED_KEYS = ("lambda", "horizon", "time_step", "n_elements", "conductivity",
                 "control_min", "control_max")
OPTIONAL_KEYS = {
    "initial_temperature": "0",
    "mode": "consistent",
    "driver": "sweep",
    "beta": None,                  # defaults to control_min
    "tol": "1e-6",
    "max_iter": "200",
    "relaxation": "0.5",
    "step": "0.5",
    "seed": "0",
    "output_dir": "output",
    "constant_reduction": "integral",
}
KNOWN_KEYS = REQUIRED_KEYS + tuple(OPTIONAL_KEYS)


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    mode: SchemeMode = SchemeMode.CONSISTENT_GALERKIN
    driver: str = "sweep"
    beta: float = 0.0
    tol: float = 1e-6
    max_iter: int = 200
    relaxation: float = 0.5
    step: float = 0.5
    seed: int = 0
    output_dir: Path = field(default_factory=lambda: Path("output"))
    constant_reduction: str = "integral"
    conductivity_id: str = ""


def parse_config_text(text: str) -> dict[str, str]:
    """Split a flat config into raw strings; every problem is collected before raising."""
    raw, problems = {}, []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            problems.append(f"line {lineno}: unknown key {key!r}")
        elif key in raw:
            problems.append(f"line {lineno}: duplicate key {key!r}")
        else:
            raw[key] = value
    if problems:
        raise ConfigurationError("\n".join(problems))
    return raw


def build_config(raw: dict[str, str], overrides: dict | None = None) -> RunConfig:
    """Turn raw strings into a validated RunConfig (CLI flags win over the file)."""
    raw = {k: v for k, v in raw.items()}
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = str(v)
    problems = [f"missing required key {k!r}" for k in REQUIRED_KEYS if k not in raw]
    if problems:
        raise ConfigurationError("\n".join(problems))

    def num(key, kind=float):
        value = raw[key] if key in raw else OPTIONAL_KEYS[key]
        try:
            if kind is int:
                as_float = float(value)
                if as_float != int(as_float):
                    raise ValueError
                return int(as_float)
            return kind(value)
        except (TypeError, ValueError):
            problems.append(f"{key}: cannot read {value!r} as {kind.__name__}")
            return None

    lam, horizon, tau = num("lambda"), num("horizon"), num("time_step")
    n_el = num("n_elements", int)
    m, M = num("control_min"), num("control_max")
    tol, max_iter = num("tol"), num("max_iter", int)
    relaxation, step, seed = num("relaxation"), num("step"), num("seed", int)
    beta = num("beta") if "beta" in raw else m

    u0_text = raw.get("initial_temperature", OPTIONAL_KEYS["initial_temperature"])
    try:
        parts = [float(s) for s in u0_text.split(",")]
        u0 = parts[0] if len(parts) == 1 else np.array(parts)
    except ValueError:
        problems.append(f"initial_temperature: cannot read {u0_text!r}")
        u0 = 0.0

    try:
        cond = builtin_conductivity(raw["conductivity"])
    except ConfigurationError as exc:
        problems.append(f"conductivity: {exc}")
        cond = None
    try:
        mode = SchemeMode.parse(raw.get("mode", OPTIONAL_KEYS["mode"]))
    except ValueError as exc:
        problems.append(f"mode: {exc}")
        mode = None
    driver = raw.get("driver", OPTIONAL_KEYS["driver"])
    if driver not in DRIVERS:
        problems.append(f"driver: expected one of {DRIVERS}, got {driver!r}")
    reduction = raw.get("constant_reduction", OPTIONAL_KEYS["constant_reduction"])
    if reduction not in REDUCTIONS:
        problems.append(f"constant_reduction: expected one of {REDUCTIONS}, got {reduction!r}")
    if tol is not None and not tol > 0:
        problems.append("tol must be positive")
    if max_iter is not None and max_iter < 1:
        problems.append("max_iter must be at least 1")
    if relaxation is not None and not 0 < relaxation <= 1:
        problems.append("relaxation must lie in (0, 1]")
    if step is not None and not step > 0:
        problems.append("step must be positive")

    numeric = (lam, horizon, tau, n_el, m, M)
    if all(v is not None for v in numeric):
        if isinstance(u0, np.ndarray) and u0.size != n_el + 1:
            problems.append(f"initial_temperature must have n_elements + 1 = {n_el + 1} nodal values")
            u0 = float(u0[0])
        # a stand-in conductivity lets the remaining parameters be checked too
        stand_in = cond if cond is not None else builtin_conductivity("constant(1)")
        params = ModelParams(lam, horizon, stand_in, ControlBox(m, M), u0, max(n_el, 1), tau)
        problems.extend(validate_params(params))
        if beta is not None and driver != "simulate_only" and not m <= beta <= M:
            problems.append("beta must lie within [control_min, control_max] for the optimisation drivers")
    if problems:
        raise ConfigurationError("\n".join(dict.fromkeys(problems)))
    return RunConfig(
        params=params, mode=mode, driver=driver, beta=beta, tol=tol, max_iter=max_iter,
        relaxation=relaxation, step=step, seed=seed,
        output_dir=Path(raw.get("output_dir", OPTIONAL_KEYS["output_dir"])),
        constant_reduction=reduction, conductivity_id=raw["conductivity"],
    )


def load_config(path, overrides: dict | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return build_config(parse_config_text(text), overrides)


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_field_csv(path: Path, fh: FieldHistory, name: str):
    x = fh.mesh.nodes
    xs = [_fmt(v) for v in x]
    with open(path, "w", newline="") as out:
        out.write(f"t,x,{name}\n")
        for t, level in zip(fh.times, fh.levels):
            ts = _fmt(t)
            out.write("".join(f"{ts},{xv},{_fmt(v)}\n" for xv, v in zip(xs, level)))


def write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _config_summary(cfg: RunConfig) -> dict:
    p = cfg.params
    return {
        "lambda": p.lam,
        "horizon": p.horizon,
        "time_step": p.time_step,
        "n_elements": p.n_elements,
        "conductivity": cfg.conductivity_id,
        "control_min": p.box.m,
        "control_max": p.box.M,
        "mode": cfg.mode.value,
        "driver": cfg.driver,
        "beta": cfg.beta,
        "seed": cfg.seed,
    }


def _finite_or_none(v: float):
    return float(v) if np.isfinite(v) else None


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig) -> int:
    p = cfg.params
    beta = BoundaryControl.uniform(cfg.beta, p.n_levels)
    u = forward_solve(p, beta, cfg.mode)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_field_csv(out / "u.csv", u, "u")
    energy = diagnostics.energy_bound_report(p, u)
    summary = {
        "config": _config_summary(cfg),
        "x": u.mesh.nodes.tolist(),
        "final_time": float(u.times[-1]),
        "final_profile": u.final.tolist(),
        "cost": cost(p, beta, u).as_dict(),
        "energy": energy.as_dict(),
        "steady_state_gap": float(np.max(np.abs(u.levels[-1] - u.levels[-2]))),
    }
    write_json(out / "summary.json", summary)
    log.info("simulate: wrote %s and %s", out / "u.csv", out / "summary.json")
    return EXIT_OK


def _run_driver(cfg: RunConfig) -> OptimalityReport:
    p = cfg.params
    if cfg.driver == "sweep":
        beta0 = BoundaryControl.uniform(cfg.beta, p.n_levels)
        return forward_backward_sweep(p, beta0, cfg.mode, cfg.tol, cfg.max_iter, cfg.relaxation)
    if cfg.driver == "projected_gradient":
        beta0 = BoundaryControl.uniform(cfg.beta, p.n_levels)
        return projected_gradient_descent(p, beta0, cfg.mode, cfg.step, cfg.tol, cfg.max_iter)
    if cfg.driver == "constant_beta":
        return constant_parameter_sweep(p, cfg.beta, cfg.mode, cfg.tol, cfg.max_iter, cfg.relaxation,
                                        cfg.constant_reduction)
    # simulate_only: evaluate the fixed control without iterating
    beta = BoundaryControl.uniform(cfg.beta, p.n_levels)
    u = forward_solve(p, beta, cfg.mode)
    phi = adjoint_solve(p, beta, u, cfg.mode)
    J = cost(p, beta, u)
    return OptimalityReport(beta, J, 0, [], [J.total], float(np.max(np.abs(phi[0]))), True,
                            status="fixed_control", driver="simulate_only", state=u, adjoint=phi)


def cmd_optimize(cfg: RunConfig) -> int:
    report = _run_driver(cfg)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    ctrl = report.control
    with open(out / "beta.csv", "w", newline="") as fh:
        if ctrl.kind == "constant":
            fh.write(f"beta_constant\n{_fmt(ctrl.constant_value)}\n")
        else:
            fh.write("t,beta_left,beta_right\n")
            for t, bl, br in zip(report.state.times, ctrl.left, ctrl.right):
                fh.write(f"{_fmt(t)},{_fmt(bl)},{_fmt(br)}\n")
    with open(out / "cost_history.csv", "w", newline="") as fh:
        fh.write("iteration,cost\n")
        for k, J in enumerate(report.cost_history):
            fh.write(f"{k},{_fmt(J)}\n")
    write_field_csv(out / "u.csv", report.state, "u")
    write_field_csv(out / "phi.csv", report.adjoint, "phi")
    payload = report.as_dict()
    payload["config"] = _config_summary(cfg)
    write_json(out / "report.json", payload)
    log.info("optimize: %s after %d iterations, J = %.12g", report.status, report.iterations,
             report.cost.total)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verification checks; each returns (passed, detail, value)


def _check_mass(cfg, rng):
    err = diagnostics.assembly_check(cfg.params.n_elements)["mass"]
    return err <= 1e-13, f"relative deviation {err:.3e} (tol 1e-13)", err


def _check_stiffness(cfg, rng):
    err = diagnostics.assembly_check(cfg.params.n_elements)["stiffness"]
    return err <= 1e-13, f"relative deviation {err:.3e} (tol 1e-13)", err


def _check_thomas(cfg, rng):
    n = cfg.params.n_elements + 1
    sub, sup = rng.uniform(-1, 1, n - 1), rng.uniform(-1, 1, n - 1)
    diag = 2.5 + rng.uniform(0, 1, n)
    t = Tridiagonal(sub, diag, sup)
    rhs = rng.uniform(-1, 1, n)
    ref = np.linalg.solve(t.to_dense(), rhs)
    err = float(np.max(np.abs(thomas_solve(t, rhs) - ref)) / np.max(np.abs(ref)))
    return err <= 1e-12, f"relative deviation {err:.3e} (tol 1e-12)", err


def _check_scheme_rows(cfg, rng):
    p = cfg.params
    mesh = Mesh1D(p.n_elements)
    h, tau, bl, br = mesh.h, p.time_step, cfg.beta, cfg.beta
    a, b = h / 6 - tau / h, 2 * h / 3 + 2 * tau / h
    lhs, rhs = paper_forward_rows(mesh, tau, bl, br)
    expected = [
        lhs.row(0) == (0.0, a * (1 + h * bl) + b + tau * bl / 2, 2 * a),
        lhs.row(1) == (a, b, a),
        lhs.row(p.n_elements - 1) == (a, b + a / (1 + br * h), 0.0),
    ]
    ok = all(expected)
    return ok, "row 0, interior and last row match a/b compositions" if ok else "row coefficients differ", 0.0


def _check_oracle(cfg, rng):
    p = cfg.params
    if p.n_elements > 100:
        p = p.replace(n_elements=100)
    gaps = []
    for q in (p, p.replace(time_step=p.time_step / 2)):
        b = BoundaryControl.uniform(cfg.beta, q.n_levels)
        ref = diagnostics.dense_reference_solve(q, b)
        gaps.append(float(np.max(np.abs(ref.levels - forward_solve(q, b).levels))))
    if gaps[0] <= 1e-10:
        return True, f"gap {gaps[0]:.3e} (source effectively linear)", gaps[0]
    ratio = gaps[0] / gaps[1]
    ok = 1.6 <= ratio <= 2.4
    return ok, f"gap {gaps[0]:.3e}, halving ratio {ratio:.3f} (expect 2 for O(tau))", gaps[0]


def _check_energy(cfg, rng):
    p = cfg.params
    totals, linf_u, linf_phi = [], [], []
    for n_el, steps in diagnostics.REFINEMENT_SEQUENCE:
        q = p.replace(n_elements=n_el, time_step=p.horizon / steps)
        beta = BoundaryControl.uniform(cfg.beta, q.n_levels)
        u = forward_solve(q, beta, cfg.mode)
        phi = adjoint_solve(q, beta, u, cfg.mode)
        totals.append(diagnostics.energy_bound_report(q, u).total)
        linf_u.append(diagnostics.linf_monitor(u))
        linf_phi.append(diagnostics.linf_monitor(phi))

    def spread(v):
        v = np.asarray(v)
        return 1.0 if np.max(v) == 0 else float(np.max(v) / np.min(v)) if np.min(v) > 0 else np.inf

    worst = max(spread(totals), spread(linf_u), spread(linf_phi))
    return worst < 2.0, f"max refinement spread {worst:.4f} (tol < 2)", worst


def _smooth_direction(rng, n_levels, n_modes=4):
    s = np.linspace(0.0, 1.0, n_levels)
    out = []
    for _ in range(2):
        c = rng.standard_normal(n_modes)
        g = sum(ck * np.cos(k * np.pi * s) for k, ck in enumerate(c))
        out.append(g / np.max(np.abs(g)))
    return BoundaryControl.trajectory(out[0], out[1])


def _check_sensitivity(cfg, rng):
    p = cfg.params
    beta = BoundaryControl.uniform(cfg.beta, p.n_levels)
    l = _smooth_direction(rng, p.n_levels)
    u = forward_solve(p, beta, cfg.mode)
    psi = sensitivity_solve(p, beta, u, l, cfg.mode)
    scale = max(np.max(np.abs(psi.levels)), 1e-300)
    errs = []
    for eps in (1e-2, 1e-3, 1e-4):
        fd = (forward_solve(p, beta.perturbed(l, eps), cfg.mode).levels - u.levels) / eps
        errs.append(float(np.max(np.abs(psi.levels - fd)) / scale))
    tol = 5e-3 if p.conductivity.id.startswith("constant") else 5e-2
    monotone = errs[0] > errs[1] > errs[2] or errs[-1] <= 1e-10
    ok = monotone and errs[-1] <= tol
    return ok, "relative errors " + ", ".join(f"{e:.2e}" for e in errs) + f" (final tol {tol:g})", errs[-1]


def _gradient_errors(cfg, rng, central=False):
    """Relative gap between finite differences of J and the adjoint gradient.

    Uses the same adjoint as the drivers (the exact discrete adjoint in
    consistent mode) and seeded smooth directions with sup norm 1.
    """
    p = cfg.params
    eps = 1e-4
    discrete = cfg.mode is SchemeMode.CONSISTENT_GALERKIN
    beta = BoundaryControl.uniform(cfg.beta, p.n_levels)
    u = forward_solve(p, beta, cfg.mode)
    phi = adjoint_solve(p, beta, u, cfg.mode, discrete=discrete)
    g = gradient_direction(beta, u, phi)

    def J(b):
        return cost(p, b, forward_solve(p, b, cfg.mode)).total

    J0 = cost(p, beta, u).total
    errs = []
    for _ in range(5):
        l = _smooth_direction(rng, p.n_levels)
        if central:
            fd = (J(beta.perturbed(l, eps)) - J(beta.perturbed(l, -eps))) / (2 * eps)
        else:
            fd = (J(beta.perturbed(l, eps)) - J0) / eps
        pred = directional_derivative(g, l, p.time_step)
        errs.append(abs(fd - pred) / max(abs(pred), 1e-14))
    return errs


def _check_gradient(cfg, rng):
    worst = max(_gradient_errors(cfg, rng))
    return worst <= 5e-2, f"worst relative error {worst:.3e} over 5 directions (tol 5e-2)", worst


def _check_gradient_central(cfg, rng):
    worst = max(_gradient_errors(cfg, rng, central=True))
    return worst <= 1e-5, f"worst relative error {worst:.3e} with central differences (tol 1e-5)", worst


def _check_constant_gradient(cfg, rng):
    p = cfg.params
    discrete = cfg.mode is SchemeMode.CONSISTENT_GALERKIN
    b0 = cfg.beta
    eps = 1e-5

    def J(v):
        c = BoundaryControl.constant(v, p.n_levels)
        return cost(p, c, forward_solve(p, c, cfg.mode)).total

    c = BoundaryControl.constant(b0, p.n_levels)
    u = forward_solve(p, c, cfg.mode)
    adj = adjoint_solve(p, c, u, cfg.mode, source=0.0, terminal=1.0, discrete=discrete)
    pred = constant_gradient(b0, u, adj)
    fd = (J(b0 + eps) - J(b0 - eps)) / (2 * eps)
    err = abs(fd - pred) / max(abs(fd), 1e-14)
    return err <= 5e-2, f"relative error {err:.3e} (tol 5e-2)", err


CHECKS = (
    ("mass_matrix", _check_mass),
    ("stiffness_matrix", _check_stiffness),
    ("thomas_solver", _check_thomas),
    ("scheme_rows", _check_scheme_rows),
    ("oracle_agreement", _check_oracle),
    ("energy_bound", _check_energy),
    ("sensitivity_fd", _check_sensitivity),
    ("gradient_fd", _check_gradient),
    ("gradient_fd_central", _check_gradient_central),
    ("constant_gradient_fd", _check_constant_gradient),
)


def run_checks(cfg: RunConfig) -> list[dict]:
    rows = []
    for k, (name, fn) in enumerate(CHECKS):
        rng = np.random.default_rng([cfg.seed, k])
        try:
            ok, detail, value = fn(cfg, rng)
        except (DivergenceError, SingularSystemError, OracleError) as exc:
            ok, detail, value = False, f"{type(exc).__name__}: {exc}", float("nan")
        rows.append({"check": name, "passed": bool(ok), "detail": detail, "value": _finite_or_none(value)})
    return rows


def cmd_verify(cfg: RunConfig) -> int:
    rows = run_checks(cfg)
    cross = diagnostics.scheme_cross_check(cfg.params, BoundaryControl.uniform(cfg.beta, cfg.params.n_levels))
    width = max(len(r["check"]) for r in rows)
    lines = [f"{r['check']:<{width}}  {'PASS' if r['passed'] else 'FAIL'}  {r['detail']}" for r in rows]
    if cross.paper_error:
        info = f"paper-faithful run failed: {cross.paper_error}"
    else:
        info = f"max gap {cross.max_gap:.3e}, normalized by (h + tau) {cross.normalized_gap:.3e}"
    lines.append(f"{'scheme_cross_check':<{width}}  INFO  {info}")
    print("\n".join(lines))
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "verify.json", {"config": _config_summary(cfg), "checks": rows,
                                     "scheme_cross_check": cross.as_dict()})
    failed = [r["check"] for r in rows if not r["passed"]]
    if failed:
        print("verification failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "optimize": cmd_optimize, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thermistor-opt", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="flat key = value configuration file")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--mode", choices=["paper", "consistent"], help="scheme mode (overrides mode)")
        sp.add_argument("--seed", type=int, help="seed for verification directions (overrides seed)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"output_dir": args.out, "mode": args.mode, "seed": args.seed}
    try:
        cfg = load_config(args.config, overrides)
    except ConfigurationError as exc:
        print("invalid configuration:", file=sys.stderr)
        for line in str(exc).splitlines():
            print(f"  - {line}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg)
    except (DivergenceError, SingularSystemError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
