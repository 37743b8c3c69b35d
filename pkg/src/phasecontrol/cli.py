"""Command-line front end.

Five subcommands share one configuration format and one output layout:

    phasecontrol simulate  --config run.toml --out results/
    phasecontrol gradcheck --config run.toml --out results/ [--inject-fault NAME]
    phasecontrol optimize  --config run.toml --out results/
    phasecontrol sweep-eps --config run.toml --out results/
    phasecontrol contdep   --config run.toml --out results/

Every invocation writes ``manifest.json`` into the output directory —
config digest, seed, library versions, wall time, status, and a results
summary — alongside the subcommand's own artifacts.  Exit codes: 0 the
run completed and its check passed, 1 the run completed but the check
failed, 2 the solver failed partway (the failing step is recorded in the
manifest), 3 the configuration or invocation was unusable.
"""

from __future__ import annotations

import argparse
import hashlib
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, parse_config
from .harness import contdep_probe, epsilon_sweep, grad_check
from .io import to_jsonable, write_json_report, write_trajectory_csv
from .optimize import projected_gradient
from .state import SolverError, boundedness_check, energy_diagnostic

__all__ = ["main"]

_ENERGY_SLACK_TOL = -1e-8

EXIT_PASSED = 0
EXIT_CHECK_FAILED = 1
EXIT_SOLVER_FAILURE = 2
EXIT_CONFIG_ERROR = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors map to the config exit code
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG_ERROR)


def _build_parser() -> _Parser:
    parser = _Parser(prog="phasecontrol", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, text in (
        ("simulate", "run the forward solver and dump the trajectory"),
        ("gradcheck", "verify the adjoint gradient against finite differences"),
        ("optimize", "run the projected-gradient solver on the tracking problem"),
        ("sweep-eps", "compare smoothed wells against the unsmoothed solve"),
        ("contdep", "probe continuous dependence on the boundary control"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="TOML run description")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        if name == "gradcheck":
            p.add_argument("--inject-fault", default=None,
                           metavar="NAME",
                           help="deliberately break one link for calibration")
    return parser


def _sha256(path: Path) -> str | None:
    try:
        return hashlib.sha256(path.read_bytes()).hexdigest()
    except OSError:
        return None


def _cmd_simulate(cfg, inst, out: Path, seed: int):
    state = inst.solve()
    for name, table in (
        ("theta", state.theta),
        ("phi", state.phi),
        ("xi", state.xi),
        ("theta_gamma", state.theta_gamma),
    ):
        write_trajectory_csv(out / f"{name}.csv", table)
    energy = energy_diagnostic(
        inst.grid, inst.tgrid, inst.params, inst.potential, state,
        inst.control, regularization=inst.regularization,
    )
    bounded = boundedness_check(state, inst.potential)
    write_json_report(out / "energy.json", energy)
    write_json_report(out / "boundedness.json", bounded)
    min_slack = float(np.min(energy.slack)) if energy.slack.size else 0.0
    ok = min_slack >= _ENERGY_SLACK_TOL and bounded.confined is not False
    results = {
        "min_energy_slack": min_slack,
        "confined": bounded.confined,
        "guard_rejections": state.diagnostics.guard_rejections,
        "subdivided_steps": state.diagnostics.subdivided_steps,
        "newton_iterations": state.diagnostics.newton_iterations,
    }
    return ok, results


def _cmd_gradcheck(cfg, inst, out: Path, seed: int, inject_fault=None):
    report = grad_check(inst, seed=seed, inject_fault=inject_fault)
    write_json_report(out / "gradcheck.json", report)
    results = {
        "passed": report.passed,
        "n_probes": len(report.probes),
        "n_failed": sum(not p.passed for p in report.probes),
    }
    return report.passed, results


def _cmd_optimize(cfg, inst, out: Path, seed: int):
    report = projected_gradient(
        inst.grid, inst.tgrid, inst.params, inst.potential, inst.init,
        inst.cost, inst.bounds,
        u0=inst.control,
        regularization=inst.regularization,
        solver_options=inst.solver_options,
        options=cfg.optimizer,
    )
    write_trajectory_csv(out / "control.csv", report.control.values)
    write_json_report(out / "optimize.json", report)
    converged = report.residual_history[-1] <= cfg.optimizer.tol
    results = {
        "iterations": report.iterations,
        "cost_history": list(report.cost_history),
        "final_cost": report.cost_history[-1],
        "final_residual": report.residual_history[-1],
        "converged": converged,
        "certified_fraction": report.certification.satisfied_fraction,
    }
    return converged, results


def _cmd_sweep_eps(cfg, inst, out: Path, seed: int):
    report = epsilon_sweep(inst)
    write_json_report(out / "sweep_eps.json", report)
    results = {
        "eps": list(report.eps),
        "passed": report.passed,
        "final_distance_phi": report.dist_phi[-1],
    }
    return report.passed, results


def _cmd_contdep(cfg, inst, out: Path, seed: int):
    report = contdep_probe(inst, seed=seed)
    write_json_report(out / "contdep.json", report)
    results = {
        "band_ratio": report.band_ratio,
        "band_factor": report.band_factor,
        "within_band": report.within_band,
    }
    return report.within_band, results


_COMMANDS = {
    "simulate": _cmd_simulate,
    "gradcheck": _cmd_gradcheck,
    "optimize": _cmd_optimize,
    "sweep-eps": _cmd_sweep_eps,
    "contdep": _cmd_contdep,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config_path = Path(args.config)

    started = time.perf_counter()
    manifest = {
        "subcommand": args.subcommand,
        "config": str(config_path),
        "config_sha256": _sha256(config_path),
        "seed": None,
        "versions": {
            "package": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "wall_time_seconds": None,
        "status": None,
        "failing_step": None,
        "results": None,
    }

    def finish(status: str, code: int) -> int:
        manifest["status"] = status
        manifest["wall_time_seconds"] = time.perf_counter() - started
        write_json_report(out / "manifest.json", manifest)
        return code

    fault = getattr(args, "inject_fault", None)
    try:
        cfg = parse_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        manifest["failing_step"] = "parse-config"
        return finish("config-error", EXIT_CONFIG_ERROR)

    seed = cfg.seed if args.seed is None else args.seed
    manifest["seed"] = seed
    inst = cfg.build()

    command = _COMMANDS[args.subcommand]
    kwargs = {}
    if args.subcommand == "gradcheck":
        kwargs["inject_fault"] = fault
    try:
        ok, results = command(cfg, inst, out, seed, **kwargs)
    except SolverError as exc:
        print(f"solver failure during {args.subcommand}: {exc}", file=sys.stderr)
        manifest["failing_step"] = args.subcommand
        manifest["results"] = {"error": str(exc)}
        return finish("solver-failure", EXIT_SOLVER_FAILURE)
    except ValueError as exc:
        # bad run-time request against a valid config (e.g. unknown fault name)
        print(f"error: {exc}", file=sys.stderr)
        manifest["failing_step"] = args.subcommand
        return finish("config-error", EXIT_CONFIG_ERROR)

    manifest["results"] = to_jsonable(results)
    if ok:
        return finish("passed", EXIT_PASSED)
    print(f"{args.subcommand}: check failed", file=sys.stderr)
    return finish("check-failed", EXIT_CHECK_FAILED)


if __name__ == "__main__":
    sys.exit(main())
