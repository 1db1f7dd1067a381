"""Command-line entry point for running experiments and inspecting output.

Exit codes: 0 on success, 2 when the control sweep did not converge,
1 on any error (including bad arguments).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .equilibria import sir_prevalence, sis_fixed_point
from .experiments import (
    ConfigurationError,
    OutputBundle,
    diagnostics,
    format_summary,
    load_scenario,
    run_scenario,
)
from .grid_kernel import build_kernel_matrix

RECOMPUTE_TOL = 1e-10


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits 1 on usage errors (2 is reserved for
    non-convergence)."""

    def error(self, message: str) -> None:  # noqa: A003 - argparse API
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _scenario_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("scenario",
                     help="scenario name (A1..D2) or JSON config path")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--seed", type=int, default=None,
                     help="override the ensemble base seed")
    sub.add_argument("--scale", type=int, default=1,
                     help="initial densities ×scale, agents ÷scale")
    sub.add_argument("--dt", type=float, default=None,
                     help="override the solver time step")
    sub.add_argument("--grid", type=int, default=None,
                     help="override the number of grid cells")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kernelsir",
                     description="Spatial epidemic control experiments")
    subs = parser.add_subparsers(dest="command", required=True)

    for name, description in [
        ("run", "optimize, simulate the agent ensemble, write the bundle"),
        ("optimize", "run the control sweep only"),
        ("forward", "run the uncontrolled trajectory only"),
        ("abm", "run the uncontrolled agent ensemble only"),
    ]:
        _scenario_args(subs.add_parser(name, help=description))

    for name, description in [
        ("equilibria", "solve the long-run equilibrium problems"),
        ("diagnostics", "print kernel norm and threshold diagnostics"),
    ]:
        sub = subs.add_parser(name, help=description)
        sub.add_argument("scenario",
                         help="scenario name (A1..D2) or JSON config path")
        sub.add_argument("--out", default=None,
                         help="write JSON here instead of stdout")
        sub.add_argument("--dt", type=float, default=None)
        sub.add_argument("--grid", type=int, default=None)

    sub = subs.add_parser(
        "compare",
        help="recompute bundle costs from its CSVs and verify compare.json")
    sub.add_argument("bundle", help="path to an output bundle directory")

    return parser


def _resolve(args: argparse.Namespace):
    spec = load_scenario(args.scenario)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "dt", None) is not None:
        overrides["dt"] = args.dt
    if getattr(args, "grid", None) is not None:
        overrides["n_points"] = args.grid
    return dataclasses.replace(spec, **overrides) if overrides else spec


_STAGES = {
    "run": frozenset({"forward", "optimize", "abm"}),
    "optimize": frozenset({"forward", "optimize"}),
    "forward": frozenset({"forward"}),
    "abm": frozenset({"abm"}),
}


def _cmd_scenario(args: argparse.Namespace) -> int:
    spec = _resolve(args)
    bundle = run_scenario(spec, args.out, scale=args.scale,
                          stages=_STAGES[args.command])
    report = bundle.load_json("compare.json")
    print(format_summary(report))
    print(f"bundle written to {bundle.directory}")
    if report.get("converged") is False:
        return 2
    return 0


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out is None:
        print(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
        print(f"written to {out}")


def _cmd_equilibria(args: argparse.Namespace) -> int:
    spec = _resolve(args)
    grid = spec.grid()
    kernel = build_kernel_matrix(spec.kernel_spec(), grid)
    report = diagnostics(spec)
    sis = sis_fixed_point(kernel, grid)
    prevalence = sir_prevalence(kernel, spec.epidemic_params(), grid)
    payload = {
        "threshold": report,
        "sis_equilibrium": {
            "mean": float(sis.z_star @ grid.weights),
            "max": float(np.max(sis.z_star)),
            "converged": sis.converged,
            "residual": sis.residual,
        },
        "final_size": {
            "mean_r_inf": float(prevalence.r_inf @ grid.weights),
            "max_r_inf": float(np.max(prevalence.r_inf)),
            "converged": prevalence.converged,
            "residual": prevalence.residual,
        },
    }
    _emit(payload, args.out)
    return 0


def _cmd_diagnostics(args: argparse.Namespace) -> int:
    _emit(diagnostics(_resolve(args)), args.out)
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    bundle = OutputBundle(directory=Path(args.bundle))
    stored = bundle.load_json("compare.json")
    recomputed = bundle.recompute_costs()
    worst = 0.0
    for key, value in recomputed.items():
        gap = abs(value - stored[key])
        worst = max(worst, gap)
        print(f"{key}: stored={stored[key]:.12g} "
              f"recomputed={value:.12g} |diff|={gap:.3g}")
    if worst > RECOMPUTE_TOL:
        print(f"FAIL: largest deviation {worst:.3g} exceeds "
              f"{RECOMPUTE_TOL:g}", file=sys.stderr)
        return 1
    print(f"OK: {len(recomputed)} cost values reproduced to "
          f"{RECOMPUTE_TOL:g}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command in _STAGES:
            return _cmd_scenario(args)
        if args.command == "equilibria":
            return _cmd_equilibria(args)
        if args.command == "diagnostics":
            return _cmd_diagnostics(args)
        return _cmd_compare(args)
    except SystemExit:
        raise
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive catch-all
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
