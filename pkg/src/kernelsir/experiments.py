"""Scenario definitions, end-to-end experiment orchestration, and file I/O.

Eight predefined scenarios (A1–D2) pair a control parameterization
(time-only, space-time, or piecewise-constant blocks) with a horizon and
cost weights.  ``run_scenario`` optimizes the control, evaluates the cost
of the uncontrolled and optimized trajectories, reruns the optimized
policy through the stochastic agent ensemble, and writes everything to a
self-describing output directory (an :class:`OutputBundle`).

All CSV numbers are written with 17 significant digits so every cost
value in ``compare.json`` can be recomputed exactly from the exported
files alone.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .abm import AbmConfig, EnsembleResult, compare, run_ensemble
from .equilibria import threshold_report
from .grid_kernel import KernelSpec, SpatialGrid, build_kernel_matrix
from .optimal_control import (
    CostParams,
    SweepConfig,
    SweepResult,
    cost_functional,
    fbs_solve,
)
from .sir_forward import (
    ControlField,
    EpidemicParams,
    InitialCondition,
    StateField,
    integrate_forward,
)

ALL_STAGES = frozenset({"forward", "optimize", "abm"})


class ConfigurationError(ValueError):
    """Raised for unknown scenario names or malformed config files."""


@dataclass(frozen=True)
class ScenarioSpec:
    """Fully resolved description of one experiment.

    Field defaults are the shared model constants; the named scenarios
    override only the horizon, the cost weights, the initial condition,
    and the control parameterization flags.
    """

    name: str = "custom"
    space_dependent_u: bool = False
    piecewise_u: bool = False
    T: float = 400.0
    ic_choice: str = "z0_1"          # z0_1 | z0_2 | explicit
    z0: tuple | None = None          # used when ic_choice == "explicit"
    r0: tuple | None = None
    eta: float = 0.02
    omega: float = 1.0
    beta: float = 0.1
    gamma: float = 0.1
    c: float = 50.0
    delta: float = 50.0
    k0: float = 0.0
    c1: float = 1000.0
    c2: float = 1.0
    z_min: float = 1e-5
    z_max: float = 5e-3
    psi_slope: float = 1000.0
    sigma: float = 0.1
    tol: float = 1e-4
    max_iter: int = 500
    u_init: float = 0.5
    n_points: int = 100
    dt: float = 0.25
    time_block: float = 10.0
    space_block: int = 10
    agents_per_location: int = 50000
    abm_runs: int = 10
    abm_dt: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.T <= 0 or self.dt <= 0:
            raise ConfigurationError(
                f"T and dt must be positive, got T={self.T}, dt={self.dt}")
        if self.ic_choice not in ("z0_1", "z0_2", "explicit"):
            raise ConfigurationError(
                f"ic_choice must be z0_1, z0_2, or explicit, "
                f"got {self.ic_choice!r}")
        if self.ic_choice == "explicit" and self.z0 is None:
            raise ConfigurationError(
                "ic_choice 'explicit' requires a z0 array")

    @property
    def variant(self) -> str:
        if self.piecewise_u:
            return "piecewise"
        return "spacetime" if self.space_dependent_u else "time"

    # -- sub-configuration builders -----------------------------------------

    def grid(self) -> SpatialGrid:
        return SpatialGrid(self.n_points)

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(c=self.c, delta=self.delta, k0=self.k0)

    def epidemic_params(self) -> EpidemicParams:
        return EpidemicParams(beta=self.beta, gamma=self.gamma)

    def cost_params(self) -> CostParams:
        return CostParams(eta=self.eta, omega=self.omega, c1=self.c1,
                          c2=self.c2, z_min=self.z_min, z_max=self.z_max,
                          psi_slope=self.psi_slope)

    def sweep_config(self) -> SweepConfig:
        return SweepConfig(sigma=self.sigma, tol=self.tol,
                           max_iter=self.max_iter, u_init=self.u_init)

    def initial_condition(self, scale: int = 1) -> InitialCondition:
        grid = self.grid()
        if self.ic_choice == "explicit":
            z0 = np.asarray(self.z0, dtype=float)
            r0 = (np.zeros_like(z0) if self.r0 is None
                  else np.asarray(self.r0, dtype=float))
        elif self.ic_choice == "z0_1":
            z0 = np.full(grid.n_points, 2e-5)
            r0 = np.zeros(grid.n_points)
        else:
            z0 = np.where(grid.nodes < 0.9, 1e-5, 1e-4)
            r0 = np.zeros(grid.n_points)
        return InitialCondition(z0=z0 * scale, r0=r0)


def _named(name: str, *, space: bool, piece: bool, T: float, ic: str,
           eta: float, omega: float) -> ScenarioSpec:
    return ScenarioSpec(name=name, space_dependent_u=space, piecewise_u=piece,
                        T=T, ic_choice=ic, eta=eta, omega=omega)


SCENARIOS: dict[str, ScenarioSpec] = {
    "A1": _named("A1", space=False, piece=False, T=400.0, ic="z0_1",
                 eta=0.02, omega=1.0),
    "A2": _named("A2", space=False, piece=False, T=800.0, ic="z0_1",
                 eta=0.005, omega=0.2),
    "B1": _named("B1", space=False, piece=False, T=400.0, ic="z0_2",
                 eta=0.02, omega=1.0),
    "B2": _named("B2", space=False, piece=False, T=800.0, ic="z0_2",
                 eta=0.005, omega=0.2),
    "C1": _named("C1", space=True, piece=False, T=400.0, ic="z0_2",
                 eta=0.02, omega=1.0),
    "C2": _named("C2", space=True, piece=False, T=800.0, ic="z0_2",
                 eta=0.005, omega=0.2),
    "D1": _named("D1", space=True, piece=True, T=400.0, ic="z0_2",
                 eta=0.02, omega=1.0),
    "D2": _named("D2", space=True, piece=True, T=800.0, ic="z0_2",
                 eta=0.005, omega=0.2),
}


def load_scenario(name_or_path: str | Path) -> ScenarioSpec:
    """Resolve a scenario name (case-insensitive) or JSON config path.

    JSON configs start from the field defaults (optionally from a named
    scenario via a ``"base"`` key) and override individual fields.
    Unknown fields and reserved-name collisions are rejected with the
    offending field named.
    """
    key = str(name_or_path).strip()
    if key.upper() in SCENARIOS:
        return SCENARIOS[key.upper()]
    path = Path(key)
    if not path.exists():
        raise ConfigurationError(
            f"unknown scenario name or missing config file: {key!r} "
            f"(known names: {', '.join(sorted(SCENARIOS))})")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(
            f"config file {path} must contain a JSON object")
    base_name = raw.pop("base", None)
    if base_name is not None:
        if str(base_name).upper() not in SCENARIOS:
            raise ConfigurationError(
                f"field 'base': unknown scenario {base_name!r}")
        base = SCENARIOS[str(base_name).upper()]
    else:
        base = ScenarioSpec()
    known = {f.name for f in dataclasses.fields(ScenarioSpec)}
    for field_name in raw:
        if field_name not in known:
            raise ConfigurationError(
                f"unknown configuration field {field_name!r} in {path}")
    for list_field in ("z0", "r0"):
        if isinstance(raw.get(list_field), list):
            raw[list_field] = tuple(raw[list_field])
    try:
        spec = dataclasses.replace(base, **raw)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid configuration in {path}: {exc}")\
            from exc
    if spec.name.upper() in SCENARIOS and spec != SCENARIOS[spec.name.upper()]:
        raise ConfigurationError(
            f"field 'name': {spec.name!r} is reserved for the predefined "
            f"scenario; pick a different name for modified configs")
    return spec


def diagnostics(spec: ScenarioSpec) -> dict:
    """Kernel norm diagnostics and regime labels for a scenario."""
    grid = spec.grid()
    kernel = build_kernel_matrix(spec.kernel_spec(), grid)
    return threshold_report(kernel, spec.epidemic_params(), grid)


# ---------------------------------------------------------------------------
# Output bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OutputBundle:
    """Handle to one experiment's output directory.

    Layout (all paths relative to ``directory``)::

        scenario.json            resolved configuration (+ scale)
        z.csv, r.csv             optimized-control trajectory
        z_uncontrolled.csv, r_uncontrolled.csv
        control.csv              optimized control at the solver grid
        adjoint1.csv, adjoint2.csv
        iterations.csv           cost per sweep iteration
        abm/controlled/run_<seed>.csv, mean_z.csv, mean_r.csv
        abm/uncontrolled/...     same layout under the zero control
        compare.json             cost values and trajectory norms
        norms.json               kernel diagnostics
    """

    directory: Path

    def __post_init__(self) -> None:
        object.__setattr__(self, "directory", Path(self.directory))

    def path(self, *parts: str) -> Path:
        return self.directory.joinpath(*parts)

    # -- readers ------------------------------------------------------------

    def load_json(self, name: str) -> dict:
        return json.loads(self.path(name).read_text())

    def _load_series(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        target = self.path(name)
        if not target.exists():
            raise FileNotFoundError(f"bundle is missing {name}")
        data = np.loadtxt(target, delimiter=",", skiprows=1, ndmin=2)
        return data[:, 0], data[:, 1:]

    def load_state(self, which: str = "optimal") -> StateField:
        suffix = "" if which == "optimal" else "_uncontrolled"
        times, z = self._load_series(f"z{suffix}.csv")
        _, r = self._load_series(f"r{suffix}.csv")
        return StateField(times=times, z=z, r=r)

    def load_control(self) -> ControlField:
        times, values = self._load_series("control.csv")
        dt = float(times[1] - times[0])
        if values.shape[1] == 1:
            return ControlField.time_only(values[:, 0], dt)
        return ControlField.space_time(values, dt)

    def load_iterations(self) -> np.ndarray:
        _, cost = self._load_series("iterations.csv")
        return cost[:, 0]

    def load_abm_mean(self, controlled: bool = True) -> StateField:
        sub = "controlled" if controlled else "uncontrolled"
        times, z = self._load_series(f"abm/{sub}/mean_z.csv")
        _, r = self._load_series(f"abm/{sub}/mean_r.csv")
        return StateField(times=times, z=z, r=r)

    def abm_run_files(self, controlled: bool = True) -> list[Path]:
        sub = "controlled" if controlled else "uncontrolled"
        return sorted(self.path("abm", sub).glob("run_*.csv"))

    # -- invariant check ----------------------------------------------------

    def recompute_costs(self) -> dict:
        """Re-evaluate every cost value in compare.json from the CSVs."""
        cfg = self.load_json("scenario.json")
        costs = CostParams(eta=cfg["eta"], omega=cfg["omega"], c1=cfg["c1"],
                           c2=cfg["c2"], z_min=cfg["z_min"],
                           z_max=cfg["z_max"], psi_slope=cfg["psi_slope"])
        grid = SpatialGrid(cfg["n_points"])
        out: dict[str, float] = {}
        stored = self.load_json("compare.json")
        if "j_uncontrolled_sir" in stored:
            state = self.load_state("uncontrolled")
            zero = ControlField.time_only(
                np.zeros(len(state.times)), float(cfg["dt"]))
            out["j_uncontrolled_sir"] = cost_functional(
                state, zero, costs, grid)
        if "j_optimal_sir" in stored:
            out["j_optimal_sir"] = cost_functional(
                self.load_state("optimal"), self.load_control(), costs, grid)
        if "j_uncontrolled_abm" in stored:
            state = self.load_abm_mean(controlled=False)
            zero = ControlField.time_only(
                np.zeros(len(state.times)), float(cfg["abm_dt"]))
            out["j_uncontrolled_abm"] = cost_functional(
                state, zero, costs, grid)
        if "j_optimal_abm" in stored:
            state = self.load_abm_mean(controlled=True)
            control = _subsample_control(
                self.load_control(), float(cfg["abm_dt"]))
            out["j_optimal_abm"] = cost_functional(state, control,
                                                   costs, grid)
        return out


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------

def _write_series(path: Path, times: np.ndarray, matrix: np.ndarray,
                  columns: list[str]) -> None:
    header = ",".join(["t", *columns])
    data = np.column_stack([times, matrix])
    np.savetxt(path, data, delimiter=",", fmt="%.17g", header=header,
               comments="")


def _space_columns(n: int) -> list[str]:
    return [f"x_{j}" for j in range(n)]


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _subsample_control(control: ControlField, target_dt: float,
                       n_points: int | None = None) -> ControlField:
    """Restrict a control to a coarser time grid (stride must be whole)."""
    stride = target_dt / control.dt
    if abs(stride - round(stride)) > 1e-9:
        raise ValueError(
            f"target dt {target_dt} is not a multiple of control dt "
            f"{control.dt}")
    stride = int(round(stride))
    if control.variant == "time":
        return ControlField.time_only(control.values[::stride], target_dt)
    if control.variant == "spacetime":
        return ControlField.space_time(control.values[::stride], target_dt)
    matrix = control.as_matrix(n_points)[::stride]
    return ControlField.space_time(matrix, target_dt)


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

def run_scenario(spec: ScenarioSpec, out_dir: str | Path, *,
                 scale: int = 1,
                 stages: frozenset[str] = ALL_STAGES) -> OutputBundle:
    """Run the requested stages of one experiment and write the bundle.

    ``scale`` trades agent resolution for initial prevalence: initial
    densities are multiplied by ``scale`` while agents per location are
    divided by it, keeping the expected count of initially infected
    agents fixed.  The deterministic runs use the same scaled densities
    so the stochastic/deterministic comparison stays like-for-like.
    """
    unknown = set(stages) - ALL_STAGES
    if unknown:
        raise ValueError(f"unknown stages: {sorted(unknown)}")
    if scale < 1 or spec.agents_per_location // scale < 1:
        raise ValueError(f"scale must be in [1, agents_per_location], "
                         f"got {scale}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = OutputBundle(directory=out)

    grid = spec.grid()
    kernel = build_kernel_matrix(spec.kernel_spec(), grid)
    params = spec.epidemic_params()
    costs = spec.cost_params()
    ic = spec.initial_condition(scale)
    n_steps = int(round(spec.T / spec.dt))
    cols = _space_columns(grid.n_points)

    scenario_payload = dataclasses.asdict(spec)
    scenario_payload["scale"] = scale
    scenario_payload["variant"] = spec.variant
    _write_json(out / "scenario.json", scenario_payload)
    _write_json(out / "norms.json", diagnostics(spec))

    report: dict = {"scenario": spec.name, "scale": scale, "seed": spec.seed}
    result: SweepResult | None = None

    if "forward" in stages:
        zero = ControlField.time_only(np.zeros(n_steps + 1), spec.dt)
        state0 = integrate_forward(ic, zero, params, kernel, grid,
                                   spec.T, spec.dt)
        report["j_uncontrolled_sir"] = cost_functional(state0, zero,
                                                       costs, grid)
        _write_series(out / "z_uncontrolled.csv", state0.times, state0.z,
                      cols)
        _write_series(out / "r_uncontrolled.csv", state0.times, state0.r,
                      cols)

    if "optimize" in stages:
        result = fbs_solve(ic, params, kernel, costs, grid, spec.T, spec.dt,
                           spec.variant, sweep=spec.sweep_config(),
                           time_block=spec.time_block,
                           space_block=spec.space_block)
        report["j_optimal_sir"] = cost_functional(result.state,
                                                  result.control, costs, grid)
        report["converged"] = result.converged
        report["iterations"] = result.iterations
        state = result.state
        _write_series(out / "z.csv", state.times, state.z, cols)
        _write_series(out / "r.csv", state.times, state.r, cols)
        u_matrix = result.control.as_matrix(grid.n_points)
        node_times = np.arange(n_steps + 1) * spec.dt
        if result.control.variant == "time":
            _write_series(out / "control.csv", node_times,
                          result.control.values[:, None], ["u"])
        else:
            _write_series(out / "control.csv", node_times, u_matrix, cols)
        _write_series(out / "adjoint1.csv", node_times,
                      result.adjoint.lambda1, cols)
        _write_series(out / "adjoint2.csv", node_times,
                      result.adjoint.lambda2, cols)
        iters = np.arange(len(result.cost_log), dtype=float)
        _write_series(out / "iterations.csv", iters,
                      np.asarray(result.cost_log)[:, None], ["J"])

    if "abm" in stages:
        agents = spec.agents_per_location // scale

        def ensemble(control: ControlField | None) -> EnsembleResult:
            cfg = AbmConfig(T=spec.T, n_locations=grid.n_points,
                            agents_per_location=agents, beta=spec.beta,
                            gamma=spec.gamma, kernel=spec.kernel_spec(),
                            dt=spec.abm_dt, seed=spec.seed, control=control)
            return run_ensemble(cfg, ic.z0, ic.r0, n_runs=spec.abm_runs)

        def write_ensemble(sub: str, ens: EnsembleResult) -> None:
            target = out / "abm" / sub
            target.mkdir(parents=True, exist_ok=True)
            for run in ens.runs:
                _write_series(target / f"run_{run.seed}.csv", run.times,
                              run.z_density, cols)
            _write_series(target / "mean_z.csv", ens.times, ens.mean_z, cols)
            _write_series(target / "mean_r.csv", ens.times, ens.mean_r, cols)

        abm_steps = int(round(spec.T / spec.abm_dt))
        zero_abm = ControlField.time_only(np.zeros(abm_steps + 1),
                                          spec.abm_dt)
        ens_free = ensemble(None)
        write_ensemble("uncontrolled", ens_free)
        free_state = StateField(times=ens_free.times, z=ens_free.mean_z,
                                r=ens_free.mean_r)
        report["j_uncontrolled_abm"] = cost_functional(free_state, zero_abm,
                                                       costs, grid)
        if result is not None:
            ens_ctrl = ensemble(result.control)
            write_ensemble("controlled", ens_ctrl)
            ctrl_state = StateField(times=ens_ctrl.times, z=ens_ctrl.mean_z,
                                    r=ens_ctrl.mean_r)
            sub_ctrl = _subsample_control(result.control, spec.abm_dt,
                                          grid.n_points)
            report["j_optimal_abm"] = cost_functional(ctrl_state, sub_ctrl,
                                                      costs, grid)
            norms = compare(ens_ctrl, result.state, grid)
            report["abm_vs_sir"] = {"sup_norm": norms["sup_norm"],
                                    "l2_norm": norms["l2_norm"]}

    _write_json(out / "compare.json", report)
    return bundle


def format_summary(report: dict) -> str:
    """One-line cost summary in the layout of the published table."""
    parts = [f"{report.get('scenario', '?')}:"]
    labels = [("j_uncontrolled_sir", "J(u≡0)"),
              ("j_optimal_sir", "J(u*)_sir"),
              ("j_optimal_abm", "J(u*)_abm")]
    for key, label in labels:
        if key in report:
            parts.append(f"{label}={report[key]:.1f}")
    if report.get("converged") is False:
        parts.append("[not converged]")
    return " ".join(parts)
