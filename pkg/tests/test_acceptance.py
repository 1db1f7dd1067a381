"""Acceptance gate: one test per published acceptance criterion.

Each test asserts the full criterion and reports every violating
scenario in its failure message, so ``pytest -v`` shows one pass/fail
line per criterion.  The shared pipeline fixture runs the complete
control sweep for all eight scenarios with their production settings
(500 iterations, n=100, dt=0.25), which takes tens of minutes; the
agent-ensemble fixture adds a few more.  Criteria that the sweep's
observed limit-cycle behavior makes unattainable are asserted anyway
and fail honestly rather than being weakened.
"""

import time

import numpy as np
import pytest
from scipy.optimize import brentq

from kernelsir.abm import (
    AbmConfig,
    measure_infectious_periods,
    run_ensemble,
)
from kernelsir.equilibria import (
    chi,
    discrete_row_norms,
    sis_fixed_point,
    sir_prevalence,
)
from kernelsir.experiments import SCENARIOS, _subsample_control
from kernelsir.grid_kernel import KernelSpec, SpatialGrid, build_kernel_matrix
from kernelsir.optimal_control import (
    CostParams,
    cost_functional,
    cost_gradient,
    fbs_solve,
)
from kernelsir.sir_forward import (
    ControlField,
    EpidemicParams,
    InitialCondition,
    StateField,
    integrate_forward,
)

UNCONTROLLED_TARGETS = {
    "A1": (132.4, 132.5), "B1": (132.4, 132.5),
    "C1": (132.4, 132.5), "D1": (132.4, 132.5),
    "A2": (32.9, 32.9), "B2": (32.9, 32.9),
    "C2": (32.9, 32.9), "D2": (32.9, 32.9),
}
OPTIMIZED_TARGETS = {
    "A1": 31.9, "A2": 13.4, "B1": 40.6, "B2": 19.9,
    "C1": 10.1, "C2": 8.5, "D1": 19.8, "D2": 12.2,
}
ABM_TARGETS = {
    "A1": 29.5, "A2": 12.6, "B1": 39.0, "B2": 19.3,
    "C1": 12.6, "C2": 9.0, "D1": 21.5, "D2": 12.5,
}
ABM_RELATIVE_TOL = {name: (0.20 if name in ("C1", "C2") else 0.15)
                    for name in ABM_TARGETS}
Z_CAPACITY = 5e-3


@pytest.fixture(scope="session")
def pipeline():
    """Uncontrolled forward run and full control sweep per scenario."""
    results = {}
    for name, spec in SCENARIOS.items():
        grid = spec.grid()
        kernel = build_kernel_matrix(spec.kernel_spec(), grid)
        params = spec.epidemic_params()
        costs = spec.cost_params()
        ic = spec.initial_condition()
        n_steps = int(round(spec.T / spec.dt))
        zero = ControlField.time_only(np.zeros(n_steps + 1), spec.dt)

        start = time.monotonic()
        state0 = integrate_forward(ic, zero, params, kernel, grid,
                                   spec.T, spec.dt)
        forward_seconds = time.monotonic() - start
        j_uncontrolled = cost_functional(state0, zero, costs, grid)

        sweep = fbs_solve(ic, params, kernel, costs, grid, spec.T, spec.dt,
                          spec.variant, sweep=spec.sweep_config(),
                          time_block=spec.time_block,
                          space_block=spec.space_block)
        results[name] = {
            "spec": spec, "grid": grid, "kernel": kernel, "params": params,
            "costs": costs, "ic": ic,
            "j_uncontrolled": j_uncontrolled,
            "forward_seconds": forward_seconds,
            "uncontrolled_state": state0,
            "sweep": sweep,
            "j_optimal": cost_functional(sweep.state, sweep.control,
                                         costs, grid),
        }
    return results


@pytest.fixture(scope="session")
def abm_ensembles(pipeline):
    """Full-resolution agent ensembles under each scenario's control."""
    out = {}
    for name, entry in pipeline.items():
        spec = entry["spec"]
        cfg = AbmConfig(T=spec.T, n_locations=spec.n_points,
                        agents_per_location=spec.agents_per_location,
                        beta=spec.beta, gamma=spec.gamma,
                        kernel=spec.kernel_spec(), dt=spec.abm_dt,
                        seed=spec.seed, control=entry["sweep"].control)
        ens = run_ensemble(cfg, entry["ic"].z0, entry["ic"].r0,
                           n_runs=spec.abm_runs)
        abm_state = StateField(times=ens.times, z=ens.mean_z, r=ens.mean_r)
        control = _subsample_control(entry["sweep"].control, spec.abm_dt,
                                     spec.n_points)
        out[name] = {
            "ensemble": ens,
            "j_abm": cost_functional(abm_state, control, entry["costs"],
                                     entry["grid"]),
        }
    return out


def _collect(failures: list[str]) -> None:
    assert not failures, "\n" + "\n".join(failures)


def test_uncontrolled_cost_table(pipeline):
    """J(u≡0) matches the published table within ±5%, under 10 s each."""
    failures = []
    for name, entry in pipeline.items():
        low, high = UNCONTROLLED_TARGETS[name]
        j = entry["j_uncontrolled"]
        if not (low * 0.95 <= j <= high * 1.05):
            failures.append(
                f"{name}: J(u≡0)={j:.4f} outside [{low * 0.95:.3f}, "
                f"{high * 1.05:.3f}]")
        if entry["forward_seconds"] >= 10.0:
            failures.append(f"{name}: uncontrolled forward took "
                            f"{entry['forward_seconds']:.1f}s (limit 10s)")
    _collect(failures)


def test_optimized_cost_table(pipeline):
    """J(u*) within ±15% of the published table, with the exact ordering
    J(C·) < J(D·) < J(A·/B·)."""
    failures = []
    for name, entry in pipeline.items():
        target = OPTIMIZED_TARGETS[name]
        j = entry["j_optimal"]
        if not (0.85 * target <= j <= 1.15 * target):
            failures.append(
                f"{name}: J(u*)={j:.4f} outside ±15% of {target} "
                f"(converged={entry['sweep'].converged})")
    for suffix in ("1", "2"):
        j = {k: pipeline[f"{k}{suffix}"]["j_optimal"] for k in "ABCD"}
        if not (j["C"] < j["D"] < j["A"] and j["D"] < j["B"]):
            failures.append(
                f"ordering violated for *{suffix}: C={j['C']:.3f} "
                f"D={j['D']:.3f} A={j['A']:.3f} B={j['B']:.3f}")
    _collect(failures)


def test_state_capacity_constraint(pipeline):
    """The optimized trajectory never exceeds the capacity level z_max.

    Asserted on the returned (best-iterate) control for every scenario,
    converged or not: the returned control is the solver's answer.
    """
    failures = []
    for name, entry in pipeline.items():
        peak = float(np.max(entry["sweep"].state.z))
        if peak > Z_CAPACITY:
            failures.append(
                f"{name}: max z = {peak:.6e} exceeds z_max={Z_CAPACITY} "
                f"(converged={entry['sweep'].converged})")
    _collect(failures)


def test_control_shape(pipeline):
    """A1's control peaks at or slightly above 0.5 (within [0.45, 0.65]);
    C1's space-time control never reaches 0.52."""
    failures = []
    a1_peak = float(np.max(pipeline["A1"]["sweep"].control.values))
    if not (0.45 <= a1_peak <= 0.65):
        failures.append(f"A1 control peak {a1_peak:.4f} outside "
                        f"[0.45, 0.65]")
    c1_sup = float(np.max(pipeline["C1"]["sweep"].control.values))
    if not c1_sup < 0.52:
        failures.append(f"C1 control sup {c1_sup:.4f} not < 0.52")
    _collect(failures)


def test_gradient_oracle():
    """Adjoint directional derivatives match central differences to 1e-3
    relative on the coarse instance (n=20, dt=1, T=40), 10 directions."""
    start = time.monotonic()
    grid = SpatialGrid(20)
    kernel = build_kernel_matrix(KernelSpec(), grid)
    params = EpidemicParams(beta=0.1, gamma=0.1)
    costs = CostParams(eta=0.02, omega=1.0)
    ic = InitialCondition(z0=np.full(20, 2e-5), r0=np.zeros(20))
    T, dt, n_steps = 40.0, 1.0, 40
    rng = np.random.default_rng(2024)
    base = ControlField.time_only(
        rng.uniform(0.2, 0.8, n_steps + 1), dt)
    grad = cost_gradient(ic, base, params, kernel, costs, grid, T, dt)

    def j_of(values):
        control = ControlField.time_only(values, dt)
        state = integrate_forward(ic, control, params, kernel, grid, T, dt)
        return cost_functional(state, control, costs, grid)

    failures = []
    step = 1e-5
    for i in range(10):
        direction = rng.standard_normal(n_steps + 1)
        predicted = float(grad @ direction)
        measured = (j_of(base.values + step * direction)
                    - j_of(base.values - step * direction)) / (2 * step)
        rel = abs(predicted - measured) / max(abs(measured), 1e-30)
        if rel > 1e-3:
            failures.append(f"direction {i}: adjoint={predicted:.10e} "
                            f"fd={measured:.10e} rel={rel:.2e}")
    elapsed = time.monotonic() - start
    if elapsed >= 60.0:
        failures.append(f"gradient check took {elapsed:.1f}s (limit 60s)")
    _collect(failures)


def test_monotone_sweep(pipeline):
    """Per-iteration cost is non-increasing after iteration 3 in every
    scenario, tolerance 1e-6 of the initial cost."""
    failures = []
    for name, entry in pipeline.items():
        log = np.asarray(entry["sweep"].cost_log)
        tol = 1e-6 * log[0]
        increases = np.diff(log[3:])
        worst = float(np.max(increases)) if increases.size else 0.0
        if worst > tol:
            where = int(np.argmax(increases)) + 3
            failures.append(
                f"{name}: J rose by {worst:.3e} at iteration {where} "
                f"(tolerance {tol:.3e})")
    _collect(failures)


def test_equilibria_oracles():
    """Constant-kernel SIS fixed point, subcritical decay, homogeneous
    final size vs scalar root-finding, and final size vs a long forward
    run for the production kernel."""
    failures = []

    grid = SpatialGrid(100)
    const2 = build_kernel_matrix(KernelSpec(c=0.0, delta=50.0, k0=2.0), grid)
    sis = sis_fixed_point(const2, grid)
    gap = float(np.max(np.abs(sis.z_star - 0.5)))
    if gap > 1e-10:
        failures.append(f"constant-kernel SIS fixed point off 1/2 by "
                        f"{gap:.3e}")

    sub = build_kernel_matrix(KernelSpec(c=0.0, delta=50.0, k0=0.5), grid)
    sis_sub = sis_fixed_point(sub, grid)
    if float(np.max(sis_sub.z_star)) > 1e-8:
        failures.append(f"subcritical fixed point not ~0: "
                        f"max={float(np.max(sis_sub.z_star)):.3e}")

    params = EpidemicParams(beta=0.1, gamma=0.1)
    prevalence = sir_prevalence(const2, params, grid)
    scalar_root = brentq(lambda r: r - 1.0 + np.exp(-2.0 * r), 0.5, 0.9999,
                         xtol=1e-14)
    gap = float(np.max(np.abs(prevalence.r_inf - scalar_root)))
    if gap > 1e-6:
        failures.append(
            f"homogeneous final size off scalar oracle {scalar_root:.6f} "
            f"by {gap:.3e}")

    spec = SCENARIOS["A1"]
    kernel = build_kernel_matrix(spec.kernel_spec(), grid)
    long_T = 4000.0
    zero = ControlField.time_only(
        np.zeros(int(round(long_T / spec.dt)) + 1), spec.dt)
    state = integrate_forward(spec.initial_condition(), zero,
                              spec.epidemic_params(), kernel, grid,
                              long_T, spec.dt)
    profile = sir_prevalence(kernel, spec.epidemic_params(), grid)
    gap = float(np.max(np.abs(state.r[-1] - profile.r_inf)))
    if gap > 1e-2:
        failures.append(f"final-size profile vs T=4000 forward run: "
                        f"sup gap {gap:.3e} > 1e-2")
    _collect(failures)


def test_fixed_point_box_properties():
    """Self-mapping and contraction hold on 1000 random box samples for a
    contraction-regime kernel; the production kernel's fixed point is
    symmetric to 1e-8 and obeys the row-norm bracket bounds."""
    failures = []

    grid = SpatialGrid(100)
    strong = build_kernel_matrix(KernelSpec(c=200.0, delta=50.0, k0=0.0),
                                 grid)
    k1, K = discrete_row_norms(strong)
    q = K / k1**2
    if not (k1 > 1.0 and q < 1.0):
        failures.append(f"test kernel not in contraction regime: "
                        f"k1={k1:.3f} K/k1^2={q:.3f}")
    low, high = (k1 - 1.0) / k1, (K - 1.0) / K
    rng = np.random.default_rng(7)

    def phi(z):
        c = chi(z, strong, grid)
        return c / (1.0 + c)

    slack = 1e-12
    for i in range(1000):
        z1 = rng.uniform(low, high, grid.n_points)
        z2 = rng.uniform(low, high, grid.n_points)
        p1, p2 = phi(z1), phi(z2)
        if np.any(p1 < low - slack) or np.any(p1 > high + slack):
            failures.append(f"sample {i}: Φ(z) leaves the box "
                            f"[{low:.4f}, {high:.4f}]")
            break
        lhs = float(np.max(np.abs(p1 - p2)))
        rhs = q * float(np.max(np.abs(z1 - z2)))
        if lhs > rhs + slack:
            failures.append(f"sample {i}: ‖Φz1−Φz2‖={lhs:.3e} > "
                            f"q·‖z1−z2‖={rhs:.3e}")
            break

    production = build_kernel_matrix(KernelSpec(), grid)
    sis = sis_fixed_point(production, grid)
    asym = float(np.max(np.abs(sis.z_star - sis.z_star[::-1])))
    if asym > 1e-8:
        failures.append(f"fixed point asymmetric: sup|z*(x)−z*(1−x)| = "
                        f"{asym:.3e}")
    if not sis.bounds_ok:
        failures.append("row-norm bracket bounds violated for the "
                        "production kernel's fixed point")
    _collect(failures)


def test_abm_validation(pipeline, abm_ensembles):
    """Full-resolution ensembles: A1's ensemble-mean curve stays within
    15% of the deterministic peak, infectious periods average 10 ± 0.5
    days, and J(u*)_abm matches the published column (±15%, ±20% for
    C1/C2)."""
    failures = []

    a1 = pipeline["A1"]
    ens = abm_ensembles["A1"]["ensemble"]
    weights = a1["grid"].weights
    det_mean = a1["sweep"].state.z @ weights
    abm_mean = ens.mean_z @ weights
    stride = int(round(a1["spec"].abm_dt / a1["spec"].dt))
    band = 0.15 * float(np.max(det_mean))
    gap = float(np.max(np.abs(abm_mean - det_mean[::stride])))
    if gap > band:
        failures.append(f"A1 ensemble mean deviates {gap:.3e} from the "
                        f"deterministic curve (band {band:.3e})")

    durations = measure_infectious_periods(0.1, 1.0, 50000, seed=0)
    mean_duration = float(durations.mean())
    if not (9.5 <= mean_duration <= 10.5):
        failures.append(f"mean infectious period {mean_duration:.3f} "
                        f"outside 10 ± 0.5 days")

    for name, entry in abm_ensembles.items():
        target = ABM_TARGETS[name]
        tol = ABM_RELATIVE_TOL[name]
        j = entry["j_abm"]
        if not ((1 - tol) * target <= j <= (1 + tol) * target):
            failures.append(
                f"{name}: J(u*)_abm={j:.4f} outside ±{tol:.0%} of {target}")
    _collect(failures)


def test_abm_desk_mode(pipeline):
    """Scaled-down ensemble (agents ÷10, densities ×10) finishes in under
    five minutes and stays within a relaxed 25% band of its own
    deterministic counterpart."""
    start = time.monotonic()
    a1 = pipeline["A1"]
    spec = a1["spec"]
    scale = 10
    ic = spec.initial_condition(scale)
    control = a1["sweep"].control
    det = integrate_forward(ic, control, a1["params"], a1["kernel"],
                            a1["grid"], spec.T, spec.dt)
    cfg = AbmConfig(T=spec.T, n_locations=spec.n_points,
                    agents_per_location=spec.agents_per_location // scale,
                    beta=spec.beta, gamma=spec.gamma,
                    kernel=spec.kernel_spec(), dt=spec.abm_dt,
                    seed=spec.seed, control=control)
    ens = run_ensemble(cfg, ic.z0, ic.r0, n_runs=spec.abm_runs)
    weights = a1["grid"].weights
    det_mean = det.z @ weights
    abm_mean = ens.mean_z @ weights
    stride = int(round(spec.abm_dt / spec.dt))
    band = 0.25 * float(np.max(det_mean))
    gap = float(np.max(np.abs(abm_mean - det_mean[::stride])))
    elapsed = time.monotonic() - start

    failures = []
    if gap > band:
        failures.append(f"desk-mode ensemble deviates {gap:.3e} "
                        f"(band {band:.3e})")
    if elapsed >= 300.0:
        failures.append(f"desk mode took {elapsed:.1f}s (limit 300s)")
    _collect(failures)
