"""Forward integration of the nonlocal SIR system on the spatial grid.

Implements:
  - EpidemicParams (β, γ), InitialCondition, StateField containers
  - ControlField with three parameterizations:
      * TimeOnly      u(t)        — one value per time node
      * SpaceTime     u(t,x)      — full node matrix
      * PiecewiseConstant u_ij    — constant on time×space blocks
  - rhs: dz/dt = β(1−z−r)·∫z(y)k(|x−y|; u)dy − γz,  dr/dt = γz,
    with the integral as the Nyström quadrature sum and the control scaling
    only the adjustable kernel part: k(r; u) = (1−u)a(r) + k₀
  - integrate_forward: classical RK4 with fixed dt; the control is held
    constant over each step at its start-node value (the adjoint
    discretization relies on the same convention)
  - spatial_mean: quadrature-weighted mean time series

The integrator never clamps negative values: if z drops below −1e−10 the
run raises IntegrationError naming the step, surfacing dt problems instead
of hiding them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .grid_kernel import KernelMatrix, SpatialGrid

__all__ = [
    "EpidemicParams",
    "InitialCondition",
    "StateField",
    "ControlField",
    "IntegrationError",
    "rhs",
    "integrate_forward",
    "spatial_mean",
]

ControlVariant = Literal["time", "spacetime", "piecewise"]


class IntegrationError(RuntimeError):
    """Raised when the forward or backward integration leaves the valid range."""


@dataclass(frozen=True)
class EpidemicParams:
    """Transmission rate β and recovery rate γ, both per day and positive."""

    beta: float = 0.1
    gamma: float = 0.1

    def __post_init__(self) -> None:
        if self.beta <= 0 or self.gamma <= 0:
            raise ValueError(
                f"beta and gamma must be positive, got beta={self.beta}, "
                f"gamma={self.gamma}"
            )


@dataclass(frozen=True)
class InitialCondition:
    """Initial infected and recovered fractions on the grid."""

    z0: np.ndarray
    r0: np.ndarray

    def __post_init__(self) -> None:
        z0 = np.asarray(self.z0, dtype=float)
        r0 = np.asarray(self.r0, dtype=float)
        object.__setattr__(self, "z0", z0)
        object.__setattr__(self, "r0", r0)
        if z0.shape != r0.shape:
            raise ValueError("z0 and r0 must have identical shapes")
        if (z0 < 0).any() or (r0 < 0).any() or (z0 + r0 > 1).any():
            raise ValueError(
                "initial condition must satisfy 0 ≤ z0, 0 ≤ r0, z0+r0 ≤ 1"
            )


@dataclass(frozen=True)
class ControlField:
    """Lockdown control in one of three parameterizations, values in [0,1].

    TimeOnly stores one value per time node (n_t+1,); SpaceTime a full
    (n_t+1, n) node matrix; PiecewiseConstant an (n_tblocks, n_xblocks)
    block matrix together with the block sizes that induce u(t,x).

    During integration, step s uses the control value at the step's start
    node (TimeOnly/SpaceTime) or the block containing the start time
    (PiecewiseConstant).
    """

    variant: ControlVariant
    values: np.ndarray
    time_block: float = 0.0   # days per block (piecewise only)
    space_block: int = 0      # grid cells per block (piecewise only)
    dt: float = 0.25

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.variant == "piecewise" and (
            self.time_block <= 0 or self.space_block <= 0
        ):
            raise ValueError("piecewise controls need positive block sizes")

    # -- constructors -------------------------------------------------------

    @staticmethod
    def time_only(values: np.ndarray, dt: float) -> "ControlField":
        return ControlField(variant="time", values=np.asarray(values, float),
                            dt=dt)

    @staticmethod
    def space_time(values: np.ndarray, dt: float) -> "ControlField":
        return ControlField(variant="spacetime",
                            values=np.asarray(values, float), dt=dt)

    @staticmethod
    def piecewise(blocks: np.ndarray, time_block: float, space_block: int,
                  dt: float) -> "ControlField":
        return ControlField(variant="piecewise",
                            values=np.asarray(blocks, float),
                            time_block=time_block, space_block=space_block,
                            dt=dt)

    @staticmethod
    def constant(value: float, variant: ControlVariant, n_steps: int,
                 n_points: int, dt: float, time_block: float = 0.0,
                 space_block: int = 0) -> "ControlField":
        """Uniform control of the given value in the given parameterization."""
        if variant == "time":
            return ControlField.time_only(np.full(n_steps + 1, value), dt)
        if variant == "spacetime":
            return ControlField.space_time(
                np.full((n_steps + 1, n_points), value), dt)
        n_tb = int(round(n_steps * dt / time_block))
        n_xb = n_points // space_block
        return ControlField.piecewise(np.full((n_tb, n_xb), value),
                                      time_block, space_block, dt)

    # -- evaluation ---------------------------------------------------------

    @property
    def n_steps(self) -> int:
        if self.variant == "time":
            return len(self.values) - 1
        if self.variant == "spacetime":
            return self.values.shape[0] - 1
        return int(round(self.values.shape[0] * self.time_block / self.dt))

    def at_step(self, s: int) -> float | np.ndarray:
        """Control value held during step s (start-node convention)."""
        if self.variant == "time":
            return float(self.values[s])
        if self.variant == "spacetime":
            return self.values[s]
        t = s * self.dt
        i = min(int(t / self.time_block), self.values.shape[0] - 1)
        return np.repeat(self.values[i], self.space_block)

    def as_matrix(self, n_points: int) -> np.ndarray:
        """Induced full (n_t+1, n) node matrix u(t_k, x_j)."""
        if self.variant == "spacetime":
            return self.values.copy()
        n_steps = self.n_steps
        if self.variant == "time":
            return np.repeat(self.values[:, None], n_points, axis=1)
        rows = np.empty((n_steps + 1, n_points))
        for s in range(n_steps + 1):
            i = min(int(s * self.dt / self.time_block),
                    self.values.shape[0] - 1)
            rows[s] = np.repeat(self.values[i], self.space_block)
        return rows


@dataclass(frozen=True)
class StateField:
    """Gridded trajectories of infected and recovered fractions.

    Invariants (checked by integrate_forward): 0 ≤ z, 0 ≤ r, z+r ≤ 1
    pointwise, and r non-decreasing in time at every grid point.
    """

    times: np.ndarray
    z: np.ndarray
    r: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def rhs(z: np.ndarray, r: np.ndarray, u_at_t: float | np.ndarray,
        params: EpidemicParams, kernel: KernelMatrix,
        grid: SpatialGrid) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise derivatives of the nonlocal SIR system.

    dz/dt = β(1−z−r)·[(1−u)·(A z) + k₀·⟨z⟩] − γz,   dr/dt = γz,
    where A is the point-evaluation Nyström matrix of the adjustable kernel
    part and ⟨z⟩ the quadrature mean.
    """
    if z.shape != r.shape or z.shape[0] != grid.n_points:
        raise ValueError("state arrays must match the grid size")
    influence = (1.0 - u_at_t) * (kernel.a_part @ z)
    if kernel.spec.k0 != 0.0:
        influence = influence + kernel.spec.k0 * float(grid.weights @ z)
    dz = params.beta * (1.0 - z - r) * influence - params.gamma * z
    dr = params.gamma * z
    return dz, dr


def integrate_forward(ic: InitialCondition, control: ControlField,
                      params: EpidemicParams, kernel: KernelMatrix,
                      grid: SpatialGrid, T: float, dt: float) -> StateField:
    """Integrate the system with classical RK4 at fixed step dt over [0,T].

    The control is evaluated once per step (at the step's start) and held
    constant through the four stages.  Deterministic: identical inputs give
    bit-identical trajectories.

    Raises:
        ValueError: On grid/duration mismatches.
        IntegrationError: If z or s=1−z−r leaves [−1e−10, 1+1e−10], which
            indicates a too-large dt.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T={T} is not a positive multiple of dt={dt}")
    if control.n_steps < n_steps:
        raise ValueError(
            f"control covers {control.n_steps} steps, need {n_steps}"
        )
    n = grid.n_points
    z = np.empty((n_steps + 1, n))
    r = np.empty((n_steps + 1, n))
    z[0] = ic.z0
    r[0] = ic.r0
    for s in range(n_steps):
        u = control.at_step(s)
        zs, rs = z[s], r[s]
        dz1, dr1 = rhs(zs, rs, u, params, kernel, grid)
        dz2, dr2 = rhs(zs + 0.5 * dt * dz1, rs + 0.5 * dt * dr1, u,
                       params, kernel, grid)
        dz3, dr3 = rhs(zs + 0.5 * dt * dz2, rs + 0.5 * dt * dr2, u,
                       params, kernel, grid)
        dz4, dr4 = rhs(zs + dt * dz3, rs + dt * dr3, u, params, kernel, grid)
        z[s + 1] = zs + (dt / 6.0) * (dz1 + 2.0 * dz2 + 2.0 * dz3 + dz4)
        r[s + 1] = rs + (dt / 6.0) * (dr1 + 2.0 * dr2 + 2.0 * dr3 + dr4)
        if z[s + 1].min() < -1e-10 or (z[s + 1] + r[s + 1]).max() > 1.0 + 1e-10:
            raise IntegrationError(
                f"state left [0,1] at step {s + 1} (t={t_of(s + 1, dt)}): "
                f"min z = {z[s + 1].min():.3e}, "
                f"max z+r = {(z[s + 1] + r[s + 1]).max():.6f}"
            )
    times = np.arange(n_steps + 1) * dt
    return StateField(times=times, z=z, r=r)


def t_of(step: int, dt: float) -> float:
    """Time coordinate of a step index."""
    return step * dt


def spatial_mean(field: "StateField | np.ndarray",
                 grid: SpatialGrid) -> np.ndarray:
    """Quadrature-weighted spatial mean per time node, ∫₀¹ z(t,x) dx.

    Accepts a StateField (whose z is reduced) or a raw (n_t+1, n)
    trajectory matrix; midpoint rule in space.
    """
    values = field.z if isinstance(field, StateField) else np.asarray(field)
    return values @ grid.weights
