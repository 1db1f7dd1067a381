"""Fixed-point solvers for the SIS equilibrium and the SIR final size.

Implements:
  - chi: the kernel operator χ[z](x) = ∫₀¹ z(y)k(|x−y|)dy (Nyström form)
  - sis_fixed_point: Picard iteration for the SIS equilibrium in fixed-point
    form z = Φ[z] := χ[z]/(1+χ[z]) (equivalent to z = (1−z)χ[z]), with
    a-priori bound, symmetry, and positivity-dichotomy diagnostics
  - sir_prevalence: Picard iteration for the final-size equation
    r_∞ = 1 − exp(−(β/γ)·T_k r_∞), started from r ≡ 0.99
  - threshold_report: norm-based regime classification (operator norm
    threshold at β/γ·‖T_k‖ = 1; contraction regime when K/k₁² < 1)

Diagnostic conventions: the self-map box [(k₁−1)/k₁, (K−1)/K] and the
contraction constant K/k₁² are exact statements about row integrals of the
kernel operator.  For the checks to hold exactly on the discrete operator,
bounds_ok / contraction_constant inside SisEquilibrium use the discrete row
sums of the Nyström matrix (min and max), which differ from the continuum
k₁, K by the midpoint-rule cusp bias (~2% at n=100 for the default
exponential kernel).  threshold_report, in contrast, reports the
grid-stable continuum norms from compute_norms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid_kernel import (
    KernelMatrix,
    SpatialGrid,
    compute_norms,
)
from .sir_forward import EpidemicParams

__all__ = [
    "FixedPointConfig",
    "SisEquilibrium",
    "PrevalenceSolution",
    "chi",
    "sis_fixed_point",
    "sir_prevalence",
    "threshold_report",
    "discrete_row_norms",
]


@dataclass(frozen=True)
class FixedPointConfig:
    """Iteration bookkeeping for the Picard solvers."""

    max_iter: int = 10000
    tol: float = 1e-12
    initial_guess: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class SisEquilibrium:
    """Result of the SIS fixed-point iteration with lemma diagnostics."""

    z_star: np.ndarray
    iterations: int
    residual: float
    converged: bool
    bounds_ok: bool
    symmetric_ok: bool
    dichotomy_ok: bool
    contraction_constant: float


@dataclass(frozen=True)
class PrevalenceSolution:
    """Final-size profile r_∞ with s_∞ = 1 − r_∞."""

    r_inf: np.ndarray
    s_inf: np.ndarray
    iterations: int
    residual: float
    converged: bool


def chi(z: np.ndarray, kernel: KernelMatrix, grid: SpatialGrid) -> np.ndarray:
    """Apply the kernel operator: χ[z](x_i) = Σ_j z_j·k(|x_i−x_j|)·w_j."""
    return kernel.values @ z


def discrete_row_norms(kernel: KernelMatrix) -> tuple[float, float]:
    """(min, max) row sums of the Nyström matrix.

    These are the discrete counterparts of k₁ (attained at the boundary)
    and K (attained at the center) and make the box-invariance and
    contraction statements exact for the discrete operator.
    """
    row = kernel.values.sum(axis=1)
    return float(row.min()), float(row.max())


def sis_fixed_point(kernel: KernelMatrix, grid: SpatialGrid,
                    cfg: FixedPointConfig | None = None) -> SisEquilibrium:
    """Picard iteration z ← Φ[z] = χ[z]/(1+χ[z]) for the SIS equilibrium.

    Starts from (K−1)/K when the discrete max row sum K exceeds 1 (the
    upper corner of the invariant box), else from 0.5.  On convergence the
    result satisfies z = (1−z)χ[z] up to the residual.

    Diagnostics attached to the result:
      - bounds_ok: (k₁−1)/k₁ ≤ z* ≤ (K−1)/K pointwise (discrete row-sum
        norms; only meaningful for the nontrivial branch with k₁ > 1)
      - symmetric_ok: sup|z*(x) − z*(1−x)| ≤ 1e−8
      - dichotomy_ok: z* is either uniformly ≈ 0 or strictly positive
      - contraction_constant: K/k₁² (discrete); Picard is guaranteed to
        contract on the box only when this is < 1, but is attempted
        regardless and non-convergence is reported, not hidden
    """
    cfg = cfg or FixedPointConfig()
    k1_d, K_d = discrete_row_norms(kernel)
    if cfg.initial_guess is not None:
        z = np.asarray(cfg.initial_guess, dtype=float).copy()
    elif K_d > 1.0:
        z = np.full(grid.n_points, (K_d - 1.0) / K_d)
    else:
        z = np.full(grid.n_points, 0.5)

    iterations = 0
    diff = np.inf
    for iterations in range(1, cfg.max_iter + 1):
        chi_z = chi(z, kernel, grid)
        z_new = chi_z / (1.0 + chi_z)
        diff = float(np.max(np.abs(z_new - z)))
        z = z_new
        if diff <= cfg.tol:
            break
    converged = diff <= cfg.tol
    chi_z = chi(z, kernel, grid)
    residual = float(np.max(np.abs(z - chi_z / (1.0 + chi_z))))

    if k1_d > 1.0:
        lo, hi = (k1_d - 1.0) / k1_d, (K_d - 1.0) / K_d
        slack = 10.0 * max(residual, cfg.tol)
        bounds_ok = bool((z >= lo - slack).all() and (z <= hi + slack).all())
    else:
        bounds_ok = bool((np.abs(z) <= max(10.0 * cfg.tol, residual)).all())
    symmetric_ok = bool(np.max(np.abs(z - z[::-1])) <= 1e-8)
    near_zero = float(np.max(np.abs(z))) <= 10.0 * max(cfg.tol, residual)
    strictly_positive = float(z.min()) > 0.0
    dichotomy_ok = near_zero or strictly_positive
    return SisEquilibrium(
        z_star=z,
        iterations=iterations,
        residual=residual,
        converged=converged,
        bounds_ok=bounds_ok,
        symmetric_ok=symmetric_ok,
        dichotomy_ok=dichotomy_ok,
        contraction_constant=K_d / k1_d**2,
    )


def sir_prevalence(kernel: KernelMatrix, params: EpidemicParams,
                   grid: SpatialGrid,
                   cfg: FixedPointConfig | None = None) -> PrevalenceSolution:
    """Picard iteration for r_∞ = 1 − exp(−(β/γ)·T_k r_∞) from r ≡ 0.99.

    Uses the uncontrolled kernel (time-independent, per the final-size
    derivation's standing assumption).  Non-convergence within max_iter is
    reported via converged=False with the last iterate.
    """
    cfg = cfg or FixedPointConfig()
    ratio = params.beta / params.gamma
    if cfg.initial_guess is not None:
        r = np.asarray(cfg.initial_guess, dtype=float).copy()
    else:
        r = np.full(grid.n_points, 0.99)
    diff = np.inf
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        r_new = 1.0 - np.exp(-ratio * (kernel.values @ r))
        diff = float(np.max(np.abs(r_new - r)))
        r = r_new
        if diff <= cfg.tol:
            break
    converged = diff <= cfg.tol
    residual = float(
        np.max(np.abs(r - (1.0 - np.exp(-ratio * (kernel.values @ r)))))
    )
    return PrevalenceSolution(
        r_inf=r,
        s_inf=1.0 - r,
        iterations=iterations,
        residual=residual,
        converged=converged,
    )


def threshold_report(kernel: KernelMatrix, params: EpidemicParams,
                     grid: SpatialGrid) -> dict:
    """Norm diagnostics and regime labels for the kernel operator.

    Regime: 'disease-free only' when (β/γ)·‖T_k‖ < 1, else 'supercritical
    (unique nontrivial prevalence)'.  Banach contraction for the SIS map
    applies when K/k₁² < 1; otherwise existence rests on compactness and
    the label says so.
    """
    norms = compute_norms(kernel.spec, grid)
    r0 = (params.beta / params.gamma) * norms.op_norm
    contraction = norms.K / norms.k1**2
    return {
        "k1": norms.k1,
        "K": norms.K,
        "op_norm": norms.op_norm,
        "R0": r0,
        "contraction_constant": contraction,
        "regime": (
            "disease-free only" if r0 < 1.0
            else "supercritical (unique nontrivial prevalence)"
        ),
        "fixed_point_theory": (
            "Banach contraction" if contraction < 1.0
            else "compactness (Schauder) existence"
        ),
    }
