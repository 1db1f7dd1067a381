"""Spatial grid, interaction kernel, kernel norms, and reproduction number.

Implements:
  - SpatialGrid: uniform midpoint grid on [0,1] with quadrature weights 1/n
  - KernelSpec: exponential-family interaction kernel
      k(r; u) = (1−u)·a(r) + k₀,  a(r) = c·e^{−δr}
    where u ∈ [0,1] is the lockdown control scaling only the adjustable part
  - KernelMatrix: Nyström (point-evaluation) discretization used by the
    dynamics, entry (i,j) = k(|x_i−x_j|)·w_j
  - KernelNorms: k₁ = ∫₀¹k(r)dr, K = max_x ∫₀¹k(|x−y|)dy, and the L²
    operator norm of T_k f = ∫k(|x−y|)f(y)dy via power iteration
  - basic reproduction number R₀ = (β/γ)·‖T_k‖
  - validate_assumptions: continuity / positivity / monotonicity /
    norm-ordering report for a kernel spec

Norm computations deliberately avoid the point-evaluation Nyström matrix:
midpoint sampling of the |x−y| cusp overestimates row integrals by ~2% at
n=100, which would make the norms grid-dependent.  Instead k₁ and K use
closed forms (adaptive quadrature for non-exponential parameters) and the
operator norm uses a cell-averaged Nyström matrix whose entries integrate
the kernel exactly over each cell, so all three are stable under grid
refinement.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import quad

__all__ = [
    "SpatialGrid",
    "KernelSpec",
    "KernelMatrix",
    "KernelNorms",
    "kernel_value",
    "build_kernel_matrix",
    "compute_norms",
    "basic_reproduction_number",
    "validate_assumptions",
]


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform cell-midpoint grid on [0,1].

    Nodes sit at (j+1/2)/n for j = 0..n−1; every node carries quadrature
    weight 1/n (midpoint rule), so the weights sum to the domain length 1.
    """

    n_points: int = 100

    def __post_init__(self) -> None:
        if self.n_points < 1:
            raise ValueError(f"n_points must be positive, got {self.n_points}")

    @cached_property
    def nodes(self) -> np.ndarray:
        n = self.n_points
        return (np.arange(n) + 0.5) / n

    @property
    def spacing(self) -> float:
        return 1.0 / self.n_points

    @cached_property
    def weights(self) -> np.ndarray:
        return np.full(self.n_points, self.spacing)

    @cached_property
    def distances(self) -> np.ndarray:
        """Pairwise distance matrix |x_i − x_j|."""
        x = self.nodes
        return np.abs(x[:, None] - x[None, :])


@dataclass(frozen=True)
class KernelSpec:
    """Parameters of the interaction kernel k(r; u) = (1−u)·c·e^{−δr} + k₀.

    Construction performs no validation so that invalid parameter sets can
    be passed to validate_assumptions, which reports violations instead of
    raising.
    """

    c: float = 50.0
    delta: float = 50.0
    k0: float = 0.0

    def a(self, r: np.ndarray | float) -> np.ndarray | float:
        """Adjustable kernel part a(r) = c·e^{−δr}."""
        return self.c * np.exp(-self.delta * np.asarray(r, dtype=float))


def kernel_value(spec: KernelSpec, r: float, u: float = 0.0) -> float:
    """Evaluate k(r; u) = (1−u)·a(r) + k₀ at distance r under control u.

    Args:
        spec: Kernel parameters.
        r: Spatial distance, must be ≥ 0.
        u: Lockdown intensity in [0,1]; scales only the adjustable part.

    Returns:
        Kernel value (non-negative for valid specs).

    Raises:
        ValueError: If r < 0 or u outside [0,1].
    """
    if r < 0:
        raise ValueError(f"distance must be non-negative, got {r}")
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"control must lie in [0,1], got {u}")
    return (1.0 - u) * float(spec.a(r)) + spec.k0


@dataclass(frozen=True)
class KernelMatrix:
    """Point-evaluation Nyström discretization of the kernel operator.

    values[i, j]   = k(|x_i−x_j|; u=0)·w_j   (full uncontrolled kernel)
    a_part[i, j]   = a(|x_i−x_j|)·w_j        (adjustable part only)

    The dynamics apply the controlled operator as
    (1−u)·(a_part @ z) + k₀·mean(z), which equals values @ z at u = 0.
    """

    spec: KernelSpec
    grid: SpatialGrid
    values: np.ndarray
    a_part: np.ndarray


def build_kernel_matrix(spec: KernelSpec, grid: SpatialGrid) -> KernelMatrix:
    """Assemble the Nyström matrices for the dynamics."""
    dist = grid.distances
    w = grid.weights[None, :]
    a_part = spec.a(dist) * w
    values = a_part + spec.k0 * w
    return KernelMatrix(spec=spec, grid=grid, values=values, a_part=a_part)


@dataclass(frozen=True)
class KernelNorms:
    """Kernel norms: one-sided L¹ norm, maximal row integral, operator norm.

    For monotone decreasing kernels K = 2∫₀^{1/2}k(r)dr ≤ 2·k₁, and the
    operator norm obeys the Schur bound op_norm ≤ K.
    """

    k1: float
    K: float
    op_norm: float
    function_l2: float


def _k1_exact(spec: KernelSpec) -> float:
    """∫₀¹ k(r) dr, closed form for the exponential family."""
    if spec.delta > 0:
        a_int = spec.c * (1.0 - np.exp(-spec.delta)) / spec.delta
    else:
        a_int = quad(lambda r: float(spec.a(r)), 0.0, 1.0, limit=200)[0]
    return a_int + spec.k0


def _K_exact(spec: KernelSpec) -> float:
    """max_x ∫₀¹ k(|x−y|) dy = 2∫₀^{1/2} k(r) dr for decreasing kernels."""
    if spec.delta > 0:
        a_int = 2.0 * spec.c * (1.0 - np.exp(-spec.delta / 2.0)) / spec.delta
    else:
        a_int = 2.0 * quad(lambda r: float(spec.a(r)), 0.0, 0.5, limit=200)[0]
    return a_int + spec.k0


def _function_l2(spec: KernelSpec) -> float:
    """(∫₀¹ k(r)² dr)^{1/2}, the L² norm of the kernel profile.

    Exposed for diagnostics only: for the default kernel it is ≈5, far from
    the spectral quantity that governs the epidemic threshold, which is why
    thresholds use op_norm instead.
    """
    if spec.delta > 0:
        c, d, k0 = spec.c, spec.delta, spec.k0
        sq = (c * c * (1.0 - np.exp(-2.0 * d)) / (2.0 * d)
              + 2.0 * c * k0 * (1.0 - np.exp(-d)) / d + k0 * k0)
    else:
        sq = quad(lambda r: float(spec.a(r) + spec.k0) ** 2, 0.0, 1.0,
                  limit=200)[0]
    return float(np.sqrt(sq))


def _cell_averaged_matrix(spec: KernelSpec, grid: SpatialGrid) -> np.ndarray:
    """Nyström matrix with exact kernel integrals over cells.

    Entry (i,j) = ∫_{cell j} k(|x_i−y|) dy.  Integrating the cell removes
    the midpoint-rule bias at the |x−y| cusp, so eigenvalues converge
    quadratically under grid refinement.  Returned matrix is symmetrized.
    """
    x = grid.nodes
    h = grid.spacing
    lo = x[None, :] - h / 2.0
    hi = x[None, :] + h / 2.0
    xi = x[:, None]
    c, d, k0 = spec.c, spec.delta, spec.k0

    if d > 0:
        # ∫ c·e^{−δ|xi−y|} dy over [lo,hi] split at y = xi when inside.
        def seg(a_, b_):
            """∫_a^b c·e^{−δ|xi−y|} dy for segments not straddling xi."""
            return (c / d) * np.abs(
                np.exp(-d * np.abs(xi - a_)) - np.exp(-d * np.abs(xi - b_))
            )

        inside = (lo < xi) & (xi < hi)
        vals = np.where(
            inside,
            (c / d) * (2.0 - np.exp(-d * (xi - lo)) - np.exp(-d * (hi - xi))),
            seg(lo, hi),
        )
    else:
        vals = np.empty((grid.n_points, grid.n_points))
        for i in range(grid.n_points):
            for j in range(grid.n_points):
                vals[i, j] = quad(
                    lambda y: float(spec.a(abs(x[i] - y))), lo[0, j], hi[0, j]
                )[0]
    vals = vals + k0 * h
    return 0.5 * (vals + vals.T)


def _power_iteration(mat: np.ndarray, rel_tol: float = 1e-8,
                     max_iter: int = 100000) -> float:
    """Largest eigenvalue of a symmetric non-negative matrix.

    Deterministic all-ones start; stops when the Rayleigh quotient changes
    by less than rel_tol relatively between iterations.
    """
    v = np.ones(mat.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = mat @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam_new = float(v @ (mat @ v))
        if abs(lam_new - lam) <= rel_tol * max(abs(lam_new), 1e-300):
            return lam_new
        lam = lam_new
    return lam


def compute_norms(spec: KernelSpec, grid: SpatialGrid) -> KernelNorms:
    """Compute k₁, K (closed form / quadrature) and ‖T_k‖ (power iteration).

    The operator norm is estimated on the cell-averaged Nyström matrix of
    the given grid; k₁ and K integrate the kernel function directly.  All
    three change by less than 1e−3 relative when the grid is refined.
    """
    k1 = _k1_exact(spec)
    K = _K_exact(spec)
    # Cell averaging already carries the w_j weight (the cell length), and
    # uniform weights make D^{1/2} K D^{-1/2} symmetrization a no-op.
    mat = _cell_averaged_matrix(spec, grid)
    op_norm = _power_iteration(mat)
    return KernelNorms(k1=k1, K=K, op_norm=op_norm,
                       function_l2=_function_l2(spec))


def basic_reproduction_number(spec: KernelSpec, beta: float, gamma: float,
                              grid: SpatialGrid) -> float:
    """R₀ = (β/γ)·‖T_k‖ for the uncontrolled kernel.

    Raises:
        ValueError: If gamma ≤ 0.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    norms = compute_norms(spec, grid)
    return (beta / gamma) * norms.op_norm


def validate_assumptions(spec: KernelSpec, grid: SpatialGrid) -> dict[str, dict]:
    """Check the kernel assumptions on the grid; report, never raise.

    Checks: continuity (exponential family is smooth away from the cusp),
    non-negativity on sampled distances, monotone decrease in r, k₁ > 0,
    and the strict ordering k₁ < K.

    Returns:
        Mapping from assumption name to {"passed": bool, "detail": str}.
    """
    report: dict[str, dict] = {}
    r_samples = np.linspace(0.0, 1.0, 4 * grid.n_points + 1)
    k_vals = np.asarray(spec.a(r_samples)) + spec.k0

    report["continuity"] = {
        "passed": bool(np.all(np.isfinite(k_vals))),
        "detail": "exponential family is continuous for finite parameters",
    }
    neg = k_vals < 0
    report["non_negativity"] = {
        "passed": bool(not neg.any()),
        "detail": "ok" if not neg.any() else
        f"k({r_samples[neg][0]:.4f}) = {k_vals[neg][0]:.6g} < 0",
    }
    diffs = np.diff(k_vals)
    report["monotone_decreasing"] = {
        "passed": bool(np.all(diffs <= 1e-15)),
        "detail": "ok" if np.all(diffs <= 1e-15) else
        f"kernel increases by {float(diffs.max()):.3g} between samples",
    }
    k1 = _k1_exact(spec)
    K = _K_exact(spec)
    report["k1_positive"] = {
        "passed": bool(k1 > 0),
        "detail": f"k1 = {k1:.6g}",
    }
    report["k1_less_than_K"] = {
        "passed": bool(k1 < K),
        "detail": f"k1 = {k1:.6g}, K = {K:.6g}",
    }
    return report
