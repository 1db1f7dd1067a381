"""Tests for the spatial grid, kernel evaluation, and kernel norms."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from kernelsir.grid_kernel import (
    KernelSpec,
    SpatialGrid,
    _cell_averaged_matrix,
    basic_reproduction_number,
    build_kernel_matrix,
    compute_norms,
    kernel_value,
    validate_assumptions,
)

DEFAULT = KernelSpec(c=50.0, delta=50.0, k0=0.0)
CONSTANT = KernelSpec(c=0.0, delta=1.0, k0=1.0)


# ══════════════════════════════════════════════════════════════════════
# Grid geometry
# ══════════════════════════════════════════════════════════════════════

def test_grid_nodes_are_cell_midpoints() -> None:
    g = SpatialGrid(4)
    assert g.nodes == pytest.approx([0.125, 0.375, 0.625, 0.875])
    assert g.spacing == pytest.approx(0.25)
    assert g.weights == pytest.approx([0.25] * 4)


def test_grid_weights_sum_to_domain_length() -> None:
    for n in (1, 7, 100, 333):
        assert SpatialGrid(n).weights.sum() == pytest.approx(1.0)


def test_grid_rejects_nonpositive_size() -> None:
    with pytest.raises(ValueError):
        SpatialGrid(0)


def test_grid_distances_symmetric_zero_diagonal() -> None:
    g = SpatialGrid(10)
    d = g.distances
    assert np.allclose(d, d.T)
    assert np.all(np.diag(d) == 0.0)
    assert d.max() == pytest.approx(0.9)


# ══════════════════════════════════════════════════════════════════════
# Kernel evaluation
# ══════════════════════════════════════════════════════════════════════

def test_kernel_value_at_zero_distance_no_control() -> None:
    assert kernel_value(DEFAULT, 0.0, 0.0) == pytest.approx(50.0)


def test_kernel_value_full_control_kills_adjustable_part() -> None:
    for r in (0.0, 0.1, 0.7):
        assert kernel_value(DEFAULT, r, 1.0) == 0.0


def test_kernel_value_closed_form_point() -> None:
    assert kernel_value(DEFAULT, 0.02, 0.0) == pytest.approx(
        50.0 * math.exp(-1.0), rel=1e-12
    )
    assert kernel_value(DEFAULT, 0.02, 0.0) == pytest.approx(18.394, abs=1e-3)


def test_kernel_value_background_floor_survives_control() -> None:
    spec = KernelSpec(c=50.0, delta=50.0, k0=0.3)
    assert kernel_value(spec, 0.5, 1.0) == pytest.approx(0.3)


def test_kernel_value_rejects_bad_domain() -> None:
    with pytest.raises(ValueError):
        kernel_value(DEFAULT, -0.1, 0.0)
    with pytest.raises(ValueError):
        kernel_value(DEFAULT, 0.1, 1.5)
    with pytest.raises(ValueError):
        kernel_value(DEFAULT, 0.1, -0.01)


@given(
    r1=st.floats(0.0, 1.0),
    r2=st.floats(0.0, 1.0),
    u=st.floats(0.0, 1.0),
    c=st.floats(0.1, 100.0),
    delta=st.floats(0.1, 100.0),
    k0=st.floats(0.0, 5.0),
)
@settings(max_examples=200, deadline=None)
def test_kernel_monotone_nonincreasing_in_distance(
    r1: float, r2: float, u: float, c: float, delta: float, k0: float
) -> None:
    spec = KernelSpec(c=c, delta=delta, k0=k0)
    lo, hi = sorted((r1, r2))
    assert kernel_value(spec, lo, u) >= kernel_value(spec, hi, u) - 1e-12


# ══════════════════════════════════════════════════════════════════════
# Kernel matrix
# ══════════════════════════════════════════════════════════════════════

def test_kernel_matrix_entries_and_row_integrals() -> None:
    g = SpatialGrid(100)
    km = build_kernel_matrix(DEFAULT, g)
    # entry (i,j) = k(|x_i−x_j|)·w_j
    i, j = 10, 30
    assert km.values[i, j] == pytest.approx(
        kernel_value(DEFAULT, abs(g.nodes[i] - g.nodes[j]), 0.0) * 0.01
    )
    # uniform field: row integrals approximate ∫k(|x−y|)dy, maximal mid-domain
    rows = km.values @ np.ones(100)
    assert rows[50] > rows[0]
    assert rows[50] == pytest.approx(2.0, rel=0.05)


def test_kernel_matrix_constant_kernel_is_averaging() -> None:
    g = SpatialGrid(50)
    km = build_kernel_matrix(CONSTANT, g)
    z = np.linspace(0.0, 1.0, 50)
    assert km.values @ z == pytest.approx(np.full(50, z.mean()), rel=1e-12)
    assert np.all(km.a_part == 0.0)


# ══════════════════════════════════════════════════════════════════════
# Norms: closed forms, power iteration, refinement stability
# ══════════════════════════════════════════════════════════════════════

def test_k1_closed_form() -> None:
    norms = compute_norms(DEFAULT, SpatialGrid(100))
    assert norms.k1 == pytest.approx(1.0 - math.exp(-50.0), rel=1e-12)


def test_K_closed_form_matches_quadrature_oracle() -> None:
    norms = compute_norms(DEFAULT, SpatialGrid(100))
    assert norms.K == pytest.approx(2.0 * (1.0 - math.exp(-25.0)), rel=1e-12)
    oracle = 2.0 * quad(lambda r: 50.0 * math.exp(-50.0 * r), 0.0, 0.5)[0]
    assert norms.K == pytest.approx(oracle, abs=1e-6)


def test_K_is_row_integral_at_domain_centre() -> None:
    oracle = quad(lambda y: 50.0 * math.exp(-50.0 * abs(0.5 - y)), 0.0, 1.0)[0]
    norms = compute_norms(DEFAULT, SpatialGrid(100))
    assert norms.K == pytest.approx(oracle, abs=1e-6)


def test_function_l2_norm_closed_form() -> None:
    norms = compute_norms(DEFAULT, SpatialGrid(100))
    oracle = math.sqrt(quad(lambda r: (50.0 * math.exp(-50.0 * r)) ** 2,
                            0.0, 1.0)[0])
    assert norms.function_l2 == pytest.approx(oracle, rel=1e-9)
    assert norms.function_l2 == pytest.approx(5.0, rel=1e-9)


def test_op_norm_frozen_value_and_ordering() -> None:
    norms = compute_norms(DEFAULT, SpatialGrid(100))
    assert norms.op_norm == pytest.approx(1.992663089343, abs=1e-9)
    assert norms.k1 < norms.op_norm < norms.K


def test_op_norm_matches_dense_eigendecomposition() -> None:
    g = SpatialGrid(150)
    mat = _cell_averaged_matrix(DEFAULT, g)
    eig = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (mat + mat.T)))))
    norms = compute_norms(DEFAULT, g)
    assert abs(norms.op_norm - eig) < 1e-6


def test_norms_stable_under_grid_doubling() -> None:
    a = compute_norms(DEFAULT, SpatialGrid(100))
    b = compute_norms(DEFAULT, SpatialGrid(200))
    assert abs(b.k1 - a.k1) / a.k1 < 1e-3
    assert abs(b.K - a.K) / a.K < 1e-3
    assert abs(b.op_norm - a.op_norm) / a.op_norm < 1e-3


def test_norms_constant_kernel_all_one() -> None:
    norms = compute_norms(CONSTANT, SpatialGrid(100))
    assert norms.k1 == pytest.approx(1.0, rel=1e-12)
    assert norms.K == pytest.approx(1.0, rel=1e-12)
    assert norms.op_norm == pytest.approx(1.0, abs=1e-9)


# ══════════════════════════════════════════════════════════════════════
# Reproduction number
# ══════════════════════════════════════════════════════════════════════

def test_r0_default_kernel_near_two() -> None:
    r0 = basic_reproduction_number(DEFAULT, 0.1, 0.1, SpatialGrid(100))
    assert r0 == pytest.approx(2.0, abs=0.05)
    assert r0 == pytest.approx(1.992663089343, abs=1e-9)


def test_r0_constant_kernel_scales_with_rate_ratio() -> None:
    g = SpatialGrid(100)
    assert basic_reproduction_number(CONSTANT, 0.1, 0.1, g) == pytest.approx(
        1.0, abs=1e-9
    )
    assert basic_reproduction_number(CONSTANT, 0.2, 0.1, g) == pytest.approx(
        2.0, abs=1e-9
    )


def test_r0_rejects_nonpositive_gamma() -> None:
    with pytest.raises(ValueError):
        basic_reproduction_number(DEFAULT, 0.1, 0.0, SpatialGrid(10))


# ══════════════════════════════════════════════════════════════════════
# Assumption validation reports
# ══════════════════════════════════════════════════════════════════════

def test_validate_default_kernel_all_pass() -> None:
    report = validate_assumptions(DEFAULT, SpatialGrid(100))
    assert all(entry["passed"] for entry in report.values())


def test_validate_constant_kernel_fails_strict_norm_gap() -> None:
    report = validate_assumptions(CONSTANT, SpatialGrid(100))
    assert not report["k1_less_than_K"]["passed"]
    assert report["non_negativity"]["passed"]


def test_validate_negative_amplitude_fails_nonnegativity() -> None:
    report = validate_assumptions(
        KernelSpec(c=-1.0, delta=1.0, k0=0.0), SpatialGrid(100)
    )
    assert not report["non_negativity"]["passed"]
