import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from plns.errors import InvalidInputError
from plns.exponent import ConstantExponent, PresetExponent
from plns.grid import PeriodicGrid, laplacian, divergence
from plns.potential import (
    check_stress_inequalities,
    delta_sym,
    direct_stress_divergence,
    divergence_expansion_terms,
    growth_bound_check,
    hessian_contraction,
    hessian_norms,
    potential_value,
    stress,
    stress_divergence_expansion,
    stress_hessian,
)

E1 = np.diag([1.0, 0.0, 0.0])
finite = st.floats(-50, 50, allow_nan=False)
matrices = arrays(np.float64, (3, 3), elements=finite)
exponents = st.floats(1.0, 2.0, exclude_min=True)


def test_potential_value_examples():
    assert potential_value(np.zeros((3, 3)), 1.3) == 0.0
    assert potential_value(np.eye(3), 2.0) == pytest.approx(1.5, rel=1e-15)
    assert potential_value(E1, 1.5) == pytest.approx((2**0.75 - 1) / 1.5, rel=1e-15)
    assert potential_value(E1, 1.5) == pytest.approx(0.4545285, abs=1e-7)


def test_potential_rejects_exponent_out_of_range():
    for p in (1.0, 0.5, 2.01):
        with pytest.raises(InvalidInputError):
            potential_value(E1, p)


def test_stress_examples():
    assert np.all(stress(np.zeros((3, 3)), 1.2) == 0.0)
    S = stress(E1, 1.5)
    assert S[0, 0] == pytest.approx(2**-0.25, rel=1e-15)
    assert np.count_nonzero(S) == 1


@settings(max_examples=50)
@given(matrices)
def test_newtonian_limit_is_identity(B):
    Bs = 0.5 * (B + B.T)
    assert np.array_equal(stress(B, 2.0), Bs)
    assert np.allclose(stress_hessian(B, 2.0), delta_sym(3), rtol=0, atol=1e-13)


@settings(max_examples=50)
@given(matrices, exponents)
def test_stress_uses_symmetric_part(B, p):
    assert np.allclose(stress(B, p), stress(0.5 * (B + B.T), p), rtol=1e-14, atol=0)


def test_stress_is_gradient_of_potential():
    rng = np.random.default_rng(1)
    step = 1e-5
    for _ in range(1000):
        B = rng.uniform(-10, 10, (3, 3)) * 10.0 ** rng.integers(-1, 2)
        p = rng.uniform(1.01, 2.0)
        fd = np.empty((3, 3))
        for j in range(3):
            for k in range(3):
                E = np.zeros((3, 3))
                E[j, k] = step
                fd[j, k] = (potential_value(B + E, p) - potential_value(B - E, p)) / (2 * step)
        S = stress(B, p)
        assert np.linalg.norm(fd - S) <= 1e-6 * np.linalg.norm(S)


def test_hessian_at_origin_is_delta_sym():
    for p in (1.1, 1.5, 2.0):
        assert np.allclose(stress_hessian(np.zeros((3, 3)), p), delta_sym(3), rtol=0, atol=1e-15)


@settings(max_examples=100)
@given(matrices, exponents)
def test_hessian_symmetry_exact(B, p):
    H = stress_hessian(B, p)
    assert np.array_equal(H, H.transpose(2, 3, 0, 1))


@settings(max_examples=200)
@given(matrices, matrices, exponents)
def test_hessian_bounds(B, C, p):
    Bs, Cs = 0.5 * (B + B.T), 0.5 * (C + C.T)
    weight = (1 + np.sum(Bs * Bs)) ** ((p - 2) / 2)
    q = hessian_contraction(B, C, p)
    assert q >= (p - 1) * weight * np.sum(Cs * Cs) * (1 - 1e-12)
    op, frob = hessian_norms(stress_hessian(B, p))
    assert op <= weight * (1 + 1e-12)
    assert frob <= math.sqrt(6) * weight * (1 + 1e-12)


def test_hessian_frobenius_norm_at_origin_exceeds_two_in_3d():
    # the bilinear-form bound is 1; the Frobenius norm of delta_sym is sqrt(d(d+1)/2)
    op, frob = hessian_norms(stress_hessian(np.zeros((3, 3)), 1.5))
    assert op == pytest.approx(1.0) and frob == pytest.approx(math.sqrt(6))


def test_inequality_report_examples():
    B = np.diag([1.0, 2.0, -1.0])
    rep = check_stress_inequalities(B, B, 2.0)
    assert rep.stress_at_zero_exact
    assert rep.monotonicity is None and rep.lipschitz is None
    assert rep.coercivity == pytest.approx(1.0) and rep.growth == pytest.approx(1.0)

    rep = check_stress_inequalities(E1, np.zeros((3, 3)), 1.5)
    assert rep.lipschitz == pytest.approx(1.0, rel=1e-14)
    assert rep.growth == pytest.approx(1.0, rel=1e-14)
    assert rep.monotonicity == pytest.approx(1.0, rel=1e-14)


def test_lipschitz_ratio_approaches_two_only_in_the_limit():
    B = np.diag([1e6, 0.0, 0.0])
    C = -np.diag([1e3, 0.0, 0.0])
    assert 1.9 < check_stress_inequalities(B, C, 1.001).lipschitz < 2.0


def test_growth_bound_examples():
    rep = growth_bound_check(np.zeros((3, 3)), 1.7, [1.0, 0.0, 0.0], 0.3)
    assert rep.zero_derivatives_vanish
    assert np.all(rep.dS_dt == 0) and np.all(rep.dS_dx == 0)
    assert rep.ratio_t is None

    B = np.diag([1.0, 0.0, 0.0])
    rep = growth_bound_check(B, 1.7, [0.0, 0.0, 0.0], 0.0)
    assert rep.ratio_t == 0.0 and rep.ratio_x == 0.0

    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(200):
        B = rng.standard_normal((3, 3))
        B /= np.linalg.norm(0.5 * (B + B.T))
        rep = growth_bound_check(B, 1.7, [0.0, 0.0, 0.0], 0.1)
        worst = max(worst, rep.ratio_t)
    # the ratio is bounded by |dp/dt|
    assert 0.0 < worst <= 0.1


def test_divergence_expansion_trivial_cases():
    grid = PeriodicGrid(2, 16)
    zero = np.zeros((2,) + grid.shape)
    for term in divergence_expansion_terms(grid, zero, PresetExponent("sine")):
        assert np.all(term == 0)
    x = grid.coordinates()
    u = np.stack([np.sin(x[0]) * np.cos(x[1]), np.cos(x[0])])
    _, _, L3 = divergence_expansion_terms(grid, u, ConstantExponent(1.7))
    assert np.all(L3 == 0)


def test_divergence_expansion_newtonian():
    grid = PeriodicGrid(2, 32)
    x = grid.coordinates()
    u = np.stack([np.sin(x[0]) * np.cos(x[1]), np.cos(x[0] + x[1])])
    exp = stress_divergence_expansion(grid, u, 2.0)
    assert np.allclose(exp, 0.5 * (laplacian(grid, u) + grid.gradient(divergence(grid, u))), atol=1e-14)


def test_divergence_expansion_converges_for_sine_exponent():
    p = PresetExponent("sine", {"base": 1.8, "amplitude": 0.1})
    errors = []
    for n in (32, 64, 128):
        grid = PeriodicGrid(1, n)
        x = grid.coordinates()
        u = np.array([np.sin(x[0])])
        errors.append(np.max(np.abs(stress_divergence_expansion(grid, u, p) - direct_stress_divergence(grid, u, p))))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert orders[-1] >= 1.9
