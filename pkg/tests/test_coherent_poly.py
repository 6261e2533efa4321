import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rabi_exact import coherent_poly as cp
from rabi_exact.closed_forms import fod_coefficients, fod_roots
from rabi_exact.ed_oracle import build_full_matrix
from rabi_exact.errors import NonFinite, TruncationTooSmall
from rabi_exact.model import EnergyLevel, ModelParams, Parity
from rabi_exact.rootfinder import Bracket, refine_root
from rabi_exact.spectrum_solver import residual_norm

from .reference import exact_recurrence

PARITIES = [Parity.EVEN, Parity.ODD]


def sign(x):
    return int(np.sign(float(x)))


# ---- coefficient sequence ----------------------------------------------------


@given(
    st.floats(-40, 40, allow_nan=False),
    st.floats(0.05, 2.0),
    st.floats(0.0, 2.0),
    st.sampled_from(PARITIES),
)
@settings(max_examples=40, deadline=None)
def test_first_two_coefficients_fixed(alpha, g, d, parity):
    c = cp.coefficient_sequence(alpha, ModelParams(g, d), parity, 6)
    assert c.true_value(0) == 1.0
    assert c.true_value(1) == 0.0
    assert c.values[1] == 0.0


@pytest.mark.parametrize("parity", PARITIES)
@pytest.mark.parametrize("alpha, g, d", [(-0.05, 0.1, 1.0), (2.0, 0.5, 1.5), (-1.3, 1.0, 0.5)])
def test_c2_closed_form(alpha, g, d, parity):
    s = parity.sign
    c = cp.coefficient_sequence(alpha, ModelParams(g, d), parity, 2)
    expected = -((1 + s * d) * alpha + g) / (2 * g)
    assert c.true_value(2) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("g", [0.3, 1.0, 2.0])
@pytest.mark.parametrize("parity", PARITIES)
def test_displaced_vacuum_has_no_higher_coefficients(g, parity):
    c = cp.coefficient_sequence(-g, ModelParams(g, 0.0), parity, 12)
    assert all(c.true_value(n) == 0.0 for n in range(2, 13))


@given(
    st.fractions(-20, 20, max_denominator=64),
    st.sampled_from([Fraction(1, 10), Fraction(1, 2), Fraction(1)]),
    st.sampled_from([Fraction(0), Fraction(1, 2), Fraction(1), Fraction(3, 2)]),
    st.sampled_from(PARITIES),
    st.integers(2, 24),
)
@settings(max_examples=60, deadline=None)
def test_coefficients_match_rational_reference(alpha, g, d, parity, m):
    ref, _ = exact_recurrence(alpha, g, d, parity.sign, m)
    c = cp.coefficient_sequence(float(alpha), ModelParams(float(g), float(d)), parity, m)
    # exact cancellations leave a tiny residue, so errors are measured against the largest term
    top = max(abs(float(x)) for x in ref)
    for n in range(m + 1):
        assert c.true_value(n) == pytest.approx(float(ref[n]), rel=1e-12, abs=1e-13 * top)


def test_scaled_values_have_unit_maximum():
    c = cp.coefficient_sequence(30.0, ModelParams(0.1, 1.0), Parity.EVEN, 60)
    assert np.max(np.abs(c.values)) == 1.0
    assert c.values[0] * math.exp(c.log_scale) == pytest.approx(1.0, rel=1e-12)


def test_huge_coefficients_do_not_overflow():
    # at small g the coefficients reach far beyond the double range
    c = cp.coefficient_sequence(100.0, ModelParams(0.02, 1.0), Parity.EVEN, 200)
    assert c.log_scale > math.log(1e308)
    assert np.all(np.isfinite(c.values))


def test_truncation_keeps_leading_terms():
    c = cp.coefficient_sequence(1.5, ModelParams(0.5, 1.0), Parity.ODD, 20)
    t = c.truncated(8)
    assert t.m == 8
    for n in range(9):
        assert t.true_value(n) == c.true_value(n)


@pytest.mark.parametrize("alpha", [math.nan, math.inf, 2e6])
def test_bad_alpha_rejected(alpha):
    with pytest.raises((NonFinite, ValueError)):
        cp.coefficient_sequence(alpha, ModelParams(0.5, 1.0), Parity.EVEN, 5)


# ---- energy relation -----------------------------------------------------------


def test_energy_from_alpha_examples():
    assert cp.energy_from_alpha(-1.0, ModelParams(1.0, 0.0), Parity.EVEN) == -1.0
    assert cp.energy_from_alpha(0.0, ModelParams(0.7, 1.3), Parity.EVEN) == -0.65
    p = ModelParams(0.1, 1.0)
    assert cp.alpha_from_energy(-0.505012531, p, Parity.EVEN) == pytest.approx(-0.05012531, rel=1e-12)


def test_ground_state_alpha_is_a_root(resonant_weak):
    # invert the tabulated ground energy and check f changes sign close by
    alpha = cp.alpha_from_energy(-0.505012531, resonant_weak, Parity.EVEN)
    lo = cp.boundary_residual(alpha - 1e-7, resonant_weak, Parity.EVEN, 31).sign
    hi = cp.boundary_residual(alpha + 1e-7, resonant_weak, Parity.EVEN, 31).sign
    assert lo * hi == -1


# ---- boundary function -------------------------------------------------------------


def test_m2_residual_flips_at_quadratic_root(resonant_weak):
    # -0.1 a^2 - 2 a - 0.1 = 0 has a root near -0.050126
    root = (-2.0 + math.sqrt(4.0 - 0.04)) / 0.2
    assert root == pytest.approx(-0.050126, abs=1e-6)
    left = cp.boundary_residual(root - 1e-6, resonant_weak, Parity.EVEN, 2).sign
    right = cp.boundary_residual(root + 1e-6, resonant_weak, Parity.EVEN, 2).sign
    assert left * right == -1


@pytest.mark.parametrize("g", [0.1, 0.5, 1.0])
@pytest.mark.parametrize("d", [0.5, 1.0, 1.5])
@pytest.mark.parametrize("parity", PARITIES)
def test_m2_roots_equal_closed_form(g, d, parity):
    p = ModelParams(g, d)
    f = lambda a: cp.boundary_residual(a, p, parity, 2).sign  # noqa: E731
    a, b, c = fod_coefficients(p, parity)
    if b * b - 4 * a * c == 0.0:
        # double root: f touches zero without crossing
        (root,) = set(fod_roots(p, parity).roots)
        assert cp.boundary_residual(root, p, parity, 2).sign == 0
        return
    for root in fod_roots(p, parity).roots:
        step = 1e-6 * max(1.0, abs(root))
        b = Bracket(root - step, root + step, f(root - step), f(root + step))
        found = refine_root(f, b, 1e-14)
        assert found.alpha == pytest.approx(root, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("m", [2, 3, 4, 7, 10])
@pytest.mark.parametrize("g", [Fraction(1, 4), Fraction(1)])
def test_zero_detuning_at_origin(m, g):
    # with delta = 0 and alpha = 0, f_M = M c_M + g c_{M-1}
    c, f = exact_recurrence(0, g, 0, 1, m)
    assert f == m * c[m] + g * c[m - 1]
    for parity in PARITIES:
        r = cp.boundary_residual(0.0, ModelParams(float(g), 0.0), parity, m)
        assert r.sign == sign(f)
        if f != 0:
            assert r.log_magnitude == pytest.approx(math.log(abs(float(f))), rel=1e-12)


@pytest.mark.parametrize("m", [2, 3, 4, 5, 6])
@pytest.mark.parametrize("parity", PARITIES)
def test_far_field_sign_follows_leading_term(m, parity):
    p = ModelParams(0.5, 1.0)
    coeffs = cp.BoundaryPolynomial(p, parity).coefficients(m)
    coeffs = [x for x in coeffs]
    while coeffs and coeffs[-1] == 0.0:
        coeffs.pop()
    deg = len(coeffs) - 1
    lead = sign(coeffs[-1])
    for x in (1e4, -1e4):
        expected = lead * (1 if x > 0 or deg % 2 == 0 else -1)
        assert cp.boundary_residual(x, p, parity, m).sign == expected
    # the expanded polynomial agrees with the recurrence at moderate alpha
    for x in (-3.0, -0.7, 0.4, 2.5):
        direct = cp.boundary_residual(x, p, parity, m)
        horner = np.polyval(coeffs[::-1], x)
        assert direct.sign == sign(horner)
        assert direct.log_magnitude == pytest.approx(math.log(abs(horner)), rel=1e-9)


@given(
    st.fractions(-60, 60, max_denominator=16),
    st.sampled_from(PARITIES),
    st.integers(2, 40),
    st.fractions(Fraction(1, 1000), 1000, max_denominator=1000),
)
@settings(max_examples=50, deadline=None)
def test_sign_is_scale_invariant(alpha, parity, m, scale):
    # f is linear in c_0, so any positive normalisation gives the same sign
    g, d = Fraction(1, 10), Fraction(1)
    _, f1 = exact_recurrence(alpha, g, d, parity.sign, m)
    _, fs = exact_recurrence(alpha, g, d, parity.sign, m, c0=scale)
    assert sign(f1) == sign(fs)
    r = cp.boundary_residual(float(alpha), ModelParams(0.1, 1.0), parity, m)
    assert r.sign == sign(f1)


@given(st.floats(-30, 120), st.sampled_from(PARITIES), st.integers(2, 70))
@settings(max_examples=60, deadline=None)
def test_polynomial_and_recurrence_agree(alpha, parity, m):
    p = ModelParams(0.1, 1.0)
    direct = cp.boundary_residual(alpha, p, parity, m)
    poly = cp.boundary_polynomial(p, parity).evaluate(alpha, m)
    assert direct.sign == poly.sign
    if direct.sign:
        assert direct.log_magnitude == pytest.approx(poly.log_magnitude, abs=1e-6)


def test_polish_lands_on_a_sign_change(resonant_weak):
    rough = -0.0501253124
    fine = cp.polish_root(rough, resonant_weak, Parity.EVEN, 31)
    step = 1e-13
    lo = cp.boundary_residual(float(fine) - step, resonant_weak, Parity.EVEN, 31).sign
    hi = cp.boundary_residual(float(fine) + step, resonant_weak, Parity.EVEN, 31).sign
    assert lo * hi == -1


# ---- Fock expansion ----------------------------------------------------------------


def _c0_only(alpha, params, parity):
    return cp.coefficient_sequence(alpha, params, parity, 2).truncated(0)


@pytest.mark.parametrize("parity", PARITIES)
def test_vacuum_expansion(parity):
    p = ModelParams(0.5, 1.0)
    v = cp.fock_expansion(0.0, _c0_only(0.0, p, parity), parity, 10)
    assert v.upper[0] == pytest.approx(1 / math.sqrt(2))
    assert v.lower[0] == pytest.approx(parity.sign / math.sqrt(2))
    assert np.all(v.upper[1:] == 0.0)


def test_coherent_state_profile():
    p = ModelParams(0.5, 1.0)
    a = 1.3
    v = cp.fock_expansion(a, _c0_only(a, p, Parity.EVEN), Parity.EVEN, 40)
    n = np.arange(41)
    ref = np.array([a**k / math.sqrt(math.factorial(k)) for k in n])
    ratio = v.upper / ref
    assert np.allclose(ratio, ratio[0], rtol=1e-12)
    assert v.norm() == pytest.approx(1.0, abs=1e-14)


def test_displaced_oscillator_is_exact_eigenstate():
    p = ModelParams(1.0, 0.0)
    coeffs = cp.coefficient_sequence(-1.0, p, Parity.EVEN, 4)
    level = EnergyLevel(0, Parity.EVEN, -1.0, -1.0, coeffs, 4)
    assert residual_norm(level, p, 60) <= 1e-12


@pytest.mark.parametrize("parity", PARITIES)
def test_expansion_parity_structure(parity):
    p = ModelParams(0.5, 1.0)
    coeffs = cp.converged_coefficients(2.3908, p, parity, 25)
    v = cp.fock_expansion(2.3908, coeffs, parity, 120)
    sgn = parity.sign * np.where(np.arange(121) % 2 == 0, 1.0, -1.0)
    assert np.array_equal(v.lower, sgn * v.upper)
    assert v.norm() == pytest.approx(1.0, abs=1e-13)
    # and it is a parity eigenvector of the oracle's operator
    from rabi_exact.ed_oracle import parity_operator

    psi = v.as_state()
    assert np.allclose(parity_operator(120) @ psi, parity.sign * psi, atol=1e-15)


def test_short_fock_space_is_reported():
    p = ModelParams(0.5, 1.0)
    coeffs = cp.coefficient_sequence(6.0, p, Parity.EVEN, 5)
    with pytest.raises(TruncationTooSmall):
        cp.fock_expansion(6.0, coeffs, Parity.EVEN, 10)


def test_fock_space_below_truncation_rejected():
    p = ModelParams(0.5, 1.0)
    coeffs = cp.coefficient_sequence(0.3, p, Parity.EVEN, 20)
    with pytest.raises(ValueError):
        cp.fock_expansion(0.3, coeffs, Parity.EVEN, 10)


def test_full_matrix_sanity_for_expansion():
    # the oracle matrix is symmetric, so residuals are well defined
    h = build_full_matrix(ModelParams(0.5, 1.0), 30)
    assert abs(h - h.T).max() == 0.0
