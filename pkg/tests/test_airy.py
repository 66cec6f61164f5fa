"""Tests for the factored complex Airy evaluator."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from glancing import airy

ROT = np.exp(1j * math.pi / 3)

# Frozen oracle values (bisection / Maclaurin summation in tests/oracles.py).
NU1 = -2.3381074104597674
NU2 = -4.08794944413097
F_AT_1 = -1.1763219671437004
AI_AT_1 = 0.13529241631288152

# Inversion identity constants, fitted once by least squares against the
# Maclaurin oracle and frozen.  Convention: the derivative factor is
# Ai'(z e^{+-i pi/3}), i.e. the derivative function at the rotated point,
# without the chain-rule factor.
INV_C1_PLUS = -5.441398092702651 + 3.141592653589794j
INV_C2_PLUS = -5.441398092702654 - 3.141592653589793j
INV_C1_MINUS = INV_C1_PLUS.conjugate()
INV_C2_MINUS = INV_C2_PLUS.conjugate()


def polar_grid(n_r=24, n_a=48, r_max=20.0):
    radii = np.linspace(0.15, r_max, n_r)
    angles = np.linspace(-math.pi, math.pi, n_a, endpoint=False) + 0.007
    return (radii[:, None] * np.exp(1j * angles[None, :])).ravel()


def test_matches_maclaurin_oracle():
    zs = polar_grid(16, 24, r_max=4.0)
    got = airy.airy_factored(zs)
    want = np.array([oracles.airy_maclaurin(z) for z in zs])
    ai = got.value
    aip = got.derivative
    assert oracles.rel_err(ai, want[:, 0]) < 1e-12
    assert oracles.rel_err(aip, want[:, 1]) < 1e-12


def test_frozen_point_values():
    assert abs(airy.airy(1.0) - AI_AT_1) < 1e-13
    assert abs(airy.log_deriv(1.0) - F_AT_1) < 1e-12
    assert abs(airy.airy_zero(1) - NU1) < 1e-11
    assert abs(airy.airy_zero(2) - NU2) < 1e-11


def test_zero_ordering_and_asymptotic_trend():
    zs = airy.airy_zeros(12)
    assert np.all(np.diff(zs) < 0)
    approx = -((3.0 * math.pi * (4 * np.arange(1, 13) - 1) / 8.0) ** (2.0 / 3.0))
    assert np.max(np.abs(zs - approx)) < 2e-2
    # the asymptotic formula sharpens with j
    assert abs(zs[-1] - approx[-1]) < abs(zs[0] - approx[0])


def test_ode_residual_via_cauchy_ring():
    # Second derivative from a Cauchy ring must reproduce z * Ai(z); this
    # exercises an evaluation path independent of the recurrence.
    zs = polar_grid(20, 40)
    ev = airy.airy_factored(zs)
    nodes = np.exp(2j * math.pi * np.arange(48) / 48)
    r = 0.4
    ring = airy.airy_factored(zs[:, None] + r * nodes[None, :])
    vals = np.exp(ev.xi[:, None] - ring.xi) * ring.mantissa
    d2 = 2.0 * np.mean(vals * nodes ** (-2), axis=1) / r ** 2
    resid = np.abs(d2 - zs * ev.mantissa)
    scale = np.abs(zs * ev.mantissa) + np.abs(ev.mantissa) + 1.0
    assert np.max(resid / scale) < 1e-9


def test_rotation_identity_all_sectors():
    zs = polar_grid(25, 60)
    left = airy.airy_factored(-zs)
    plus = airy.airy_rotated(zs, +1)
    minus = airy.airy_rotated(zs, -1)
    t1 = ROT * np.exp(left.xi - plus.xi) * plus.mantissa
    t2 = np.conj(ROT) * np.exp(left.xi - minus.xi) * minus.mantissa
    dom = np.maximum(np.abs(t1), np.abs(t2))
    dom = np.maximum(dom, np.abs(left.mantissa))
    resid = np.abs(left.mantissa - t1 - t2) / dom
    assert np.max(resid) < 1e-10


def test_reflection_symmetry():
    zs = polar_grid(20, 44)
    zs = zs[np.abs(zs.imag) > 1e-12]
    ev = airy.airy_factored(zs)
    evc = airy.airy_factored(np.conj(zs))
    assert oracles.rel_err(evc.mantissa, np.conj(ev.mantissa)) < 1e-12
    assert oracles.rel_err(evc.mantissa_deriv, np.conj(ev.mantissa_deriv)) < 1e-12


def test_rotated_reflection_pair():
    zs = polar_grid(12, 20)
    plus = airy.airy_rotated(np.conj(zs), +1)
    minus = airy.airy_rotated(zs, -1)
    assert oracles.rel_err(plus.mantissa, np.conj(minus.mantissa)) < 1e-12


def test_inversion_identity_frozen_constants():
    # Multiplied-out form: c1 Ai'(-z) Ai_pm(z) + c2 Ai(-z) Ai'_pm(z) = 1,
    # which avoids the poles of 1/Ai(-z).
    zs = polar_grid(22, 48)
    left = airy.airy_factored(-zs)
    for c1, c2, sign in (
        (INV_C1_PLUS, INV_C2_PLUS, +1),
        (INV_C1_MINUS, INV_C2_MINUS, -1),
    ):
        rot = airy.airy_rotated(zs, sign)
        scale = np.exp(-left.xi - rot.xi)
        t1 = c1 * left.mantissa_deriv * rot.mantissa * scale
        t2 = c2 * left.mantissa * rot.mantissa_deriv * scale
        # Near the anti-Stokes directions the two terms are exponentially
        # large with opposite signs; normalize by the dominant one.
        dom = np.maximum(np.maximum(np.abs(t1), np.abs(t2)), 1.0)
        assert np.max(np.abs(t1 + t2 - 1.0) / dom) < 1e-9


def test_derivative_orders_against_quotient():
    # psi with k >= 2 must agree with directly recursed unfactored values
    # where those are representable.
    zs = np.array([0.5 + 0.3j, -1.2 + 0.8j, 2.0 - 1.5j, 3.0 + 2.0j])
    for k in range(5):
        direct = airy.airy(zs, k) / airy.airy(zs)
        quot = airy.psi(0.0, zs, k)
        assert oracles.rel_err(quot, direct) < 1e-10


def test_psi_large_shift_matches_unfactored_quotient():
    z = np.array([2.0 + 1.0j, 1.0 - 0.7j, -3.0 + 0.4j])
    t = 30.0
    want = airy.airy(t + z) / airy.airy(z)
    got = airy.psi(t, z)
    assert oracles.rel_err(got, want) < 1e-10


def test_psi_beyond_unfactored_range():
    # t large enough that Ai(t + z) underflows to zero in double precision;
    # the factored quotient must still be a clean positive-decay number.
    z = 1.0 + 1.0j
    got = airy.psi(400.0, z)
    assert got == got  # not NaN
    assert abs(got) < 1e-300 or np.log(abs(got)) < -1000
    # and the quotient of quotients telescopes: psi(a+b) = psi_a * shifted
    a, b = 7.0, 9.0
    lhs = airy.psi(a + b, z)
    rhs = airy.psi(a, z) * airy.psi(b, a + z)
    assert abs(lhs - rhs) / abs(lhs) < 1e-10


def test_phi_polynomials_exact():
    from fractions import Fraction as Fr

    assert airy.phi_poly(0).coeffs == {(0, 0): Fr(1)}
    assert airy.phi_poly(1).coeffs == {(1, 0): Fr(-1)}
    assert airy.phi_poly(2).coeffs == {(2, 0): Fr(2), (0, 1): Fr(-1)}
    assert airy.phi_poly(3).coeffs == {(3, 0): Fr(-6), (1, 1): Fr(5), (0, 0): Fr(-1)}


def test_phi_eval_matches_cauchy_inverse_derivatives():
    zs = np.array([0.8 + 0.6j, -1.5 + 1.1j, 2.5 - 0.9j])
    nodes = np.exp(2j * math.pi * np.arange(64) / 64)
    r = 0.25
    base = airy.airy_factored(zs)
    for k in range(1, 5):
        ring = airy.airy_factored(zs[:, None] + r * nodes[None, :])
        inv = np.exp(ring.xi - base.xi[:, None]) * (
            base.mantissa[:, None] / ring.mantissa
        )
        dk = math.factorial(k) * np.mean(inv * nodes ** (-k), axis=1) / r ** k
        want = airy.phi_eval(k, zs)
        assert oracles.rel_err(dk, want) < 1e-8


def test_pole_guard():
    nu1 = airy.airy_zero(1)
    with pytest.raises(airy.AiryPoleError):
        airy.log_deriv(nu1 + 1e-8)
    with pytest.raises(airy.AiryPoleError):
        airy.psi(1.0, nu1 - 1e-8, 0)
    # comfortably away from the zero the call succeeds
    val = airy.log_deriv(nu1 + 1e-3)
    assert np.isfinite(val)


def test_branch_cut_guard():
    with pytest.raises(airy.BranchCutError):
        airy.xi(-2.0)
    assert np.isfinite(airy.xi(-2.0 + 1e-12j))
    assert np.isfinite(airy.xi(3.0))


def test_overflow_guard():
    z = 150.0 * np.exp(2j * math.pi / 3)
    ev = airy.airy_factored(z)
    assert np.isfinite(ev.mantissa).all()
    with pytest.raises(airy.AiryOverflowError):
        _ = ev.value


def test_bound_report_finite_and_refinement_stable():
    coarse = airy.bound_report(10, 24)
    fine = airy.bound_report(20, 48)
    for key, val in fine.items():
        assert np.isfinite(val) and val > 0
        assert val < 3.0 * coarse[key] + 1e-6, key


def test_self_test_passes_and_detects_faults():
    rep = airy.self_test(12, 32)
    assert rep["ok"]
    broken = airy.self_test(12, 32, perturb_b0=1e-6)
    assert not broken["ok"]


@settings(max_examples=60, deadline=None)
@given(
    st.floats(min_value=0.05, max_value=4.0),
    st.floats(min_value=-math.pi + 1e-6, max_value=math.pi - 1e-6),
)
def test_property_matches_oracle_in_disc(r, theta):
    z = r * np.exp(1j * theta)
    want_ai, want_aip = oracles.airy_maclaurin(z)
    assert abs(airy.airy(z) - want_ai) <= 1e-11 * (1.0 + abs(want_ai))
    assert abs(airy.airy(z, 1) - want_aip) <= 1e-11 * (1.0 + abs(want_aip))


@settings(max_examples=40, deadline=None)
@given(
    st.floats(min_value=0.2, max_value=15.0),
    st.floats(min_value=0.05, max_value=2.5),
    st.floats(min_value=0.0, max_value=10.0),
)
def test_property_modulus_envelopes(x, y, t):
    # |Ai| envelope and the ratio decay in t, on upper half plane samples.
    z = x + 1j * y
    ev = airy.airy_factored(np.array([z]))
    zb = (1.0 + abs(z) ** 2) ** 0.25
    w = abs(z) ** 0.5 + 1.0 / abs(z.imag)
    assert abs(ev.mantissa[0]) * zb < 10.0
    assert zb / (abs(ev.mantissa[0]) * w) < 10.0
    ratio = airy.psi(t, z)
    assert abs(ratio) <= 10.0 * w
