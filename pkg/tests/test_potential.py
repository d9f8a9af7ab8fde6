import numpy as np
import pytest

import gammaseg as gs
from gammaseg.potential import builtin_well, make_well


def trapezoid_cw(w, n=2_000_001):
    """Independent oracle for the interface cost: high-resolution trapezoid."""
    t = np.linspace(0.0, 1.0, n)
    return float(np.trapezoid(2.0 * np.sqrt(np.maximum(w(t), 0.0)), t))


def test_quartic_wells_and_midpoint():
    W = gs.make_quartic()
    assert W(0.0) == 0.0 and W(1.0) == 0.0
    assert W(0.5) == pytest.approx(1 / 16)
    assert W.deriv(0.5) == pytest.approx(0.0)


def test_quartic_cw_against_trapezoid():
    W = gs.make_quartic()
    oracle = trapezoid_cw(W.w)
    assert gs.compute_cw(W, tol=1e-10) == pytest.approx(oracle, abs=1e-8)
    assert W.cw == pytest.approx(1 / 3, abs=1e-10)


def test_sine_cw_against_trapezoid():
    W = gs.make_sine()
    oracle = trapezoid_cw(W.w)
    assert gs.compute_cw(W, tol=1e-10) == pytest.approx(oracle, abs=1e-8)
    assert W.cw == pytest.approx(2 / np.pi, abs=1e-10)


def test_cw_scaling():
    W = gs.make_quartic()
    assert gs.scale_well(W, 4.0).cw == pytest.approx(2.0 * W.cw, abs=1e-12)
    for alpha in (0.5, 2.0, 7.0):
        scaled = gs.scale_well(W, alpha**2)
        assert gs.compute_cw(scaled, tol=1e-10) == pytest.approx(
            alpha * gs.compute_cw(W, tol=1e-10), abs=2e-10
        )


def test_cw_monotone_in_well():
    W1 = gs.make_quartic()
    W2 = gs.scale_well(W1, 1.5)
    tol = 1e-10
    assert gs.compute_cw(W1, tol) <= gs.compute_cw(W2, tol) + 2 * tol


def test_deriv_matches_finite_differences():
    for W in (gs.make_quartic(), gs.make_sine()):
        t = np.linspace(-1.0, 2.0, 601)
        h = 1e-4
        fd = (W(t + h) - W(t - h)) / (2 * h)
        assert np.max(np.abs(fd - W.deriv(t))) <= 1e-6


def test_validate_quartic_passes():
    rep = gs.validate_assumption(gs.make_quartic(), samples=500)
    assert rep.ok, rep.message


def test_validate_sine_passes():
    rep = gs.validate_assumption(gs.make_sine(), samples=500)
    assert rep.ok, rep.message


def test_validate_decaying_well_fails_growth():
    w = lambda t: np.asarray(t) ** 2 * (np.asarray(t) - 1) ** 2 * np.exp(-np.asarray(t) ** 2)
    dw = lambda t: np.zeros_like(np.asarray(t, float))  # derivative unused here
    W = make_well(w, dw, growth=(1.0, 2.0))
    rep = gs.validate_assumption(W, samples=500)
    assert not rep.ok
    assert "growth" in rep.message


def test_validate_single_well_fails_at_zero():
    w = lambda t: (np.asarray(t) - 1.0) ** 2
    W = make_well(w, lambda t: 2.0 * (np.asarray(t) - 1.0), growth=(1.0, 4.0))
    rep = gs.validate_assumption(W, samples=500)
    assert not rep.ok
    assert rep.offending_t == 0.0


def test_validate_needs_samples():
    with pytest.raises(ValueError):
        gs.validate_assumption(gs.make_quartic(), samples=10)


def test_builtin_selector():
    assert builtin_well("quartic").name == "quartic"
    assert builtin_well("sine").name == "sine"
    with pytest.raises(ValueError):
        builtin_well("sextic")


def test_quadrature_bad_tol():
    with pytest.raises(ValueError):
        gs.compute_cw(gs.make_quartic(), tol=0.0)


def test_quadrature_subdivision_limit():
    # a jump inside the well interval defeats the error estimate at every
    # depth, so the subdivision cap must surface as an error
    def w(t):
        t = np.asarray(t, np.float64)
        return np.where(t < 0.37, 0.02, 1.0) * (t * t * (t - 1.0) ** 2 + 0.01)

    bad = gs.DoubleWell(w=w, dw=lambda t: np.zeros_like(np.asarray(t, float)), growth=(1.0, 9.0), cw=1.0)
    with pytest.raises(gs.QuadratureError):
        gs.compute_cw(bad, tol=1e-12)
