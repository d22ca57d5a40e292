import math

import numpy as np
import pytest
from scipy.integrate import quad

from loggas.equilibrium import (
    check_regularity,
    classical_locations,
    solve_equilibrium,
    solve_support,
)
from loggas.errors import (
    BranchCutError,
    NotOneCutError,
    RegularityViolationError,
)
from loggas.potentials import Potential

SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------

def endpoint_residuals_quadrature(p, a, b):
    """Both endpoint conditions by adaptive quadrature with the substitution
    t = c + delta*cos(phi) (independent of the solver's fixed-node rule)."""
    c, delta = 0.5 * (a + b), 0.5 * (b - a)

    def t(phi):
        return c + delta * np.cos(phi)

    g1, _ = quad(lambda phi: p.v1(t(phi)), 0.0, math.pi, epsabs=1e-13, limit=200)
    g2, _ = quad(lambda phi: t(phi) * p.v1(t(phi)), 0.0, math.pi, epsabs=1e-13, limit=200)
    return g1 / (2 * math.pi), g2 / (2 * math.pi) - 1.0


def pv_hilbert_of_density(eq, t, eta=1e-4):
    """Principal value of int rho(s)/(t-s) ds by symmetric-window quadrature."""
    outer1, _ = quad(lambda s: eq.density(s) / (t - s), eq.a, t - eta,
                     epsabs=1e-12, limit=400)
    outer2, _ = quad(lambda s: eq.density(s) / (t - s), t + eta, eq.b,
                     epsabs=1e-12, limit=400)
    inner, _ = quad(lambda u: (eq.density(t + u) - eq.density(t - u)) / u,
                    0.0, eta, epsabs=1e-13, limit=200)
    return outer1 + outer2 - inner


def stieltjes_quadrature(eq, z):
    re, _ = quad(lambda s: (eq.density(s) * (z - s).real / abs(z - s) ** 2),
                 eq.a, eq.b, epsabs=1e-12, limit=400)
    im, _ = quad(lambda s: (eq.density(s) * (-(z - s).imag) / abs(z - s) ** 2),
                 eq.a, eq.b, epsabs=1e-12, limit=400)
    return complex(re, im)


# ---------------------------------------------------------------------------
# support solver
# ---------------------------------------------------------------------------

def test_quadratic_support_is_semicircle():
    a, b = solve_support(Potential.quadratic())
    assert a == pytest.approx(-SQRT2, abs=1e-12)
    assert b == pytest.approx(SQRT2, abs=1e-12)
    g1, g2 = endpoint_residuals_quadrature(Potential.quadratic(), a, b)
    assert abs(g1) < 1e-12 and abs(g2) < 1e-12


def test_pure_quartic_support_symmetric_and_certified():
    p = Potential((0.0, 0.0, 0.0, 0.0, 0.25))
    a, b = solve_support(p)
    assert a == pytest.approx(-b, abs=1e-13)
    # oracle: adaptive-quadrature residuals at the solved endpoints
    g1, g2 = endpoint_residuals_quadrature(p, a, b)
    assert abs(g1) < 1e-11 and abs(g2) < 1e-11
    # frozen value from the quadrature oracle: B^2 = (4/3) sqrt(3)
    assert b**2 == pytest.approx(4.0 * math.sqrt(3.0) / 3.0, rel=1e-12)


def test_supercritical_quartic_is_not_one_cut():
    # a = 1.3 > 1: density dips negative on a fine grid (oracle ran offline)
    with pytest.raises(NotOneCutError):
        solve_support(Potential.quartic_minus(1.3))


def test_mass_is_one():
    for p in [Potential.quadratic(), Potential.quartic_minus(0.5),
              Potential((0.0, 0.5, 1.0, 0.1, 0.25))]:
        eq = solve_equilibrium(p)
        mass, _ = quad(eq.density, eq.a, eq.b, epsabs=1e-12, limit=400)
        assert mass == pytest.approx(1.0, abs=1e-10)
        assert eq.cdf(eq.b) == pytest.approx(1.0, abs=1e-10)
        assert eq.cdf(eq.a) == 0.0


# ---------------------------------------------------------------------------
# analytic factor r
# ---------------------------------------------------------------------------

def test_r_is_one_for_quadratic():
    eq = solve_equilibrium(Potential.quadratic())
    grid = np.linspace(eq.a, eq.b, 100)
    assert np.max(np.abs(eq.r_eval(grid) - 1.0)) < 1e-10


def test_r_quartic_matches_adaptive_quadrature_at_zero():
    p = Potential.quartic_minus(1.0)
    eq = solve_equilibrium(p)

    # oracle: direct adaptive quadrature of (V'(0)-V'(t))/(0-t) * w(t)
    def integrand(phi):
        t = eq.center + eq.halfwidth * np.cos(phi)
        z = 0.0
        dd = (p.v1(z) - p.v1(t)) / (z - t)
        return dd

    val, _ = quad(integrand, 0, math.pi, epsabs=1e-13, limit=300)
    assert eq.r_eval(0.0) == pytest.approx(val / (2 * math.pi), abs=1e-12)


def test_r_conjugation_symmetry():
    eq = solve_equilibrium(Potential.quartic_minus(0.5))
    for z in [0.3 + 0.7j, -1.2 + 0.1j, 2.0 + 2.0j]:
        assert eq.r_eval(np.conj(z)) == pytest.approx(np.conj(eq.r_eval(z)), rel=1e-14)


# ---------------------------------------------------------------------------
# density / cdf / quantile
# ---------------------------------------------------------------------------

def test_semicircle_density_at_zero():
    eq = solve_equilibrium(Potential.quadratic())
    assert eq.density(0.0) == pytest.approx(SQRT2 / math.pi, abs=1e-8)


def test_density_zero_outside_support():
    eq = solve_equilibrium(Potential.quadratic())
    assert eq.density(5.0) == 0.0
    assert eq.density(-5.0) == 0.0


def test_even_potential_median_is_zero():
    for p in [Potential.quadratic(), Potential.quartic_minus(0.5)]:
        eq = solve_equilibrium(p)
        assert abs(eq.quantile(0.5)) < 1e-12


def test_quantile_cdf_inverse():
    eq = solve_equilibrium(Potential.quartic_minus(0.5))
    for q in np.linspace(0.01, 0.99, 23):
        t = eq.quantile(q)
        assert eq.cdf(t) == pytest.approx(q, abs=1e-10)


def test_quantile_rejects_out_of_range():
    eq = solve_equilibrium(Potential.quadratic())
    with pytest.raises(ValueError):
        eq.quantile(1.5)
    with pytest.raises(ValueError):
        eq.quantile(-0.1)


def test_cdf_against_adaptive_quadrature():
    eq = solve_equilibrium(Potential.quartic_minus(0.5))
    for t in np.linspace(eq.a + 0.1, eq.b - 0.1, 7):
        ref, _ = quad(eq.density, eq.a, t, epsabs=1e-12, limit=400)
        assert eq.cdf(t) == pytest.approx(ref, abs=1e-9)


# ---------------------------------------------------------------------------
# classical locations
# ---------------------------------------------------------------------------

def test_classical_locations_semicircle_n2():
    eq = solve_equilibrium(Potential.quadratic())
    locs = classical_locations(eq, 2)
    assert locs.gamma[0] == pytest.approx(0.0, abs=1e-11)
    assert locs.gamma[1] == eq.b
    # oracle: root-find on the semicircle CDF gives quantile(1/4) < 0 < quantile(3/4)
    assert locs.gamma_tilde[0] == pytest.approx(eq.quantile(0.25), abs=1e-12)
    assert locs.gamma_tilde[0] < 0 < locs.gamma_tilde[1]
    assert locs.gamma_tilde[1] == pytest.approx(-locs.gamma_tilde[0], abs=1e-10)


def test_classical_locations_n1_median():
    eq = solve_equilibrium(Potential.quadratic())
    locs = classical_locations(eq, 1)
    assert abs(locs.gamma_tilde[0]) < 1e-12


def test_classical_locations_monotone_and_accurate():
    eq = solve_equilibrium(Potential.quartic_minus(0.5))
    for n in (16, 256):
        locs = classical_locations(eq, n)
        assert np.all(np.diff(locs.gamma) > 0)
        assert np.all(np.diff(locs.gamma_tilde) > 0)
        ks = np.arange(1, n + 1)
        assert np.max(np.abs(eq.cdf(locs.gamma) - ks / n)) < 1e-10
        assert np.max(np.abs(eq.cdf(locs.gamma_tilde) - (ks - 0.5) / n)) < 1e-10
        assert locs.gamma[-1] == eq.b
        assert np.all((locs.gamma_tilde > eq.a) & (locs.gamma_tilde < eq.b))


def test_gamma_vs_gamma_tilde_shift():
    eq = solve_equilibrium(Potential.quadratic())
    n = 128
    locs = classical_locations(eq, n)
    c = 2.0 / min(eq.s_a, eq.s_b) ** (2.0 / 3.0)
    assert np.max(np.abs(locs.gamma - locs.gamma_tilde)) <= c * n ** (-2.0 / 3.0)


# ---------------------------------------------------------------------------
# regularity and edge constants
# ---------------------------------------------------------------------------

def test_semicircle_edge_constants():
    eq = solve_equilibrium(Potential.quadratic())
    expected = 2.0**0.75 / math.pi
    assert eq.s_a == pytest.approx(expected, rel=1e-12)
    assert eq.s_b == pytest.approx(expected, rel=1e-12)
    s_a, s_b, kappa0 = check_regularity(eq, Potential.quadratic(), 0.5)
    assert kappa0 == 0.5
    assert eq.regular and eq.kappa0 > 0


def test_even_potential_edge_constants_equal():
    eq = solve_equilibrium(Potential.quartic_minus(0.5))
    assert eq.s_a == pytest.approx(eq.s_b, rel=1e-12)
    assert eq.s_a > 0


def test_edge_law_square_root_vanishing():
    eq = solve_equilibrium(Potential.quartic_minus(0.5))
    for h in (1e-4, 1e-6):
        ratio = eq.density(eq.a + h) / (eq.s_a * math.sqrt(h))
        assert abs(ratio - 1.0) < 0.05


def test_two_cut_onset_quartic_violates_regularity():
    # at a = 1 the analytic factor is r(t) = t^2/2, vanishing at t = 0
    eq = solve_equilibrium(Potential.quartic_minus(1.0))
    assert not eq.regular
    with pytest.raises(RegularityViolationError) as exc_info:
        check_regularity(eq, Potential.quartic_minus(1.0), 0.1)
    assert abs(exc_info.value.point) < 1e-6


# ---------------------------------------------------------------------------
# Euler-Lagrange and Stieltjes transform
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("p", [Potential.quadratic(), Potential.quartic_minus(0.5)])
def test_euler_lagrange_residual(p):
    eq = solve_equilibrium(p)
    rng = np.random.default_rng(7)
    ts = rng.uniform(eq.a + 0.05, eq.b - 0.05, size=50)
    for t in ts:
        lhs = pv_hilbert_of_density(eq, float(t))
        assert lhs == pytest.approx(p.v1(t) / 2.0, abs=1e-7)


def test_stieltjes_semicircle_real_point():
    eq = solve_equilibrium(Potential.quadratic())
    # oracle value: adaptive quadrature of rho/(2-t) frozen as 2 - sqrt(2)
    assert eq.stieltjes_m(Potential.quadratic(), 2.0 + 0j).real == pytest.approx(
        2.0 - SQRT2, abs=1e-9
    )


def test_stieltjes_normalization_at_infinity():
    eq = solve_equilibrium(Potential.quadratic())
    for y in (50.0, 500.0):
        z = complex(0.0, y)
        # z*m(z) = 1 + M2/z^2 + ..., M2 = 1/2 for the semicircle on [-s2, s2]
        assert z * eq.stieltjes_m(Potential.quadratic(), z) == pytest.approx(
            1.0, abs=1.0 / y**2
        )


def test_stieltjes_sign_and_quadrature_match():
    p = Potential.quartic_minus(0.5)
    eq = solve_equilibrium(p)
    rng = np.random.default_rng(3)
    for _ in range(20):
        z = complex(rng.uniform(eq.a - 1, eq.b + 1), rng.uniform(0.1, 2.0))
        m = eq.stieltjes_m(p, z)
        assert m.imag < 0
        assert m == pytest.approx(stieltjes_quadrature(eq, z), abs=1e-9)


def test_stieltjes_branch_error_on_support():
    eq = solve_equilibrium(Potential.quadratic())
    with pytest.raises(BranchCutError):
        eq.stieltjes_m(Potential.quadratic(), 0.5 + 0j)
