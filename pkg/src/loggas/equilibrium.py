"""Equilibrium measure of a one-cut polynomial potential.

Everything here rides on the angular substitution t = c - delta*cos(phi)
with c = (A+B)/2, delta = (B-A)/2, under which the Chebyshev weight
1/sqrt((t-A)(B-t)) becomes flat and the density rho(t) dt becomes a
trigonometric polynomial h(phi) dphi.  For polynomial V all the integrals
below are then exact up to roundoff:

  * support conditions    (1/2pi) int V'(t) w(t) dt = 0,
                          (1/2pi) int t V'(t) w(t) dt = 1,
  * analytic factor       r(z) = (1/2pi) int (V'(z)-V'(t))/(z-t) w(t) dt,
  * CDF                   F(phi) = a0*phi + sum_k (a_k/k) sin(k*phi),

with w(t) = 1/sqrt((t-A)(B-t)) and (a_k) the cosine coefficients of h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as ncheb
from numpy.polynomial import polynomial as npoly
from scipy.optimize import brentq

from .errors import (
    BranchCutError,
    NoOneCutSolutionError,
    NotOneCutError,
    RegularityViolationError,
)
from .potentials import Potential

__all__ = [
    "EquilibriumMeasure",
    "ClassicalLocations",
    "solve_support",
    "solve_equilibrium",
    "classical_locations",
    "check_regularity",
]

_SUPPORT_TOL = 1e-13
_MASS_TOL = 1e-10


def _chebyshev_moments(a: float, b: float, max_power: int) -> np.ndarray:
    """J_m = int_a^b t^m / sqrt((t-a)(b-t)) dt for m = 0..max_power, exactly."""
    c = 0.5 * (a + b)
    delta = 0.5 * (b - a)
    # W_i = int_0^pi cos(phi)^i dphi
    w = np.zeros(max_power + 1)
    w[0] = math.pi
    for i in range(2, max_power + 1, 2):
        w[i] = w[i - 2] * (i - 1) / i
    out = np.zeros(max_power + 1)
    for m in range(max_power + 1):
        total = 0.0
        for i in range(0, m + 1):
            if i % 2 == 0:
                total += math.comb(m, i) * c ** (m - i) * delta**i * w[i]
        out[m] = total
    return out


def _divided_difference_coeffs(v1_coeffs: np.ndarray, z) -> np.ndarray:
    """Coefficients in t of (V'(z) - V'(t)) / (z - t); entry m is
    sum_{j>m} b_j z^(j-1-m), a polynomial identity valid for every z."""
    b = np.asarray(v1_coeffs)
    d1 = len(b) - 1  # degree of V'
    return np.array([npoly.polyval(z, b[m + 1:]) for m in range(d1)])


@dataclass
class ClassicalLocations:
    """Quantiles gamma_k at k/N and gamma_tilde_j at (j-1/2)/N."""

    gamma: np.ndarray
    gamma_tilde: np.ndarray
    n: int


@dataclass
class EquilibriumMeasure:
    """Solved one-cut equilibrium measure for a polynomial potential."""

    a: float
    b: float
    r_pow: np.ndarray            # power coefficients of r(z)
    r_cheb: np.ndarray           # Chebyshev coefficients of r on [a, b]
    cdf_cos: np.ndarray          # cosine coefficients a_k of h(phi)
    s_a: float
    s_b: float
    kappa0: float = 0.0
    regular: bool = False
    mass_tolerance: float = _MASS_TOL
    potential_spec: str = ""
    _j_moments: np.ndarray = field(default=None, repr=False)

    # -- geometry helpers -------------------------------------------------

    @property
    def center(self) -> float:
        return 0.5 * (self.a + self.b)

    @property
    def halfwidth(self) -> float:
        return 0.5 * (self.b - self.a)

    def _phi_of_t(self, t):
        x = (self.center - np.asarray(t, dtype=float)) / self.halfwidth
        return np.arccos(np.clip(x, -1.0, 1.0))

    def _t_of_phi(self, phi):
        return self.center - self.halfwidth * np.cos(phi)

    # -- evaluators --------------------------------------------------------

    def r_eval(self, z):
        """Analytic factor r(z) via the divided-difference integral; exact
        for polynomial V, stable for z anywhere including [A, B]."""
        if self._j_moments is None or len(self._j_moments) < len(self.r_pow) + 1:
            self._j_moments = _chebyshev_moments(self.a, self.b, max(len(self.r_pow), 1))
        if np.isscalar(z) or isinstance(z, (int, float, complex)):
            return npoly.polyval(z, self.r_pow)
        return npoly.polyval(np.asarray(z), self.r_pow)

    def density(self, t):
        """rho(t) = (1/pi) r(t) sqrt((t-A)(B-t)) on [A, B], zero outside."""
        t = np.asarray(t, dtype=float)
        inside = (t >= self.a) & (t <= self.b)
        out = np.zeros_like(t)
        ts = t[inside]
        out[inside] = (
            npoly.polyval(ts, self.r_pow)
            * np.sqrt(np.maximum((ts - self.a) * (self.b - ts), 0.0))
            / math.pi
        )
        if out.ndim == 0:
            return float(out)
        return out

    def _cdf_phi(self, phi):
        a = self.cdf_cos
        phi = np.asarray(phi, dtype=float)
        total = a[0] * phi
        for k in range(1, len(a)):
            total = total + (a[k] / k) * np.sin(k * phi)
        return total

    def _density_phi(self, phi):
        a = self.cdf_cos
        phi = np.asarray(phi, dtype=float)
        total = np.full_like(phi, a[0])
        for k in range(1, len(a)):
            total = total + a[k] * np.cos(k * phi)
        return total

    def cdf(self, t):
        """F(t) = int_A^t rho."""
        t = np.asarray(t, dtype=float)
        out = np.clip(self._cdf_phi(self._phi_of_t(np.clip(t, self.a, self.b))), 0.0, 1.0)
        out = np.where(t <= self.a, 0.0, np.where(t >= self.b, 1.0, out))
        if out.ndim == 0:
            return float(out)
        return out

    def quantile(self, q: float) -> float:
        """Inverse CDF with |F(quantile(q)) - q| <= 1e-11."""
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"quantile level must be in [0, 1], got {q}")
        if q == 0.0:
            return self.a
        if q == 1.0:
            return self.b
        phi = brentq(lambda u: self._cdf_phi(u) - q, 0.0, math.pi,
                     xtol=1e-15, rtol=8.9e-16, maxiter=200)
        # Newton polish in the angular variable.
        for _ in range(3):
            h = self._density_phi(phi)
            if h <= 0:
                break
            step = (self._cdf_phi(phi) - q) / h
            new = min(max(phi - step, 0.0), math.pi)
            if new == phi:
                break
            phi = new
        return float(self._t_of_phi(phi))

    def stieltjes_m(self, p: Potential, z) -> complex:
        """m(z) = V'(z)/2 - r(z) f(z), principal branch f(z) ~ z at infinity."""
        z = complex(z)
        if z.imag == 0.0 and self.a <= z.real <= self.b:
            raise BranchCutError(f"z = {z} lies on the support [A, B]")
        f = np.sqrt(z - self.a) * np.sqrt(z - self.b)
        return complex(p.v1(z)) / 2.0 - complex(self.r_eval(z)) * complex(f)

    def moments(self, max_power: int) -> np.ndarray:
        """int t^m rho(t) dt for m = 0..max_power, exact for polynomial r."""
        c, delta = self.center, self.halfwidth
        out = np.zeros(max_power + 1)
        # h(phi) in x = cos(phi): (delta^2/pi) r(c - delta x)(1 - x^2)
        base = self._h_poly_x()
        for m in range(max_power + 1):
            tm = npoly.polypow((c, -delta), m) if m else np.array([1.0])
            prod = npoly.polymul(tm, base)
            out[m] = math.pi * ncheb.poly2cheb(prod)[0]
        return out

    def _h_poly_x(self) -> np.ndarray:
        """h(phi) as a polynomial in x = cos(phi): (delta^2/pi) r(c-delta*x)(1-x^2)."""
        c, delta = self.center, self.halfwidth
        comp = np.array([c, -delta])
        acc = np.array([0.0])
        power = np.array([1.0])
        for rk in self.r_pow:
            acc = npoly.polyadd(acc, rk * power)
            power = npoly.polymul(power, comp)
        acc = npoly.polymul(acc, (1.0, 0.0, -1.0))
        return (delta**2 / math.pi) * acc


def _support_residual(p: Potential, a: float, b: float, nodes: int):
    phi = (2.0 * np.arange(1, nodes + 1) - 1.0) * math.pi / (2.0 * nodes)
    x = np.cos(phi)
    c = 0.5 * (a + b)
    delta = 0.5 * (b - a)
    t = c + delta * x
    v1 = p.v1(t)
    v2 = p.v2(t)
    g1 = np.sum(v1) / (2.0 * nodes)
    g2 = np.sum(t * v1) / (2.0 * nodes) - 1.0
    da = (1.0 - x) / 2.0
    db = (1.0 + x) / 2.0
    j11 = np.sum(v2 * da) / (2.0 * nodes)
    j12 = np.sum(v2 * db) / (2.0 * nodes)
    j21 = np.sum((v1 + t * v2) * da) / (2.0 * nodes)
    j22 = np.sum((v1 + t * v2) * db) / (2.0 * nodes)
    return np.array([g1, g2]), np.array([[j11, j12], [j21, j22]])


def solve_support(p: Potential, max_iter: int = 200) -> tuple[float, float]:
    """Solve the one-cut endpoint conditions by damped Newton iteration.

    Raises NoOneCutSolutionError on non-convergence and NotOneCutError if
    the resulting density would be negative somewhere on [A, B].
    """
    nodes = max(16, p.degree + 2)
    x_star = p.argmin()
    a, b = x_star - 1.0, x_star + 1.0
    g, jac = _support_residual(p, a, b, nodes)
    norm = float(np.max(np.abs(g)))
    for _ in range(max_iter):
        if norm <= _SUPPORT_TOL:
            break
        try:
            step = np.linalg.solve(jac, g)
        except np.linalg.LinAlgError as exc:
            raise NoOneCutSolutionError(f"singular Newton system at ({a}, {b})") from exc
        lam = 1.0
        for _ in range(50):
            na, nb = a - lam * step[0], b - lam * step[1]
            if nb - na > 1e-12:
                ng, njac = _support_residual(p, na, nb, nodes)
                nnorm = float(np.max(np.abs(ng)))
                if nnorm < norm or nnorm <= _SUPPORT_TOL:
                    a, b, g, jac, norm = na, nb, ng, njac, nnorm
                    break
            lam *= 0.5
        else:
            raise NoOneCutSolutionError(
                f"damped Newton stalled at ({a}, {b}), residual {norm:.3e}"
            )
    else:
        raise NoOneCutSolutionError(
            f"no convergence after {max_iter} iterations, residual {norm:.3e}"
        )
    _check_density_sign(p, a, b)
    return float(a), float(b)


def _r_power_coeffs(p: Potential, a: float, b: float) -> np.ndarray:
    """Power coefficients of r(z) = (1/2pi) int D(z, t) w(t) dt."""
    b1 = np.asarray(p.v1_coeffs)
    d1 = len(b1) - 1
    if d1 < 1:
        return np.array([0.0])
    j_moments = _chebyshev_moments(a, b, d1 - 1)
    out = np.zeros(d1)  # degree of r is deg(V) - 2 = d1 - 1
    for m in range(d1):
        for j in range(m + 1, d1 + 1):
            out[j - 1 - m] += b1[j] * j_moments[m]
    return out / (2.0 * math.pi)


def _check_density_sign(p: Potential, a: float, b: float) -> None:
    r_pow = _r_power_coeffs(p, a, b)
    grid = np.linspace(a, b, 4001)
    vals = npoly.polyval(grid, r_pow)
    scale = max(1.0, float(np.max(np.abs(vals))))
    i = int(np.argmin(vals))
    if vals[i] < -1e-10 * scale:
        raise NotOneCutError(
            f"density negative near t = {grid[i]:.6f} (r = {vals[i]:.3e}); "
            "the one-cut ansatz fails for this potential"
        )


def _cdf_cos_coeffs(r_pow: np.ndarray, a: float, b: float) -> np.ndarray:
    """Cosine coefficients of h(phi) = (delta^2/pi) r(t(phi)) sin^2(phi)."""
    c = 0.5 * (a + b)
    delta = 0.5 * (b - a)
    comp = np.array([c, -delta])  # t = c - delta*x with x = cos(phi)
    acc = np.array([0.0])
    power = np.array([1.0])
    for rk in r_pow:
        acc = npoly.polyadd(acc, rk * power)
        power = npoly.polymul(power, comp)
    acc = npoly.polymul(acc, (1.0, 0.0, -1.0))  # times (1 - x^2)
    return (delta**2 / math.pi) * ncheb.poly2cheb(acc)


def solve_equilibrium(p: Potential, kappa: float = 0.5) -> EquilibriumMeasure:
    """Solve for the full equilibrium measure and certify what can be certified.

    A regularity certificate on [A-kappa0, B+kappa0] is attempted with
    shrinking kappa0 <= kappa; potentials at the one-cut/two-cut onset leave
    kappa0 = 0 and regular = False, but the measure itself (density, CDF,
    quantiles, edge constants) is still returned since the edges are clean.
    """
    a, b = solve_support(p)
    r_pow = _r_power_coeffs(p, a, b)
    cdf_cos = _cdf_cos_coeffs(r_pow, a, b)
    mass = math.pi * cdf_cos[0]
    if abs(mass - 1.0) > _MASS_TOL:
        raise NoOneCutSolutionError(f"equilibrium mass off by {mass - 1.0:.3e}")
    width = b - a
    s_a = float(npoly.polyval(a, r_pow)) * math.sqrt(width) / math.pi
    s_b = float(npoly.polyval(b, r_pow)) * math.sqrt(width) / math.pi
    # Chebyshev coefficients of r on [a, b] (exact affine re-expansion)
    c, delta = 0.5 * (a + b), 0.5 * (b - a)
    comp = np.array([c, delta])
    acc = np.array([0.0])
    power = np.array([1.0])
    for rk in r_pow:
        acc = npoly.polyadd(acc, rk * power)
        power = npoly.polymul(power, comp)
    r_cheb = ncheb.poly2cheb(acc)
    eq = EquilibriumMeasure(
        a=a, b=b, r_pow=r_pow, r_cheb=r_cheb, cdf_cos=cdf_cos,
        s_a=s_a, s_b=s_b, potential_spec=p.spec_string(),
    )
    k = kappa
    for _ in range(12):
        try:
            check_regularity(eq, p, k)
            eq.kappa0 = k
            eq.regular = True
            break
        except RegularityViolationError as err:
            if err.point is not None and a <= err.point <= b:
                break  # interior zero of r: no kappa helps
            k /= 4.0
            if k < 1e-6:
                break
    return eq


def check_regularity(eq: EquilibriumMeasure, p: Potential, kappa: float):
    """Certify r > 0 on [A-kappa, B+kappa] by Chebyshev-range bounding.

    Returns (s_A, s_B, kappa0).  Raises RegularityViolationError carrying
    the offending point when r <= 0 anywhere on the widened interval.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    lo, hi = eq.a - kappa, eq.b + kappa
    # Locate any real zero of r in the widened interval first.
    roots = npoly.polyroots(eq.r_pow) if len(eq.r_pow) > 1 else np.array([])
    scale = max(1.0, abs(eq.b - eq.a))
    for z in np.atleast_1d(roots):
        if abs(z.imag) < 1e-9 * scale and lo - 1e-12 <= z.real <= hi + 1e-12:
            raise RegularityViolationError(
                f"r vanishes at t = {z.real:.9f} inside [{lo:.6f}, {hi:.6f}]",
                point=float(z.real),
                value=0.0,
            )
    if not _cheb_positive(eq.r_pow, lo, hi, depth=0):
        grid = np.linspace(lo, hi, 20001)
        vals = npoly.polyval(grid, eq.r_pow)
        i = int(np.argmin(vals))
        raise RegularityViolationError(
            f"r is not positive near t = {grid[i]:.9f} on [{lo:.6f}, {hi:.6f}]",
            point=float(grid[i]),
            value=float(vals[i]),
        )
    return eq.s_a, eq.s_b, kappa


def _cheb_positive(r_pow: np.ndarray, lo: float, hi: float, depth: int) -> bool:
    """True if the Chebyshev range bound certifies r > 0 on [lo, hi]."""
    c = 0.5 * (lo + hi)
    delta = 0.5 * (hi - lo)
    comp = np.array([c, delta])
    acc = np.array([0.0])
    power = np.array([1.0])
    for rk in r_pow:
        acc = npoly.polyadd(acc, rk * power)
        power = npoly.polymul(power, comp)
    ch = ncheb.poly2cheb(acc)
    lower = ch[0] - np.sum(np.abs(ch[1:]))
    if lower > 0:
        return True
    if depth >= 24:
        return False
    mid = c
    if npoly.polyval(mid, r_pow) <= 0:
        return False
    return _cheb_positive(r_pow, lo, mid, depth + 1) and _cheb_positive(
        r_pow, mid, hi, depth + 1
    )


def classical_locations(eq: EquilibriumMeasure, n: int) -> ClassicalLocations:
    """gamma_k solving F(gamma_k) = k/N and gamma_tilde_j at (j-1/2)/N."""
    if n < 1:
        raise ValueError("n must be >= 1")
    gamma = np.array([eq.quantile(k / n) for k in range(1, n + 1)])
    gamma[-1] = eq.b  # F(B) = 1 exactly
    gamma_tilde = np.array([eq.quantile((j - 0.5) / n) for j in range(1, n + 1)])
    return ClassicalLocations(gamma=gamma, gamma_tilde=gamma_tilde, n=n)
