"""Polynomial external potentials V with exact derivative evaluation.

The supported family is real polynomials of degree >= 2 with positive
leading coefficient.  That keeps every downstream quadrature exact while
covering the quadratic and double-well presets used throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import InadmissiblePotentialError, UnsupportedPotentialError

__all__ = [
    "Potential",
    "GrowthCertificate",
    "eval_potential",
    "convexity_lower_bound",
    "validate_potential",
    "parse_potential",
]


@dataclass(frozen=True)
class Potential:
    """An analytic external field given by polynomial coefficients c0..cd."""

    coeffs: tuple[float, ...]
    name: str | None = None
    eval_window: tuple[float, float] = (-10.0, 10.0)

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        while len(coeffs) > 1 and coeffs[-1] == 0.0:
            coeffs = coeffs[:-1]
        object.__setattr__(self, "coeffs", coeffs)
        if self.degree < 2:
            raise UnsupportedPotentialError(
                f"polynomial degree must be >= 2, got {self.degree}"
            )
        if coeffs[-1] <= 0:
            raise UnsupportedPotentialError(
                f"leading coefficient must be positive, got {coeffs[-1]}"
            )

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @classmethod
    def quadratic(cls) -> "Potential":
        """V(x) = x^2."""
        return cls((0.0, 0.0, 1.0), name="quadratic")

    @classmethod
    def quartic_minus(cls, a: float) -> "Potential":
        """V(x) = x^4/4 - a*x^2 (non-convex double well for a > 0)."""
        return cls((0.0, 0.0, -float(a), 0.0, 0.25), name=f"quartic_minus:{a}")

    @classmethod
    def polynomial(cls, coeffs) -> "Potential":
        return cls(tuple(coeffs))

    def spec_string(self) -> str:
        """Round-trippable form accepted by :func:`parse_potential`."""
        if self.name == "quadratic":
            return "quadratic"
        if self.name and self.name.startswith("quartic_minus:"):
            return self.name
        return "poly:[" + ",".join(repr(c) for c in self.coeffs) + "]"

    def v(self, x):
        return npoly.polyval(x, self.coeffs)

    def v1(self, x):
        return npoly.polyval(x, npoly.polyder(self.coeffs))

    def v2(self, x):
        return npoly.polyval(x, npoly.polyder(self.coeffs, 2))

    @property
    def v1_coeffs(self) -> np.ndarray:
        return npoly.polyder(self.coeffs)

    @property
    def v2_coeffs(self) -> np.ndarray:
        return npoly.polyder(self.coeffs, 2)

    def argmin(self) -> float:
        """Location of the global minimum of V (used to seed the support solver)."""
        crit = npoly.polyroots(self.v1_coeffs)
        crit = crit[np.abs(crit.imag) < 1e-9].real
        if crit.size == 0:
            return 0.0
        return float(crit[np.argmin(self.v(crit))])


@dataclass(frozen=True)
class GrowthCertificate:
    """Certified margin alpha and onset X0 for V(x) > (2+alpha) log(1+|x|)."""

    alpha: float
    x0: float
    admissible: bool = True
    scan_points: int = field(default=0, compare=False)


def eval_potential(p: Potential, x: float) -> tuple[float, float, float]:
    """Exact Horner evaluation of (V, V', V'') at a finite point."""
    if not math.isfinite(x):
        raise ValueError(f"x must be finite, got {x}")
    return float(p.v(x)), float(p.v1(x)), float(p.v2(x))


def convexity_lower_bound(p: Potential) -> float:
    """Smallest W >= 0 with inf V'' >= -2W.

    For even-degree polynomials with positive lead, V'' attains its infimum
    at a real critical point of V''; the candidates are the real roots of
    V''' plus nothing else (V'' -> +inf at both ends).
    """
    v2c = p.v2_coeffs
    if len(v2c) == 1:  # V'' constant
        inf_v2 = float(v2c[0])
    else:
        deg2 = len(v2c) - 1
        if deg2 % 2 == 1 or v2c[-1] < 0:
            raise UnsupportedPotentialError("V'' is unbounded below")
        roots = npoly.polyroots(npoly.polyder(v2c))
        roots = roots[np.abs(roots.imag) < 1e-12].real
        inf_v2 = float(np.min(npoly.polyval(roots, v2c))) if roots.size else float("inf")
        # Cross-check on a coarse grid; exact roots are authoritative.
        grid = np.linspace(p.eval_window[0], p.eval_window[1], 2001)
        inf_v2 = min(inf_v2, float(np.min(npoly.polyval(grid, v2c))))
    return max(0.0, -inf_v2 / 2.0)


def validate_potential(p: Potential, alpha: float = 1.0) -> GrowthCertificate:
    """Certify the growth condition V(x) > (2+alpha) log(1+|x|) for |x| >= X0.

    The certificate combines a dense scan on [X0, X1] with a leading-term
    argument beyond X1: for |x| >= X1 the lead dominates the lower-order
    terms twice over, and the remaining gap to the logarithm is monotone.
    """
    coeffs = np.asarray(p.coeffs)
    lead = coeffs[-1]
    d = p.degree
    # Beyond x1 the polynomial is bounded below by lead/2 * |x|^d.
    lower = float(np.sum(np.abs(coeffs[:-1])))
    x1 = max(3.0, 2.0 * lower / lead, (2.0 * lower / lead) ** (1.0 / d) if lower else 1.0)

    def bound(x):
        return (2.0 + alpha) * np.log1p(np.abs(x))

    x0 = 3.0
    for _ in range(60):
        xs = np.concatenate([np.linspace(x0, x1 * 2.0, 4001), [x1 * 2.0]])
        xs = np.concatenate([xs, -xs])
        ok_scan = bool(np.all(p.v(xs) > bound(xs)))
        xt = 2.0 * x1
        ok_tail = (d % 2 == 0) and (0.5 * lead * xt**d > bound(xt)) and (
            0.5 * lead * d * xt ** (d - 1) * (1.0 + xt) > (2.0 + alpha)
        )
        if ok_scan and ok_tail:
            return GrowthCertificate(alpha=alpha, x0=x0, admissible=True,
                                     scan_points=xs.size)
        x0 *= 1.5
        if x0 > 1e6:
            break
    raise InadmissiblePotentialError(
        f"growth condition fails for {p.spec_string()} with alpha={alpha}"
    )


def parse_potential(spec: str) -> Potential:
    """Parse `poly:[c0,c1,...]`, `quadratic`, or `quartic_minus:a`."""
    spec = spec.strip()
    if spec == "quadratic":
        return Potential.quadratic()
    if spec.startswith("quartic_minus:"):
        return Potential.quartic_minus(float(spec.split(":", 1)[1]))
    if spec.startswith("poly:"):
        body = spec[len("poly:"):].strip()
        if not (body.startswith("[") and body.endswith("]")):
            raise ValueError(f"malformed potential spec {spec!r}")
        coeffs = [float(tok) for tok in body[1:-1].split(",") if tok.strip()]
        return Potential.polynomial(coeffs)
    raise ValueError(f"unknown potential spec {spec!r}")
