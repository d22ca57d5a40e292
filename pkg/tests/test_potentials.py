import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loggas.errors import InadmissiblePotentialError, UnsupportedPotentialError
from loggas.potentials import (
    Potential,
    convexity_lower_bound,
    eval_potential,
    parse_potential,
    validate_potential,
)


def test_eval_quadratic_at_two():
    assert eval_potential(Potential.quadratic(), 2.0) == (4.0, 4.0, 2.0)


def test_eval_quartic_minus_at_zero_and_one():
    p = Potential.quartic_minus(1.0)
    assert eval_potential(p, 0.0) == (0.0, 0.0, -2.0)
    assert eval_potential(p, 1.0) == (-0.75, -1.0, 1.0)


def test_eval_rejects_non_finite():
    with pytest.raises(ValueError):
        eval_potential(Potential.quadratic(), float("nan"))
    with pytest.raises(ValueError):
        eval_potential(Potential.quadratic(), float("inf"))


def test_convexity_lower_bound_values():
    assert convexity_lower_bound(Potential.quadratic()) == 0.0
    assert convexity_lower_bound(Potential((0.0, 0.0, 0.0, 0.0, 0.25))) == 0.0
    assert convexity_lower_bound(Potential.quartic_minus(1.0)) == pytest.approx(1.0, abs=1e-12)


def test_convexity_lower_bound_zero_iff_convex():
    # W = 0 exactly when V'' >= 0 everywhere
    for coeffs, convex in [
        ((0, 0, 1), True),
        ((0, 0, 0, 0, 1), True),
        ((0, 0, -0.5, 0, 0.25), False),
        ((1, 2, 3, 0, 0, 0, 1), False),  # V'' = 6 - ... check numerically below
    ]:
        p = Potential(coeffs)
        w = convexity_lower_bound(p)
        grid = np.linspace(-8, 8, 4001)
        inf_v2 = float(np.min(p.v2(grid)))
        if inf_v2 >= -1e-12:
            assert w == 0.0
        else:
            assert w == pytest.approx(-inf_v2 / 2.0, rel=1e-9)


def test_growth_certificate_quadratic():
    cert = validate_potential(Potential.quadratic())
    assert cert.admissible and cert.alpha <= 1.0 and cert.x0 == 3.0
    # the logarithmic bound holds numerically at |x| = X0
    v, _, _ = eval_potential(Potential.quadratic(), cert.x0)
    assert v > (2 + cert.alpha) * math.log(1 + cert.x0)


def test_growth_certificate_quartic():
    cert = validate_potential(Potential.quartic_minus(1.0))
    assert cert.admissible


def test_constant_potential_rejected():
    with pytest.raises(UnsupportedPotentialError):
        Potential((0.0,))


def test_odd_degree_fails_growth():
    # positive lead, degree 3: V(-x) -> -inf, growth condition fails
    with pytest.raises(InadmissiblePotentialError):
        validate_potential(Potential((0.0, 0.0, 1.0, 0.5)))


def test_parse_roundtrip():
    for spec in ["quadratic", "quartic_minus:0.5", "poly:[0,0,1.5,0,0.25]"]:
        p = parse_potential(spec)
        assert parse_potential(p.spec_string()).coeffs == p.coeffs


def test_parse_rejects_garbage():
    with pytest.raises(ValueError):
        parse_potential("hexic:3")
    with pytest.raises(ValueError):
        parse_potential("poly:0,1")


@settings(max_examples=40, deadline=None)
@given(
    coeffs=st.lists(st.floats(-3, 3), min_size=0, max_size=3),
    lead=st.floats(0.1, 2.0),
    x=st.floats(-5, 5),
)
def test_derivative_matches_finite_difference(coeffs, lead, x):
    p = Potential(tuple(coeffs) + (0.0,) * (3 - len(coeffs)) + (lead,))
    h = 1e-5
    v_plus, _, _ = eval_potential(p, x + h)
    v_minus, _, _ = eval_potential(p, x - h)
    fd = (v_plus - v_minus) / (2 * h)
    _, v1, _ = eval_potential(p, x)
    assert fd == pytest.approx(v1, rel=1e-6, abs=1e-6)
