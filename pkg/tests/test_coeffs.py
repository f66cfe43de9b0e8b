import numpy as np
import pytest

from delaycontrol.core import ConfigurationError
from delaycontrol.coeffs import (FAMILIES, check_derivative_consistency,
                                 make_coefficients)

FAMILY_SAMPLES = [
    ("constant", dict(b0=1.0, s0=-0.5, f0=2.0, phi0=3.0)),
    ("linear", dict(b0=0.1, bx=0.3, bx1=-0.2, bx2=0.5, bu=0.7, s0=0.2, sx=0.4,
                    sx1=0.1, sx2=-0.3, su=0.2, f0=1.0, fx=-1.0, fx1=0.5, fx2=0.2,
                    fy=-0.4, fz=0.6, fu=0.3, phi0=0.5, phix=1.5, phix1=-0.7)),
    ("bilinear", dict(bx=0.2, bxx1=0.9, bxx2=-0.4, sxx1=0.3, sxx2=0.5, clip=2.0,
                      fy=-0.2, phix=1.0)),
    ("linear_quadratic", dict(a=0.4, bu=0.6, b0=0.1, sigma0=0.25, q=0.5, r=0.5,
                              fy=-0.3, phi_quad=-0.4, phi_lin=0.2, phi0=0.1)),
]


@pytest.mark.parametrize("family,params", FAMILY_SAMPLES)
def test_derivatives_match_central_differences(family, params):
    coeffs = make_coefficients(family, lam=0.5, **params)
    assert check_derivative_consistency(coeffs, seed=1) <= 1e-6


def test_registry_names_complete():
    assert set(FAMILIES) == {"constant", "linear", "bilinear", "linear_quadratic"}


def test_unknown_family_rejected():
    with pytest.raises(ConfigurationError, match="unknown coefficient family"):
        make_coefficients("cubic")


def test_unknown_parameter_rejected():
    with pytest.raises(ConfigurationError, match="unknown parameters"):
        make_coefficients("constant", bx=1.0)


def test_vectorized_broadcasting():
    coeffs = make_coefficients("linear", lam=0.0, bx=2.0, bu=1.0)
    x = np.array([1.0, 2.0, 3.0])
    out = coeffs.b(0.0, x, 0.0, 0.0, 0.5)
    assert out == pytest.approx([2.5, 4.5, 6.5])
    assert np.shape(coeffs.sigma(0.0, x, 0.0, 0.0, 0.0)) == (3,)


def test_a_part_zeroes_cost_slots():
    coeffs = make_coefficients("linear", lam=0.0, f0=1.0, fx=2.0, fy=10.0, fz=-7.0)
    assert coeffs.a_part(0.0, 0.5, 0.0, 0.0, 0.0) == pytest.approx(2.0)


def test_bilinear_clamp_keeps_linear_growth():
    # the product terms saturate, so |b| grows at most linearly
    coeffs = make_coefficients("bilinear", lam=0.0, bxx1=1.0, clip=2.0)
    big = coeffs.b(0.0, 1e6, 1e6, 0.0, 0.0)
    assert abs(big) <= 2.0 * 2.0 + 1e-9


def test_bilinear_requires_positive_clip():
    with pytest.raises(ConfigurationError):
        make_coefficients("bilinear", clip=0.0)


def test_lq_shapes():
    coeffs = make_coefficients("linear_quadratic", lam=0.5, a=0.1, bu=0.5,
                               sigma0=0.2, q=0.15, r=1.0, phi_quad=-0.15)
    x = np.linspace(-1, 1, 5)
    assert coeffs.f(0.0, x, 0.0, 0.0, 0.0, 0.0, 0.5) == pytest.approx(
        -(0.15 * x ** 2 + 1.0 * 0.25))
    assert coeffs.phi_x(x, 0.0) == pytest.approx(-0.3 * x)
    assert np.all(coeffs.sigma(0.0, x, 0.0, 0.0, 0.0) == 0.2)
