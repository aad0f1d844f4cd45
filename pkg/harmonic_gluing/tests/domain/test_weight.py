import numpy as np
import pytest
from scipy import integrate

from harmonic_gluing.domain import (
    GluingParams,
    admissible,
    glued_area,
    smoothstep,
    theta_weight,
)


def test_theta_weight_branches():
    assert theta_weight(0.0, 10.0) == pytest.approx(0.01, abs=1e-15)
    assert theta_weight(1.0, 10.0) == pytest.approx(2.0, abs=1e-15)
    assert theta_weight(1.0 + 1.0j, 3.0) == pytest.approx(3.0, abs=1e-14)


def test_theta_weight_continuous_on_the_seam():
    for R in (2.0, 10.0, 1e3):
        seam = 1.0 / R
        inner = R**-2 + R**2 * seam**2
        outer = 1.0 + seam**2
        assert inner == pytest.approx(outer, rel=4e-16)
        assert theta_weight(seam * np.exp(0.7j), R) == pytest.approx(1.0 + R**-2, rel=1e-12)


def test_radial_integral_of_the_weight():
    R = 10.0
    r = np.geomspace(1e-8, 1e8, 400001)
    integrand = 2 * np.pi * r**2 / theta_weight(r, R) ** 2
    area = integrate.trapezoid(integrand, np.log(r))
    assert area == pytest.approx(glued_area(R), rel=1e-6)


def test_admissible_examples():
    assert admissible(GluingParams(delta=0.05, R=400.0, delta0=0.1))
    assert not admissible(GluingParams(delta=0.2, R=400.0, delta0=0.1))
    assert not admissible(GluingParams(delta=0.05, R=100.0, delta0=0.1))


def test_params_store_neck_ratio():
    params = GluingParams(delta=0.1, R=80.0)
    assert params.r == pytest.approx(8.0, rel=1e-15)
    np.testing.assert_allclose(params.neck_radii(), [0.1 / 160, 0.1 / 80, 1 / 80, 1 / 8, 2 / 8])


def test_params_reject_out_of_range_values():
    with pytest.raises(AssertionError):
        GluingParams(delta=1.5, R=10.0)
    with pytest.raises(AssertionError):
        GluingParams(delta=0.1, R=0.5)


def test_smoothstep_symmetry_and_plateaus():
    t = np.linspace(-0.5, 1.5, 101)
    np.testing.assert_allclose(smoothstep(t) + smoothstep(1.0 - t), 1.0, atol=1e-15)
    assert smoothstep(0.0) == 0.0 and smoothstep(1.0) == 1.0 and smoothstep(0.5) == 0.5
    assert np.all(np.diff(smoothstep(t)) >= 0.0)
