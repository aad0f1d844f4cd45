import numpy as np
import pytest

from harmonic_gluing.domain import GluingParams
from harmonic_gluing.pregluing import (
    CutoffProfile,
    beta,
    cutoff_derivative_bounds,
    kappa,
    rho,
)


def test_kappa_plateaus_and_symmetry():
    np.testing.assert_array_equal(kappa([-1.0, 0.0, 1.0, 2.0]), [0.0, 0.0, 1.0, 1.0])
    t = np.linspace(0.0, 1.0, 101)
    np.testing.assert_allclose(kappa(t) + kappa(1.0 - t), 1.0, atol=1e-14)
    assert CutoffProfile().symmetry_defect() < 1e-14


def test_rho_plateaus():
    np.testing.assert_array_equal(rho(np.array([0.0, 0.5j, 1.0, 2.0, -3.0])), [0.0, 0.0, 0.0, 1.0, 1.0])
    assert 0.0 < rho(1.5) < 1.0
    assert rho(1.5) == pytest.approx(0.5, abs=1e-12)


def test_beta_plateaus_and_midpoint():
    params = GluingParams(delta=0.01, R=1000.0, delta0=0.1)
    d, R = params.delta, params.R
    assert beta(d / R, params) == 0.0
    assert beta(d / (3 * R), params) == 0.0
    assert beta(1.0 / R, params) == 1.0
    assert beta(10.0 / R, params) == 1.0
    assert beta(np.sqrt(d) / R * np.exp(0.3j), params) == pytest.approx(0.5, abs=1e-9)


def test_beta_is_radial_and_monotone():
    params = GluingParams(delta=0.1, R=100.0, delta0=0.2)
    radius = np.geomspace(params.delta / params.R, 1.0 / params.R, 50)
    values = beta(radius, params)
    assert np.all(np.diff(values) >= 0.0)
    np.testing.assert_array_equal(beta(radius * 1j, params), values)


def test_derivative_bounds_do_not_depend_on_R():
    first = cutoff_derivative_bounds(GluingParams(delta=0.01, R=1e3, delta0=0.1))
    second = cutoff_derivative_bounds(GluingParams(delta=0.01, R=1e5, delta0=0.1))
    assert first["first"] == pytest.approx(second["first"], rel=1e-3)
    assert first["second"] == pytest.approx(second["second"], rel=1e-3)


def test_derivative_bounds_stay_bounded_as_delta_shrinks():
    bounds = [
        cutoff_derivative_bounds(GluingParams(delta=delta, R=1e6, delta0=0.5))
        for delta in (1e-2, 1e-3, 1e-4)
    ]
    for key in ("first", "second"):
        values = np.array([b[key] for b in bounds])
        assert (values.max() - values.min()) / values.max() < 0.2
    # max κ′ = 15/8, up to the central difference of β on the grid
    assert bounds[0]["first"] == pytest.approx(1.875, rel=1e-2)
    assert all(b["second"] < 3.5 for b in bounds)


def test_profile_table():
    params = GluingParams(delta=0.2, R=20.0)
    table = CutoffProfile(samples=31).table(params)
    assert list(table) == ["t", "kappa", "x", "rho", "radius", "beta"]
    assert all(len(column) == 31 for column in table.values())
    assert table["beta"][0] == 0.0 and table["beta"][-1] == 1.0
    with pytest.raises(AssertionError):
        CutoffProfile(samples=2)
