import numpy as np
import pytest

from harmonic_gluing.domain import GluingParams
from harmonic_gluing.harmonic import (
    DiscreteMap,
    apply_D,
    assemble_D,
    conformal_cancellation,
    energy,
    linearization_consistency,
    operator_F,
    tension,
)
from harmonic_gluing.manifold import FlatTorus, RoundSphere
from harmonic_gluing.norms import random_section
from harmonic_gluing.pregluing import make_pair

PARAMS = GluingParams(delta=0.2, R=20.0)


@pytest.fixture(scope="module")
def identity_pair():
    return make_pair("identity-sphere", RoundSphere(dimension=2), PARAMS)


@pytest.fixture(scope="module")
def torus_pair():
    return make_pair("torus-spherical", FlatTorus(dimension=2), PARAMS)


def test_constant_map_has_no_energy(torus_pair):
    f = DiscreteMap.constant(torus_pair.zero.grid, torus_pair.model, torus_pair.y)
    assert energy(f) == 0.0
    assert np.all(tension(f).values == 0.0)
    assert np.all(f.perturb(f.zero_section()).same_values(f))


def test_identity_energy_is_the_sphere_area(identity_pair):
    assert energy(identity_pair.zero) == pytest.approx(4.0 * np.pi, rel=0.05)
    assert energy(identity_pair.infinity) == pytest.approx(4.0 * np.pi, rel=0.05)


def test_conformal_weight_cancels(identity_pair, torus_pair):
    for f in (identity_pair.zero, torus_pair.zero):
        assert conformal_cancellation(f)["relative_difference"] <= 1e-12


def test_flat_target_is_affine(torus_pair):
    f = torus_pair.zero
    matrix = assemble_D(f)
    xi = random_section(f, np.random.default_rng(0), sup=0.01)
    step = operator_F(f, xi) - tension(f)
    linear = apply_D(f, xi, matrix)
    scale = np.abs(linear.values).max()
    np.testing.assert_allclose(step.values, linear.values, rtol=0, atol=1e-8 * scale)


def test_linearization_on_the_sphere(identity_pair):
    report = linearization_consistency(identity_pair.zero, probes=3, seed=1)
    checks = {check.name: check for check in report["checks"]}
    assert checks["linearization_order"].passed, checks["linearization_order"].line()
    assert checks["dF_at_zero_vs_D"].passed


def test_flipped_christoffel_symbols_are_detected(identity_pair):
    f = identity_pair.zero
    point = f.active_point()
    flipped = DiscreteMap(
        f.grid, f.model.flip_christoffel_sign(), point.coords, point.charts, f.ref_charts, "flipped"
    )
    report = linearization_consistency(f, probes=3, seed=1, linearized=flipped)
    checks = {check.name: check for check in report["checks"]}
    assert not checks["linearization_order"].passed
    assert not checks["dF_at_zero_vs_D"].passed
