import unittest

import numpy as np
import pytest

from harmonic_gluing.domain import GluingParams, build_grid, glued_area
from harmonic_gluing.errors import WrongDomain
from harmonic_gluing.harmonic import ExtendedVector, apply_D, assemble_D
from harmonic_gluing.manifold import FlatTorus
from harmonic_gluing.norms import (
    NormSpec,
    apriori_constant_estimate,
    embedding_constant_estimate,
    extended_norm,
    holder_embedding_fit,
    norm_breakdown,
    random_section,
    sphere_sobolev_norm,
    weighted_norm,
)
from harmonic_gluing.pregluing import make_pair, preglue


class GluedNormTestCase(unittest.TestCase):
    def __init__(self, methodName: str = "runTest") -> None:
        super().__init__(methodName)
        self.params = GluingParams(delta=0.2, R=20.0)
        self.pair = make_pair("constant", FlatTorus(dimension=2), self.params)
        self.f_R = preglue(self.pair, build_grid(self.params, self.pair.zero.grid.resolution))

    def test_constant_section_measures_the_area(self) -> None:
        values = np.zeros((self.f_R.num_active, 2))
        values[:, 0] = 1.0
        unit = self.f_R.section(values)
        for p in (1.2, 1.5, 1.8):
            self.assertAlmostEqual(
                weighted_norm(unit, 0, p) ** p / glued_area(self.params.R), 1.0, delta=1e-3
            )
            # derivatives of a constant field vanish
            self.assertAlmostEqual(weighted_norm(unit, 2, p), weighted_norm(unit, 0, p), places=10)

    def test_norm_grows_with_order(self) -> None:
        xi = random_section(self.f_R, np.random.default_rng(3))
        norms = [weighted_norm(xi, order) for order in (0, 1, 2)]
        self.assertTrue(norms[0] <= norms[1] <= norms[2])

    def test_breakdown_shares_add_up(self) -> None:
        xi = random_section(self.f_R, np.random.default_rng(4))
        breakdown = norm_breakdown(xi, 2)
        shares = [value for key, value in breakdown.items() if key.endswith("_share")]
        self.assertEqual(len(shares), 3)
        self.assertTrue(all(0.0 <= share <= 1.0 for share in shares))
        self.assertGreater(breakdown["neck_share"], 0.0)
        self.assertAlmostEqual(breakdown["total"], weighted_norm(xi, 2), places=10)

    def test_extended_norm_combines_both_parts(self) -> None:
        xi = random_section(self.f_R, np.random.default_rng(5))
        vector = ExtendedVector(xi, np.array([3.0, 4.0]))
        expected = np.hypot(weighted_norm(xi, 2), 5.0)
        self.assertAlmostEqual(extended_norm(vector), expected, places=12)

    def test_sphere_norm_rejects_the_glued_grid(self) -> None:
        with self.assertRaises(WrongDomain):
            sphere_sobolev_norm(self.f_R.zero_section())

    def test_embedding_constant(self) -> None:
        estimate = embedding_constant_estimate(self.f_R, probes=6, seed=1)
        self.assertEqual(estimate["probes"], 6)
        self.assertGreater(estimate["constant"], 0.0)
        self.assertGreaterEqual(estimate["constant"], estimate["median"])


def test_norm_spec_ranges():
    with pytest.raises(AssertionError):
        NormSpec(p=2.0)
    with pytest.raises(AssertionError):
        NormSpec(order=3)


def test_holder_constant_is_scale_invariant():
    fit = holder_embedding_fit(p=1.5, probes=4, seed=2)
    assert fit["alpha"] == pytest.approx(2.0 - 2.0 / 1.5)
    assert fit["spread"] <= 1e-3
    assert len(fit["seminorm"]) == len(fit["radii"])


def test_apriori_constant_on_a_sphere():
    params = GluingParams(delta=0.2, R=20.0)
    pair = make_pair("torus-spherical", FlatTorus(dimension=2), params)
    matrix = assemble_D(pair.zero)
    estimate = apriori_constant_estimate(
        pair.zero, lambda xi: apply_D(pair.zero, xi, matrix), probes=4, seed=0
    )
    assert np.isfinite(estimate["constant"])
    assert estimate["constant"] >= estimate["median"] > 0.0
