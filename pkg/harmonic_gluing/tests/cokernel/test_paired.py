import unittest

import numpy as np
import pytest

from harmonic_gluing.cokernel import (
    CokernelBasis,
    WeightedOperator,
    assemble_paired,
    cokernel_basis,
    exclusion_cutoffs,
    sigma_map,
    weighted_spectrum,
)
from harmonic_gluing.domain import GluingParams
from harmonic_gluing.errors import MatchingViolation
from harmonic_gluing.harmonic import Section
from harmonic_gluing.manifold import FlatTorus
from harmonic_gluing.pregluing import make_pair


class ConstantTorusPairTestCase(unittest.TestCase):
    def __init__(self, methodName: str = "runTest") -> None:
        super().__init__(methodName)
        self.params = GluingParams(delta=0.2, R=20.0)
        self.pair = make_pair("constant", FlatTorus(dimension=2), self.params)
        self.system = assemble_paired(self.pair.zero, self.pair.infinity)

    def test_elimination_drops_one_block(self) -> None:
        rows, cols = self.system.shape
        self.assertEqual(rows, (self.pair.zero.num_active + self.pair.infinity.num_active) * 2)
        self.assertEqual(cols, rows - 2)

    def test_expanded_pairs_match(self) -> None:
        rng = np.random.default_rng(0)
        xi1, xi2 = self.system.expand(rng.standard_normal(self.system.shape[1]))
        self.assertLessEqual(self.system.matching_defect(xi1, xi2), 1e-14)

    def test_apply_is_blockwise(self) -> None:
        rng = np.random.default_rng(1)
        xi1, xi2 = self.system.expand(rng.standard_normal(self.system.shape[1]))
        out1, out2 = self.system.apply(xi1, xi2)
        for out, D, xi in ((out1, self.system.D1, xi1), (out2, self.system.D2, xi2)):
            expected = D @ xi.flat()
            scale = np.abs(expected).max()
            np.testing.assert_allclose(out.flat(), expected, rtol=0, atol=1e-12 * scale)

    def test_reduce_inverts_expand(self) -> None:
        rng = np.random.default_rng(2)
        reduced = rng.standard_normal(self.system.shape[1])
        np.testing.assert_array_equal(self.system.reduce(*self.system.expand(reduced)), reduced)

    def test_constant_cokernel_count(self) -> None:
        spectrum = weighted_spectrum(WeightedOperator.from_system(self.system))
        self.assertEqual(spectrum.kernel_dim, 2)
        self.assertEqual(spectrum.cokernel_dim, 4)

    def test_basis_is_orthonormal_and_supported_away(self) -> None:
        basis = cokernel_basis(self.system, self.params)
        self.assertEqual(basis.k, 4)
        self.assertGreaterEqual(basis.gram_min_singular, 0.1)
        gram = self.system.row_inner(basis.vectors, basis.vectors)
        np.testing.assert_allclose(gram, np.eye(4), atol=1e-8)
        cut = exclusion_cutoffs(self.pair.zero, self.pair.infinity, basis.exclusion_radius)
        excluded = np.repeat(cut == 0.0, 2)
        self.assertTrue(np.all(basis.vectors[excluded] == 0.0))

    def test_sigma_on_base_maps_is_the_basis(self) -> None:
        basis = cokernel_basis(self.system, self.params)
        sigma = sigma_map(basis)
        np.testing.assert_array_equal(sigma.columns, basis.vectors)
        self.assertTrue(np.isfinite(sigma.gram_condition))
        v1, v2 = sigma(np.eye(4)[1])
        first, second = basis.sections(1)
        np.testing.assert_array_equal(v1.values, first.values)
        np.testing.assert_array_equal(v2.values, second.values)


def test_empty_basis_gives_zero_sigma():
    pair = make_pair("constant", FlatTorus(dimension=2), GluingParams(delta=0.2, R=20.0))
    sigma = sigma_map(CokernelBasis.empty(pair.zero, pair.infinity))
    assert sigma.k == 0
    v1, v2 = sigma(np.zeros(0))
    assert np.all(v1.values == 0.0)
    assert np.all(v2.values == 0.0)


def test_mismatched_pair_is_rejected():
    pair = make_pair("constant", FlatTorus(dimension=2), GluingParams(delta=0.2, R=20.0))
    shifted = pair.infinity.with_values(pair.infinity.coords + 0.25, pair.infinity.charts)
    with pytest.raises(MatchingViolation):
        assemble_paired(pair.zero, shifted)


def test_sections_split_by_sphere():
    pair = make_pair("constant", FlatTorus(dimension=2), GluingParams(delta=0.2, R=20.0))
    system = assemble_paired(pair.zero, pair.infinity)
    xi1 = Section(pair.zero, np.ones((pair.zero.num_active, 2)))
    xi2 = Section(pair.infinity, 2 * np.ones((pair.infinity.num_active, 2)))
    first, second = system.split(system.join(xi1, xi2))
    np.testing.assert_array_equal(first.values, xi1.values)
    np.testing.assert_array_equal(second.values, xi2.values)


def test_constant_cokernel_count_survives_a_long_neck():
    spectra = []
    for params in (GluingParams(delta=0.2, R=20.0), GluingParams(delta=0.1, R=640.0)):
        pair = make_pair("constant", FlatTorus(dimension=2), params)
        system = assemble_paired(pair.zero, pair.infinity)
        spectra.append(weighted_spectrum(WeightedOperator.from_system(system)))
    short, long = spectra
    assert (long.kernel_dim, long.cokernel_dim) == (2, 4)
    # σ_max is set by the lattice, not by R
    assert long.sigma_max <= 2.0 * short.sigma_max
    assert long.gap > 5.0
