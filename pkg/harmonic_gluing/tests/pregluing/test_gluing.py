import unittest

import numpy as np
import pytest

from harmonic_gluing.domain import GluingParams, build_grid
from harmonic_gluing.domain.grid import SNAP
from harmonic_gluing.errors import MatchingViolation, WrongDomain
from harmonic_gluing.harmonic import Section
from harmonic_gluing.manifold import FlatTorus, RoundSphere
from harmonic_gluing.pregluing import (
    constancy_annulus,
    glued_log_radius,
    make_pair,
    patch_xi,
    perturbation_size,
    perturbed_maps,
    preglue,
    resample_points,
    resample_vectors,
    seam_mismatch,
    split_eta,
    zeta_fields,
    zeta_growth,
)


class ConstantPairTestCase(unittest.TestCase):
    def __init__(self, methodName: str = "runTest") -> None:
        super().__init__(methodName)
        self.params = GluingParams(delta=0.2, R=20.0)
        self.pair = make_pair("constant", FlatTorus(dimension=2), self.params)
        self.grid = build_grid(self.params)
        self.f_R = preglue(self.pair, self.grid)
        self.f0r, self.finfr = perturbed_maps(self.f_R, self.pair)

    def test_preglued_map_is_constant(self) -> None:
        np.testing.assert_array_equal(self.f_R.active_point().coords, 0.0)
        report = constancy_annulus(self.f_R, self.pair.y)
        self.assertTrue(report["contains_design_annulus"])

    def test_perturbed_maps_are_unchanged(self) -> None:
        self.assertTrue(np.all(self.f0r.same_values(self.pair.zero)))
        self.assertTrue(np.all(self.finfr.same_values(self.pair.infinity)))
        self.assertEqual(perturbation_size(self.pair.zero, self.f0r), 0.0)

    def test_split_recombines(self) -> None:
        rng = np.random.default_rng(7)
        eta = Section(self.f_R, rng.standard_normal((self.f_R.num_active, 2)))
        eta0, eta_inf = split_eta(eta, self.f0r, self.finfr)
        nodes = np.flatnonzero(self.grid.active & self.grid.region("neck") & self.grid.region("core"))
        rows = self.grid.position[nodes]
        recombined = resample_vectors(eta0, self.f_R, nodes) + resample_vectors(eta_inf, self.f_R, nodes)
        np.testing.assert_allclose(recombined, eta.values[rows], atol=1e-12)

    def test_split_supports(self) -> None:
        eta = Section(self.f_R, np.ones((self.f_R.num_active, 2)))
        eta0, eta_inf = split_eta(eta, self.f0r, self.finfr)
        log_R = np.log(self.params.R)
        t0 = glued_log_radius(self.f0r.grid)[self.f0r.grid.active_index]
        t_inf = glued_log_radius(self.finfr.grid)[self.finfr.grid.active_index]
        self.assertTrue(np.all(eta0.values[t0 < -log_R - SNAP] == 0.0))
        self.assertTrue(np.all(eta_inf.values[t_inf > -log_R + SNAP] == 0.0))
        np.testing.assert_allclose(eta0.values[np.abs(t0 + log_R) <= SNAP], 0.5, atol=1e-12)

    def test_patch_of_constant_sections(self) -> None:
        c = np.array([0.3, -0.7])
        xi0 = Section(self.f0r, np.tile(c, (self.f0r.num_active, 1)))
        xi_inf = Section(self.finfr, np.tile(c, (self.finfr.num_active, 1)))
        patched = patch_xi(xi0, xi_inf, c, self.f_R)
        np.testing.assert_allclose(patched.values, np.tile(c, (self.f_R.num_active, 1)), atol=1e-12)

    def test_patch_is_linear(self) -> None:
        rng = np.random.default_rng(3)
        values0 = rng.standard_normal((self.f0r.num_active, 2))
        values_inf = rng.standard_normal((self.finfr.num_active, 2))
        values0[self.f0r.grid.position[self.pair.x1]] = 0.0
        values_inf[self.finfr.grid.position[self.pair.x2]] = 0.0
        once = patch_xi(Section(self.f0r, values0), Section(self.finfr, values_inf), np.zeros(2), self.f_R)
        twice = patch_xi(
            Section(self.f0r, 2 * values0), Section(self.finfr, 2 * values_inf), np.zeros(2), self.f_R
        )
        np.testing.assert_allclose(twice.values, 2 * once.values, atol=1e-12)

    def test_patch_off_neck_copies_sphere_solution(self) -> None:
        rng = np.random.default_rng(5)
        values0 = rng.standard_normal((self.f0r.num_active, 2))
        xi_zero = values0[self.f0r.grid.position[self.pair.x1]]
        values_inf = np.tile(xi_zero, (self.finfr.num_active, 1))
        xi0 = Section(self.f0r, values0)
        patched = patch_xi(xi0, Section(self.finfr, values_inf), xi_zero, self.f_R)
        t = glued_log_radius(self.grid)[self.grid.active_index]
        outside = t >= -np.log(self.params.r) + SNAP
        nodes = self.grid.active_index[outside]
        np.testing.assert_allclose(
            patched.values[outside], resample_vectors(xi0, self.f_R, nodes), atol=1e-12
        )

    def test_patch_rejects_mismatched_centers(self) -> None:
        xi0 = Section(self.f0r, np.ones((self.f0r.num_active, 2)))
        xi_inf = Section(self.finfr, np.zeros((self.finfr.num_active, 2)))
        with pytest.raises(MatchingViolation):
            patch_xi(xi0, xi_inf, np.zeros(2), self.f_R)


class IdentityPairTestCase(unittest.TestCase):
    def __init__(self, methodName: str = "runTest") -> None:
        super().__init__(methodName)
        self.params = GluingParams(delta=0.2, R=20.0)
        self.pair = make_pair("identity-sphere", RoundSphere(), self.params)
        self.grid = build_grid(self.params)
        self.f_R = preglue(self.pair, self.grid)

    def test_constant_exactly_on_annulus(self) -> None:
        report = constancy_annulus(self.f_R, self.pair.y)
        self.assertTrue(report["contains_design_annulus"])
        self.assertAlmostEqual(report["inner_radius"] / report["design_inner"], 1.0, places=6)
        self.assertAlmostEqual(report["outer_radius"] / report["design_outer"], 1.0, places=6)

    def test_seams_are_continuous(self) -> None:
        self.assertLess(seam_mismatch(self.pair, self.grid), 1e-9)

    def test_zeta_grows_linearly(self) -> None:
        growth = zeta_growth(self.pair, self.grid)
        self.assertLessEqual(growth["slope"], 1.05 * growth["df_sup"])

    def test_zeta_reproduces_maps_on_neck(self) -> None:
        t = glued_log_radius(self.grid)
        neck = (t >= np.log(self.params.delta / self.params.R)) & (t <= np.log(2.0 / self.params.r))
        nodes = np.flatnonzero(self.grid.active & neck)
        zeta0, _ = zeta_fields(self.pair, self.grid, nodes)
        model, y = self.pair.model, self.pair.y
        base = y.take(np.zeros(nodes.size, dtype=int))
        rebuilt = model.exp(base, zeta0)
        original = resample_points(self.pair.zero, self.grid, nodes)
        error = model.norm(rebuilt, model.log(rebuilt, original))
        self.assertLess(float(error.max()), 1e-8)

    def test_perturbed_map_agrees_away_from_neck(self) -> None:
        f0r, _ = perturbed_maps(self.f_R, self.pair)
        grid = f0r.grid
        t = glued_log_radius(grid)[grid.active_index]
        far = t >= np.log(2.0 / self.params.r) + SNAP
        self.assertTrue(np.all(f0r.same_values(self.pair.zero)[far]))
        near = t <= -np.log(self.params.r) - SNAP
        np.testing.assert_array_equal(f0r.active_point().coords[near], 0.0)


def test_preglue_needs_glued_grid():
    params = GluingParams(delta=0.2, R=20.0)
    pair = make_pair("constant", FlatTorus(dimension=2), params)
    with pytest.raises(WrongDomain):
        preglue(pair, pair.zero.grid)
