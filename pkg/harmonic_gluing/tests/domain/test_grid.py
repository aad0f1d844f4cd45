import unittest

import numpy as np
import pytest

from harmonic_gluing.domain import (
    CORE,
    INNER,
    OUTER,
    GluingParams,
    Resolution,
    build_grid,
    build_patch_grid,
    build_sphere_grid,
    glued_area,
    involution_permutation,
    quadrature,
)
from harmonic_gluing.errors import InadmissibleParams, MissingNodes, ResolutionTooCoarse, WrongDomain


class GluedGridTestCase(unittest.TestCase):
    def __init__(self, methodName: str = "runTest") -> None:
        super().__init__(methodName)
        self.params = GluingParams(delta=0.1, R=100.0, delta0=0.2)
        self.grid = build_grid(self.params, Resolution(d_theta=np.pi / 64))

    def test_neck_circles_on_rows(self) -> None:
        d_tau = self.grid.lattice["d_tau"]
        anchor = self.grid.layout.anchor
        for radius in self.params.neck_radii()[1:4]:
            offset = (np.log(radius) - anchor) / d_tau
            self.assertAlmostEqual(offset, round(offset), places=9)

    def test_core_covers_neck(self) -> None:
        core_tau = self.grid.tau[self.grid.active & (self.grid.subgrid == CORE)]
        d, R = self.params.delta, self.params.R
        self.assertLess(core_tau.min(), np.log(d / (2 * R)))
        self.assertGreater(core_tau.max(), np.log(2 / (d * R)))

    def test_area(self) -> None:
        area = quadrature(self.grid, np.ones(self.grid.num_nodes))
        self.assertAlmostEqual(area / glued_area(self.params.R), 1.0, delta=1e-4)

    def test_weights(self) -> None:
        self.assertTrue(np.all(self.grid.weight >= 0.0))
        self.assertTrue(np.all(self.grid.weight[~self.grid.active] == 0.0))
        self.assertTrue(np.all(self.grid.mass[self.grid.active] > 0.0))

    def test_overlap_band_width(self) -> None:
        overlap_rows = self.grid.lattice["overlap"] / self.grid.lattice["d_tau"]
        self.assertGreaterEqual(overlap_rows, 4)

    def test_owned_nodes_partition_the_overlaps(self) -> None:
        grid, layout = self.grid, self.grid.layout
        owned = grid.owned()
        self.assertTrue(owned[grid.cap_origin(INNER)])
        self.assertTrue(owned[grid.cap_origin(OUTER)])
        middle = (grid.subgrid == CORE) & (grid.tau >= layout.tau_in) & (grid.tau <= layout.tau_out)
        self.assertTrue(np.all(owned[middle]))
        self.assertFalse(np.any(owned[(grid.subgrid == INNER) & (grid.tau > layout.tau_in)]))
        self.assertFalse(np.any(owned[(grid.subgrid == OUTER) & (grid.tau < layout.tau_out)]))

    def test_involution_symmetry(self) -> None:
        perm = involution_permutation(self.grid)
        np.testing.assert_array_equal(np.sort(perm), np.arange(self.grid.num_nodes))
        np.testing.assert_allclose(
            self.grid.weight[perm], self.grid.weight, rtol=1e-9, atol=1e-15 * self.grid.weight.max()
        )
        field = np.exp(-((self.grid.tau + np.log(self.params.R) - 0.7) ** 2)) * (
            1.5 + np.cos(self.grid.angle)
        )
        field[~np.isfinite(field)] = 0.0
        self.assertAlmostEqual(
            quadrature(self.grid, field[perm]) / quadrature(self.grid, field), 1.0, delta=1e-6
        )

    def test_fringe_interpolation(self) -> None:
        z = self.grid.complex_coordinate()
        with np.errstate(invalid="ignore"):
            values = np.where(np.isinf(z), 0.0, (z.real / (1.0 + np.abs(z) ** 2)))
        extended = self.grid.extend(values[self.grid.active_index])
        fringe = self.grid.fringe_index
        self.assertLess(np.max(np.abs(extended[fringe] - values[fringe])), 1e-4)

    def test_regions(self) -> None:
        annulus = self.grid.region("omega1") | self.grid.region("omega2")
        self.assertFalse(np.any(annulus & self.grid.region("off_neck")))
        self.assertTrue(np.all(self.grid.region("neck")[annulus]))
        self.assertTrue(np.all(annulus | self.grid.region("off_neck")))


def test_sphere_grid_area_is_pi():
    params = GluingParams(delta=0.2, R=20.0)
    for side in ("zero", "infinity"):
        grid = build_sphere_grid(params, side)
        assert quadrature(grid, np.ones(grid.num_nodes)) == pytest.approx(np.pi, rel=1e-5)


def test_quadrature_second_order():
    params = GluingParams(delta=0.3, R=10.0)
    coarse = build_grid(params, Resolution())
    fine = build_grid(params, Resolution().refine())
    exact = glued_area(params.R)
    err_coarse = abs(quadrature(coarse, np.ones(coarse.num_nodes)) - exact)
    err_fine = abs(quadrature(fine, np.ones(fine.num_nodes)) - exact)
    assert np.log2(err_coarse / err_fine) >= 1.8


def test_sphere_lattices_coincide_with_glued_lattice():
    params = GluingParams(delta=0.2, R=20.0)
    glued = build_grid(params)
    zero = build_sphere_grid(params, "zero")
    infinity = build_sphere_grid(params, "infinity")
    log_R2 = 2 * np.log(params.R)

    core = zero.active_index[zero.subgrid[zero.active_index] == CORE]
    stencil = glued.locate(zero.tau[core], zero.angle[core], prefer=zero.subgrid[core])
    assert np.all(stencil.exact)

    cap = infinity.active_index[infinity.subgrid[infinity.active_index] == INNER]
    stencil = glued.locate(infinity.tau[cap] - log_R2, infinity.angle[cap], prefer=infinity.subgrid[cap])
    assert np.all(stencil.exact & (stencil.subgrid == INNER))

    outer = zero.active_index[zero.subgrid[zero.active_index] == OUTER]
    stencil = glued.locate(zero.tau[outer], zero.angle[outer], prefer=zero.subgrid[outer])
    assert np.all(stencil.exact & (stencil.subgrid == OUTER))


def test_refinement_halves_spacing():
    params = GluingParams(delta=0.2, R=20.0)
    coarse = build_grid(params)
    fine = build_grid(params, coarse.resolution.refine())
    for key in ("d_tau", "d_phi", "h_cap"):
        assert fine.lattice[key] == pytest.approx(coarse.lattice[key] / 2, rel=1e-12)


def test_build_errors():
    with pytest.raises(InadmissibleParams):
        build_grid(GluingParams(delta=0.3, R=100.0, delta0=0.2))
    with pytest.raises(ResolutionTooCoarse):
        build_grid(GluingParams(delta=0.2, R=20.0), Resolution(d_tau=0.2))
    with pytest.raises(WrongDomain):
        build_sphere_grid(GluingParams(delta=0.2, R=20.0), "north")
    with pytest.raises(WrongDomain):
        involution_permutation(build_sphere_grid(GluingParams(delta=0.2, R=20.0), "zero"))


def test_quadrature_rejects_partial_fields():
    grid = build_patch_grid(1.0, 16)
    assert quadrature(grid, np.zeros(grid.num_nodes)) == 0.0
    assert quadrature(grid, np.ones(grid.num_nodes)) == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(MissingNodes):
        quadrature(grid, np.ones(10))
    field = np.ones(grid.num_nodes)
    field[3] = np.nan
    with pytest.raises(MissingNodes):
        quadrature(grid, field)


def test_patch_grid_has_no_log_polar_geometry():
    with pytest.raises(WrongDomain):
        build_patch_grid(1.0, 8).locate(np.zeros(1), np.zeros(1))
    assert build_patch_grid(1.0, 8).owned().all()
