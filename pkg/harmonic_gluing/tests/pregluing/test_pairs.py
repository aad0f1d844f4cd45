import unittest

import numpy as np

from harmonic_gluing.domain import GluingParams
from harmonic_gluing.manifold import FlatTorus, RoundSphere
from harmonic_gluing.pregluing import in_moduli, make_pair


class IdentityModuliTestCase(unittest.TestCase):
    def __init__(self, methodName: str = "runTest") -> None:
        super().__init__(methodName)
        self.pair = make_pair("identity-sphere", RoundSphere(), GluingParams(delta=0.2, R=20.0))
        self.moduli = in_moduli(self.pair)

    def test_identity_pair_in_moduli_with_default_bound(self) -> None:
        self.assertTrue(self.moduli["passed"], self.moduli["checks"])
        self.assertEqual(self.moduli["reason"], "")

    def test_identity_is_totally_geodesic(self) -> None:
        # |df| = 2√2 from the radius-½ domain onto the unit sphere, ∇df = 0
        values = self.moduli["values"]
        for label in ("f0", "finf"):
            self.assertAlmostEqual(values[f"{label}_df_sup"], 2.0 * np.sqrt(2.0), delta=0.05)
            self.assertLess(values[f"{label}_d2f_sup"], values[f"{label}_df_sup"])

    def test_coordinate_second_differences_are_not_the_hessian(self) -> None:
        f = self.pair.zero
        owned = f.grid.owned()[f.grid.active_index]
        local = f.local
        weights = np.array([1.0, 1.0, 2.0])
        raw = np.sqrt(np.einsum("a,mai,mij,maj->m", weights, local.d2f, local.metric, local.d2f)) / local.lam**2
        self.assertGreater(float(raw[owned].max()), self.pair.bound)
        self.assertLess(float(f.differential_norms()[1][owned].max()), self.pair.bound)


def test_constant_pair_has_zero_bounds():
    moduli = in_moduli(make_pair("constant", FlatTorus(dimension=2), GluingParams(delta=0.2, R=20.0)))
    assert moduli["passed"]
    assert moduli["values"]["f0_df_sup"] == 0.0
    assert moduli["values"]["f0_d2f_sup"] == 0.0
    assert moduli["values"]["finf_d2f_sup"] == 0.0


def test_torus_spherical_hessian_bound():
    # f = y + a·2ζ/(1+|ζ|²) has |∇df| ≤ 4√2 a on the radius-½ sphere
    pair = make_pair("torus-spherical", FlatTorus(dimension=2), GluingParams(delta=0.2, R=20.0))
    moduli = in_moduli(pair)
    assert moduli["passed"]
    assert moduli["values"]["f0_d2f_sup"] < 1.0
    assert moduli["values"]["finf_d2f_sup"] < 1.0


def test_in_moduli_reports_the_bound():
    pair = make_pair("identity-sphere", RoundSphere(), GluingParams(delta=0.2, R=20.0))
    moduli = in_moduli(pair, c=1.0)
    assert not moduli["passed"]
    assert moduli["reason"] == "bound"


def test_torus_harmonic_pair_is_strictly_harmonic():
    model = FlatTorus(dimension=2, periods=[1.0, 2.0])
    pair = make_pair("torus-harmonic", model, GluingParams(delta=0.2, R=20.0))
    assert pair.kind == "torus-harmonic"
    assert pair.exact_harmonic
    np.testing.assert_allclose(pair.y.coords[0], [0.5, 1.0])
    moduli = in_moduli(pair, tol=1e-12)
    assert moduli["passed"]
    assert all(check.note == "" for check in moduli["checks"] if check.producer == "tension")
