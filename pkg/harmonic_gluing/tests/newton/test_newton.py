import unittest
from types import SimpleNamespace

import numpy as np
import pytest

from harmonic_gluing.cokernel import build_context, monolithic_solve
from harmonic_gluing.domain import GluingParams, Resolution, build_grid
from harmonic_gluing.errors import HypothesisViolation, InadmissibleParams, ResolutionTooCoarse
from harmonic_gluing.harmonic import tension
from harmonic_gluing.manifold import FlatTorus, RoundSphere
from harmonic_gluing.newton import (
    EXTENDED,
    HARMONIC,
    GluingOptions,
    IFTConstants,
    extended_residual,
    glue_pipeline,
    harmonicity_verdict,
    ift_solve,
    threshold_search,
)
from harmonic_gluing.norms import weighted_norm
from harmonic_gluing.pregluing import make_pair, preglue
from harmonic_gluing.report import ResultRecord


def _constants(residual=0.0, contraction=0.1, lipschitz=0.0):
    return IFTConstants(
        c_tilde=2.0,
        epsilon=0.25,
        lipschitz=lipschitz,
        residual=residual,
        cap=0.25,
        contraction=contraction,
        affine=lipschitz == 0.0,
    )


class ConstantPairFixedPointTestCase(unittest.TestCase):
    def __init__(self, methodName: str = "runTest") -> None:
        super().__init__(methodName)
        pair = make_pair("constant", FlatTorus(dimension=2), GluingParams(delta=0.2, R=20.0))
        self.context = build_context(pair)

    def test_zero_is_a_fixed_point(self) -> None:
        result = ift_solve(self.context, _constants())
        self.assertEqual(result.iterations, 0)
        self.assertEqual(result.residual, 0.0)
        self.assertTrue(np.all(result.x.flat() == 0.0))
        self.assertTrue(np.all(result.glued.same_values(self.context.f_R)))
        self.assertEqual(harmonicity_verdict(result), HARMONIC)
        self.assertTrue(all(check.passed for check in result.checks))

    def test_extended_residual_of_zero(self) -> None:
        residual = extended_residual(self.context, self.context.zeros())
        self.assertTrue(np.all(residual.values == 0.0))

    def test_failed_hypothesis_is_named(self) -> None:
        with self.assertRaises(HypothesisViolation) as info:
            ift_solve(self.context, _constants(residual=1.0))
        self.assertIn("initial_residual", info.exception.message)

    def test_hypotheses_can_be_recorded_instead(self) -> None:
        result = ift_solve(self.context, _constants(contraction=1.5), enforce_hypotheses=False)
        failed = [check.name for check in result.checks if not check.passed]
        self.assertEqual(failed, ["right_inverse_contraction"])

    def test_result_tables(self) -> None:
        result = ift_solve(self.context, _constants())
        columns = result.trace_columns()
        self.assertEqual(columns["iteration"], [0])
        self.assertEqual(columns["im_q_defect"], [0.0])
        table = result.node_table()
        self.assertIn("xi0", table)
        self.assertEqual(len(table["xi0"]), self.context.grid.num_nodes)


def test_constant_pair_pipeline():
    pair = make_pair("constant", FlatTorus(dimension=2), GluingParams(delta=0.1, R=80.0))
    record = ResultRecord("glue", "hash")
    result = glue_pipeline(pair, options=GluingOptions(probes=2), record=record)
    assert result.verdict == HARMONIC
    assert result.iterations == 0
    assert np.all(result.glued.same_values(result.context.f_R))
    assert record.verdicts["harmonicity_verdict"] == HARMONIC
    assert {"validate", "build_grid", "preglue", "cokernel", "constants", "solve"} <= set(record.timings)


def test_inadmissible_parameters_fail_first():
    pair = make_pair("constant", FlatTorus(dimension=2), GluingParams(delta=0.2, R=20.0))
    record = ResultRecord("glue", "hash")
    with pytest.raises(InadmissibleParams) as info:
        glue_pipeline(pair, GluingParams(delta=0.6, R=20.0), record=record)
    assert info.value.stage == "validate"
    assert "preglue" not in record.timings


def test_coarse_resolution_is_rejected():
    with pytest.raises(ResolutionTooCoarse):
        make_pair("constant", FlatTorus(dimension=2), GluingParams(delta=0.2, R=20.0), Resolution(d_tau=0.5))


def test_flat_torus_matches_monolithic_solve():
    params = GluingParams(delta=0.1, R=80.0)
    pair = make_pair("torus-spherical", FlatTorus(dimension=2), params)
    result = glue_pipeline(pair, params, GluingOptions(probes=2, enforce_hypotheses=False))
    assert result.iterations == 1
    assert result.residual <= 1e-8
    context = result.context
    rhs = extended_residual(context, context.zeros()) * -1.0
    direct, kernel = monolithic_solve(rhs, context)
    newton = kernel.project_out(result.x)
    scale = np.abs(direct.flat()).max()
    np.testing.assert_allclose(newton, direct.flat(), rtol=0, atol=1e-8 * scale)


@pytest.fixture(scope="module")
def sphere_sweep():
    """Identity glued to identity on the round sphere at δ = 0.1 and δR = 8, 16, 32."""
    results = []
    for R in (80.0, 160.0, 320.0):
        params = GluingParams(delta=0.1, R=R)
        pair = make_pair("identity-sphere", RoundSphere(), params)
        results.append(glue_pipeline(pair, params, GluingOptions(p=1.5, probes=2, enforce_hypotheses=False)))
    return results


def test_sphere_gluing_converges_monotonically(sphere_sweep):
    for result in sphere_sweep:
        residuals = result.trace_columns()["residual"]
        assert np.all(np.diff(residuals) <= 0.0), residuals
        assert result.residual <= 1e-6
        checks = {check.name: check for check in result.checks}
        assert checks["monotone_residual"].passed
        assert checks["final_residual"].passed


def test_sphere_gluing_stays_in_the_image_of_q(sphere_sweep):
    for result in sphere_sweep:
        defects = result.trace_columns()["im_q_defect"]
        assert defects[0] == 0.0
        assert max(defects) <= 1e-8
        assert {check.name: check for check in result.checks}["im_q_confinement"].passed


def test_sphere_correction_shrinks_with_the_neck(sphere_sweep):
    norms = [result.extended_norm for result in sphere_sweep]
    assert all(later <= earlier * (1.0 + 1e-9) for earlier, later in zip(norms, norms[1:])), norms


def test_initial_residual_decays_like_the_neck():
    # ‖F(0)‖_{0,p,R} ≲ (δR + 1)/(δR)^{2/p}, slope 1 − 2/p = −0.5 at p = 4/3
    p = 4.0 / 3.0
    necks = np.array([8.0, 16.0, 32.0, 64.0])
    residuals = []
    for neck in necks:
        params = GluingParams(delta=0.1, R=10.0 * neck)
        pair = make_pair("identity-sphere", RoundSphere(), params)
        f_R = preglue(pair, build_grid(params, pair.zero.grid.resolution))
        residuals.append(weighted_norm(tension(f_R), 0, p))
    slope, _ = np.polyfit(np.log(necks), np.log(residuals), 1)
    assert slope == pytest.approx(-0.5, abs=0.15)
    assert np.all(np.diff(residuals) < 0.0), residuals


def test_verdicts():
    assert harmonicity_verdict(SimpleNamespace(coords=np.zeros(0))) == HARMONIC
    assert harmonicity_verdict(SimpleNamespace(coords=np.full(3, 1e-12)), tol_v=1e-8) == HARMONIC
    assert harmonicity_verdict(SimpleNamespace(coords=np.array([0.1, 0.0]))) == EXTENDED


def test_threshold_search():
    rows = [
        {"neck": 4.0, "hypothesis_passed": False},
        {"neck": 8.0, "hypothesis_passed": True},
        {"neck": 16.0, "hypothesis_passed": True},
        {"neck": 32.0, "hypothesis_passed": True},
    ]
    assert threshold_search(rows) == 8.0
    rows[-1]["hypothesis_passed"] = False
    assert threshold_search(rows) is None


def test_hypotheses_thresholds():
    constants = _constants(residual=0.01)
    assert constants.residual_threshold == pytest.approx(0.25 / 8.0)
    assert constants.step_threshold == pytest.approx(0.25 / 8.0)
    assert [check.name for check in constants.hypotheses()] == [
        "right_inverse_contraction",
        "lipschitz_ball",
        "initial_residual",
    ]
    assert all(check.passed for check in constants.hypotheses())
