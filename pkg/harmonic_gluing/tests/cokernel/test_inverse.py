import numpy as np
import pytest

from harmonic_gluing.cokernel import (
    apply_extended,
    approx_inverse_T,
    build_context,
    contraction_report,
    monolithic_solve,
    probe_contraction,
    solve_Q0infr,
    true_inverse_Q,
)
from harmonic_gluing.domain import GluingParams
from harmonic_gluing.errors import GluingError
from harmonic_gluing.manifold import FlatTorus
from harmonic_gluing.norms import random_section
from harmonic_gluing.pregluing import make_pair, split_eta
from harmonic_gluing.report import ResultRecord


@pytest.fixture(scope="module")
def context():
    pair = make_pair("constant", FlatTorus(dimension=2), GluingParams(delta=0.1, R=80.0))
    return build_context(pair)


def _sup(section):
    return float(section.pointwise_norm().max())


def test_zero_right_hand_side(context):
    x = approx_inverse_T(context.f_R.zero_section(), context)
    assert np.all(x.section.values == 0.0)
    assert np.all(x.coords == 0.0)
    assert x.coords.shape == (context.k,)


def test_paired_solve_meets_its_contract(context):
    eta = random_section(context.f_R, np.random.default_rng(4))
    eta0, eta_inf = split_eta(eta, context.f0r, context.finfr)
    xi0, xi_inf, coords = solve_Q0infr(eta0, eta_inf, context.solver)
    assert context.solver.last_residual <= 1e-10
    assert context.solver.system.matching_defect(xi0, xi_inf) <= 1e-12
    scale = np.linalg.norm(context.solver.system.reduce(xi0, xi_inf))
    assert context.solver.last_kernel_inner <= 1e-9 * max(scale, 1.0)
    assert coords.shape == (context.k,)


def test_defect_vanishes_off_the_neck(context):
    outside = context.grid.region("off_neck")[context.grid.active_index]
    rng = np.random.default_rng(11)
    for _ in range(3):
        eta = random_section(context.f_R, rng)
        defect = apply_extended(context, approx_inverse_T(eta, context)) - eta
        assert defect.pointwise_norm()[outside].max() <= 1e-9 * _sup(eta)


def test_contraction_report_structure(context):
    report = contraction_report(context, probes=3, seed=5)
    assert len(report["ratios"]) == 3
    assert report["max_ratio"] == max(report["ratios"])
    assert report["off_neck"] <= 1e-9
    assert report["t_norm"] > 0.0
    assert [check.name for check in report["checks"]] == [
        "approx_inverse_contraction",
        "omega1_contraction",
        "omega2_contraction",
        "off_neck_residual",
    ]


def test_contraction_probe_is_seeded(context):
    assert probe_contraction(context, probes=2, seed=9) == probe_contraction(context, probes=2, seed=9)


def test_true_inverse_is_a_right_inverse(context):
    probe_contraction(context, probes=3, seed=1)
    assert context.contraction < 1.0
    eta = random_section(context.f_R, np.random.default_rng(21))
    trace = []
    x = true_inverse_Q(eta, context, tail_tol=1e-10, trace=trace)
    defect = apply_extended(context, x) - eta
    # the series stops at 1e-10 or where rounding in (D ⊕ σ)x takes over
    reached = max(1e-10, trace[-1]["floor"])
    assert trace[0]["step"] == 0
    assert trace[-1]["residual"] <= reached
    assert _sup(defect) <= 1.01 * reached * _sup(eta)


def test_true_inverse_of_zero(context):
    probe_contraction(context, probes=3, seed=1)
    x = true_inverse_Q(context.f_R.zero_section(), context)
    assert np.all(x.flat() == 0.0)


def test_monolithic_solve_hits_the_right_hand_side(context):
    eta = random_section(context.f_R, np.random.default_rng(8))
    x, kernel = monolithic_solve(eta, context)
    defect = apply_extended(context, x) - eta
    assert _sup(defect) <= 1e-8 * _sup(eta)
    assert kernel.vectors.shape[1] == context.k
    np.testing.assert_allclose(kernel.project_out(x), x.flat(), atol=1e-8 * np.abs(x.flat()).max())


def test_glued_representatives_vanish_near_the_circle(context):
    near = context.grid.region("neck")[context.grid.active_index]
    columns = context.sigma_columns.reshape(context.f_R.num_active, 2, context.k)
    assert np.all(columns[near] == 0.0)
    assert context.sigma_glued(np.zeros(context.k)).values.shape == (context.f_R.num_active, 2)


def test_stage_errors_are_annotated():
    pair = make_pair("constant", FlatTorus(dimension=2), GluingParams(delta=0.2, R=20.0))
    record = ResultRecord("test", "hash")
    with pytest.raises(GluingError) as info:
        build_context(pair, min_gram=2.0, record=record)
    assert info.value.stage == "cokernel"
    assert info.value.message.startswith("[cokernel]")
    assert "preglue" in record.timings
