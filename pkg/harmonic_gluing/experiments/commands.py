import os
from functools import partial
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import wandb

from ..cokernel import (
    apply_extended,
    build_context,
    cokernel_stability,
    contraction_report,
    operator_perturbation_sweep,
    true_inverse_Q,
)
from ..domain import GluingParams, Resolution, build_grid, build_sphere_grid, glued_area, quadrature
from ..errors import InsufficientPoints
from ..harmonic import (
    DiscreteMap,
    apply_D,
    assemble_D,
    conformal_cancellation,
    energy,
    linearization_consistency,
    tension,
)
from ..manifold import geometry_audit
from ..norms import (
    apriori_constant_estimate,
    embedding_constant_estimate,
    extended_norm,
    holder_embedding_fit,
    norm_breakdown,
    random_section,
    weighted_norm,
)
from ..newton import glue_pipeline, threshold_search, uniqueness_probe
from ..pregluing import CutoffProfile, cutoff_derivative_bounds, make_pair, preglue
from ..report import (
    InvariantCheck,
    ResultRecord,
    log_table,
    log_values,
    prepare_output_dir,
    row_columns,
    stage,
    write_record,
    write_table,
    write_triplets,
)
from ..utils import upload_run_directory
from .config import RunConfig
from .parallel import run_cells

MIN_SWEEP_POINTS = 4
ZERO_RESIDUAL = 1e-12
SLOPE_WINDOW = 0.15
CUTOFF_DELTAS = (1e-2, 1e-3, 1e-4)
CUTOFF_SPREAD = 0.2
AREA_RTOL = 1e-4
SPHERE_AREA_RTOL = 1e-5
QUADRATURE_ORDER = 1.8
HOLDER_SPREAD = 1e-3


def _label(params: GluingParams) -> str:
    return f"delta={params.delta:g},R={params.R:g}"


def _cell_row(params: GluingParams) -> Dict[str, float]:
    return {"delta": params.delta, "R": params.R, "neck": params.r}


def _check_columns(checks: Sequence[InvariantCheck]) -> Dict[str, list]:
    rows = [check.to_dict() for check in checks]
    names = ["name", "value", "bound", "comparison", "upper", "producer", "passed", "note"]
    return {name: ["" if row[name] is None else row[name] for row in rows] for name in names}


def _finish(
    config: RunConfig,
    record: ResultRecord,
    tables: Optional[Mapping[str, Mapping[str, Sequence]]] = None,
    quiet: bool = True,
) -> ResultRecord:
    """Write the record and tables to `config.out`, report failed checks and log to W&B."""
    out = prepare_output_dir(config.out)
    for name, columns in (tables or {}).items():
        write_table(os.path.join(out, name), columns)
        log_table(f"{record.command}/{os.path.splitext(name)[0]}", columns)
    write_record(out, record)
    log_values({f"{record.command}/{key}": value for key, value in record.values.items()})
    for check in record.checks:
        if not check.passed:
            wandb.termerror(check.line())
        elif not quiet:
            wandb.termlog(check.line())
    failed = sum(not check.passed for check in record.checks)
    if not quiet or failed:
        wandb.termlog(
            f"{record.command}: {len(record.checks) - failed}/{len(record.checks)} checks "
            f"passed, results in {out}"
        )
    if config.tracking.upload:
        upload_run_directory(f"{record.command}-{record.config_hash[:8]}", out)
    return record


# norm closed forms, shared by check and norms


def _norm_closed_form_checks(
    params: GluingParams, resolution: Resolution, record: ResultRecord
) -> List[InvariantCheck]:
    coarse = build_grid(params, resolution)
    fine = build_grid(params, coarse.resolution.refine())
    exact = glued_area(params.R)
    err_coarse = abs(quadrature(coarse, np.ones(coarse.num_nodes)) - exact)
    err_fine = abs(quadrature(fine, np.ones(fine.num_nodes)) - exact)
    order = np.log2(err_coarse / err_fine) if err_fine > 0 else np.inf
    record.add("quadrature", glued_area=exact, error=err_coarse, refined_error=err_fine, order=order)
    checks = [
        InvariantCheck("glued_area", err_coarse / exact, AREA_RTOL, producer="quadrature"),
        InvariantCheck("quadrature_order", order, QUADRATURE_ORDER, ">=", producer="quadrature"),
    ]
    for side in ("zero", "infinity"):
        grid = build_sphere_grid(params, side, resolution)
        area = quadrature(grid, np.ones(grid.num_nodes))
        checks.append(
            InvariantCheck(f"sphere_{side}_area", abs(area - np.pi) / np.pi, SPHERE_AREA_RTOL, producer="quadrature")
        )
    return checks


def _unit_section(f: DiscreteMap):
    values = np.zeros((f.num_active, f.dimension))
    values[:, 0] = 1.0
    return f.section(values / f.model.norm(f.active_point(), values)[:, None])


# check


def cmd_check(config: RunConfig, quiet: bool = True) -> ResultRecord:
    """Run the invariant suites: geometry, linearization, norms, cutoffs and energy.

    With `diagnostics.flip_christoffel_sign` the linearization is assembled over a model
    with negated Christoffel symbols while `F` keeps the true model, so the
    finite-difference checks must fail on any curved target.

    Returns:
        (ResultRecord): One check per invariant; the command fails if any check fails.
    """
    record = ResultRecord("check", config.hash())
    model = config.model()
    tol = config.tolerances
    with stage(record, "geometry"):
        for check in geometry_audit(model, seed=config.seed):
            record.add_check(check)
    params = config.sweep.cells()[0]
    with stage(record, "build_grid"):
        pair = config.build_pair(params, model)
    with stage(record, "linearization"):
        f = pair.zero
        linearized = None
        if config.diagnostics.flip_christoffel_sign:
            point = f.active_point()
            linearized = DiscreteMap(
                f.grid, model.flip_christoffel_sign(), point.coords, point.charts, f.ref_charts, "flipped"
            )
            wandb.termwarn("Assembling D over a target with flipped Christoffel symbols")
        report = linearization_consistency(
            f, probes=tol.probes, p=config.p, seed=config.seed, quiet=quiet, linearized=linearized
        )
        record.add("linearization_consistency", order=report["order"], errors=report["errors"])
        for check in report["checks"]:
            record.add_check(check)
    with stage(record, "norms"):
        for check in _norm_closed_form_checks(params, pair.zero.grid.resolution, record):
            record.add_check(check)
    with stage(record, "cutoffs"):
        bounds = [
            cutoff_derivative_bounds(GluingParams(delta, 1e6, delta0=0.5)) for delta in CUTOFF_DELTAS
        ]
        for key in ("first", "second"):
            values = np.array([b[key] for b in bounds])
            record.add("cutoff_derivative_bounds", **{key: values.tolist()})
            spread = float((values.max() - values.min()) / values.max())
            record.add_check(
                InvariantCheck(f"cutoff_{key}_derivative_spread", spread, CUTOFF_SPREAD, producer="cutoff_derivative_bounds")
            )
        profile = CutoffProfile()
        record.add_check(
            InvariantCheck("kappa_symmetry", profile.symmetry_defect(), 1e-12, producer="kappa")
        )
    with stage(record, "energy"):
        constant = DiscreteMap.constant(f.grid, model, pair.y)
        cancellation = conformal_cancellation(f)
        record.add("conformal_cancellation", **cancellation)
        record.add_check(InvariantCheck("constant_map_energy", abs(energy(constant)), 1e-14, producer="energy"))
        record.add_check(
            InvariantCheck(
                "conformal_cancellation", cancellation["relative_difference"], 1e-12, producer="energy"
            )
        )
        if pair.kind == "identity-sphere":
            error = abs(energy(f) - 4.0 * np.pi) / (4.0 * np.pi)
            record.add_check(InvariantCheck("identity_energy", error, 0.05, producer="energy"))
    if config.diagnostics.export_operator:
        write_triplets(os.path.join(prepare_output_dir(config.out), "operator.csv"), assemble_D(f))
    tables = {
        "table.csv": _check_columns(record.checks),
        "cutoff_profile.csv": profile.table(params),
    }
    return _finish(config, record, tables, quiet)


# residual scaling


def _residual_cell(config: RunConfig, params: GluingParams) -> Dict[str, float]:
    pair = config.build_pair(params)
    f_R = preglue(pair, build_grid(params, pair.zero.grid.resolution))
    row = _cell_row(params)
    row["residual"] = weighted_norm(tension(f_R), 0, config.p)
    row["reference"] = (params.r + 1.0) / params.r ** (2.0 / config.p)
    return row


def cmd_residual_scaling(config: RunConfig, quiet: bool = True) -> ResultRecord:
    """Tabulate `‖F_{f^R}(0)‖_{0,p,R}` over the sweep and fit its log-log slope in `δR`.

    The fitted slope is compared with `1 − 2/p`. The fit is skipped, with a warning, when
    every residual vanishes, as for constant pairs.

    Raises:
        InsufficientPoints: With fewer than four sweep cells.
    """
    cells = config.sweep.cells()
    if len(cells) < MIN_SWEEP_POINTS:
        raise InsufficientPoints(
            f"Residual scaling needs at least {MIN_SWEEP_POINTS} sweep points, got {len(cells)}"
        )
    record = ResultRecord("residual-scaling", config.hash())
    with stage(record, "sweep"):
        rows = run_cells(partial(_residual_cell, config), cells, config.jobs, "Residual sweep", quiet)
    necks = np.array([row["neck"] for row in rows])
    residuals = np.array([row["residual"] for row in rows])
    expected = 1.0 - 2.0 / config.p
    record.add("residual_scaling", expected_slope=expected, max_residual=float(residuals.max()))
    if residuals.max() <= ZERO_RESIDUAL:
        wandb.termwarn(f"Every residual is below {ZERO_RESIDUAL:g}; the slope fit is skipped")
        record.diagnostics["fit"] = "skipped"
        record.add_check(
            InvariantCheck("residual_vanishes", float(residuals.max()), ZERO_RESIDUAL, producer="residual_scaling")
        )
    else:
        positive = residuals > 0
        if positive.sum() < MIN_SWEEP_POINTS:
            raise InsufficientPoints(
                f"Only {int(positive.sum())} sweep points have a positive residual, need {MIN_SWEEP_POINTS}"
            )
        slope, intercept = np.polyfit(np.log(necks[positive]), np.log(residuals[positive]), 1)
        record.add("residual_scaling", slope=float(slope), intercept=float(intercept))
        record.diagnostics["fit"] = "log-log"
        record.add_check(
            InvariantCheck(
                "residual_slope",
                float(slope),
                expected - SLOPE_WINDOW,
                "in",
                producer="residual_scaling",
                upper=expected + SLOPE_WINDOW,
            )
        )
        if not quiet:
            wandb.termlog(f"Residual slope {slope:.3f} against 1 − 2/p = {expected:.3f}")
    return _finish(config, record, {"table.csv": row_columns(rows)}, quiet)


# contraction


def _pair_at(config: RunConfig, params: GluingParams, resolution: Resolution):
    return make_pair(config.pair.kind, config.model(), params, resolution, **config.pair.options)


def _right_inverse_checks(context, config: RunConfig, t_norm: float) -> Tuple[Dict, List]:
    tol = config.tolerances
    rng = np.random.default_rng(config.seed)
    ratios, defect = [], 0.0
    for _ in range(max(1, min(tol.probes, 5))):
        eta = random_section(context.f_R, rng)
        x = true_inverse_Q(eta, context, tol.tail_tol)
        sup = float(eta.pointwise_norm().max())
        defect = max(defect, float((apply_extended(context, x) - eta).pointwise_norm().max()) / sup)
        ratios.append(extended_norm(x, context.p) / weighted_norm(eta, 0, context.p))
    values = {"right_inverse_defect": defect, "q_norm": float(max(ratios))}
    checks = [InvariantCheck("right_inverse_defect", defect, tol.tail_tol, producer="true_inverse_Q")]
    if context.contraction <= 0.5:
        # the probes repeat the first right-hand sides of the contraction report
        checks.append(
            InvariantCheck("right_inverse_norm", values["q_norm"], 2.0 * t_norm, producer="true_inverse_Q")
        )
    return values, checks


def _contraction_cell(config: RunConfig, params: GluingParams):
    tol = config.tolerances
    pair = config.build_pair(params)
    context = build_context(
        pair, p=config.p, svd_atol=tol.svd_atol, svd_rtol=tol.svd_rtol, min_gram=tol.min_gram
    )
    report = contraction_report(context, probes=tol.probes, seed=config.seed)
    row = _cell_row(params)
    row.update({key: report[key] for key in ("max_ratio", "omega1", "omega2", "off_neck", "t_norm")})
    row["k"] = context.k
    row["regime"] = "contracting" if report["max_ratio"] <= 0.5 else "no-contraction"
    checks = list(report["checks"])
    if report["max_ratio"] < 1.0:
        values, extra = _right_inverse_checks(context, config, report["t_norm"])
        row.update(values)
        checks.extend(extra)
    if config.diagnostics.operator_gap:
        gap = operator_perturbation_sweep([pair], probes=min(tol.probes, 5), p=config.p, seed=config.seed)[0]
        row["operator_gap"] = gap["operator_gap"]
        row["perturbation_size"] = gap["perturbation_size"]
    return row, checks


def cmd_contraction(config: RunConfig, quiet: bool = True) -> ResultRecord:
    """Probe the approximate inverse `T` over the sweep, with a per-region breakdown.

    Every cell reports the maximum defect ratio over `tolerances.probes` seeded random
    right-hand sides, the `Ω₁`, `Ω₂` and off-neck ratios and the fitted `‖T‖`. The
    contraction checks are enforced at the smallest swept `δ`; larger `δ` that do not
    contract are flagged as such in the table.
    """
    record = ResultRecord("contraction", config.hash())
    cells = config.sweep.cells()
    with stage(record, "sweep"):
        results = run_cells(partial(_contraction_cell, config), cells, config.jobs, "Contraction sweep", quiet)
    smallest = min(params.delta for params in cells)
    rows = []
    for params, (row, checks) in zip(cells, results):
        label = _label(params)
        rows.append(row)
        record.add(f"contraction_report[{label}]", **{k: v for k, v in row.items() if k not in ("delta", "R")})
        if params.delta == smallest:
            for check in checks:
                check.note = label
                record.add_check(check)
        elif row["regime"] != "contracting":
            wandb.termwarn(f"{label}: ratio {row['max_ratio']:.3f} exceeds 1/2, outside the contraction regime")
    if config.diagnostics.cokernel_stability:
        params = min(cells, key=lambda cell: (cell.delta, -cell.r))
        with stage(record, "cokernel_stability"):
            stability = cokernel_stability(
                partial(_pair_at, config, params),
                config.resolution(),
                config.tolerances.svd_atol,
                config.tolerances.svd_rtol,
            )
        record.add("cokernel_stability", kernel=stability["kernel"], cokernel=stability["cokernel"])
        record.add_check(
            InvariantCheck("cokernel_stable", float(stability["stable"]), 1.0, ">=", producer="cokernel_stability")
        )
    return _finish(config, record, {"table.csv": row_columns(rows)}, quiet)


# glue


def _glue_cell(config: RunConfig, cell_dir: str, params: GluingParams):
    record = ResultRecord("glue", config.hash())
    with stage(record, "build_grid"):
        pair = config.build_pair(params)
    result = glue_pipeline(pair, params, config.gluing_options(), record)
    constants = result.constants
    if config.diagnostics.uniqueness_probe:
        with stage(record, "uniqueness_probe"):
            record.add("uniqueness_probe", **uniqueness_probe(result.context, constants, result, seed=config.seed))
    record.diagnostics["result"] = result.to_dict()
    prepare_output_dir(cell_dir)
    write_table(os.path.join(cell_dir, "trace.csv"), result.trace_columns())
    write_table(os.path.join(cell_dir, "map_nodes.csv"), result.node_table())
    row = _cell_row(params)
    row.update(
        {
            "k": result.context.k,
            "verdict": result.verdict,
            "v_norm": float(np.linalg.norm(result.coords)),
            "residual": result.residual,
            "iterations": result.iterations,
            "extended_norm": result.extended_norm,
            "initial_residual": constants.residual,
            "residual_threshold": constants.residual_threshold,
            "hypothesis_passed": bool(constants.residual < constants.residual_threshold),
        }
    )
    return row, record


def _monotone_smallness(rows: Sequence[Dict[str, object]]) -> Optional[InvariantCheck]:
    increase, compared = 0.0, False
    for delta in sorted({row["delta"] for row in rows}):
        norms = [row["extended_norm"] for row in sorted(rows, key=lambda row: row["neck"]) if row["delta"] == delta]
        if len(norms) > 1:
            compared = True
            increase = max(increase, float(np.max(np.diff(norms))))
    if not compared:
        return None
    return InvariantCheck("monotone_smallness", increase, 0.0, producer="ift_solve")


def cmd_glue(config: RunConfig, quiet: bool = True) -> ResultRecord:
    """Glue the configured pair at every sweep cell and write the results.

    A single cell writes `result.json`, `trace.csv`, `map_nodes.csv` and `table.csv`
    into the output directory. A sweep writes the per-cell files into `cell-XX/`
    subdirectories and adds the empirical `δR` threshold of the small-residual
    hypothesis and the monotone smallness of `‖(ξ, ṽ)‖` along `δR`.
    """
    cells = config.sweep.cells()
    single = len(cells) == 1
    out = prepare_output_dir(config.out)
    cell_dirs = [out if single else os.path.join(out, f"cell-{i:02d}") for i in range(len(cells))]
    jobs = [(cell_dir, params) for cell_dir, params in zip(cell_dirs, cells)]
    outputs = run_cells(partial(_star_glue, config), jobs, config.jobs, "Gluing sweep", quiet)
    rows = [row for row, _ in outputs]
    for row in rows:
        if not quiet:
            wandb.termlog(
                f"δ={row['delta']:g}, R={row['R']:g}: {row['verdict']}, ‖ṽ‖ = {row['v_norm']:.3e}, "
                f"residual {row['residual']:.3e}, {row['iterations']} iterations"
            )
    if single:
        record = outputs[0][1]
    else:
        record = ResultRecord("glue", config.hash())
        for (cell_dir, params), (_, cell_record) in zip(jobs, outputs):
            label = _label(params)
            write_record(cell_dir, cell_record)
            record.values.update({f"{label}/{key}": value for key, value in cell_record.values.items()})
            record.verdicts[f"{label}/harmonicity_verdict"] = cell_record.verdicts["harmonicity_verdict"]
            for stage_name, seconds in cell_record.timings.items():
                record.timings[f"{label}/{stage_name}"] = seconds
            for check in cell_record.checks:
                check.note = label
                record.add_check(check)
        threshold = threshold_search(rows)
        record.diagnostics["empirical_threshold"] = threshold
        if threshold is None:
            wandb.termwarn("The small-residual hypothesis fails at the largest swept δR")
        monotone = _monotone_smallness(rows)
        if monotone is not None:
            record.add_check(monotone)
    return _finish(config, record, {"table.csv": row_columns(rows)}, quiet)


def _star_glue(config: RunConfig, job):
    return _glue_cell(config, *job)


# norms


def cmd_norms(config: RunConfig, quiet: bool = True) -> ResultRecord:
    """Norm closed forms, embedding constants, the Hölder fit and the a-priori constant.

    Writes the norm record (`result.json`), one row per quantity in `table.csv` and the
    glued grid nodes in `grid_nodes.csv`.
    """
    record = ResultRecord("norms", config.hash())
    diag = config.diagnostics
    p = config.p
    params = config.sweep.cells()[0]
    with stage(record, "build_grid"):
        pair = config.build_pair(params)
        grid = build_grid(params, pair.zero.grid.resolution)
    with stage(record, "preglue"):
        f_R = preglue(pair, grid)
    with stage(record, "closed_forms"):
        for check in _norm_closed_form_checks(params, pair.zero.grid.resolution, record):
            record.add_check(check)
        unit = weighted_norm(_unit_section(f_R), 0, p) ** p
        record.add("weighted_norm", unit_power=unit)
        record.add_check(
            InvariantCheck("unit_norm", abs(unit - glued_area(params.R)) / glued_area(params.R), AREA_RTOL, producer="weighted_norm")
        )
        breakdown = norm_breakdown(random_section(f_R, np.random.default_rng(config.seed)), 2, p)
        record.add("norm_breakdown", **breakdown)
    with stage(record, "embedding"):
        embedding = embedding_constant_estimate(f_R, p, diag.embedding_probes, config.seed, quiet)
        record.add("embedding_constant_estimate", **embedding)
        holder = holder_embedding_fit(p, probes=diag.embedding_probes, seed=config.seed)
        record.add("holder_embedding_fit", **holder)
        record.add_check(
            InvariantCheck("holder_scale_invariance", holder["spread"], HOLDER_SPREAD, producer="holder_embedding_fit")
        )
        matrix = assemble_D(pair.zero)
        apriori = apriori_constant_estimate(
            pair.zero, lambda xi: apply_D(pair.zero, xi, matrix), p, diag.embedding_probes, config.seed
        )
        record.add("apriori_constant_estimate", **apriori)
    scalars = {
        key: value
        for key, value in record.values.items()
        if isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool)
    }
    tables = {
        "table.csv": {"quantity": list(scalars), "value": list(scalars.values())},
        "grid_nodes.csv": grid.node_table(),
    }
    return _finish(config, record, tables, quiet)


COMMANDS = {
    "check": cmd_check,
    "residual-scaling": cmd_residual_scaling,
    "contraction": cmd_contraction,
    "glue": cmd_glue,
    "norms": cmd_norms,
}
