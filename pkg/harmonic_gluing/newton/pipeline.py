from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import wandb

from ..cokernel import build_context, probe_contraction
from ..domain import GluingParams, build_grid
from ..errors import HypothesisViolation, InadmissibleParams
from ..norms import DEFAULT_P
from ..pregluing import MapPair, in_moduli
from ..report import ResultRecord, stage
from .constants import estimate_constants
from .solve import GluingResult, harmonicity_verdict, ift_solve

FLAT_TOLERANCE = 1e-8
CURVED_TOLERANCE = 1e-6


@dataclass
class GluingOptions:
    """Knobs of one gluing run.

    Arguments:
        p (float): Norm exponent, `1 < p < 2`.
        tolerance (Optional[float]): Residual tolerance; `1e-8` on flat targets and
            `1e-6` on curved ones when omitted.
        max_iter (int): Newton–Picard step limit.
        tail_tol (float): Tail tolerance of the true right inverse.
        tol_v (float): Harmonicity threshold on `‖ṽ‖`.
        probes (int): Random probes for the contraction factor and `c̃`.
        svd_atol (float): Absolute override of the null threshold; off at zero.
        svd_rtol (float): Null threshold as a fraction of `σ_max`.
        min_gram (float): Spanning threshold of the cokernel representatives.
        enforce_hypotheses (bool): Stop on a failed hypothesis instead of recording it.
        check_moduli (bool): Require the pair to pass `in_moduli`.
        seed (int): Seed of every random probe.
        quiet (bool): Suppress console output.
    """

    p: float = DEFAULT_P
    tolerance: Optional[float] = None
    max_iter: int = 50
    tail_tol: float = 1e-10
    tol_v: float = 1e-8
    probes: int = 5
    svd_atol: float = 0.0
    svd_rtol: float = 1e-6
    min_gram: float = 0.1
    enforce_hypotheses: bool = True
    check_moduli: bool = True
    seed: int = 0
    quiet: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def is_flat(f) -> bool:
    """Whether the Christoffel symbols vanish at every value of `f`."""
    point = f.active_point()
    return bool(np.all(f.model.christoffel(point.coords, point.charts) == 0.0))


def glue_pipeline(
    pair: MapPair,
    params: Optional[GluingParams] = None,
    options: Optional[GluingOptions] = None,
    record: Optional[ResultRecord] = None,
) -> GluingResult:
    """Glue a pair of harmonic maps into an extended harmonic map on the glued sphere.

    Stages: `validate`, `build_grid`, `preglue`, `perturbed_maps`, `assemble`,
    `cokernel`, `inverse`, `constants` and `solve`. A gluing error raised inside a stage
    carries the stage name, and each stage's wall-clock time goes to `record`.

    **Usage:**

    ```python
    from harmonic_gluing.domain import GluingParams
    from harmonic_gluing.manifold import FlatTorus
    from harmonic_gluing.newton import GluingOptions, glue_pipeline
    from harmonic_gluing.pregluing import make_pair

    params = GluingParams(delta=0.2, R=20.0)
    pair = make_pair("torus-spherical", FlatTorus(dimension=2), params)
    result = glue_pipeline(pair, params, GluingOptions(seed=1))
    print(result.verdict, result.residual, result.iterations)
    ```

    Args:
        pair (MapPair): The maps to glue.
        params (Optional[GluingParams]): Gluing parameters; must be the pair's.
        options (Optional[GluingOptions]): Run options.
        record (Optional[ResultRecord]): Receives values, checks and timings.

    Returns:
        (GluingResult): The glued map with its verdict.

    Raises:
        InadmissibleParams: Before any grid is built, if `(δ, R)` is not admissible.
        HypothesisViolation: If the pair is not in the moduli set, or an implicit
            function theorem hypothesis fails.
    """
    options = options or GluingOptions()
    params = pair.params if params is None else params
    with stage(record, "validate"):
        params.require_admissible()
        if params != pair.params:
            raise InadmissibleParams(
                f"The pair was built for (δ, R) = ({pair.params.delta:g}, {pair.params.R:g}), "
                f"not ({params.delta:g}, {params.R:g})"
            )
        if options.check_moduli:
            moduli = in_moduli(pair, p=options.p)
            if record is not None:
                record.add("in_moduli", **moduli["values"])
                for check in moduli["checks"]:
                    record.add_check(check)
            if not moduli["passed"]:
                raise HypothesisViolation(
                    f"The pair is not in the moduli set: {moduli['reason']} check failed",
                    context=moduli["values"],
                )
    with stage(record, "build_grid"):
        grid = build_grid(params, pair.zero.grid.resolution, quiet=options.quiet)
    context = build_context(
        pair,
        grid,
        p=options.p,
        svd_atol=options.svd_atol,
        svd_rtol=options.svd_rtol,
        min_gram=options.min_gram,
        record=record,
        quiet=options.quiet,
    )
    with stage(record, "constants"):
        ratios = probe_contraction(context, options.probes, options.seed, options.quiet)
        constants = estimate_constants(context, options.probes, seed=options.seed, quiet=options.quiet)
    tolerance = options.tolerance
    if tolerance is None:
        tolerance = FLAT_TOLERANCE if is_flat(context.f_R) else CURVED_TOLERANCE
    with stage(record, "solve"):
        result = ift_solve(
            context,
            constants,
            tolerance=tolerance,
            max_iter=options.max_iter,
            enforce_hypotheses=options.enforce_hypotheses,
            tail_tol=options.tail_tol,
            quiet=options.quiet,
        )
    result.verdict = harmonicity_verdict(result, options.tol_v)
    result.diagnostics["context"] = context.to_dict()
    result.diagnostics["contraction_ratios"] = ratios
    if record is not None:
        record.add("probe_contraction", q=constants.contraction)
        record.add("estimate_constants", **constants.to_dict())
        record.add(
            "ift_solve",
            residual=result.residual,
            iterations=result.iterations,
            extended_norm=result.extended_norm,
            v_norm=float(np.linalg.norm(result.coords)),
            refreshes=result.refreshes,
        )
        for check in result.checks:
            record.add_check(check)
        record.verdicts["harmonicity_verdict"] = result.verdict
    if not options.quiet:
        wandb.termlog(
            f"{result.verdict}: ‖ṽ‖ = {np.linalg.norm(result.coords):.3e}, residual "
            f"{result.residual:.3e}, {result.iterations} iterations"
        )
    return result
