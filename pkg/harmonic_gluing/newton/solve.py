from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import wandb
from scipy.sparse.linalg import LinearOperator, gmres
from tqdm.auto import tqdm

from ..cokernel import GluingContext, apply_extended, true_inverse_Q
from ..errors import HypothesisViolation, NoConvergence
from ..harmonic import DiscreteMap, ExtendedVector, Section, dF_at, operator_F
from ..norms import extended_norm, random_section, weighted_norm
from ..report import InvariantCheck, log_values
from .constants import IFTConstants

HARMONIC = "Harmonic"
EXTENDED = "Extended"
STALL_STEPS = 3
IM_Q_TOL = 1e-8


@dataclass
class GluingResult:
    """Outcome of the Newton–Picard iteration at `f^R`.

    Arguments:
        glued (DiscreteMap): `exp_{f^R}(ξ)`.
        x (ExtendedVector): The solution `(ξ, ṽ)`.
        constants (IFTConstants): Constants the iteration was run under.
        trace (list): One row per iterate with `residual`, `step_norm`, `distance` from
            the start, `im_q_defect` of `x − x₁`, `norm` and `refreshed`.
        converged (bool): Whether the residual reached the tolerance.
        tolerance (float): Residual tolerance.
        checks (list): Invariant checks recorded by the solve.
        refreshes (int): Number of times the linearization was refreshed.
    """

    glued: DiscreteMap
    x: ExtendedVector
    constants: IFTConstants
    trace: List[Dict[str, float]]
    converged: bool
    tolerance: float
    checks: List[InvariantCheck] = field(default_factory=list)
    refreshes: int = 0
    verdict: str = ""
    diagnostics: Dict[str, object] = field(default_factory=dict)
    context: Optional[GluingContext] = field(default=None, repr=False)

    @property
    def coords(self) -> np.ndarray:
        return self.x.coords

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1

    @property
    def residual(self) -> float:
        return self.trace[-1]["residual"]

    @property
    def extended_norm(self) -> float:
        return self.trace[-1]["norm"]

    def trace_columns(self) -> Dict[str, list]:
        names = list(self.trace[0])
        return {name: [row[name] for row in self.trace] for name in names}

    def node_table(self) -> Dict[str, np.ndarray]:
        table = self.glued.node_table()
        values = np.zeros((self.glued.grid.num_nodes, self.glued.dimension))
        values[self.glued.grid.active_index] = self.x.section.values
        for i in range(self.glued.dimension):
            table[f"xi{i}"] = values[:, i]
        return table

    def to_dict(self) -> Dict[str, object]:
        return {
            "verdict": self.verdict,
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "extended_norm": self.extended_norm,
            "v_norm": float(np.linalg.norm(self.coords)),
            "v": self.coords.tolist(),
            "refreshes": self.refreshes,
            "constants": self.constants.to_dict(),
            "checks": [check.to_dict() for check in self.checks],
            **self.diagnostics,
        }


def extended_residual(context: GluingContext, x: ExtendedVector) -> Section:
    """`F_{f^R}(ξ) + σ(ṽ)`."""
    return operator_F(context.f_R, x.section) + context.sigma_glued(x.coords)


class _RefreshedStep:
    """Newton steps `Q y` with `y` solving `J Q y = r` for a fresh Jacobian `J` at `ξ`."""

    def __init__(self, context: GluingContext, x: ExtendedVector, tail_tol: float) -> None:
        self.context = context
        self.tail_tol = tail_tol
        f_R = context.f_R
        jacobian = dF_at(f_R, x.section)

        def matvec(y):
            q = true_inverse_Q(Section.from_flat(f_R, y), context, tail_tol)
            out = jacobian.matvec(q.section.flat())
            if context.k:
                out = out + context.sigma_columns @ q.coords
            return out

        size = f_R.num_active * f_R.dimension
        self.operator = LinearOperator((size, size), matvec=matvec, dtype=float)

    def __call__(self, residual: Section) -> ExtendedVector:
        y, info = gmres(self.operator, residual.flat(), rtol=1e-10, atol=0.0, restart=30, maxiter=20)
        if info < 0:
            raise NoConvergence(f"GMRES failed on the refreshed linearization (info {info})")
        return true_inverse_Q(Section.from_flat(self.context.f_R, y), self.context, self.tail_tol)


def _require_hypotheses(constants: IFTConstants) -> None:
    failed = [check for check in constants.hypotheses() if not check.passed]
    if failed:
        detail = "; ".join(f"{check.name}: {check.value:.4e} vs {check.bound:.4e}" for check in failed)
        raise HypothesisViolation(
            f"Implicit function theorem hypotheses fail ({detail})",
            context={"failed": [check.to_dict() for check in failed]},
        )


def im_q_defect(context: GluingContext, d: ExtendedVector, tail_tol: float = 1e-10) -> float:
    """`‖d − Q(D ⊕ σ)d‖ / ‖d‖` in the extended norm; `0` for `d = 0`."""
    size = extended_norm(d, context.p)
    if size == 0.0:
        return 0.0
    back = true_inverse_Q(apply_extended(context, d), context, tail_tol)
    return extended_norm(d - back, context.p) / size


def ift_solve(
    context: GluingContext,
    constants: IFTConstants,
    tolerance: float = 1e-8,
    max_iter: int = 50,
    start: Optional[ExtendedVector] = None,
    enforce_hypotheses: bool = True,
    tail_tol: float = 1e-10,
    quiet: bool = True,
) -> GluingResult:
    """Newton–Picard iteration `x ← x − Q(F(ξ) + σ(ṽ))` from `x₁ = start` (default `0`).

    `Q` is the true right inverse at `f^R`, kept frozen. When the residual fails to halve
    for three consecutive steps the linearization is refreshed at the current iterate and
    the following steps solve with it, still through `Q`, so every correction stays in
    `im Q`.

    Args:
        context (GluingContext): The gluing context.
        constants (IFTConstants): Constants from `estimate_constants`.
        tolerance (float): Target for `‖F(ξ) + σ(ṽ)‖_{0,p,R}`.
        max_iter (int): Largest number of steps.
        start (Optional[ExtendedVector]): Initial point `x₁`.
        enforce_hypotheses (bool): Raise when a hypothesis fails instead of recording it.
        tail_tol (float): Tail tolerance of each application of `Q`.
        quiet (bool): Suppress progress output.

    Returns:
        (GluingResult): The solution, its trace and checks. The verdict is left empty.

    Raises:
        HypothesisViolation: If `enforce_hypotheses` and a hypothesis fails.
        NoConvergence: If `max_iter` steps do not reach the tolerance.
    """
    checks = list(constants.hypotheses())
    if enforce_hypotheses:
        _require_hypotheses(constants)
    p = context.p
    x1 = context.zeros() if start is None else start
    x = x1
    residual = extended_residual(context, x)
    value = weighted_norm(residual, 0, p)
    initial = value
    trace = [
        {
            "iteration": 0,
            "residual": value,
            "step_norm": 0.0,
            "distance": 0.0,
            "im_q_defect": 0.0,
            "norm": extended_norm(x, p),
            "refreshed": 0,
        }
    ]
    step_with, stall, refreshes = None, 0, 0
    progress = tqdm(total=max_iter, desc="Newton–Picard", leave=False, disable=quiet)
    while value > tolerance:
        iteration = len(trace)
        if iteration > max_iter:
            progress.close()
            raise NoConvergence(
                f"Newton–Picard stopped at residual {value:.3e} after {max_iter} steps "
                f"(tolerance {tolerance:.1e})",
                context={"trace": trace},
            )
        refreshed = 0
        if stall >= STALL_STEPS:
            wandb.termwarn(f"Residual stalled at {value:.3e}; refreshing the linearization")
            step_with, stall, refreshed = _RefreshedStep(context, x, tail_tol), 0, 1
            refreshes += 1
        step = step_with(residual) if step_with else true_inverse_Q(residual, context, tail_tol)
        x = x - step
        residual = extended_residual(context, x)
        previous, value = value, weighted_norm(residual, 0, p)
        stall = stall + 1 if value > 0.5 * previous else 0
        row = {
            "iteration": iteration,
            "residual": value,
            "step_norm": extended_norm(step, p),
            "distance": extended_norm(x - x1, p),
            "im_q_defect": im_q_defect(context, x - x1, tail_tol),
            "norm": extended_norm(x, p),
            "refreshed": refreshed,
        }
        trace.append(row)
        log_values(
            {f"ift_solve/{key}": row[key] for key in ("residual", "step_norm", "distance", "im_q_defect")},
            step=iteration,
        )
        progress.update(1)
    progress.close()

    residuals = np.array([row["residual"] for row in trace])
    distance = trace[-1]["distance"]
    checks.append(InvariantCheck("final_residual", value, tolerance, producer="ift_solve"))
    checks.append(
        InvariantCheck(
            "distance_bound",
            distance,
            2.0 * constants.c_tilde * initial * (1.0 + 1e-9),
            producer="ift_solve",
        )
    )
    defect = max(row["im_q_defect"] for row in trace)
    checks.append(InvariantCheck("im_q_confinement", defect, IM_Q_TOL, producer="ift_solve"))
    increases = np.diff(residuals)
    checks.append(
        InvariantCheck(
            "monotone_residual",
            float(np.max(increases, initial=0.0)),
            0.0,
            producer="ift_solve",
        )
    )
    diagnostics = {}
    if residuals.size >= 3 and np.all(residuals[1:-1] > 0):
        diagnostics["quadratic_constant"] = float(np.max(residuals[2:] / residuals[1:-1] ** 2))
    if not quiet:
        wandb.termlog(f"Newton–Picard: residual {value:.3e} after {len(trace) - 1} steps")
    return GluingResult(
        glued=context.f_R.perturb(x.section),
        x=x,
        constants=constants,
        trace=trace,
        converged=True,
        tolerance=tolerance,
        checks=checks,
        refreshes=refreshes,
        diagnostics=diagnostics,
        context=context,
    )


def harmonicity_verdict(result: GluingResult, tol_v: float = 1e-8) -> str:
    """`Harmonic` when `‖ṽ‖ ≤ tol_v` (always for `k = 0`), `Extended` otherwise."""
    coords = np.asarray(result.coords)
    if coords.size == 0 or float(np.linalg.norm(coords)) <= tol_v:
        return HARMONIC
    return EXTENDED


def uniqueness_probe(
    context: GluingContext,
    constants: IFTConstants,
    result: GluingResult,
    fraction: float = 0.1,
    seed: int = 0,
    tolerance: Optional[float] = None,
    max_iter: int = 50,
) -> Dict[str, float]:
    """Rerun the iteration from a small random start in `im Q` and compare the limits.

    The start is `Qη` for a random `η`, scaled to `fraction · ε/8` in the extended norm.
    """
    rng = np.random.default_rng(seed)
    start = true_inverse_Q(random_section(context.f_R, rng), context)
    size = extended_norm(start, context.p)
    if size > 0:
        start = start * (fraction * constants.step_threshold / size)
    other = ift_solve(
        context,
        constants,
        tolerance=result.tolerance if tolerance is None else tolerance,
        max_iter=max_iter,
        start=start,
        enforce_hypotheses=False,
    )
    return {
        "start_norm": extended_norm(start, context.p),
        "distance": extended_norm(other.x - result.x, context.p),
        "iterations": other.iterations,
    }
