from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from tqdm.auto import tqdm

from ..cokernel import GluingContext, probe_contraction, true_inverse_Q
from ..errors import NoContraction
from ..harmonic import Section, dF_at, operator_F
from ..norms import extended_norm, random_section, weighted_norm
from ..report import InvariantCheck

AMPLITUDES = (1e-3, 1e-2, 1e-1)
AFFINE_GAP = 1e-10


@dataclass
class IFTConstants:
    """Constants of the quantitative implicit function theorem at `f^R`.

    Arguments:
        c_tilde (float): Bound `‖Q η‖_{2,p,R,V} ≤ c̃ ‖η‖_{0,p,R}` fitted over probes.
        epsilon (float): Trust radius `ε = min(cap, 1/(2c̃L))`.
        lipschitz (float): `L` with `‖dF(ξ) − D‖ ≤ L ‖ξ‖_{2,p,R}` on the probes.
        residual (float): `‖F_{f^R}(0)‖_{0,p,R}`.
        cap (float): Trust-region cap, half the injectivity bound.
        contraction (float): Probed contraction factor of the approximate inverse.
        affine (bool): Whether `F` is affine on the probes.
    """

    c_tilde: float
    epsilon: float
    lipschitz: float
    residual: float
    cap: float
    contraction: float
    affine: bool = False
    samples: Dict[str, List[float]] = field(default_factory=dict, repr=False)

    @property
    def residual_threshold(self) -> float:
        return self.epsilon / (4.0 * self.c_tilde)

    @property
    def step_threshold(self) -> float:
        return self.epsilon / 8.0

    def hypotheses(self) -> List[InvariantCheck]:
        """The three hypotheses, in order: right inverse, Lipschitz ball, small residual."""
        return [
            InvariantCheck(
                "right_inverse_contraction",
                self.contraction,
                1.0,
                producer="true_inverse_Q",
                note="probed q of the approximate inverse must stay below 1",
            ),
            InvariantCheck(
                "lipschitz_ball",
                self.lipschitz * self.epsilon,
                (1.0 + 1e-12) / (2.0 * self.c_tilde),
                producer="estimate_constants",
            ),
            InvariantCheck(
                "initial_residual",
                self.residual,
                self.residual_threshold,
                producer="estimate_constants",
            ),
        ]

    def to_dict(self) -> Dict[str, object]:
        return {
            "c_tilde": self.c_tilde,
            "epsilon": self.epsilon,
            "lipschitz": self.lipschitz,
            "residual": self.residual,
            "cap": self.cap,
            "contraction": self.contraction,
            "affine": self.affine,
            "residual_threshold": self.residual_threshold,
            "step_threshold": self.step_threshold,
        }


def _lipschitz_gaps(context: GluingContext, amplitudes, rng, p: float):
    f_R = context.f_R
    cap = 0.5 * f_R.model.injectivity_bound
    D = context.D_R
    gaps, ratios = [], []
    for amplitude in amplitudes:
        xi = random_section(f_R, rng, sup=amplitude * cap)
        direction = random_section(f_R, rng)
        linear = dF_at(f_R, xi).matvec(direction.flat())
        gap = Section.from_flat(f_R, linear - D @ direction.flat())
        relative = weighted_norm(gap, 0, p) / weighted_norm(direction, 2, p)
        gaps.append(relative)
        ratios.append(relative / weighted_norm(xi, 2, p))
    return gaps, ratios


def estimate_constants(
    context: GluingContext,
    probes: int = 5,
    amplitudes: Sequence[float] = AMPLITUDES,
    seed: int = 0,
    quiet: bool = True,
) -> IFTConstants:
    """Fit `c̃`, `L` and `ε`, and measure `‖F_{f^R}(0)‖_{0,p,R}`.

    `c̃` is the largest ratio `‖Qη‖_{2,p,R,V} / ‖η‖_{0,p,R}` over seeded random `η`.
    `L` is the largest ratio `‖dF(ξ) − D‖ / ‖ξ‖_{2,p,R}` over one random `ξ` per
    amplitude, as a fraction of the trust-region cap; it is `0` when every operator gap
    is below `1e-10`, i.e. on affine problems.

    Raises:
        NoContraction: If the approximate inverse does not contract.
    """
    p = context.p
    rng = np.random.default_rng(seed)
    if context.contraction is None:
        probe_contraction(context, probes=min(probes, 3), seed=seed)
    if context.contraction >= 1.0:
        raise NoContraction(
            f"The approximate inverse does not contract (q = {context.contraction:.3f}); "
            "enlarge δR or shrink δ",
            context={"q": context.contraction},
        )
    bounds = []
    for _ in tqdm(range(probes), desc="Fitting c̃", leave=False, disable=quiet):
        eta = random_section(context.f_R, rng)
        bounds.append(extended_norm(true_inverse_Q(eta, context), p) / weighted_norm(eta, 0, p))
    c_tilde = float(max(bounds))
    gaps, ratios = _lipschitz_gaps(context, amplitudes, rng, p)
    affine = max(gaps) <= AFFINE_GAP
    lipschitz = 0.0 if affine else float(max(ratios))
    cap = 0.5 * context.f_R.model.injectivity_bound
    epsilon = cap if lipschitz == 0.0 else min(cap, 1.0 / (2.0 * c_tilde * lipschitz))
    residual = residual_at_zero(context)
    return IFTConstants(
        c_tilde=c_tilde,
        epsilon=epsilon,
        lipschitz=lipschitz,
        residual=residual,
        cap=cap,
        contraction=context.contraction,
        affine=affine,
        samples={"right_inverse": bounds, "operator_gaps": gaps, "lipschitz": ratios},
    )


def residual_at_zero(context: GluingContext) -> float:
    """`‖F_{f^R}(0)‖_{0,p,R}`, the tension of the pregluing."""
    return weighted_norm(operator_F(context.f_R, context.f_R.zero_section()), 0, context.p)


def threshold_search(rows: Sequence[Dict[str, object]], key: str = "hypothesis_passed") -> Optional[float]:
    """Smallest swept `δR` from which the small-residual hypothesis holds at every larger one.

    Args:
        rows (Sequence[dict]): Sweep rows with a `neck` value and a boolean `key`.

    Returns:
        The empirical threshold, or `None` when the hypothesis fails at the largest neck.
    """
    threshold = None
    for row in sorted(rows, key=lambda row: row["neck"], reverse=True):
        if not row[key]:
            break
        threshold = float(row["neck"])
    return threshold
