from typing import TYPE_CHECKING, Callable, Dict, Sequence

import numpy as np
import wandb
from tqdm.auto import tqdm

from ..domain import build_patch_grid
from ..manifold import FlatTorus, TargetPoint
from .probes import bump_field, bump_section, random_section
from .weighted import DEFAULT_P, weighted_norm

if TYPE_CHECKING:
    from ..harmonic.maps import DiscreteMap, Section


def embedding_constant_estimate(
    base: "DiscreteMap",
    p: float = DEFAULT_P,
    probes: int = 50,
    seed: int = 0,
    quiet: bool = True,
) -> Dict[str, float]:
    """Estimate the `L^{2,p}_R ⊂ C⁰` constant by probing localized bumps and smooth fields.

    Returns:
        The largest ratio `sup|ξ| / ‖ξ‖_{2,p,R}` found (`constant`) together with the
        median ratio and the probe count.
    """
    assert probes >= 1, "Need at least one probe"
    rng = np.random.default_rng(seed)
    ratios = []
    for i in tqdm(range(probes), desc="Embedding probes", leave=False, disable=quiet):
        xi = bump_section(base, rng) if i % 2 == 0 else random_section(base, rng)
        norm = weighted_norm(xi, 2, p)
        if norm > 0:
            ratios.append(float(xi.pointwise_norm().max()) / norm)
    ratios = np.asarray(ratios)
    if not quiet:
        wandb.termlog(f"Embedding constant over {ratios.size} probes: {ratios.max():.4g}")
    return {
        "constant": float(ratios.max()),
        "median": float(np.median(ratios)),
        "probes": int(ratios.size),
    }


def holder_embedding_fit(
    p: float = DEFAULT_P,
    radii: Sequence[float] = (0.1, 0.5, 1.0),
    nodes_per_side: int = 60,
    probes: int = 20,
    seed: int = 0,
    anchors: int = 64,
) -> Dict[str, object]:
    """Fit the scale-invariant Hölder constant of `L^{2,p} ⊂ C^{0,2−2/p}` on flat patches.

    Each radius `ρ` gets a patch of side `2.5ρ` with the same node count, and the same
    random bumps rescaled to it. The ratio `[ξ]_{α} / ‖∇²ξ‖_{L^p}` is then invariant in `ρ`;
    the ratio against the full norm is reported alongside and is not.

    Returns:
        Per radius constants (`seminorm` and `full_norm` lists) and the relative spread
        of the seminorm constants.
    """
    alpha = 2.0 - 2.0 / p
    model = FlatTorus(dimension=1, periods=(1e6,))
    seminorm_constants, full_constants = [], []
    for rho in radii:
        grid = build_patch_grid(2.5 * rho, nodes_per_side)
        base = _constant_map(grid, model)
        rng = np.random.default_rng(seed)
        pick = np.random.default_rng(seed + 1).choice(grid.num_nodes, size=anchors, replace=False)
        best_semi, best_full = 0.0, 0.0
        for _ in range(probes):
            field = bump_field(grid, rng, width=rng.uniform(0.1, 0.3) * 2.5 * rho)
            xi = base.section(field[:, None])
            holder = _holder_quotient(grid, field, pick, alpha)
            _, hess = xi.derivative_norms()
            semi = float(np.sum(grid.weight * hess**p)) ** (1.0 / p)
            best_semi = max(best_semi, holder / semi)
            best_full = max(best_full, holder / weighted_norm(xi, 2, p))
        seminorm_constants.append(best_semi)
        full_constants.append(best_full)
    semi = np.asarray(seminorm_constants)
    return {
        "radii": list(radii),
        "alpha": alpha,
        "seminorm": semi.tolist(),
        "full_norm": full_constants,
        "spread": float((semi.max() - semi.min()) / semi.max()),
    }


def _constant_map(grid, model):
    from ..harmonic.maps import DiscreteMap

    return DiscreteMap.constant(grid, model, TargetPoint.single(np.zeros(model.dimension)))


def _holder_quotient(grid, field, anchors, alpha):
    side = grid.lattice["side_length"]
    delta = np.abs(grid.local[anchors, None, :] - grid.local[None, :, :])
    delta = np.minimum(delta, side - delta)
    distance = np.sqrt(np.sum(delta**2, axis=2))
    jump = np.abs(field[anchors, None] - field[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        quotient = np.where(distance > 0, jump / distance**alpha, 0.0)
    return float(quotient.max())


def apriori_constant_estimate(
    base: "DiscreteMap",
    apply_operator: Callable[["Section"], "Section"],
    p: float = DEFAULT_P,
    probes: int = 50,
    seed: int = 0,
) -> Dict[str, float]:
    """Estimate `C` in `‖ξ‖_{W^{2,p}} ≤ C (‖Dξ‖_{L^p} + ‖ξ‖_{L^p})` on an unglued sphere."""
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(probes):
        xi = random_section(base, rng)
        lower = weighted_norm(apply_operator(xi), 0, p) + weighted_norm(xi, 0, p)
        ratios.append(weighted_norm(xi, 2, p) / lower)
    return {"constant": float(np.max(ratios)), "median": float(np.median(ratios))}
