from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, Optional

import numpy as np

from ..errors import WrongDomain

if TYPE_CHECKING:
    from ..harmonic.maps import ExtendedVector, Section

DEFAULT_P = 1.5


@dataclass(frozen=True)
class NormSpec:
    """Exponent and order of a weighted Sobolev norm.

    Arguments:
        p (float): Integrability exponent, `1 < p < 2`.
        order (int): Number of derivatives, `0`, `1` or `2`.
    """

    p: float = DEFAULT_P
    order: int = 2

    def __post_init__(self):
        assert 1.0 < self.p < 2.0, f"The exponent p must lie in (1, 2), got {self.p}"
        assert self.order in (0, 1, 2), f"The order must be 0, 1 or 2, got {self.order}"


def density(section: "Section", spec: NormSpec) -> np.ndarray:
    """Integrand `|ξ|^p + (λ⁻¹|∇ξ|)^p + (λ⁻²|∇²ξ|)^p` truncated at `spec.order`."""
    p = spec.p
    total = section.pointwise_norm() ** p
    if spec.order >= 1:
        first, second = section.derivative_norms()
        total = total + first**p
        if spec.order == 2:
            total = total + second**p
    return total


def _integral(section: "Section", spec: NormSpec, region: Optional[np.ndarray]) -> float:
    grid = section.base.grid
    weights = grid.weight[grid.active_index]
    if region is not None:
        weights = np.where(np.asarray(region)[grid.active_index], weights, 0.0)
    return float(np.sum(weights * density(section, spec)))


def weighted_norm(
    section: "Section",
    order: int = 2,
    p: float = DEFAULT_P,
    region: Optional[np.ndarray] = None,
) -> float:
    """`‖ξ‖_{k,p,R}` on the grid of the section's base map.

    On the glued grid the quadrature weight carries `θ⁻²`, so the norm is the weighted
    norm of the glued sphere; on a patch grid it is the flat Sobolev norm.

    Args:
        section (Section): The section.
        order (int): Number of derivatives `k`.
        p (float): Exponent.
        region (Optional[np.ndarray]): Node mask restricting the integral.
    """
    spec = NormSpec(p, order)
    return _integral(section, spec, region) ** (1.0 / p)


def sphere_sobolev_norm(section: "Section", order: int = 2, p: float = DEFAULT_P) -> float:
    """`‖ξ‖_{W^{k,p}(S²)}` with the round weight.

    Raises:
        WrongDomain: If the section does not live on an unglued sphere grid.
    """
    kind = section.base.grid.kind
    if not kind.startswith("sphere"):
        raise WrongDomain(f"Sphere Sobolev norms need a sphere grid, got a {kind} grid")
    return weighted_norm(section, order, p)


def extended_norm(vector: "ExtendedVector", p: float = DEFAULT_P) -> float:
    """`(‖ξ‖²_{2,p,R} + |ṽ|²)^{1/2}` on `L^{2,p} ⊕ V`."""
    return float(np.hypot(weighted_norm(vector.section, 2, p), np.linalg.norm(vector.coords)))


def norm_breakdown(
    section: "Section", order: int = 2, p: float = DEFAULT_P
) -> Dict[str, float]:
    """Share of `‖ξ‖^p_{k,p,R}` carried by the neck, the core outside it and the caps."""
    grid = section.base.grid
    spec = NormSpec(p, order)
    total = _integral(section, spec, None)
    regions = {"core": grid.region("core"), "caps": grid.region("caps")}
    if grid.kind == "glued":
        neck = grid.region("neck")
        regions = {"neck": neck, "core_off_neck": grid.region("core") & ~neck, "caps": grid.region("caps") & ~neck}
    out = {"total": total ** (1.0 / p)}
    for name, mask in regions.items():
        part = _integral(section, spec, mask)
        out[name] = part ** (1.0 / p)
        out[f"{name}_share"] = part / total if total > 0 else 0.0
    return out
