from typing import Callable, Dict, List, Sequence

import numpy as np
from tqdm.auto import tqdm

from ..domain import Resolution, build_grid
from ..harmonic import Section, assemble_D, transport_identify
from ..norms import DEFAULT_P, random_section, sphere_sobolev_norm
from ..pregluing import MapPair, perturbation_size, perturbed_maps, preglue
from .paired import assemble_paired
from .spectral import WeightedOperator, weighted_spectrum


def operator_perturbation_sweep(
    pairs: Sequence[MapPair], probes: int = 5, p: float = DEFAULT_P, seed: int = 0, quiet: bool = True
) -> List[Dict[str, float]]:
    """Probe `‖D_{0,r} − D₀‖` as an operator `W^{2,p} → L^p` across neck sizes.

    For each pair, `f^{0,r}` is built from its pregluing and random sections `ξ` over
    `f⁰` are compared through parallel transport:
    `‖D_{0,r}Φξ − Φ D₀ξ‖_{L^p} / ‖ξ‖_{W^{2,p}}`.

    Returns:
        One row per pair with `delta`, `R`, `neck` (`δR`), the probed `operator_gap` and
        the `perturbation_size` `‖log_{f⁰} f^{0,r}‖_{W^{2,p}}`.
    """
    rows = []
    for pair in tqdm(pairs, desc="Operator perturbation", leave=False, disable=quiet):
        params = pair.params
        f_R = preglue(pair, build_grid(params, pair.zero.grid.resolution))
        f0r, _ = perturbed_maps(f_R, pair)
        D0, D0r = assemble_D(pair.zero), assemble_D(f0r)
        rng = np.random.default_rng(seed)
        gap = 0.0
        for _ in range(probes):
            xi = random_section(pair.zero, rng)
            moved = transport_identify(pair.zero, f0r, xi)
            image = transport_identify(pair.zero, f0r, Section.from_flat(pair.zero, D0 @ xi.flat()))
            defect = Section.from_flat(f0r, D0r @ moved.flat()) - image
            gap = max(gap, sphere_sobolev_norm(defect, 0, p) / sphere_sobolev_norm(xi, 2, p))
        rows.append(
            {
                "delta": params.delta,
                "R": params.R,
                "neck": params.r,
                "operator_gap": gap,
                "perturbation_size": perturbation_size(pair.zero, f0r, p),
            }
        )
    return rows


def cokernel_stability(
    pair_at: Callable[[Resolution], MapPair],
    resolution: Resolution = Resolution(),
    svd_atol: float = 0.0,
    svd_rtol: float = 1e-6,
    quiet: bool = True,
) -> Dict[str, object]:
    """Kernel and cokernel dimensions of the paired system at a resolution and its refinement.

    Args:
        pair_at (Callable): Builds the pair at a given resolution.
        resolution (Resolution): Coarse resolution; the second level halves every spacing.

    Returns:
        `kernel` and `cokernel` dimension lists, one entry per level, and `stable`.
    """
    kernel, cokernel = [], []
    for level in (resolution, resolution.refine()):
        pair = pair_at(level)
        system = assemble_paired(pair.zero, pair.infinity)
        spectrum = weighted_spectrum(
            WeightedOperator.from_system(system), svd_atol, svd_rtol, quiet=quiet
        )
        kernel.append(spectrum.kernel_dim)
        cokernel.append(spectrum.cokernel_dim)
    return {
        "kernel": kernel,
        "cokernel": cokernel,
        "stable": len(set(kernel)) == 1 and len(set(cokernel)) == 1,
    }
