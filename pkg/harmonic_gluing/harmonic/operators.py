from typing import Dict, Sequence

import numpy as np
import wandb
from scipy import sparse
from scipy.sparse.linalg import LinearOperator

from ..domain import quadrature
from ..domain.grid import E, N, S, W
from ..manifold import TargetPoint
from ..norms import random_section, weighted_norm
from ..report.records import InvariantCheck
from .maps import DiscreteMap, Section


def energy_density(f: DiscreteMap) -> np.ndarray:
    """`½(|f_s|² + |f_t|²)` in local coordinates, without the conformal factor."""
    local = f.local
    return 0.5 * np.einsum("mai,mij,maj->m", local.df, local.metric, local.df)


def energy(f: DiscreteMap) -> float:
    """Dirichlet energy `½∫|df|² dv_g` with the blended quadrature.

    The integrand `½ λ⁻² |df|²` meets the weight `λ² · blend · cell`, so the energy does not
    depend on the conformal factor of the domain.
    """
    grid = f.grid
    lam = grid.lam[grid.active_index]
    return quadrature(grid, energy_density(f) / lam**2)


def conformal_cancellation(f: DiscreteMap) -> Dict[str, float]:
    """Compare the energy with and without the domain weight cancelled by hand."""
    grid = f.grid
    index = grid.active_index
    with_weight = energy(f)
    flat = float(np.sum(grid.weight[index] / grid.lam[index] ** 2 * energy_density(f)))
    scale = max(abs(with_weight), 1.0)
    return {
        "weighted": with_weight,
        "flat": flat,
        "relative_difference": abs(with_weight - flat) / scale,
    }


def tension(f: DiscreteMap) -> Section:
    """Discrete tension field `P(f) = −λ⁻²(f_ss + f_tt + Γ(f_s, f_s) + Γ(f_t, f_t))`."""
    local = f.local
    d2f, df = local.d2f, local.df
    laplace = d2f[:, 0] + d2f[:, 1]
    quadratic = np.einsum("mkij,mai,maj->mk", local.gamma, df, df)
    return Section(f, -(laplace + quadratic) / local.lam[:, None] ** 2)


def _transport_back(f: DiscreteMap, xi: np.ndarray, g: DiscreteMap, values: np.ndarray) -> np.ndarray:
    """`Φ_f(ξ)⁻¹`: move vectors at `g = exp_f(ξ)` back to `f` along the same geodesics."""
    model = f.model
    out = np.array(values, dtype=float)
    moving = np.any(xi != 0.0, axis=1)
    if np.any(moving):
        start = f.active_point().take(moving)
        end_g = g.active_point().take(moving)
        velocity = model.parallel_transport(start, xi[moving], xi[moving])
        back = model.parallel_transport(end_g, -velocity, out[moving])
        arrival = model.exp(end_g, -velocity)
        jac = model.transition_jacobian(arrival.coords, arrival.charts, start.charts)
        out[moving] = np.einsum("mij,mj->mi", jac, back)
    return out


def operator_F(f: DiscreteMap, xi: Section) -> Section:
    """`F_f(ξ) = Φ_f(ξ)⁻¹ P(exp_f(ξ))`, a section over `f`.

    Raises:
        VectorTooLong: If some `|ξ|` reaches the injectivity bound.
    """
    values = xi.values if isinstance(xi, Section) else np.asarray(xi, dtype=float)
    g = f.perturb(values)
    return Section(f, _transport_back(f, values, g, tension(g).values))


def assemble_D(f: DiscreteMap) -> sparse.csr_matrix:
    """Sparse linearization `D_f = ∇P(f)` acting on flattened active sections.

    Rows and columns are ordered `(active node, component)`. The covariant correction
    `Γ(ξ, P(f))` is included, so `D_f` is the exact derivative of the discrete
    `ξ ↦ F_f(ξ)` at zero.
    """
    grid, n = f.grid, f.dimension
    local = f.local
    m = grid.num_active
    eye = np.eye(n)[None]
    inv_lam2 = (1.0 / local.lam**2)[:, None, None]
    hs = local.h_s[:, :, None]
    ht = local.h_t[:, :, None]
    gamma = local.gamma
    g_s = np.einsum("mkij,mi->mkj", gamma, local.df[:, 0])
    g_t = np.einsum("mkij,mi->mkj", gamma, local.df[:, 1])
    jac = local.nb_jacobian
    off = {
        E: -inv_lam2 * (eye / hs**2 + g_s / hs),
        W: -inv_lam2 * (eye / hs**2 - g_s / hs),
        N: -inv_lam2 * (eye / ht**2 + g_t / ht),
        S: -inv_lam2 * (eye / ht**2 - g_t / ht),
    }
    dgamma = f.christoffel_derivative()
    hess = np.einsum("mqkij,mai,maj->mkq", dgamma, local.df, local.df)
    p_vec = tension(f).values
    gamma_p = np.einsum("mkqj,mj->mkq", gamma, p_vec)
    center = -inv_lam2 * (-2.0 * eye / hs**2 - 2.0 * eye / ht**2 + hess) + gamma_p

    comp = np.arange(n)
    rows, cols, vals = [], [], []

    def add(row_nodes, col_nodes, blocks):
        r = row_nodes[:, None, None] * n + comp[None, :, None]
        c = col_nodes[:, None, None] * n + comp[None, None, :]
        rows.append(np.broadcast_to(r, blocks.shape).ravel())
        cols.append(np.broadcast_to(c, blocks.shape).ravel())
        vals.append(blocks.ravel())

    position = np.arange(m)
    add(position, grid.active_index, center)
    for slot, block in off.items():
        add(position, local.neighbors[:, slot], np.einsum("mij,mjk->mik", block, jac[:, slot]))
    stencil = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m * n, grid.num_nodes * n),
    )
    return (stencil @ f.prolongation()).tocsr()


def apply_D(f: DiscreteMap, xi: Section, matrix: sparse.spmatrix = None) -> Section:
    matrix = assemble_D(f) if matrix is None else matrix
    return Section(f, matrix @ xi.flat())


def dF_at(f: DiscreteMap, xi: Section) -> LinearOperator:
    """`dF_f(ξ)ξ′ = Φ⁻¹[D_g(E(ξ)ξ′) − Ψ(ξ; ξ′, F(ξ))]` with `g = exp_f(ξ)`.

    Returns a `LinearOperator` on flattened sections over `f`. `E` and `Ψ` are evaluated
    by centered differences on every product.
    """
    model = f.model
    values = xi.values
    g = f.perturb(values)
    d_g = assemble_D(g)
    f_xi = operator_F(f, xi).values
    point = f.active_point()
    g_point = g.active_point()
    shape = (f.num_active, f.dimension)

    def to_g(base: TargetPoint, vectors: np.ndarray) -> np.ndarray:
        jac = model.transition_jacobian(base.coords, base.charts, g_point.charts)
        return np.einsum("mij,mj->mi", jac, vectors)

    def matvec(v):
        xi_prime = np.asarray(v, dtype=float).reshape(shape)
        tangent, handle = model.d_exp_and_d_transport(point, values, xi_prime)
        e = to_g(tangent.base, tangent.components)
        psi = to_g(tangent.base, handle(f_xi))
        at_g = (d_g @ e.ravel()).reshape(shape) - psi
        return _transport_back(f, values, g, at_g).ravel()

    size = shape[0] * shape[1]
    return LinearOperator((size, size), matvec=matvec, dtype=float)


def linearization_consistency(
    f: DiscreteMap,
    probes: int = 20,
    steps: Sequence[float] = (1e-2, 5e-3, 2.5e-3),
    p: float = 1.5,
    seed: int = 0,
    quiet: bool = True,
    linearized: DiscreteMap = None,
) -> Dict[str, object]:
    """Finite-difference check of `D_f` against `F_f`.

    For random smooth `ξ′` with `sup|ξ′| = 1` the error
    `‖(F(hξ′) − F(0))/h − D ξ′‖_{0,p} / ‖ξ′‖_{2,p}` is measured at each step `h`; the
    observed order is the slope of `log error` against `log h`.
    `linearized` is the map whose `D` is assembled, `f` itself by default.

    Returns:
        Errors per step (worst probe), the fitted order and the invariant checks.
    """
    rng = np.random.default_rng(seed)
    matrix = assemble_D(f if linearized is None else linearized)
    f0 = tension(f)
    errors = np.zeros((probes, len(steps)))
    for i in range(probes):
        direction = random_section(f, rng)
        d_xi = apply_D(f, direction, matrix)
        scale = weighted_norm(direction, 2, p)
        for j, h in enumerate(steps):
            quotient = (operator_F(f, h * direction) - f0) * (1.0 / h)
            errors[i, j] = weighted_norm(quotient - d_xi, 0, p) / scale
    worst = errors.max(axis=0)
    note = ""
    if worst.max() <= 1e-10:
        # F is affine in ξ (flat targets): only rounding remains
        order, note = 1.0, "affine"
    else:
        order = float(np.polyfit(np.log(steps), np.log(np.maximum(worst, 1e-300)), 1)[0])
    dense = dF_at(f, f.zero_section())
    probe = random_section(f, rng)
    gap = np.linalg.norm(dense.matvec(probe.flat()) - matrix @ probe.flat())
    reference = max(np.linalg.norm(matrix @ probe.flat()), 1.0)
    checks = [
        InvariantCheck(
            "linearization_order", order, 0.9, ">=", producer="assemble_D", note=note
        ),
        InvariantCheck("dF_at_zero_vs_D", gap / reference, 1e-6, producer="dF_at"),
    ]
    if not quiet:
        for check in checks:
            wandb.termlog(check.line())
    return {"steps": list(steps), "errors": worst.tolist(), "order": order, "checks": checks}
