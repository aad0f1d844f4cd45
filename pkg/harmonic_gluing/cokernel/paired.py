from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import sparse

from ..domain import INNER, OUTER
from ..errors import GluingError, MatchingViolation
from ..harmonic import DiscreteMap, Section, assemble_D


def block_diagonal(blocks: np.ndarray) -> sparse.csr_matrix:
    """Sparse block-diagonal matrix from `(m, n, n)` blocks."""
    m, n, _ = blocks.shape
    base = (np.arange(m) * n)[:, None, None]
    rows = np.broadcast_to(base + np.arange(n)[None, :, None], blocks.shape).ravel()
    cols = np.broadcast_to(base + np.arange(n)[None, None, :], blocks.shape).ravel()
    return sparse.csr_matrix((blocks.ravel(), (rows, cols)), shape=(m * n, m * n))


def mass_metric_factors(f: DiscreteMap) -> np.ndarray:
    """Upper factors `U_i` with `U_iᵀU_i = mass_i · h(f(i))` at every active node."""
    point = f.active_point()
    lower = np.linalg.cholesky(f.model.metric(point.coords, point.charts))
    mass = f.grid.mass[f.grid.active_index]
    return np.sqrt(mass)[:, None, None] * np.swapaxes(lower, 1, 2)


def _matching_distance(f1: DiscreteMap, x1: int, f2: DiscreteMap, x2: int) -> float:
    first, second = f1.point(x1), f2.point(x2)
    try:
        return float(f1.model.norm(first, f1.model.log(first, second))[0])
    except GluingError:
        return float("inf")


@dataclass
class PairedSystem:
    """The paired operator `D₁ ⊕ D₂` on sections that agree at `x₁ ~ x₂`.

    The matching constraint is eliminated: the reduced unknowns are every active
    component of `ξ₁` and every active component of `ξ₂` except the block at `x₂`, which
    is set to `J ξ₁(x₁)` with `J` the chart Jacobian from `f₁(x₁)` to `f₂(x₂)`.

    !!! note "Inner products"
        Rows carry the lumped `L²` product `Σ mass_i ⟨η_i, η′_i⟩_{h(f(i))}` of both
        spheres, stored through its block Cholesky factor `row_factor`. The column
        product is the pull-back of the row product through the elimination, which is
        block diagonal again and stored the same way.

    Arguments:
        f1 (DiscreteMap): Map on the `sphere-zero` grid.
        f2 (DiscreteMap): Map on the `sphere-infinity` grid.
        D1 (sparse.csr_matrix): Linearization at `f1`.
        D2 (sparse.csr_matrix): Linearization at `f2`.
        elimination (sparse.csr_matrix): `C`, reduced to full unknowns.
        matrix (sparse.csr_matrix): `A = (D1 ⊕ D2) C`.
        row_factor (sparse.csr_matrix): Factor `U_r` of the row inner product.
        col_factor (sparse.csr_matrix): Factor `U_c` of the column inner product.
        col_factor_inv (sparse.csr_matrix): `U_c⁻¹`.
        row_factor_inv (sparse.csr_matrix): `U_r⁻¹`.
        jacobian (np.ndarray): `J`, shape `(n, n)`.
        row_scale (Optional[np.ndarray]): Conformal factor `λ` per row, for scale-invariant
            spectra.
        col_scale (Optional[np.ndarray]): Conformal factor `λ` per reduced unknown.
    """

    f1: DiscreteMap
    f2: DiscreteMap
    D1: sparse.csr_matrix
    D2: sparse.csr_matrix
    elimination: sparse.csr_matrix
    matrix: sparse.csr_matrix
    row_factor: sparse.csr_matrix
    col_factor: sparse.csr_matrix
    col_factor_inv: sparse.csr_matrix
    row_factor_inv: sparse.csr_matrix
    jacobian: np.ndarray
    row_scale: Optional[np.ndarray] = None
    col_scale: Optional[np.ndarray] = None

    @property
    def dimension(self) -> int:
        return self.f1.dimension

    @property
    def size1(self) -> int:
        return self.f1.num_active * self.dimension

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    @property
    def x1(self) -> int:
        return self.f1.grid.cap_origin(INNER)

    @property
    def x2(self) -> int:
        return self.f2.grid.cap_origin(OUTER)

    def split(self, full: np.ndarray) -> Tuple[Section, Section]:
        """Cut a full vector (rows of the paired system) into one section per sphere."""
        full = np.asarray(full, dtype=float)
        return (
            Section.from_flat(self.f1, full[: self.size1]),
            Section.from_flat(self.f2, full[self.size1 :]),
        )

    def join(self, xi1: Section, xi2: Section) -> np.ndarray:
        return np.concatenate([xi1.flat(), xi2.flat()])

    def expand(self, reduced: np.ndarray) -> Tuple[Section, Section]:
        """Matched pair `(ξ₁, ξ₂)` from reduced unknowns."""
        return self.split(self.elimination @ reduced)

    def reduce(self, xi1: Section, xi2: Section) -> np.ndarray:
        """Reduced unknowns of a matched pair; the block at `x₂` is dropped."""
        full = self.join(xi1, xi2)
        n = self.dimension
        skip = self.size1 + self.f2.grid.position[self.x2] * n + np.arange(n)
        return np.delete(full, skip)

    def matching_defect(self, xi1: Section, xi2: Section) -> float:
        """`|ξ₂(x₂) − J ξ₁(x₁)|` in components."""
        at1 = xi1.values[self.f1.grid.position[self.x1]]
        at2 = xi2.values[self.f2.grid.position[self.x2]]
        return float(np.max(np.abs(at2 - self.jacobian @ at1)))

    def apply(self, xi1: Section, xi2: Section) -> Tuple[Section, Section]:
        """`(D₁ξ₁, D₂ξ₂)` of a matched pair."""
        return self.split(self.matrix @ self.reduce(xi1, xi2))

    def row_inner(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Lumped `L²` products `uᵀ W_r v` of full vectors (or column stacks)."""
        return (self.row_factor @ u).T @ (self.row_factor @ v)

    def col_inner(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return (self.col_factor @ u).T @ (self.col_factor @ v)


def assemble_paired(f1: DiscreteMap, f2: DiscreteMap, matching_tol: float = 1e-10) -> PairedSystem:
    """Assemble the paired system of two sphere maps meeting at `x₁ ~ x₂`.

    **Usage:**

    ```python
    from harmonic_gluing.cokernel import assemble_paired

    system = assemble_paired(pair.zero, pair.infinity)
    xi1, xi2 = system.expand(reduced)
    ```

    Args:
        f1 (DiscreteMap): Map on the `sphere-zero` grid, gluing point at its inner-cap
            origin.
        f2 (DiscreteMap): Map on the `sphere-infinity` grid, gluing point at its
            outer-cap origin.
        matching_tol (float): Largest admissible distance between `f1(x₁)` and `f2(x₂)`.

    Returns:
        (PairedSystem): The assembled system.

    Raises:
        MatchingViolation: If the maps do not meet at the gluing points.
    """
    assert f1.grid.kind == "sphere-zero", "f1 must live on the sphere-zero grid"
    assert f2.grid.kind == "sphere-infinity", "f2 must live on the sphere-infinity grid"
    n = f1.dimension
    x1, x2 = f1.grid.cap_origin(INNER), f2.grid.cap_origin(OUTER)
    gap = _matching_distance(f1, x1, f2, x2)
    if gap > matching_tol:
        raise MatchingViolation(
            f"f₁(x₁) and f₂(x₂) are {gap:.3e} apart (tolerance {matching_tol:.1e})"
        )
    p1, p2 = f1.grid.position[x1], f2.grid.position[x2]
    size1, size2 = f1.num_active * n, f2.num_active * n
    jac = f1.model.transition_jacobian(
        f1.coords[x1 : x1 + 1], f1.charts[x1 : x1 + 1], f2.charts[x2 : x2 + 1]
    )[0]

    # elimination: identity on every kept block, J from the x₁ block onto the x₂ block
    kept = np.delete(np.arange(size1 + size2), size1 + p2 * n + np.arange(n))
    rows = [kept, np.repeat(size1 + p2 * n + np.arange(n), n)]
    cols = [np.arange(kept.size), np.tile(p1 * n + np.arange(n), n)]
    vals = [np.ones(kept.size), jac.ravel()]
    elimination = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size1 + size2, kept.size),
    )

    D1, D2 = assemble_D(f1), assemble_D(f2)
    matrix = (sparse.block_diag([D1, D2], format="csr") @ elimination).tocsr()

    row_blocks = np.concatenate([mass_metric_factors(f1), mass_metric_factors(f2)])
    gram = np.einsum("mki,mkj->mij", row_blocks, row_blocks)
    col_gram = np.delete(gram, f1.num_active + p2, axis=0)
    col_gram[p1] = col_gram[p1] + jac.T @ gram[f1.num_active + p2] @ jac
    col_blocks = np.swapaxes(np.linalg.cholesky(col_gram), 1, 2)
    lam = np.concatenate([f1.grid.lam[f1.grid.active_index], f2.grid.lam[f2.grid.active_index]])
    row_scale = np.repeat(lam, n)
    return PairedSystem(
        f1=f1,
        f2=f2,
        D1=D1,
        D2=D2,
        elimination=elimination,
        matrix=matrix,
        row_factor=block_diagonal(row_blocks),
        col_factor=block_diagonal(col_blocks),
        col_factor_inv=block_diagonal(np.linalg.inv(col_blocks)),
        row_factor_inv=block_diagonal(np.linalg.inv(row_blocks)),
        jacobian=jac,
        row_scale=row_scale,
        col_scale=row_scale[kept],
    )
