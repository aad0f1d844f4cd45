from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
import wandb
from scipy import sparse
from scipy.sparse.linalg import eigsh, svds

DENSE_LIMIT = 3000
SHIFT = -1e-3


@dataclass
class WeightedOperator:
    """A sparse operator `A` between spaces with block inner products.

    The weighted matrix `B = S_r U_r A U_c⁻¹ S_c` has the singular values of `S_r²A`
    measured in the row and column inner products `U_rᵀS_r⁻²U_r` and `U_cᵀS_c⁻²U_c`.
    With the conformal factor `λ` as the diagonal scales this is `A` rewritten for the
    cylinder metric `λ⁻²g`, whose largest singular value depends on the lattice spacing
    and not on the smallest physical cell. The scales leave the kernel and the `U_rᵀU_r`
    cokernel unchanged.
    """

    matrix: sparse.spmatrix
    row_factor: sparse.spmatrix
    row_factor_inv: sparse.spmatrix
    col_factor: sparse.spmatrix
    col_factor_inv: sparse.spmatrix
    row_scale: Optional[np.ndarray] = None
    col_scale: Optional[np.ndarray] = None

    @classmethod
    def from_system(cls, system) -> "WeightedOperator":
        return cls(
            system.matrix,
            system.row_factor,
            system.row_factor_inv,
            system.col_factor,
            system.col_factor_inv,
            system.row_scale,
            system.col_scale,
        )

    @property
    def weighted(self) -> sparse.csr_matrix:
        B = self.row_factor @ self.matrix @ self.col_factor_inv
        if self.row_scale is not None:
            B = sparse.diags(self.row_scale) @ B
        if self.col_scale is not None:
            B = B @ sparse.diags(self.col_scale)
        return B.tocsr()

    def unweight_right(self, vectors: np.ndarray) -> np.ndarray:
        if self.col_scale is not None:
            vectors = self.col_scale[:, None] * vectors
        return self.col_factor_inv @ vectors

    def unweight_left(self, vectors: np.ndarray) -> np.ndarray:
        if self.row_scale is not None:
            vectors = self.row_scale[:, None] * vectors
        return self.row_factor_inv @ vectors


@dataclass
class Spectrum:
    """Smallest singular triplets of a weighted operator.

    `right` and `left` hold singular vectors in the original (unweighted) coordinates,
    orthonormal in the operator's column and row inner products, sorted by ascending
    singular value. [`orthonormalize`][harmonic_gluing.cokernel.spectral.orthonormalize]
    moves a block of them to another product. Dimension mismatch between rows and columns
    contributes exact zeros.

    Arguments:
        right_values (np.ndarray): Singular values paired with `right`.
        right (np.ndarray): Right vectors, one per column.
        left_values (np.ndarray): Singular values paired with `left`.
        left (np.ndarray): Left vectors, one per column.
        sigma_max (float): Largest singular value.
        threshold (float): Null threshold.
        method (str): `dense` or `eigsh`.
    """

    right_values: np.ndarray
    right: np.ndarray
    left_values: np.ndarray
    left: np.ndarray
    sigma_max: float
    threshold: float
    method: str

    @property
    def kernel_dim(self) -> int:
        return int(np.sum(self.right_values <= self.threshold))

    @property
    def cokernel_dim(self) -> int:
        return int(np.sum(self.left_values <= self.threshold))

    @property
    def kernel(self) -> np.ndarray:
        return self.right[:, : self.kernel_dim]

    @property
    def cokernel(self) -> np.ndarray:
        return self.left[:, : self.cokernel_dim]

    def smallest_right(self, count: int) -> np.ndarray:
        assert count <= self.right.shape[1], (
            f"Only {self.right.shape[1]} right singular vectors were computed, {count} requested"
        )
        return self.right[:, :count]

    def to_dict(self, head: int = 8) -> Dict[str, object]:
        return {
            "method": self.method,
            "kernel_dim": self.kernel_dim,
            "cokernel_dim": self.cokernel_dim,
            "threshold": self.threshold,
            "sigma_max": self.sigma_max,
            "right_head": self.right_values[:head].tolist(),
            "left_head": self.left_values[:head].tolist(),
            "gap": self.gap,
        }

    @property
    def gap(self) -> float:
        """First singular value above the threshold over the threshold, `inf` if none."""
        values = np.concatenate([self.right_values, self.left_values])
        above = values[values > self.threshold]
        return float(above.min() / self.threshold) if above.size else float("inf")


def null_threshold(sigma_max: float, svd_atol: float, svd_rtol: float) -> float:
    """`svd_rtol · σ_max`, or `svd_atol` when an absolute override is set."""
    return svd_atol if svd_atol > 0 else svd_rtol * sigma_max


def orthonormalize(vectors: np.ndarray, factor: sparse.spmatrix) -> np.ndarray:
    """Columns spanning the same space, orthonormal in the product `factorᵀfactor`."""
    if not vectors.shape[1]:
        return vectors
    _, upper = np.linalg.qr(factor @ vectors)
    return np.linalg.solve(upper.T, vectors.T).T


def _dense(op: WeightedOperator, threshold_of):
    B = op.weighted.toarray()
    rows, cols = B.shape
    U, s, Vt = np.linalg.svd(B, full_matrices=True)
    order = np.argsort(s)
    s_sorted = s[order]
    right_values = np.concatenate([np.zeros(max(cols - rows, 0)), s_sorted])
    right = np.concatenate([Vt[s.size :].T, Vt[order].T], axis=1)
    left_values = np.concatenate([np.zeros(max(rows - cols, 0)), s_sorted])
    left = np.concatenate([U[:, s.size :], U[:, order]], axis=1)
    sigma_max = float(s.max()) if s.size else 0.0
    return right_values, right, left_values, left, sigma_max, threshold_of(sigma_max)


def _smallest_eigenpairs(gram: sparse.spmatrix, threshold: float, minimum: int, nev: int):
    """Eigenpairs of `BᵀB` (or `BBᵀ`) from the bottom until one exceeds `threshold²`."""
    size = gram.shape[0]
    nev = max(nev, minimum + 1)
    while True:
        count = min(nev, size - 1)
        values, vectors = eigsh(gram.tocsc(), k=count, sigma=SHIFT, which="LM", v0=np.ones(size))
        order = np.argsort(values)
        values, vectors = values[order], vectors[:, order]
        singular = np.sqrt(np.maximum(values, 0.0))
        if singular[-1] > threshold or count == size - 1:
            return singular, vectors
        nev *= 2


def _iterative(op: WeightedOperator, threshold_of, minimum: int, nev: int):
    B = op.weighted
    sigma_max = float(svds(B, k=1, return_singular_vectors=False, v0=np.ones(min(B.shape)))[0])
    threshold = threshold_of(sigma_max)
    right_values, right = _smallest_eigenpairs((B.T @ B), threshold, minimum, nev)
    left_values, left = _smallest_eigenpairs((B @ B.T), threshold, 0, nev)
    return right_values, right, left_values, left, sigma_max, threshold


def weighted_spectrum(
    op: WeightedOperator,
    svd_atol: float = 0.0,
    svd_rtol: float = 1e-6,
    min_right: int = 0,
    nev: int = 16,
    dense_limit: int = DENSE_LIMIT,
    quiet: bool = True,
) -> Spectrum:
    """Kernel and cokernel of a weighted operator from its smallest singular triplets.

    Small systems use a dense SVD. Larger ones use shift-invert `eigsh` on `BᵀB` and
    `BBᵀ`, doubling the number of requested pairs until the largest one clears the null
    threshold. ARPACK starts from a fixed vector, so reruns return the same basis.

    Args:
        op (WeightedOperator): The operator.
        svd_atol (float): Absolute override of the null threshold; off at zero.
        svd_rtol (float): Relative null threshold, a fraction of `σ_max`.
        min_right (int): Smallest number of right vectors to return, null or not.
        nev (int): Initial number of requested eigenpairs.
        dense_limit (int): Largest dimension handled by the dense SVD.
        quiet (bool): Suppress the summary line.

    Returns:
        (Spectrum): Singular values and vectors, smallest first.
    """

    def threshold_of(sigma_max):
        return null_threshold(sigma_max, svd_atol, svd_rtol)

    if max(op.matrix.shape) <= dense_limit:
        method = "dense"
        right_values, right, left_values, left, sigma_max, threshold = _dense(op, threshold_of)
    else:
        method = "eigsh"
        right_values, right, left_values, left, sigma_max, threshold = _iterative(
            op, threshold_of, min_right, nev
        )
    spectrum = Spectrum(
        right_values=right_values,
        right=op.unweight_right(right),
        left_values=left_values,
        left=op.unweight_left(left),
        sigma_max=sigma_max,
        threshold=threshold,
        method=method,
    )
    if not quiet:
        wandb.termlog(
            f"Spectrum ({method}, {op.matrix.shape[0]}x{op.matrix.shape[1]}): "
            f"kernel {spectrum.kernel_dim}, cokernel {spectrum.cokernel_dim}, "
            f"σ_max {sigma_max:.3e}, threshold {threshold:.3e}"
        )
    return spectrum
