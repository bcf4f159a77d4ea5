"""Dense spectral primitives: singular values, log Gram volumes, subspace
projections, and numerical rank with explicit tolerance conventions.

Conventions fixed here and used across the library:

* all matrices are float64, C-contiguous, with finite entries;
* spectra are reported in descending order;
* a singular value counts as zero when it falls at or below
  ``max(RANK_TOL_REL * sigma_max, RANK_TOL_ABS)``;
* a collapsed direction makes a log Gram volume exactly ``-inf``, which is
  absorbing under addition, so downstream exponentials give an exact 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Relative spectral cutoff below which a direction is treated as collapsed,
# with an absolute floor guarding against denormal underflow.
RANK_TOL_REL = 1e-12
RANK_TOL_ABS = 1e-300

# Symmetric inputs may deviate from exact symmetry by at most this much,
# relative to the largest entry.
SYMMETRY_TOL = 1e-8

NEGATIVE_INFINITY = float("-inf")


def as_matrix(a, *, square: bool = False, name: str = "matrix") -> np.ndarray:
    """Validate and normalize a 2-D array: float64, C-order, finite entries."""
    m = np.array(a, dtype=np.float64, order="C", copy=True)
    if m.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D array, got ndim={m.ndim}")
    if m.size == 0:
        raise ValueError(f"{name}: empty matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name}: non-finite entries")
    if square and m.shape[0] != m.shape[1]:
        raise ValueError(f"{name}: expected square, got shape {m.shape}")
    return m


def as_vector(v, *, dim: int | None = None, name: str = "vector") -> np.ndarray:
    """Validate and normalize a 1-D float64 vector."""
    x = np.array(v, dtype=np.float64, copy=True)
    if x.ndim != 1:
        raise ValueError(f"{name}: expected a 1-D array, got ndim={x.ndim}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name}: non-finite entries")
    if dim is not None and x.shape[0] != dim:
        raise ValueError(f"{name}: expected length {dim}, got {x.shape[0]}")
    return x


def require_symmetric(h, *, rel_tol: float = SYMMETRY_TOL, name: str = "matrix") -> np.ndarray:
    """Return the symmetrized (H + H^T)/2, rejecting material asymmetry.

    The asymmetry ``max|H - H^T|`` is compared against ``rel_tol * max|H|``;
    anything larger is an input error rather than numerical fuzz.
    """
    m = as_matrix(h, square=True, name=name)
    scale = float(np.max(np.abs(m)))
    asym = float(np.max(np.abs(m - m.T)))
    if asym > rel_tol * max(scale, RANK_TOL_ABS):
        raise ValueError(f"{name}: asymmetry {asym:.3e} exceeds {rel_tol:.1e} relative tolerance")
    return (m + m.T) / 2.0


@dataclass(frozen=True)
class SpectralDecomposition:
    """SVD triple with singular values stored in descending order."""

    singular_values: np.ndarray
    left_basis: np.ndarray
    right_basis: np.ndarray  # rows are right singular vectors (V^T)

    @classmethod
    def compute(cls, a) -> "SpectralDecomposition":
        m = as_matrix(a)
        u, s, vt = np.linalg.svd(m, full_matrices=False)
        return cls(singular_values=s, left_basis=u, right_basis=vt)


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal columns spanning a subspace of R^ambient_dim."""

    ambient_dim: int
    dim: int
    basis: np.ndarray

    def __post_init__(self):
        b = as_matrix(self.basis, name="basis")
        if b.shape != (self.ambient_dim, self.dim):
            raise ValueError(
                f"basis: expected shape ({self.ambient_dim}, {self.dim}), got {b.shape}"
            )
        gram = b.T @ b
        if not np.allclose(gram, np.eye(self.dim), atol=1e-10):
            raise ValueError("basis: columns not orthonormal within 1e-10")
        object.__setattr__(self, "basis", b)

    @classmethod
    def from_columns(cls, columns) -> "SubspaceBasis":
        b = as_matrix(columns, name="basis")
        return cls(ambient_dim=b.shape[0], dim=b.shape[1], basis=b)


def singular_values(a) -> np.ndarray:
    """Singular values of ``a`` in descending order (LAPACK dense SVD)."""
    return np.linalg.svd(as_matrix(a), compute_uv=False)


def _collapse_cutoff(s: np.ndarray) -> float:
    smax = float(s[0]) if s.size else 0.0
    return max(RANK_TOL_REL * smax, RANK_TOL_ABS)


def log_gram_volume(j) -> float:
    """log det(J^T J) computed as ``2 * sum(log sigma_i)``.

    Returns exactly ``-inf`` when any singular value is at or below the
    collapse cutoff, so a collapsed direction zeroes the exponentiated
    volume no matter what the other directions do.
    """
    s = singular_values(as_matrix(j, square=True, name="jacobian"))
    cutoff = _collapse_cutoff(s)
    if np.any(s <= cutoff):
        return NEGATIVE_INFINITY
    return float(2.0 * np.sum(np.log(s)))


def stable_rank(h) -> float:
    """||H||_F^2 / ||H||_2^2 for a symmetric matrix; 0 for the zero matrix."""
    m = require_symmetric(h, name="stable_rank input")
    eigs = np.linalg.eigvalsh(m)
    top = float(np.max(np.abs(eigs)))
    if top <= RANK_TOL_ABS:
        return 0.0
    return float(np.sum(eigs**2) / top**2)


def null_space_basis(h, tol: float = 1e-8) -> SubspaceBasis:
    """Orthonormal basis of the near-null eigenspace of a symmetric PSD matrix.

    Eigendirections with eigenvalue ``<= tol * lambda_max`` are selected
    (``<= tol`` when the matrix has no positive eigenvalue).  Columns are
    ordered by descending eigenvalue, ties broken by eigensolver order.
    """
    m = require_symmetric(h, name="null_space_basis input")
    eigvals, eigvecs = np.linalg.eigh(m)
    lam_max = float(eigvals[-1])
    cutoff = tol * lam_max if lam_max > 0.0 else tol
    mask = eigvals <= cutoff
    if not np.any(mask):
        raise ValueError("null_space_basis: no eigenvalue at or below the cutoff")
    # eigh returns ascending order; flip the selected block to descending.
    cols = eigvecs[:, mask][:, ::-1]
    return SubspaceBasis(ambient_dim=m.shape[0], dim=cols.shape[1], basis=np.ascontiguousarray(cols))


def project_gram(j, q: SubspaceBasis) -> np.ndarray:
    """Q^T J^T J Q, symmetrized exactly; the Gram of J restricted to span(Q)."""
    m = as_matrix(j, square=True, name="jacobian")
    if m.shape[0] != q.ambient_dim:
        raise ValueError(
            f"project_gram: jacobian dim {m.shape[0]} != basis ambient dim {q.ambient_dim}"
        )
    b = m @ q.basis
    g = b.T @ b
    return (g + g.T) / 2.0


def numerical_rank(a, rel_tol: float = 1e-8) -> int:
    """Count of singular values above ``rel_tol * sigma_max``."""
    s = singular_values(a)
    smax = float(s[0]) if s.size else 0.0
    if smax <= RANK_TOL_ABS:
        return 0
    return int(np.sum(s > rel_tol * smax))
