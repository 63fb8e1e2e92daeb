"""Dense linear-algebra kernels shared by every other module.

Matrices are plain 2-D float64 numpy arrays in row-major (C) layout.
``as_matrix``/``as_vector`` are the construction gates: they reject
non-finite entries and degenerate shapes, so downstream code can assume
well-formed input.

Kronecker ordering contract (repo-wide): in ``kronecker(a, b)`` the first
factor varies slowest, i.e. ``result[i * len(b) + j] == a[i] * b[j]``.
This is what aligns stacked gradient-matrix rows with the row-major
flattening of weight matrices.
"""

import numpy as np

__all__ = [
    "DEFAULT_RANK_TOL",
    "as_matrix",
    "as_vector",
    "matmul",
    "kronecker",
    "khatri_rao",
    "singular_values",
    "numerical_rank",
    "sym_eigenvalues",
]

# Relative singular-value threshold separating genuine rank deficiency from
# float64 roundoff at desk scales (dims up to ~2000).
DEFAULT_RANK_TOL = 1e-8


def as_matrix(entries, name: str = "matrix") -> np.ndarray:
    """Validate *entries* as a dense float64 matrix and return it.

    Rejects anything that is not 2-D with positive dimensions, and any
    NaN/Inf entry.
    """
    m = np.ascontiguousarray(entries, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must have positive dimensions, got {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError(f"{name} contains non-finite entries")
    return m


def as_vector(entries, name: str = "vector") -> np.ndarray:
    """Validate *entries* as a dense float64 vector and return it."""
    v = np.ascontiguousarray(entries, dtype=np.float64)
    if v.ndim == 2 and 1 in v.shape:
        v = v.ravel()
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if v.size < 1:
        raise ValueError(f"{name} must be non-empty")
    if not np.isfinite(v).all():
        raise ValueError(f"{name} contains non-finite entries")
    return v


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    a = as_matrix(a, "left factor")
    b = as_matrix(b, "right factor")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def kronecker(a, b) -> np.ndarray:
    """Kronecker product of two vectors; first factor varies slowest."""
    a = as_vector(a, "first factor")
    b = as_vector(b, "second factor")
    return np.kron(a, b)


def khatri_rao(b, c) -> np.ndarray:
    """Column-wise Kronecker product.

    Column ``n`` of the result is ``kronecker(b[:, n], c[:, n])``; the
    factors must have the same number of columns.
    """
    b = as_matrix(b, "first factor")
    c = as_matrix(c, "second factor")
    if b.shape[1] != c.shape[1]:
        raise ValueError(
            f"column counts differ: {b.shape} vs {c.shape}"
        )
    n = b.shape[1]
    return (b[:, None, :] * c[None, :, :]).reshape(b.shape[0] * c.shape[0], n)


def singular_values(m) -> np.ndarray:
    """Singular values of *m* in descending order.

    Length is ``min(rows, cols)``.  Backed by LAPACK; raises
    ``numpy.linalg.LinAlgError`` if the iteration fails to converge.
    """
    return np.linalg.svd(as_matrix(m), compute_uv=False)


def numerical_rank(m, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    """Count singular values above ``rel_tol * sigma_max``.

    Returns 0 for the zero matrix.  ``rel_tol`` must be positive.
    """
    if rel_tol <= 0.0:
        raise ValueError(f"rel_tol must be positive, got {rel_tol}")
    s = singular_values(m)
    s_max = s[0]
    if s_max == 0.0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s_max))


def sym_eigenvalues(h, symmetry_tol: float = 1e-8) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, ascending.

    *h* must be square with ``max|h - h^T| <= symmetry_tol * max|h|``; it
    is then symmetrized as ``(h + h^T) / 2`` before the solve.
    """
    h = as_matrix(h, "matrix")
    if h.shape[0] != h.shape[1]:
        raise ValueError(f"matrix must be square, got {h.shape}")
    scale = np.abs(h).max()
    defect = np.abs(h - h.T).max()
    if defect > symmetry_tol * scale:
        raise ValueError(
            f"asymmetry {defect:.3e} exceeds {symmetry_tol:.1e} * max|entry| = "
            f"{symmetry_tol * scale:.3e}"
        )
    return np.linalg.eigvalsh(0.5 * (h + h.T))
