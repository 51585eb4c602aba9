"""Dense Hermitian-matrix kernels shared by every other module.

Everything funnels through one eigendecomposition code path so log-dets,
square roots, and PSD clipping all see the same tolerances.  Inputs are
small (tens of antennas), so the routines stay dense and allocation-happy.
All tolerances are relative; matrices with arbitrary absolute scale pass
through unchanged.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, NumericalError

# Package-wide relative tolerances.
HERMITIAN_RTOL = 1e-12  # max |A - A^H| entry vs. max(1, max |A|)
PSD_RTOL = 1e-10        # how negative an eigenvalue may be vs. the largest
RANK_RTOL = 1e-9        # numerical-rank threshold vs. the largest eigenvalue


def hermitian_part(a: np.ndarray) -> np.ndarray:
    """Symmetrize: (A + A^H)/2."""
    a = np.asarray(a)
    return 0.5 * (a + a.conj().T)


def require_hermitian(a: np.ndarray, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Validate Hermitian symmetry and return the symmetrized matrix.

    Raises DomainError if the matrix is not square or the asymmetry exceeds
    rtol relative to max(1, largest entry magnitude).
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max()) if a.size else 0.0)
    gap = float(np.abs(a - a.conj().T).max()) if a.size else 0.0
    if gap > rtol * scale:
        raise DomainError(
            f"matrix is not Hermitian: max asymmetry {gap:.3e} exceeds "
            f"{rtol:.1e} * {scale:.3e}"
        )
    return hermitian_part(a)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with a complex result dtype."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def hermitian_eig(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns (eigenvalues, eigenvectors) with real eigenvalues sorted in
    descending order and orthonormal eigenvector columns to match.
    """
    h = require_hermitian(h)
    try:
        eigs, vecs = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:  # iteration cap inside LAPACK
        raise NumericalError(f"eigendecomposition failed to converge: {exc}") from exc
    order = np.argsort(eigs)[::-1]
    return eigs[order], vecs[:, order]


def _psd_eigs(h: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    # Shared PSD gate: tiny negative eigenvalues are rounding noise and get
    # clipped; anything below -PSD_RTOL * max is a caller bug.
    eigs, vecs = hermitian_eig(h)
    top = float(eigs[0]) if eigs.size else 0.0
    floor = -PSD_RTOL * max(top, 0.0)
    if eigs.size and float(eigs[-1]) < floor:
        raise DomainError(
            f"{what} expects a PSD matrix: smallest eigenvalue "
            f"{float(eigs[-1]):.3e} is below {floor:.3e}"
        )
    return np.clip(eigs, 0.0, None), vecs


def logdet_plus(h: np.ndarray) -> float:
    """log det(I + H) for PSD H, via eigenvalues; always >= 0."""
    eigs, _ = _psd_eigs(h, "logdet_plus")
    return float(np.sum(np.log1p(eigs)))


def psd_sqrt(h: np.ndarray) -> np.ndarray:
    """Hermitian PSD square root; the unique PSD G with G @ G = H."""
    eigs, vecs = _psd_eigs(h, "psd_sqrt")
    root = (vecs * np.sqrt(eigs)) @ vecs.conj().T
    return hermitian_part(root)


def psd_clip(h: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm: negative eigenvalues to zero."""
    eigs, vecs = hermitian_eig(h)
    clipped = (vecs * np.clip(eigs, 0.0, None)) @ vecs.conj().T
    return hermitian_part(clipped)


def numerical_rank(h: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Count of eigenvalues above rtol times the largest (PSD-oriented)."""
    eigs, _ = hermitian_eig(h)
    if eigs.size == 0:
        return 0
    top = float(np.abs(eigs).max())
    if top == 0.0:
        return 0
    return int(np.sum(eigs > rtol * top))
