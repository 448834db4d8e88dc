"""Dense complex-Hermitian linear algebra helpers shared by all solver modules.

Matrices are plain ``numpy`` arrays.  Every function that consumes a
Hermitian matrix symmetrizes defensively via :func:`hermitize`, so callers
may pass solver output that is Hermitian only up to round-off.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "hermitize",
    "is_hermitian",
    "random_hermitian",
    "eig_hermitian",
    "spectral_norm_top",
    "rank1_factor",
    "Rank1Factorization",
]


def hermitize(a: np.ndarray) -> np.ndarray:
    """Return the Hermitian part (a + a^H)/2 of a square matrix."""
    a = np.asarray(a)
    return 0.5 * (a + a.conj().T)


def is_hermitian(a: np.ndarray, rtol: float = 1e-12) -> bool:
    a = np.asarray(a)
    scale = max(np.abs(a).max(initial=0.0), 1.0)
    return bool(np.abs(a - a.conj().T).max(initial=0.0) <= rtol * scale)


def random_hermitian(dim: int, rng: np.random.Generator, psd: bool = False) -> np.ndarray:
    """Draw a random Hermitian (optionally PSD) matrix with O(1) entries."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    if psd:
        return g @ g.conj().T / dim
    return hermitize(g)


def _check_finite(a: np.ndarray) -> None:
    if not np.all(np.isfinite(a.view(float) if np.iscomplexobj(a) else a)):
        raise ValueError("matrix contains non-finite entries")


def eig_hermitian(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending.

    Returns ``(w, U)`` with ``a = U @ diag(w) @ U^H`` and ``U`` unitary.
    """
    a = np.asarray(a, dtype=complex)
    _check_finite(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    w, u = np.linalg.eigh(hermitize(a))
    order = np.argsort(w)[::-1]
    return w[order], u[:, order]


def _canonical_phase(vec: np.ndarray) -> np.ndarray:
    """Rotate a vector so its largest-magnitude entry is real nonnegative."""
    idx = int(np.argmax(np.abs(vec)))
    pivot = vec[idx]
    if np.abs(pivot) == 0.0:
        return vec
    return vec * (np.conj(pivot) / np.abs(pivot))


def spectral_norm_top(a: np.ndarray, psd_hint: bool = False) -> tuple[float, np.ndarray]:
    """Spectral norm of a Hermitian matrix and the matching unit eigenvector.

    For ``psd_hint=True`` the vector belongs to the largest eigenvalue;
    otherwise to the largest-magnitude one.  A zero matrix returns norm 0
    with the first standard basis vector (fixed convention).
    """
    w, u = eig_hermitian(a)
    if np.abs(w).max(initial=0.0) == 0.0:
        e1 = np.zeros(a.shape[0], dtype=complex)
        e1[0] = 1.0
        return 0.0, e1
    idx = 0 if psd_hint else int(np.argmax(np.abs(w)))
    vec = _canonical_phase(u[:, idx])
    return float(np.abs(w[idx])), vec


class NotPositiveSemidefiniteError(ValueError):
    pass


class Rank1Factorization:
    """Result of :func:`rank1_factor`: dominant factor plus a rank diagnostic."""

    __slots__ = ("vector", "residual_ratio", "is_rank_one")

    def __init__(self, vector: np.ndarray, residual_ratio: float, is_rank_one: bool):
        self.vector = vector
        self.residual_ratio = residual_ratio
        self.is_rank_one = is_rank_one

    def __repr__(self) -> str:  # pragma: no cover
        return (
            f"Rank1Factorization(residual_ratio={self.residual_ratio:.3e}, "
            f"is_rank_one={self.is_rank_one})"
        )


def rank1_factor(a: np.ndarray, tol: float = 1e-6,
                 scale: float | None = None) -> Rank1Factorization:
    """Extract w with ``a ~ w w^H`` from a (near) rank-one PSD matrix.

    The dominant eigenpair gives ``w = sqrt(lam1) * u1``, phase-normalized so
    the largest-magnitude entry is real nonnegative.  ``residual_ratio`` is
    ``lam2/lam1`` (0 for dimension-1 or zero input).  Raises
    :class:`NotPositiveSemidefiniteError` if the minimum eigenvalue is below
    ``-tol`` times the matrix magnitude (or ``scale`` when given, so that
    near-zero solver iterates pass on round-off noise).
    """
    a = np.asarray(a, dtype=complex)
    w, u = eig_hermitian(a)
    trace = float(np.real(np.trace(a)))
    ref = max(trace, float(np.abs(w).max(initial=0.0)))
    if scale is not None:
        ref = max(ref, scale)
    if w[-1] < -tol * max(ref, 1e-300):
        raise NotPositiveSemidefiniteError(
            f"minimum eigenvalue {w[-1]:.3e} below PSD tolerance"
        )
    lam1 = max(float(w[0]), 0.0)
    if lam1 == 0.0:
        return Rank1Factorization(np.zeros(a.shape[0], dtype=complex), 0.0, True)
    lam2 = max(float(w[1]), 0.0) if a.shape[0] > 1 else 0.0
    vec = _canonical_phase(np.sqrt(lam1) * u[:, 0])
    ratio = lam2 / lam1
    return Rank1Factorization(vec, ratio, ratio <= tol)
