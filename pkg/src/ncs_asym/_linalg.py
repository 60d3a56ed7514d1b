"""Small shared linear-algebra helpers.

Positive definiteness is decided by a Cholesky attempt with a pivot
threshold, never by matrix inversion; SPD systems are solved through the
factorization.
"""
import numpy as np
import scipy.linalg as la

PIVOT_TOL = 1e-12


def sym(X):
    """Symmetric part (X + X') / 2."""
    return (X + X.T) / 2.0


def asymmetry(X):
    """Relative Frobenius asymmetry ||X - X'|| / max(1, ||X||)."""
    return np.linalg.norm(X - X.T) / max(1.0, np.linalg.norm(X))


def chol_pd(X, pivot_tol=PIVOT_TOL):
    """Cholesky factor of a symmetric PD matrix, or None.

    Returns the lower factor when the factorization succeeds and every
    pivot (squared diagonal entry) clears pivot_tol; None otherwise.
    """
    try:
        L = np.linalg.cholesky(sym(X))
    except np.linalg.LinAlgError:
        return None
    if np.min(np.diag(L)) ** 2 < pivot_tol:
        return None
    return L


def smallest_pivot(X):
    """Smallest Cholesky pivot, or -inf when the factorization fails."""
    try:
        L = np.linalg.cholesky(sym(X))
    except np.linalg.LinAlgError:
        return -np.inf
    return float(np.min(np.diag(L)) ** 2)


def spd_solve(X, B):
    """Solve X Z = B for symmetric positive definite X via Cholesky."""
    L = np.linalg.cholesky(sym(X))
    return la.cho_solve((L, True), B)


def min_eig(X):
    return float(np.linalg.eigvalsh(sym(X)).min())


def psd_factor(X, clamp=-1e-12):
    """Factor F with F F' = X for symmetric PSD X, by eigendecomposition.

    Eigenvalues in [clamp, 0) are treated as rounding noise and clamped to
    zero; anything below clamp raises.
    """
    vals, vecs = np.linalg.eigh(sym(X))
    if vals.min() < clamp:
        raise np.linalg.LinAlgError(
            f"matrix has eigenvalue {vals.min():.3e} below the PSD clamp")
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)


def spectral_radius(X):
    return float(np.max(np.abs(np.linalg.eigvals(X))))
