"""Small dense-matrix utilities.

Everything here works on plain ``numpy`` arrays of modest size (d up to a
few dozen); nothing is tuned for large or sparse problems.
"""

import numpy as np

from .errors import DimensionError, NotPSDError, StabilityError

TOL_HURWITZ = 1e-10
PSD_CLIP = 1e-12


def _as_square(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def is_hurwitz(A, tol=TOL_HURWITZ):
    """True iff every eigenvalue of `A` has real part below ``-tol``."""
    A = _as_square(A, "A")
    return bool(np.all(np.linalg.eigvals(A).real < -tol))


def operator_norm(M):
    """Largest singular value of `M`."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def hs_norm(M):
    """Hilbert-Schmidt (Frobenius) norm."""
    return float(np.sqrt(np.sum(np.square(np.asarray(M, dtype=float)))))


def symmetrize(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def solve_lyapunov(A, Q):
    r"""Solve the continuous Lyapunov equation :math:`A\Sigma + \Sigma A^T + Q = 0`.

    The system is vectorized with Kronecker products,
    ``(I kron A + A kron I) vec(Sigma) = -vec(Q)``, which costs O(d^6) and
    is meant for the small dimensions used throughout this package.

    Parameters
    ----------
    A : (d, d) array_like
        Hurwitz drift matrix.
    Q : (d, d) array_like
        Symmetric positive semi-definite forcing term (``B B^T``).

    Returns
    -------
    Sigma : (d, d) ndarray
        Symmetric solution.

    Raises
    ------
    StabilityError
        If `A` is not Hurwitz.
    DimensionError
        If the shapes disagree.
    """
    A = _as_square(A, "A")
    Q = _as_square(Q, "Q")
    if A.shape != Q.shape:
        raise DimensionError(f"A is {A.shape} but Q is {Q.shape}")
    if not is_hurwitz(A):
        raise StabilityError("A is not Hurwitz; the Lyapunov equation has no stable solution")
    d = A.shape[0]
    eye = np.eye(d)
    K = np.kron(eye, A) + np.kron(A, eye)
    sigma = np.linalg.solve(K, -Q.reshape(-1)).reshape(d, d)
    return symmetrize(sigma)


def lyapunov_residual(A, Q, sigma):
    return hs_norm(sigma @ np.asarray(A).T + np.asarray(A) @ sigma + np.asarray(Q))


def _psd_eig(M):
    M = _as_square(M)
    if not np.allclose(M, M.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise NotPSDError("matrix is not symmetric")
    w, U = np.linalg.eigh(symmetrize(M))
    scale = max(abs(w[0]), abs(w[-1])) if w.size else 0.0
    if w.size and w[0] < -PSD_CLIP * scale:
        raise NotPSDError(f"matrix has negative eigenvalue {w[0]:.3e}")
    return np.clip(w, 0.0, None), U


def sqrt_psd(M):
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in ``[-1e-12 * ||M||_op, 0)`` are clipped to zero; anything
    more negative raises :class:`NotPSDError`.
    """
    w, U = _psd_eig(M)
    return symmetrize((U * np.sqrt(w)) @ U.T)


def inv_sqrt_pd(M):
    """Inverse square root of a positive definite matrix."""
    w, U = _psd_eig(M)
    if w.size and w[0] <= 0.0:
        raise NotPSDError("matrix is singular; inverse square root undefined")
    return symmetrize((U / np.sqrt(w)) @ U.T)


def is_positive_definite(M, rel_tol=1e-10):
    """PD test used for asymptotic covariances: ``min eig > rel_tol * trace / d``."""
    M = _as_square(M)
    w = np.linalg.eigvalsh(symmetrize(M))
    tr = float(np.trace(M))
    return tr > 0 and bool(w[0] > rel_tol * tr / M.shape[0])
