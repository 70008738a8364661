"""Dense complex Hermitian / positive-semidefinite matrix kernel.

All covariance-style quantities in the package flow through these helpers:
validated construction (symmetrize-then-check), stabilized log-determinants,
eigendecomposition with a descending spectrum, positive-definite solves, and
eigenvalue flooring. Everything operates on plain complex128 ndarrays and is
pure, so values are safe to share between threads.
"""

import numpy as np
import scipy.linalg

from .errors import DimensionMismatchError, EigenConvergenceError, SingularMatrixError

LN2 = float(np.log(2.0))

# Scale-invariant PSD acceptance: eigenvalues down to -PSD_EPS * spectral norm pass.
PSD_EPS = 1e-10


def as_cmat(a):
    """Return ``a`` as a finite 2-D complex128 matrix.

    Raises ValueError on NaN/Inf entries or wrong dimensionality.
    """
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m.real)) or not np.all(np.isfinite(m.imag)):
        raise ValueError("matrix entries must be finite")
    return m


def hermitize(a):
    """Return (A + A†)/2, absorbing floating-point asymmetry from products."""
    m = as_cmat(a)
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"square matrix required, got {m.shape}")
    return 0.5 * (m + m.conj().T)


def herm_psd(a, eps=PSD_EPS):
    """Symmetrize ``a`` and verify it is PSD up to the scale-invariant floor.

    Eigenvalues may dip to ``-eps * spectral_norm`` before the check fails.
    """
    m = hermitize(a)
    w = np.linalg.eigvalsh(m)
    spectral = max(abs(w[0]), abs(w[-1])) if w.size else 0.0
    if w.size and w[0] < -eps * max(spectral, np.finfo(float).tiny):
        raise ValueError(
            f"matrix is not positive semidefinite (min eigenvalue {w[0]:.3e}, "
            f"spectral norm {spectral:.3e})"
        )
    return m


def cholesky_psd(a):
    """Cholesky factor of a Hermitian positive definite matrix.

    Raises SingularMatrixError when the factorization breaks down, which is
    the runtime signal that the strict-PD precondition failed.
    """
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("matrix is not positive definite") from exc


def logdet_nat(a):
    """Natural-log determinant of a Hermitian PD matrix via Cholesky."""
    c = cholesky_psd(a)
    return 2.0 * float(np.sum(np.log(np.diag(c).real)))


def logdet2(a):
    """log2 det(A) in bits for Hermitian positive definite A.

    Computed from the triangular factor, never from the raw determinant.
    """
    return logdet_nat(hermitize(a)) / LN2


def eigh(a):
    """Eigendecomposition A = V diag(w) V† with eigenvalues sorted descending.

    Returns (w, V) where w is real descending and V has orthonormal columns.
    """
    m = hermitize(a)
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise EigenConvergenceError("eigendecomposition did not converge") from exc
    return w[::-1].copy(), v[:, ::-1].copy()


def solve_psd(a, b):
    """Solve A X = B for Hermitian positive definite A."""
    m = hermitize(a)
    bb = np.asarray(b, dtype=np.complex128)
    if bb.shape[0] != m.shape[0]:
        raise DimensionMismatchError(
            f"B has {bb.shape[0]} rows, expected {m.shape[0]}"
        )
    try:
        cf = scipy.linalg.cho_factor(m, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise SingularMatrixError("matrix is not positive definite") from exc
    return scipy.linalg.cho_solve(cf, bb)


def psd_project(a, floor=0.0):
    """Clip the spectrum of Hermitian ``a`` at ``floor``, keeping eigenvectors."""
    if floor < 0:
        raise ValueError("floor must be nonnegative")
    w, v = eigh(a)
    w = np.maximum(w, floor)
    return hermitize((v * w) @ v.conj().T)
