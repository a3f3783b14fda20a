"""Input checks shared by the numerical and estimator code."""

import numpy as np

HERMITIAN_RTOL = 1e-10
PSD_RTOL = 1e-8


class NotHermitianError(ValueError):
    """Raised when a matrix is not conjugate-symmetric within tolerance."""

    def __init__(self, asymmetry, scale):
        self.asymmetry = float(asymmetry)
        super().__init__(
            f"matrix is not Hermitian: max |A - A^H| = {asymmetry:.3e} "
            f"(max entry magnitude {scale:.3e})")


class SingularMatrixError(ValueError):
    """Raised when a matrix that must be positive definite is not."""

    def __init__(self, message, value):
        self.value = float(value)
        super().__init__(message)


def check_complex_matrix(A, name="A", shape=None):
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    if shape is not None:
        for got, want in zip(A.shape, shape):
            if want is not None and got != want:
                raise ValueError(f"{name} has shape {A.shape}, expected {shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return A


def check_hermitian(A, name="A", rtol=HERMITIAN_RTOL):
    """Return ``A`` as a complex square array, symmetrized.

    Raises :class:`NotHermitianError` when the asymmetry exceeds ``rtol``
    times the largest entry magnitude.
    """
    A = check_complex_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    scale = np.max(np.abs(A)) if A.size else 0.0
    asym = np.max(np.abs(A - A.conj().T)) if A.size else 0.0
    if asym > rtol * max(scale, np.finfo(float).tiny):
        raise NotHermitianError(asym, scale)
    return 0.5 * (A + A.conj().T)


def check_hermitian_psd(A, name="A", rtol=PSD_RTOL):
    A = check_hermitian(A, name)
    if A.size:
        w = np.linalg.eigvalsh(A)
        if w[0] < -rtol * max(abs(w[-1]), np.finfo(float).tiny):
            raise ValueError(
                f"{name} is not positive semidefinite: smallest eigenvalue "
                f"{w[0]:.3e}, largest {w[-1]:.3e}")
    return A


def check_unit_vector(v, name="v", atol=1e-9):
    v = np.asarray(v, dtype=complex).ravel()
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > atol:
        raise ValueError(f"{name} must have unit norm, got {norm:.12f}")
    return v


def check_positive(value, name):
    value = float(value)
    if not value > 0 or not np.isfinite(value):
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value
