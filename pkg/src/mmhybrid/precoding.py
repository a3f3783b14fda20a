"""Analog beam selection and the digital precoder designs.

Conventions: channels are rows of ``H`` (K x M), so the effective channel of
user ``k`` is ``h_eff_k = F^H h_k``, stored as row ``k`` of ``H @ F.conj()``.
Digital precoders are returned as ``W`` with one column per user, already
scaled so that ``||F w_k|| = 1``.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive
from .numerics import (
    generalized_umax,
    nullspace_projector,
    phase_normalize,
    top_eigenvector,
    _pick_in_subspace,
)


class PrecoderError(ValueError):
    """A digital precoder is undefined for the given inputs."""


class RankDeficientError(PrecoderError):
    def __init__(self, smallest_singular_value):
        self.smallest_singular_value = float(smallest_singular_value)
        super().__init__(
            "quantized effective channel matrix is rank deficient "
            f"(smallest singular value {smallest_singular_value:.3e})")


@dataclass(frozen=True)
class AnalogBeamformer:
    F: np.ndarray               # (M, K) constant-modulus columns
    indices: np.ndarray         # selected codebook rows, one per user
    duplicates: int = 0         # users moved off their first choice
    codewords_examined: int = 0

    @property
    def gram(self):
        return self.F.conj().T @ self.F


@dataclass(frozen=True)
class HybridPrecoder:
    F: np.ndarray
    W: np.ndarray
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        norms = np.linalg.norm(self.F @ self.W, axis=0)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise ValueError(f"columns of F W must have unit norm, got {norms}")


def select_beams(H, codebook):
    """Exhaustive beam search: user ``k`` takes ``argmax_f |h_k^H f|^2``.

    When a user's best codeword is already taken by a lower-indexed user it
    takes its best unselected one, so ``F`` has distinct columns.
    """
    C = codebook.entries if hasattr(codebook, "entries") else np.asarray(codebook)
    H = np.atleast_2d(H)
    K = H.shape[0]
    if C.shape[0] < K:
        raise ValueError(f"codebook has {C.shape[0]} entries for {K} users")
    power = np.abs(H.conj() @ C.T) ** 2        # (K, Q)
    taken = np.zeros(C.shape[0], dtype=bool)
    idx = np.empty(K, dtype=int)
    moved = 0
    for k in range(K):
        order = np.argsort(-power[k], kind="stable")
        choice = order[0]
        if taken[choice]:
            moved += 1
            choice = order[np.flatnonzero(~taken[order])[0]]
        idx[k] = choice
        taken[choice] = True
    F = C[idx].T.copy()
    return AnalogBeamformer(F, idx, moved, K * C.shape[0])


def effective_channels(H, F):
    """Rows ``h_eff_k = F^H h_k``."""
    return np.atleast_2d(H) @ F.conj()


def effective_covariance(F, R):
    """``F^H R F`` for one covariance or a stack of them (..., M, M)."""
    Reff = F.conj().T @ R @ F
    return 0.5 * (Reff + np.swapaxes(Reff, -1, -2).conj())


def normalize_columns(F, W):
    """Scale each column so that ``||F w_k|| = 1``."""
    norms = np.linalg.norm(F @ W, axis=0)
    if np.any(norms <= 0):
        raise PrecoderError("precoder column maps to zero through F")
    return W / norms


def sbf_precoder(R_eff, F):
    """Statistical beamforming: ``w_k`` in the nullspace of the other users'
    dominant effective-covariance eigenvectors.

    Inside the nullspace the direction maximizing ``w^H R_k w`` is used.

    Returns
    -------
    W : (K, K) array
    fallbacks : int
        Number of users whose projected covariance vanished, in which case
        an arbitrary (deterministic) nullspace vector is used.
    """
    R_eff = np.asarray(R_eff)
    K = R_eff.shape[0]
    if K < 2:
        raise ValueError("SBF needs at least two users")
    eye = np.eye(K)
    dominant = [top_eigenvector(R_eff[j], prefer=eye[j]) for j in range(K)]
    W = np.empty((K, K), dtype=complex)
    fallbacks = 0
    for k in range(K):
        P, full = nullspace_projector(
            [dominant[j] for j in range(K) if j != k], K)
        if full:
            raise PrecoderError(f"SBF infeasible for user {k}: "
                                "other users' dominant directions span C^K")
        Rp = P @ R_eff[k] @ P
        # roundoff here scales with R_eff[k], not with the (possibly tiny) projection
        Rp = 0.5 * (Rp + Rp.conj().T)
        w = np.linalg.eigvalsh(Rp)
        if w[-1] > 1e-10 * max(np.trace(R_eff[k]).real, 1e-300):
            W[:, k] = top_eigenvector(Rp, prefer=P @ eye[k])
        else:
            fallbacks += 1
            U, s, _ = np.linalg.svd(P)
            basis = U[:, s > 0.5]
            W[:, k] = _pick_in_subspace(basis, prefer=eye[k])
    return normalize_columns(F, W), fallbacks


def slnr_statistical_precoder(R_eff, rho, F):
    """Maximize ``w^H R_k w / w^H (I / rho + sum_{j != k} R_j) w`` per user."""
    rho = check_positive(rho, "rho")
    R_eff = np.asarray(R_eff)
    K = R_eff.shape[0]
    eye = np.eye(K)
    total = R_eff.sum(axis=0)
    W = np.empty((K, K), dtype=complex)
    for k in range(K):
        B = eye / rho + total - R_eff[k]
        W[:, k] = generalized_umax(R_eff[k], B, prefer=eye[k])
    return normalize_columns(F, W)


def zf_precoder(Hhat, F, cond_max=1e10):
    """Zero forcing on quantized directions: ``W = Hhat (Hhat^H Hhat)^{-1}``.

    ``Hhat`` holds one quantized effective channel per column.
    """
    Hhat = np.asarray(Hhat, dtype=complex)
    s = np.linalg.svd(Hhat, compute_uv=False)
    if s[-1] <= s[0] / cond_max:
        raise RankDeficientError(s[-1])
    W = Hhat @ np.linalg.inv(Hhat.conj().T @ Hhat)
    return normalize_columns(F, W)


def slnr_quantized_precoder(Hhat, rho, F):
    """Closed-form SLNR precoder on quantized channels (columns of ``Hhat``):
    ``w_k = (I / rho + sum_{j != k} h_j h_j^H)^{-1} h_k``."""
    rho = check_positive(rho, "rho")
    Hhat = np.asarray(Hhat, dtype=complex)
    K = Hhat.shape[1]
    gram = Hhat @ Hhat.conj().T
    W = np.empty((Hhat.shape[0], K), dtype=complex)
    for k in range(K):
        hk = Hhat[:, k]
        B = np.eye(Hhat.shape[0]) / rho + gram - np.outer(hk, hk.conj())
        v = np.linalg.solve(B, hk)
        W[:, k] = phase_normalize(v / np.linalg.norm(v))
    return normalize_columns(F, W)


def slnr_lower_bound(w, R_eff, k, rho):
    """Statistical SLNR lower bound of precoder ``w`` for user ``k``."""
    R_eff = np.asarray(R_eff)
    num = np.real(w.conj() @ R_eff[k] @ w)
    leak = sum(np.real(w.conj() @ R_eff[j] @ w)
               for j in range(R_eff.shape[0]) if j != k)
    return num / (1.0 / rho + leak)
