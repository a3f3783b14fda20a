"""Dense complex linear algebra and the convex subproblem behind the SCA loop.

Matrices are plain ``numpy`` arrays; the helpers in :mod:`._validation`
enforce the Hermitian/PSD contracts at the boundaries.
"""

import math
from typing import NamedTuple

import numba
import numpy as np

from ._validation import (
    SingularMatrixError,
    check_complex_matrix,
    check_hermitian,
    check_hermitian_psd,
)

#: relative eigenvalue gap under which top eigenvalues count as degenerate
DEGENERACY_RTOL = 1e-10
#: entries smaller than this are skipped when fixing the phase of a vector
PHASE_ATOL = 1e-12


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, residual):
        self.residual = float(residual)
        super().__init__(f"{message} (residual {residual:.3e})")


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


class NullspaceProjector(NamedTuple):
    matrix: np.ndarray
    full_span: bool


class SocpSolution(NamedTuple):
    x: np.ndarray
    t: float
    gap: float
    newton_steps: int


def phase_normalize(v, atol=PHASE_ATOL):
    """Rotate ``v`` so its first entry with magnitude > ``atol`` is real positive."""
    v = np.asarray(v, dtype=complex)
    idx = np.flatnonzero(np.abs(v) > atol)
    if idx.size == 0:
        return v.copy()
    first = v[idx[0]]
    return v * (abs(first) / first)


def eig_hermitian(A):
    """Full spectral decomposition of a Hermitian matrix.

    Eigenvalues are returned in descending order; each eigenvector column is
    phase-normalized.
    """
    A = check_hermitian(A)
    w, V = np.linalg.eigh(A)
    w = w[::-1]
    V = V[:, ::-1]
    for i in range(V.shape[1]):
        V[:, i] = phase_normalize(V[:, i])
    return EigenDecomposition(w, V)


def _pick_in_subspace(basis, prefer=None):
    """Deterministic unit vector inside span(basis) (orthonormal columns).

    With ``prefer`` given, its normalized projection onto the subspace is
    returned when non-negligible. Otherwise the vector with the largest
    real first nonzero component is used, i.e. the projection of the first
    standard basis vector that is not orthogonal to the subspace.
    """
    dim = basis.shape[0]
    candidates = []
    if prefer is not None:
        candidates.append(np.asarray(prefer, dtype=complex))
    candidates.extend(np.eye(dim, dtype=complex))
    for c in candidates:
        p = basis @ (basis.conj().T @ c)
        n = np.linalg.norm(p)
        if n > 1e-8 * max(np.linalg.norm(c), 1.0):
            return phase_normalize(p / n)
    return phase_normalize(basis[:, 0])


def _top_cluster(w, rtol=DEGENERACY_RTOL):
    """Number of leading (descending) eigenvalues tied with the largest."""
    scale = max(np.max(np.abs(w)), np.finfo(float).tiny)
    return int(np.sum(w >= w[0] - rtol * scale))


def top_eigenvector(A, prefer=None):
    """Unit eigenvector for the largest eigenvalue of Hermitian ``A``.

    Ties (relative gap below ``DEGENERACY_RTOL``) are broken
    deterministically, see :func:`_pick_in_subspace`.
    """
    w, V = eig_hermitian(A)
    n = _top_cluster(w)
    if n == 1:
        return V[:, 0]
    return _pick_in_subspace(V[:, :n], prefer)


def generalized_umax(A, B, prefer=None):
    """Maximizer of the Rayleigh quotient ``(v^H A v) / (v^H B v)``, unit norm.

    Uses the Cholesky factor ``B = L L^H`` and the ordinary Hermitian
    eigenproblem of ``L^{-1} A L^{-H}``.

    Parameters
    ----------
    A : (n, n) array
        Hermitian PSD numerator matrix.
    B : (n, n) array
        Hermitian positive definite denominator matrix.
    prefer : (n,) array, optional
        Direction used to break ties when the top generalized eigenvalue is
        degenerate.

    Returns
    -------
    v : (n,) complex array
        Unit-norm maximizer, phase-normalized.
    """
    A = check_hermitian(A, "A")
    B = check_hermitian(B, "B")
    if A.shape != B.shape:
        raise ValueError(f"A and B differ in shape: {A.shape} vs {B.shape}")
    wb = np.linalg.eigvalsh(B)
    if wb[0] <= 1e-12 * max(abs(wb[-1]), np.finfo(float).tiny):
        raise SingularMatrixError(
            f"B is not positive definite: smallest eigenvalue {wb[0]:.3e}",
            wb[0])
    L = np.linalg.cholesky(B)
    Linv = np.linalg.inv(L)
    C = Linv @ A @ Linv.conj().T
    w, Y = eig_hermitian(C)
    n = _top_cluster(w)
    if n == 1:
        v = Linv.conj().T @ Y[:, 0]
        return phase_normalize(v / np.linalg.norm(v))
    # tie: pick inside the degenerate generalized eigenspace
    Q, _ = np.linalg.qr(Linv.conj().T @ Y[:, :n])
    return _pick_in_subspace(Q, prefer)


def nullspace_projector(vectors, dim, rtol=1e-10):
    """Orthogonal projector onto the complement of ``span(vectors)``.

    Returns a :class:`NullspaceProjector`; ``full_span`` is set when the
    vectors span all of ``C^dim`` and the projector is zero.
    """
    vectors = [np.asarray(v, dtype=complex).ravel() for v in vectors]
    for v in vectors:
        if v.shape[0] != dim:
            raise ValueError(f"vector of length {v.shape[0]}, expected {dim}")
    eye = np.eye(dim, dtype=complex)
    if not vectors:
        return NullspaceProjector(eye, False)
    S = np.column_stack(vectors)
    U, s, _ = np.linalg.svd(S, full_matrices=False)
    rank = int(np.sum(s > rtol * max(s[0], np.finfo(float).tiny)))
    U = U[:, :rank]
    P = eye - U @ U.conj().T
    P = 0.5 * (P + P.conj().T)
    full = rank >= dim
    if full:
        P = np.zeros((dim, dim), dtype=complex)
    return NullspaceProjector(P, full)


def psd_sqrt(R):
    """Hermitian PSD square root, negative eigenvalues clamped to zero.

    Eigenvalues at roundoff level (below ``n * eps * max|lambda|``) count as
    zero too; their square roots would otherwise leak ``~sqrt(eps)`` energy
    into the nullspace of ``R``.
    """
    R = check_hermitian_psd(R, "R")
    w, V = np.linalg.eigh(R)
    floor = R.shape[0] * np.finfo(float).eps * (np.max(np.abs(w)) if w.size else 0.0)
    w = np.sqrt(np.where(w > floor, w, 0.0))
    S = (V * w) @ V.conj().T
    return 0.5 * (S + S.conj().T)


# --------------------------------------------------------------------------
# log-barrier interior point for the linearized max-min subproblem

@numba.njit(cache=True)
def _solve_spd(H, g):
    """Gaussian elimination with partial pivoting on a small dense system."""
    n = g.shape[0]
    A = H.copy()
    b = g.copy()
    for i in range(n):
        p = i
        for r in range(i + 1, n):
            if abs(A[r, i]) > abs(A[p, i]):
                p = r
        if A[p, i] == 0.0:
            return b, False
        if p != i:
            for c in range(n):
                A[i, c], A[p, c] = A[p, c], A[i, c]
            b[i], b[p] = b[p], b[i]
        for r in range(i + 1, n):
            f = A[r, i] / A[i, i]
            if f != 0.0:
                for c in range(i, n):
                    A[r, c] -= f * A[i, c]
                b[r] -= f * b[i]
    for i in range(n - 1, -1, -1):
        acc = b[i]
        for c in range(i + 1, n):
            acc -= A[i, c] * b[c]
        b[i] = acc / A[i, i]
    return b, True


@numba.njit(cache=True)
def _matvec(A, x):
    out = np.zeros(A.shape[0])
    for i in range(A.shape[0]):
        acc = 0.0
        for j in range(A.shape[1]):
            acc += A[i, j] * x[j]
        out[i] = acc
    return out


@numba.njit(cache=True)
def _barrier_value(E, cb, Qv, v, tau):
    s = _matvec(E, v) - cb
    s0 = 1.0 - np.sum(v * _matvec(Qv, v))
    if s.min() <= 0.0 or s0 <= 0.0:
        return np.inf
    return -tau * v[-1] - np.sum(np.log(s)) - np.log(s0)


@numba.njit(cache=True)
def _barrier_solve(E, cb, Qv, v, mu, mu_factor, gap_tol, newton_tol, max_newton):
    """Log-barrier path following for ``max t`` s.t. ``E v > cb``, ``v^T Qv v < 1``.

    ``t`` is the last coordinate of ``v``. Returns the final point, the number
    of Newton steps, the final ``mu``, the last Newton decrement and whether
    every centering step converged.
    """
    K, dim = E.shape
    steps = 0
    dec = np.inf
    H = np.empty((dim, dim))
    while True:
        tau = 1.0 / mu
        centered = False
        for _ in range(max_newton):
            s = _matvec(E, v) - cb
            Qx = _matvec(Qv, v)
            s0 = 1.0 - np.sum(v * Qx)
            g0 = (2.0 / s0) * Qx                 # grad of -log(s0)
            grad = g0.copy()
            grad[dim - 1] -= tau
            for i in range(dim):
                for j in range(dim):
                    H[i, j] = g0[i] * g0[j] + (2.0 / s0) * Qv[i, j]
            for k in range(K):
                inv = 1.0 / s[k]
                for i in range(dim):
                    gi = E[k, i] * inv           # grad(s_k) / s_k
                    grad[i] -= gi
                    for j in range(dim):
                        H[i, j] += gi * E[k, j] * inv
            d, ok = _solve_spd(H, -grad)
            if not ok:
                break
            dec = -np.sum(grad * d)
            if dec / 2.0 <= newton_tol:
                centered = True
                break
            # largest step keeping every constraint strictly satisfied
            ds = _matvec(E, d)
            step = 1.0
            for k in range(K):
                if ds[k] < 0.0:
                    step = min(step, -0.99 * s[k] / ds[k])
            a = np.sum(d * _matvec(Qv, d))
            if a > 0.0:
                b = np.sum(d * Qx)
                step = min(step, 0.99 * (-b + np.sqrt(b * b + a * s0)) / a)
            f0 = _barrier_value(E, cb, Qv, v, tau)
            moved = False
            while step > 1e-14:
                f1 = _barrier_value(E, cb, Qv, v + step * d, tau)
                if f1 < f0 and f1 <= f0 - 0.25 * step * dec:
                    moved = True
                    break
                step *= 0.5
            if not moved:
                # no representable decrease left: centered to machine precision
                centered = True
                break
            v = v + step * d
            steps += 1
        if not centered:
            return v, steps, mu, dec, False
        if (K + 1) * mu < gap_tol:
            return v, steps, mu, dec, True
        mu *= mu_factor


def sca_subproblem(z, R_list, beta, M, mu0=1.0, mu_factor=0.2, gap_tol=1e-8,
                   newton_tol=1e-9, max_newton=100):
    """Solve the convexified max-min problem around the point ``z``.

    maximize ``t`` subject to
    ``2 Re{z^H R_k x} - z^H R_k z >= beta_k t`` for every ``k`` and
    ``x^H M x <= 1``.

    The solver is a log-barrier interior point method on ``(Re x, Im x, t)``.
    ``t`` is internally rescaled by its value at ``z`` so the stopping rule
    ``(K + 1) * mu < gap_tol`` is a relative gap.

    Returns
    -------
    SocpSolution
        ``x``, the achieved ``t`` (recomputed from ``x``), the final barrier
        gap and the total number of Newton steps. The returned point is never
        worse than ``z`` itself.
    """
    z = np.asarray(z, dtype=complex).ravel()
    M = check_hermitian(M, "M")
    R = np.array([check_hermitian(Rk, "R_k") for Rk in R_list])
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape[0] != R.shape[0]:
        raise ValueError("R_list and beta must have the same length")
    if np.any(beta <= 0):
        raise ValueError("beta entries must be positive")
    if np.real(z.conj() @ M @ z) > 1 + 1e-9:
        raise ValueError("expansion point z violates x^H M x <= 1")
    return _sca_subproblem(z, R, beta, M, mu0, mu_factor, gap_tol, newton_tol,
                           max_newton)


def _sca_subproblem(z, R, beta, M, mu0=1.0, mu_factor=0.2, gap_tol=1e-8,
                    newton_tol=1e-9, max_newton=100):
    """:func:`sca_subproblem` on already validated arrays."""
    n = z.shape[0]
    K = R.shape[0]
    Rz = R @ z                                   # (K, n)
    c = np.real(np.einsum("i,ki->k", z.conj(), Rz))
    A = 2.0 * np.hstack([Rz.real, Rz.imag])      # linear part in y

    def t_of(y):
        return float(np.min((A @ y - c) / beta))

    y_z = np.concatenate([z.real, z.imag])
    t_z = t_of(y_z)
    scale = max(abs(t_z), np.max(c / beta), np.finfo(float).tiny)
    Ab = A / scale                              # constraints in scaled t
    cb = c / scale

    # strictly feasible start: shrink z, put t below the tightest constraint
    y = 0.99 * y_z
    tt = float(np.min((Ab @ y - cb) / beta)) - 1.0
    v0 = np.append(y, tt)                        # v = [Re x, Im x, t]
    E = np.ascontiguousarray(np.hstack([Ab, -beta[:, None]]))
    Qv = np.zeros((2 * n + 1, 2 * n + 1))
    Qv[:n, :n] = Qv[n:2 * n, n:2 * n] = M.real
    Qv[:n, n:2 * n] = -M.imag
    Qv[n:2 * n, :n] = M.imag
    v, steps, mu, dec, ok = _barrier_solve(E, np.ascontiguousarray(cb), Qv, v0,
                                           mu0, mu_factor, gap_tol, newton_tol,
                                           max_newton)
    if not ok:
        raise ConvergenceError("barrier centering did not converge", dec)

    y = v[:-1]
    x = y[:n] + 1j * y[n:]
    # keep the best feasible point among the interior solution, its radial
    # projection onto the power constraint, and the expansion point itself
    best_x, best_t = z, t_z
    cands = [x]
    q = float(np.real(x.conj() @ M @ x))
    if q > 0:
        cands.append(x / np.sqrt(q))
    for cand in cands:
        yc = np.concatenate([cand.real, cand.imag])
        tc = t_of(yc)
        if tc > best_t and np.real(cand.conj() @ M @ cand) <= 1 + 1e-12:
            best_x, best_t = cand, tc
    return SocpSolution(best_x, best_t, (K + 1) * mu * scale, steps)
