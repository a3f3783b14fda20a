import os
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmhybrid._validation import NotHermitianError, SingularMatrixError
from mmhybrid.numerics import (
    eig_hermitian,
    generalized_umax,
    nullspace_projector,
    phase_normalize,
    psd_sqrt,
    sca_subproblem,
    top_eigenvector,
)

sys.path.insert(0, os.path.dirname(__file__))
from oracles import (  # noqa: E402
    best_sampled_rayleigh,
    colinear,
    jacobi_eigh,
    random_hermitian,
    random_psd,
    random_unit_vectors,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _max_row_sum(A):
    return np.max(np.sum(np.abs(A), axis=1))


# -- eig_hermitian ----------------------------------------------------------

def test_eig_identity():
    w, V = eig_hermitian(np.eye(3))
    np.testing.assert_allclose(w, 1.0)
    np.testing.assert_allclose(V.conj().T @ V, np.eye(3), atol=1e-12)


def test_eig_diagonal():
    w, V = eig_hermitian(np.diag([2.0, 1.0]))
    np.testing.assert_allclose(w, [2.0, 1.0])
    np.testing.assert_allclose(np.abs(V), np.eye(2), atol=1e-12)


def test_eig_random_reconstruction(rng):
    A = random_hermitian(rng, 4)
    w, V = eig_hermitian(A)
    np.testing.assert_allclose(V @ np.diag(w) @ V.conj().T, A, atol=1e-8)


@pytest.mark.parametrize("n", [2, 5, 9])
def test_eig_matches_jacobi_oracle(rng, n):
    A = random_hermitian(rng, n)
    w, V = eig_hermitian(A)
    w_ref, V_ref = jacobi_eigh(A)
    np.testing.assert_allclose(w, w_ref, atol=1e-10)
    for i in range(n):          # distinct eigenvalues: vectors agree up to phase
        assert colinear(V[:, i], V_ref[:, i]) < 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=seeds, n=st.integers(1, 8))
def test_eig_pairs_and_orthonormality(seed, n):
    A = random_hermitian(np.random.default_rng(seed), n)
    w, V = eig_hermitian(A)
    assert np.all(np.diff(w) <= 0)
    for i in range(n):
        assert np.linalg.norm(A @ V[:, i] - w[i] * V[:, i]) <= 1e-8 * _max_row_sum(A)
    np.testing.assert_allclose(V.conj().T @ V, np.eye(n), atol=1e-8)
    assert abs(np.sum(w) - np.trace(A).real) <= 1e-8 * max(1.0, np.sum(np.abs(w)))


def test_eig_rejects_non_hermitian():
    A = np.array([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(NotHermitianError, match="max \\|A - A\\^H\\| = 2"):
        eig_hermitian(A)


def test_eigenvectors_phase_normalized(rng):
    _, V = eig_hermitian(random_hermitian(rng, 5))
    for v in V.T:
        first = v[np.flatnonzero(np.abs(v) > 1e-12)[0]]
        assert first.imag == 0 and first.real > 0


def test_phase_normalize_skips_tiny_entries():
    v = phase_normalize(np.array([1e-14, 1j, 1.0]))
    assert v[1] == pytest.approx(1.0)
    np.testing.assert_array_equal(phase_normalize(np.zeros(3)), np.zeros(3))


# -- generalized_umax ---------------------------------------------------------

def test_umax_diagonal():
    v = generalized_umax(np.diag([2.0, 1.0]), np.eye(2))
    np.testing.assert_allclose(v, [1.0, 0.0], atol=1e-12)


def test_umax_degenerate_tie_is_deterministic():
    v = generalized_umax(np.eye(2), np.eye(2))
    np.testing.assert_allclose(v, [1.0, 0.0])
    v = generalized_umax(np.eye(3), np.eye(3), prefer=np.array([0, 0, 1.0]))
    np.testing.assert_allclose(v, [0.0, 0.0, 1.0])


def test_top_eigenvector_tie_uses_first_basis_vector():
    A = np.diag([1.0, 3.0, 3.0])
    np.testing.assert_allclose(top_eigenvector(A), [0.0, 1.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_umax_beats_random_sampling(seed):
    rng = np.random.default_rng(seed)
    A, B = random_psd(rng, 3), random_psd(rng, 3) + 0.1 * np.eye(3)
    v = generalized_umax(A, B)
    q = np.real(v.conj() @ A @ v) / np.real(v.conj() @ B @ v)
    assert q >= best_sampled_rayleigh(A, B, rng) - 1e-9
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, scale=st.floats(1e-3, 1e3))
def test_umax_scale_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    A, B = random_psd(rng, 4), random_psd(rng, 4) + np.eye(4)
    assert colinear(generalized_umax(A, B), generalized_umax(scale * A, B)) < 1e-8


def test_umax_singular_denominator():
    with pytest.raises(SingularMatrixError, match="smallest eigenvalue"):
        generalized_umax(np.eye(2), np.diag([1.0, 0.0]))


def test_umax_shape_mismatch():
    with pytest.raises(ValueError, match="differ in shape"):
        generalized_umax(np.eye(2), np.eye(3))


# -- nullspace_projector --------------------------------------------------------

def test_projector_single_vector():
    P, full = nullspace_projector([np.array([1.0, 0.0])], 2)
    np.testing.assert_allclose(P, np.diag([0.0, 1.0]), atol=1e-12)
    assert not full


def test_projector_empty_span():
    P, full = nullspace_projector([], 3)
    np.testing.assert_array_equal(P, np.eye(3))
    assert not full


def test_projector_full_span():
    P, full = nullspace_projector([np.array([1.0, 0]), np.array([0, 1.0])], 2)
    np.testing.assert_array_equal(P, np.zeros((2, 2)))
    assert full


@settings(max_examples=25, deadline=None)
@given(seed=seeds, dim=st.integers(2, 7), count=st.integers(1, 6))
def test_projector_properties(seed, dim, count):
    rng = np.random.default_rng(seed)
    vecs = list(random_unit_vectors(rng, min(count, dim - 1), dim))
    P, full = nullspace_projector(vecs, dim)
    assert not full
    np.testing.assert_allclose(P, P.conj().T, atol=1e-12)
    np.testing.assert_allclose(P @ P, P, atol=1e-10)
    for v in vecs:
        assert np.linalg.norm(P @ v) <= 1e-10


def test_projector_rejects_wrong_length():
    with pytest.raises(ValueError, match="expected 3"):
        nullspace_projector([np.ones(2)], 3)


# -- psd_sqrt ---------------------------------------------------------------------

def test_sqrt_identity_and_diagonal():
    np.testing.assert_allclose(psd_sqrt(np.eye(3)), np.eye(3), atol=1e-12)
    np.testing.assert_allclose(psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, n=st.integers(1, 8), rank=st.integers(1, 8))
def test_sqrt_reconstruction_and_commutation(seed, n, rank):
    R = random_psd(np.random.default_rng(seed), n, min(rank, n))
    S = psd_sqrt(R)
    scale = np.max(np.abs(R))
    assert np.max(np.abs(S @ S - R)) <= 1e-8 * scale
    assert np.max(np.abs(S @ R - R @ S)) <= 1e-8 * scale
    np.testing.assert_allclose(S, S.conj().T, atol=1e-12)


def test_sqrt_rejects_indefinite():
    with pytest.raises(ValueError, match="positive semidefinite"):
        psd_sqrt(np.diag([1.0, -1.0]))


# -- sca_subproblem ---------------------------------------------------------------

def test_subproblem_single_constraint():
    sol = sca_subproblem(np.array([1.0, 0.0]), [np.eye(2)], [1.0], np.eye(2))
    assert sol.t == pytest.approx(1.0, abs=1e-7)
    assert colinear(sol.x, [1.0, 0.0]) < 1e-7


def test_subproblem_symmetric_instance():
    z = np.array([1.0, 1.0]) / np.sqrt(2)
    R = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
    sol = sca_subproblem(z, R, [1.0, 1.0], np.eye(2))
    assert sol.t == pytest.approx(0.5, abs=1e-7)
    np.testing.assert_allclose(sol.x, z, atol=1e-6)


def _random_subproblem(rng, n, K):
    R = np.array([random_psd(rng, n, rank=rng.integers(1, n + 1)) for _ in range(K)])
    beta = rng.uniform(0.5, 3.0, K)
    F = np.exp(2j * np.pi * rng.random((4 * n, n))) / np.sqrt(4 * n)
    M = F.conj().T @ F
    z = random_unit_vectors(rng, 1, n)[0]
    z = rng.uniform(0.3, 1.0) * z / np.sqrt(np.real(z.conj() @ M @ z))
    return z, R, beta, M


def _t_of(x, z, R, beta):
    lin = 2 * np.real(np.einsum("i,kij,...j->...k", z.conj(), R, x))
    c = np.real(np.einsum("i,kij,j->k", z.conj(), R, z))
    return np.min((lin - c) / beta, axis=-1)


@pytest.mark.parametrize("seed", range(3))
def test_subproblem_beats_boundary_sampling(seed):
    rng = np.random.default_rng(seed)
    z, R, beta, M = _random_subproblem(rng, 3, 3)
    sol = sca_subproblem(z, R, beta, M)
    U = random_unit_vectors(rng, 1_000_000, 3)
    w, V = np.linalg.eigh(M)
    X = U @ (V / np.sqrt(w)).T                 # rows on x^H M x = 1
    assert sol.t >= _t_of(X, z, R, beta).max() - 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_subproblem_matches_conic_solver(seed):
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(100 + seed)
    n, K = int(rng.integers(2, 6)), int(rng.integers(1, 6))
    z, R, beta, M = _random_subproblem(rng, n, K)
    sol = sca_subproblem(z, R, beta, M)

    # real coordinates y = [Re x, Im x]: x^H M x = y^T Q y
    Q = np.block([[M.real, -M.imag], [M.imag, M.real]])
    Lq = np.linalg.cholesky(Q)
    y = cp.Variable(2 * n)
    t = cp.Variable()
    cons = [cp.sum_squares(Lq.T @ y) <= 1]
    for k in range(K):
        a = R[k] @ z
        lin = 2 * np.concatenate([a.real, a.imag])
        cons.append(lin @ y - np.real(z.conj() @ a) >= beta[k] * t)
    cp.Problem(cp.Maximize(t), cons).solve(solver="CLARABEL")
    assert sol.t == pytest.approx(t.value, rel=1e-6, abs=1e-7)
    assert np.real(sol.x.conj() @ M @ sol.x) <= 1 + 1e-9
    assert sol.t >= _t_of(z, z, R, beta) - 1e-9


def test_subproblem_rejects_infeasible_start():
    with pytest.raises(ValueError, match="violates"):
        sca_subproblem(np.array([2.0, 0.0]), [np.eye(2)], [1.0], np.eye(2))


def test_subproblem_rejects_bad_beta():
    with pytest.raises(ValueError, match="same length"):
        sca_subproblem(np.array([1.0, 0.0]), [np.eye(2)], [1.0, 2.0], np.eye(2))
    with pytest.raises(ValueError, match="positive"):
        sca_subproblem(np.array([1.0, 0.0]), [np.eye(2)], [0.0], np.eye(2))
