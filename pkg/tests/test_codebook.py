import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmhybrid.channel import Scenario, ScenarioSpec, dft_angles, make_rng, steering_matrix
from mmhybrid.codebook import (
    QuantCodebook,
    build_iid_codebook,
    build_rf_codebook,
    min_chordal_distance,
    quantization_error,
    quantize,
    read_codebook_csv,
    refine_packing,
    skew,
    write_codebook_csv,
)
from mmhybrid.numerics import psd_sqrt
from mmhybrid.precoding import select_beams


def _unit_rows(rng, n, dim):
    X = rng.standard_normal((n, dim)) + 1j * rng.standard_normal((n, dim))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


# -- RF codebook ----------------------------------------------------------------

def test_rf_one_bit_two_antennas():
    cb = build_rf_codebook(2, 1)
    np.testing.assert_allclose(cb.angles, [np.pi / 2, np.pi])
    np.testing.assert_allclose(cb.entries[0], np.array([1, 1]) / math.sqrt(2), atol=1e-15)
    np.testing.assert_allclose(cb.entries[1], np.array([1, -1]) / math.sqrt(2), atol=1e-15)


def test_rf_six_bits_has_64_entries():
    cb = build_rf_codebook(64, 6)
    assert len(cb) == 64 and cb.bits == 6


@pytest.mark.parametrize("bits", [1, 3, 6, 8])
def test_rf_entries_distinct_and_constant_modulus(bits):
    cb = build_rf_codebook(16, bits)
    assert np.unique(cb.angles).size == 2 ** bits
    np.testing.assert_allclose(np.abs(cb.entries), 1 / 4, rtol=1e-12)


def test_rf_dft_variant_is_the_dft_basis():
    cb = build_rf_codebook(16, 4, "dft")
    np.testing.assert_allclose(cb.entries.conj() @ cb.entries.T, np.eye(16), atol=1e-12)
    np.testing.assert_allclose(cb.angles, dft_angles(16))


def test_rf_rejects_bad_arguments():
    with pytest.raises(ValueError):
        build_rf_codebook(8, 0)
    with pytest.raises(ValueError, match="unknown RF codebook"):
        build_rf_codebook(8, 2, "hex")


def test_dft_codebook_selects_strongest_vcr_path():
    M = 32
    scenario = Scenario(ScenarioSpec("non-overlapped-vcr", M, 4, 3, seed=8))
    cb = build_rf_codebook(M, 5, "dft")
    rng = make_rng(8)
    for _ in range(20):
        draw = scenario.draw(rng)
        beams = select_beams(draw.H, cb)
        for k, (a, g) in enumerate(zip(draw.paths.aods, draw.paths.gains)):
            strongest = a[np.argmax(np.abs(g))]
            np.testing.assert_allclose(beams.F[:, k], steering_matrix(M, strongest)[:, 0],
                                       atol=1e-12)


# -- i.i.d. codebook --------------------------------------------------------------

def test_one_bit_pair_is_near_orthogonal():
    C = build_iid_codebook(2, 1, seed=3).entries
    assert abs(np.vdot(C[0], C[1])) <= 0.05


def test_two_bits_four_users():
    cb = build_iid_codebook(4, 2)
    assert cb.entries.shape == (4, 4)
    np.testing.assert_allclose(np.linalg.norm(cb.entries, axis=1), 1, atol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_refinement_never_shrinks_min_distance(seed):
    rng = np.random.default_rng(seed)
    C = _unit_rows(rng, 8, 3)
    refined = refine_packing(C, np.arange(8))
    assert min_chordal_distance(refined) >= min_chordal_distance(C)
    np.testing.assert_allclose(np.linalg.norm(refined, axis=1), 1, atol=1e-12)


def test_refinement_keeps_fixed_rows():
    rng = np.random.default_rng(1)
    C = _unit_rows(rng, 6, 3)
    refined = refine_packing(C, np.arange(3, 6))
    np.testing.assert_array_equal(refined[:3], C[:3])


def test_codebooks_are_nested_and_deterministic():
    small = build_iid_codebook(4, 3, seed=2).entries
    large = build_iid_codebook(4, 5, seed=2).entries
    np.testing.assert_array_equal(large[:8], small)
    np.testing.assert_array_equal(build_iid_codebook(4, 5, seed=2).entries, large)
    assert not np.array_equal(build_iid_codebook(4, 3, seed=3).entries, small)


def test_refined_codebook_packs_better_than_rvq():
    refined = build_iid_codebook(4, 4, seed=0, refine=True).entries
    rvq = build_iid_codebook(4, 4, seed=0, refine=False).entries
    assert min_chordal_distance(refined) > min_chordal_distance(rvq)


def test_mean_error_non_increasing_in_bits():
    K = 4
    rng = np.random.default_rng(4)
    S = psd_sqrt(np.array([[2, 0.8, 0.3, 0], [0.8, 1.5, 0.2, 0.1],
                           [0.3, 0.2, 1, 0.4], [0, 0.1, 0.4, 0.5]], dtype=complex))
    g = rng.standard_normal((1000, K)) + 1j * rng.standard_normal((1000, K))
    H = g @ S.T
    H /= np.linalg.norm(H, axis=1, keepdims=True)
    errors = []
    for bits in range(1, 7):
        C = build_iid_codebook(K, bits, seed=1).entries
        errors.append(np.mean(1 - np.max(np.abs(H.conj() @ C.T) ** 2, axis=1)))
    assert np.all(np.diff(errors) <= 0)


def test_skewed_codebook_beats_base_on_low_rank_channels():
    K, rng = 4, np.random.default_rng(6)
    X = rng.standard_normal((K, 2)) + 1j * rng.standard_normal((K, 2))
    R = X @ X.conj().T                           # rank 2
    base = build_iid_codebook(K, 3, seed=0)
    skewed = skew(base, R)
    g = rng.standard_normal((10_000, K)) + 1j * rng.standard_normal((10_000, K))
    H = g @ psd_sqrt(R).T
    H /= np.linalg.norm(H, axis=1, keepdims=True)

    def mean_error(C):
        return np.mean(1 - np.max(np.abs(H.conj() @ C.T) ** 2, axis=1))

    assert mean_error(skewed.entries) <= mean_error(base.entries)


# -- skew -----------------------------------------------------------------------

def test_skew_identity_is_noop():
    base = build_iid_codebook(3, 2)
    np.testing.assert_allclose(skew(base, np.eye(3)).entries, base.entries, atol=1e-12)


def test_skew_projects_onto_support():
    base = QuantCodebook(np.array([[1.0, 1.0]]) / math.sqrt(2), 0)
    out = skew(base, np.diag([4.0, 0.0]))
    np.testing.assert_allclose(out.entries[0], [1.0, 0.0], atol=1e-12)
    assert not out.fallback.any()


def test_skew_range_containment(rng):
    X = rng.standard_normal((5, 2)) + 1j * rng.standard_normal((5, 2))
    R = X @ X.conj().T
    out = skew(build_iid_codebook(5, 4), R)
    U = np.linalg.svd(R)[0][:, :2]
    residual = out.entries.T - U @ (U.conj().T @ out.entries.T)
    assert np.max(np.abs(residual)) <= 1e-9
    np.testing.assert_allclose(np.linalg.norm(out.entries, axis=1), 1, atol=1e-12)


def test_skew_fallback_on_nullspace_codeword():
    base = QuantCodebook(np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex), 1)
    out = skew(base, np.diag([3.0, 0.0]))
    np.testing.assert_array_equal(out.fallback, [True, False])
    np.testing.assert_allclose(out.entries[0], [1.0, 0.0], atol=1e-12)


# -- quantize -------------------------------------------------------------------

def test_quantize_exact_codeword():
    cb = build_iid_codebook(3, 3)
    idx, c = quantize(cb.entries[5], cb)
    assert idx == 5
    assert abs(np.vdot(c, cb.entries[5])) ** 2 == pytest.approx(1.0)


def test_quantize_standard_basis():
    idx, c = quantize(np.array([0.8, 0.6]), np.eye(2))
    assert idx == 0
    assert 1 - quantization_error(np.array([0.8, 0.6]), c) == pytest.approx(0.64)


def test_quantize_ties_take_lowest_index():
    idx, _ = quantize(np.array([1.0, 1.0]) / math.sqrt(2), np.eye(2))
    assert idx == 0


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), dim=st.integers(2, 6), bits=st.integers(1, 5))
def test_quantize_is_the_argmax(seed, dim, bits):
    rng = np.random.default_rng(seed)
    C = _unit_rows(rng, 2 ** bits, dim)
    h = _unit_rows(rng, 1, dim)[0]
    idx, c = quantize(h, C)
    gains = np.abs(C @ h.conj()) ** 2
    assert np.all(gains[idx] >= gains)


def test_quantize_rejects_bad_input():
    with pytest.raises(ValueError, match="empty codebook"):
        quantize(np.array([1.0, 0.0]), np.empty((0, 2)))
    with pytest.raises(ValueError, match="unit norm"):
        quantize(np.array([1.0, 1.0]), np.eye(2))


def test_codebook_csv_round_trip(tmp_path):
    cb = build_iid_codebook(4, 3, seed=9)
    path = tmp_path / "cb.csv"
    write_codebook_csv(path, cb)
    back = read_codebook_csv(path)
    np.testing.assert_array_equal(back.entries, cb.entries)
    assert back.bits == 3
    first = path.read_text().splitlines()[0].split(",")
    assert len(first) == 8
    assert float(first[0]) == cb.entries[0, 0].real and float(first[1]) == cb.entries[0, 0].imag


def test_codebook_csv_rejects_odd_rows(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1.0,0.0,0.5\n")
    with pytest.raises(ValueError, match="odd number"):
        read_codebook_csv(path)
