"""RF beamsteering codebooks, i.i.d. quantization codebooks and skewing.

Codebooks are immutable; their entries are stored as rows.
"""

import csv
import functools
import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_hermitian_psd, check_unit_vector
from .channel import make_rng, steering_matrix
from .numerics import psd_sqrt, top_eigenvector

RF_KINDS = ("uniform-angle", "dft")


@dataclass(frozen=True)
class RfCodebook:
    entries: np.ndarray     # (Q, M), each row a steering vector
    angles: np.ndarray
    bits: int
    kind: str = "uniform-angle"

    def __len__(self):
        return self.entries.shape[0]


@dataclass(frozen=True)
class QuantCodebook:
    entries: np.ndarray     # (2**bits, K), unit-norm rows
    bits: int

    def __len__(self):
        return self.entries.shape[0]


@dataclass(frozen=True)
class SkewedCodebook:
    entries: np.ndarray
    bits: int
    fallback: np.ndarray    # True where the degenerate-nullspace fallback fired

    def __len__(self):
        return self.entries.shape[0]


def rf_angles(bits, kind="uniform-angle"):
    """Codebook angles for ``Q = 2**bits`` beams.

    ``uniform-angle`` uses ``theta_q = pi q / Q`` for ``q = 1..Q``; ``dft``
    uses a uniform grid in ``cos(theta)`` (``-1 + 2 q / Q``, ``q = 0..Q-1``),
    which gives the DFT columns when ``Q = M``.
    """
    if bits < 1:
        raise ValueError("RF codebook needs at least one bit")
    Q = 2 ** int(bits)
    if kind == "uniform-angle":
        return np.pi * np.arange(1, Q + 1) / Q
    if kind == "dft":
        return np.arccos(np.clip(-1.0 + 2.0 * np.arange(Q) / Q, -1.0, 1.0))
    raise ValueError(f"unknown RF codebook kind {kind!r}; expected one of {RF_KINDS}")


def build_rf_codebook(geom, bits, kind="uniform-angle"):
    M = geom if isinstance(geom, int) else geom.n_antennas
    angles = rf_angles(bits, kind)
    return RfCodebook(steering_matrix(M, angles).T.copy(), angles, int(bits), kind)


def _distances_from_gram(G):
    D = np.sqrt(np.clip(1.0 - np.abs(G) ** 2, 0.0, None))
    np.fill_diagonal(D, np.inf)
    return D


def chordal_distances(C):
    """Pairwise chordal distances ``sqrt(1 - |c_i^H c_j|^2)`` (diagonal set to inf)."""
    return _distances_from_gram(C.conj() @ C.T)


def min_chordal_distance(C):
    if C.shape[0] < 2:
        return 1.0
    return float(np.min(chordal_distances(C)))


def _random_unit_rows(rng, n, dim):
    X = rng.standard_normal((n, dim)) + 1j * rng.standard_normal((n, dim))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def refine_packing(C, movable, max_iter=200, rtol=1e-6, step=0.5):
    """Improve the minimum pairwise chordal distance of codebook ``C``.

    Each iteration partitions the codebook by nearest neighbour, moves every
    movable codeword away from the neighbours it is closest to and keeps the
    update only if the minimum distance does not shrink; otherwise the step
    is halved. Rows outside ``movable`` stay fixed.
    """
    C = C.copy()
    movable = np.asarray(movable)
    if C.shape[0] < 2 or movable.size == 0:
        return C
    G = C.conj() @ C.T
    D = _distances_from_gram(G)
    best = float(D.min())
    for _ in range(max_iter):
        trial = C.copy()
        Dm = D[movable]
        # neighbours within a small margin of the nearest one
        near = Dm <= Dm.min(axis=1, keepdims=True) * (1 + 1e-3) + 1e-12
        push = (near * G[movable].conj()) @ C
        V = C[movable] - step * push
        trial[movable] = V / np.linalg.norm(V, axis=1, keepdims=True)
        Gt = trial.conj() @ trial.T
        Dt = _distances_from_gram(Gt)
        d = float(Dt.min())
        if d >= best:
            gain = d - best
            C, G, D, best = trial, Gt, Dt, d
            if gain <= rtol * max(best, 1e-12):
                step *= 0.5
        else:
            step *= 0.5
        if step < 1e-6:
            break
    return C


@functools.lru_cache(maxsize=64)
def _nested_codebook(dim, bits, seed, refine):
    """Codebook of size ``2**bits`` extending the one of size ``2**(bits - 1)``."""
    prev = (np.empty((0, dim), dtype=complex) if bits == 0
            else _nested_codebook(dim, bits - 1, seed, refine))
    if bits == 0:
        return prev
    n_new = 2 ** bits - prev.shape[0]
    rng = make_rng(seed, dim, bits, 0xC0DE)
    C = np.vstack([prev, _random_unit_rows(rng, n_new, dim)])
    if refine:
        C = refine_packing(C, np.arange(prev.shape[0], C.shape[0]))
    C.setflags(write=False)
    return C


def build_iid_codebook(dim, bits, seed=0, refine=True):
    """Quantization codebook of ``2**bits`` unit vectors in ``C^dim``.

    Codebooks are nested: the codebook for ``bits`` contains the one for
    ``bits - 1`` (same ``seed``), so larger codebooks never quantize worse.
    With ``refine`` the newly added codewords are spread out by
    :func:`refine_packing`; without it the codebook is plain random vector
    quantization (RVQ).
    """
    if bits < 1:
        raise ValueError("quantization codebook needs at least one bit")
    C = _nested_codebook(int(dim), int(bits), int(seed), bool(refine))
    return QuantCodebook(C, int(bits))


def skew(base, R_eff):
    """Adapt ``base`` to the statistics ``R_eff``: ``R^{1/2} c_i / ||R^{1/2} c_i||``.

    Codewords mapped (numerically) to zero are replaced by the dominant
    eigenvector of ``R_eff`` and flagged in ``fallback``.
    """
    R_eff = check_hermitian_psd(R_eff, "R_eff")
    S = psd_sqrt(R_eff)
    V = base.entries @ S.T              # rows are (S c_i)^T
    norms = np.linalg.norm(V, axis=1)
    fallback = norms < 1e-12
    if np.any(fallback):
        u = top_eigenvector(R_eff)
        V[fallback] = u
        norms[fallback] = 1.0
    return SkewedCodebook(V / norms[:, None], base.bits, fallback)


def quantize(direction, codebook):
    """Index and codeword maximizing ``|direction^H c_i|^2`` (lowest index on ties)."""
    entries = codebook.entries if hasattr(codebook, "entries") else np.asarray(codebook)
    if entries.shape[0] == 0:
        raise ValueError("cannot quantize with an empty codebook")
    direction = check_unit_vector(direction, "direction")
    gains = np.abs(entries @ direction.conj()) ** 2
    idx = int(np.argmax(gains))
    return idx, entries[idx]


def quantization_error(direction, codeword):
    return 1.0 - abs(np.vdot(direction, codeword)) ** 2


def write_codebook_csv(path, entries):
    """One codeword per row, entries interleaved as ``re0, im0, re1, im1, ...``."""
    entries = np.asarray(entries.entries if hasattr(entries, "entries") else entries)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in entries:
            w.writerow([repr(float(v)) for z in row for v in (z.real, z.imag)])


def read_codebook_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec:
                continue
            vals = np.array([float(v) for v in rec])
            if vals.size % 2:
                raise ValueError(f"{path}: odd number of real/imag entries")
            rows.append(vals[0::2] + 1j * vals[1::2])
    entries = np.array(rows)
    bits = int(round(math.log2(entries.shape[0]))) if entries.shape[0] else 0
    return QuantCodebook(entries, bits)
