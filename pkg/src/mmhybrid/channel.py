"""Sparse ray-based mmWave channels on a half-wavelength ULA.

Two families of scenarios are supported: geometric channels with AoDs drawn
uniformly in ``[0, pi]``, and virtual channel representation (VCR) channels
whose steering vectors are DFT columns, with users' path sets either
disjoint, shared, or partially shared.
"""

import math
from dataclasses import dataclass, field

import numpy as np

SCENARIO_KINDS = (
    "uniform-iid-aods",
    "non-overlapped-vcr",
    "fully-overlapped-vcr",
    "partial-overlap-vcr",
)


def make_rng(*seed):
    """Seeded, platform-portable generator (PCG64 keyed by ``seed``)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(seed))))


def complex_normal(rng, size):
    """Circularly-symmetric CN(0, 1) draws via Box-Muller on ``rng.random``."""
    u = rng.random((2,) + tuple(np.atleast_1d(size)))
    radius = np.sqrt(-np.log1p(-u[0]))      # |g|^2 ~ Exp(1)
    return radius * np.exp(2j * np.pi * u[1])


@dataclass(frozen=True)
class ArrayGeometry:
    n_antennas: int
    spacing_over_wavelength: float = 0.5

    def __post_init__(self):
        if self.n_antennas < 1:
            raise ValueError("n_antennas must be >= 1")
        if self.spacing_over_wavelength != 0.5:
            raise ValueError("only half-wavelength spacing is supported")


def _check_angles(theta):
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0) or np.any(theta > np.pi) or not np.all(np.isfinite(theta)):
        raise ValueError("AoDs must lie in [0, pi]")
    return theta


def steering_vector(geom, theta):
    """Unit-norm ULA response ``a(theta)``; entry m is ``exp(i pi m cos theta)/sqrt(M)``."""
    M = geom.n_antennas if isinstance(geom, ArrayGeometry) else int(geom)
    theta = float(_check_angles(theta))
    m = np.arange(M)
    return np.exp(1j * np.pi * m * math.cos(theta)) / math.sqrt(M)


def steering_matrix(n_antennas, thetas):
    """Columns ``a(theta_l)`` for every angle in ``thetas``; shape (M, len(thetas))."""
    thetas = _check_angles(np.atleast_1d(thetas))
    m = np.arange(n_antennas)[:, None]
    return np.exp(1j * np.pi * m * np.cos(thetas)[None, :]) / math.sqrt(n_antennas)


def dft_angles(n_antennas):
    """AoDs whose steering vectors are the M columns of the (shifted) DFT matrix.

    Column ``n`` corresponds to ``cos(theta) = -1 + 2 n / M``.
    """
    cosines = -1.0 + 2.0 * np.arange(n_antennas) / n_antennas
    return np.arccos(np.clip(cosines, -1.0, 1.0))


@dataclass(frozen=True)
class PathSet:
    """Per-user AoDs (radians) and, optionally, one draw of path gains."""

    aods: tuple
    gains: tuple = None

    def __post_init__(self):
        aods = tuple(_check_angles(np.atleast_1d(a)).copy() for a in self.aods)
        if any(a.size < 1 for a in aods):
            raise ValueError("every user needs at least one path")
        object.__setattr__(self, "aods", aods)
        if self.gains is not None:
            gains = tuple(np.asarray(g, dtype=complex).ravel() for g in self.gains)
            if [g.size for g in gains] != [a.size for a in aods]:
                raise ValueError("gains must match the AoDs user by user")
            object.__setattr__(self, "gains", gains)

    @property
    def n_users(self):
        return len(self.aods)

    def n_paths(self, k):
        return self.aods[k].size


@dataclass(frozen=True)
class ChannelRealization:
    """Channel vectors ``h_k`` stacked as rows of ``H`` (shape K x M)."""

    H: np.ndarray
    paths: PathSet

    @property
    def n_users(self):
        return self.H.shape[0]


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    n_antennas: int
    n_users: int
    n_paths: int
    overlap: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}; "
                             f"expected one of {SCENARIO_KINDS}")
        M, K, L = self.n_antennas, self.n_users, self.n_paths
        if min(M, K, L) < 1:
            raise ValueError("n_antennas, n_users and n_paths must be >= 1")
        if K > M:
            raise ValueError(f"n_users={K} exceeds n_antennas={M}")
        if not 0.0 <= self.overlap <= 1.0:
            raise ValueError("overlap must lie in [0, 1]")
        if self.kind == "non-overlapped-vcr" and K * L > M:
            raise ValueError(f"non-overlapped VCR needs K*L <= M, got {K * L} > {M}")
        if self.kind == "fully-overlapped-vcr" and L > M:
            raise ValueError(f"fully-overlapped VCR needs L <= M, got {L} > {M}")
        if self.kind == "partial-overlap-vcr":
            shared = math.ceil(self.overlap * L)
            if shared + K * (L - shared) > M:
                raise ValueError("partial overlap needs more DFT columns than M")

    @property
    def geometry(self):
        return ArrayGeometry(self.n_antennas)

    @property
    def is_vcr(self):
        return self.kind != "uniform-iid-aods"


def draw_aods(spec, rng):
    """Draw the per-user AoDs of a scenario (held fixed across fading draws)."""
    M, K, L = spec.n_antennas, spec.n_users, spec.n_paths
    if spec.kind == "uniform-iid-aods":
        return PathSet(tuple(rng.random(L) * np.pi for _ in range(K)))
    angles = dft_angles(M)
    perm = rng.permutation(M)
    if spec.kind == "non-overlapped-vcr":
        cols = [perm[k * L:(k + 1) * L] for k in range(K)]
    elif spec.kind == "fully-overlapped-vcr":
        cols = [perm[:L]] * K
    else:
        shared = math.ceil(spec.overlap * L)
        own = L - shared
        cols = [np.concatenate([perm[:shared],
                                perm[shared + k * own:shared + (k + 1) * own]])
                for k in range(K)]
    return PathSet(tuple(angles[c] for c in cols))


@dataclass
class Scenario:
    """A scenario instance: AoDs fixed at construction, gains redrawn per call.

    Parameters
    ----------
    spec : ScenarioSpec
    rng : numpy.random.Generator, optional
        Stream used for the AoDs; defaults to one keyed by ``spec.seed``.
    """

    spec: ScenarioSpec
    rng: np.random.Generator = None
    paths: PathSet = field(init=False)

    def __post_init__(self):
        rng = self.rng if self.rng is not None else make_rng(self.spec.seed, 0xA0D)
        self.paths = draw_aods(self.spec, rng)
        M = self.spec.n_antennas
        self._steering = [steering_matrix(M, a) for a in self.paths.aods]

    def draw(self, rng):
        return draw_channel(self.paths, self.spec.geometry, rng, self._steering)

    def covariances(self):
        return np.array([covariance(self.paths, self.spec.geometry, k)
                         for k in range(self.spec.n_users)])


def draw_channel(paths, geom, rng, steering=None):
    """One fading draw ``h_k = sqrt(M / L_k) A_k g_k`` with i.i.d. CN(0, 1) gains."""
    M = geom.n_antennas
    if steering is None:
        steering = [steering_matrix(M, a) for a in paths.aods]
    gains = tuple(complex_normal(rng, a.size) for a in paths.aods)
    H = np.array([math.sqrt(M / g.size) * (A @ g) for A, g in zip(steering, gains)])
    return ChannelRealization(H, PathSet(paths.aods, gains))


def channel_from_paths(paths, geom):
    """Rebuild ``H`` from a :class:`PathSet` that carries gains."""
    if paths.gains is None:
        raise ValueError("path set has no gains")
    M = geom.n_antennas
    return np.array([math.sqrt(M / g.size) * (steering_matrix(M, a) @ g)
                     for a, g in zip(paths.aods, paths.gains)])


def covariance(paths, geom, k):
    """Long-term covariance ``R_k = (M / L_k) A_k A_k^H`` of user ``k``."""
    M = geom.n_antennas
    A = steering_matrix(M, paths.aods[k])
    R = (M / A.shape[1]) * (A @ A.conj().T)
    return 0.5 * (R + R.conj().T)
