"""Rate splitting on top of a hybrid precoder.

One common stream, decoded by every user and removed by SIC, is superposed
on the private streams. The private streams share a fraction ``t`` of the
power; the common precoder comes from a successive convex approximation of
the max-min problem over the users' common-stream gains.
"""

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_hermitian
from .numerics import _sca_subproblem, top_eigenvector

EULER_GAMMA = 0.5772156649015329
#: interference level at or below which the private streams get all power
GAMMA_ZERO = 1e-12


@dataclass(frozen=True)
class PowerSplit:
    total_power: float
    t: float
    n_users: int
    interference: float = float("nan")

    def __post_init__(self):
        if not 0.0 < self.t <= 1.0:
            raise ValueError(f"power split t must lie in (0, 1], got {self.t}")

    @property
    def common_power(self):
        return self.total_power * (1.0 - self.t)

    @property
    def private_power(self):
        return self.total_power * self.t / self.n_users


@dataclass
class ScaTrace:
    objective: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    capped: bool = False

    def is_monotone(self, slack=1e-9):
        obj = np.asarray(self.objective)
        return bool(np.all(np.diff(obj) >= -slack * np.maximum(1.0, np.abs(obj[:-1]))))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "t", "residual"])
            for i, (t, r) in enumerate(zip(self.objective, self.residuals)):
                w.writerow([i, repr(float(t)), repr(float(r))])


def _quad(W, R):
    """``Q[k, j] = w_j^H R_k w_j`` for a stack of covariances ``R``."""
    return np.real(np.einsum("ij,kil,lj->kj", W.conj(), R, W))


def leakage(R_eff, W):
    """Per-user statistical interference ``sum_{j != k} w_j^H R_k w_j``."""
    Q = _quad(W, np.asarray(R_eff))
    return Q.sum(axis=1) - np.diag(Q)


def power_split(P, R_eff, W):
    """Private/common split ``t = min(K / (P Gamma), 1)``.

    ``Gamma`` is the smallest per-user average leakage ``(1/K) sum_{j != k}
    w_j^H R_k w_j``; when it vanishes the private streams take all power.
    """
    P = float(P)
    if P <= 0:
        raise ValueError("total power must be positive")
    K = np.asarray(R_eff).shape[0]
    gamma = float(np.min(leakage(R_eff, W))) / K
    if gamma <= GAMMA_ZERO:
        return PowerSplit(P, 1.0, K, gamma)
    return PowerSplit(P, min(K / (P * gamma), 1.0), K, gamma)


def common_beta(split, R_eff, W):
    """``beta_k = 1 + (P t / K) sum_j w_j^H R_k w_j``."""
    return 1.0 + split.private_power * _quad(W, np.asarray(R_eff)).sum(axis=1)


def maxmin_objective(x, R_eff, beta):
    vals = np.real(np.einsum("i,kij,j->k", x.conj(), R_eff, x))
    return float(np.min(vals / beta))


def sca_common_precoder(R_eff, beta, gram, z0=None, tol=1e-7, max_iter=100):
    """Common precoder from the SCA iteration on the max-min problem.

    maximize ``min_k w^H R_k w / beta_k`` subject to ``w^H gram w <= 1``.

    Parameters
    ----------
    R_eff : (K, K, K) array
        Effective covariances, one per user.
    beta : (K,) array
    gram : (K, K) array
        ``F^H F``.
    z0 : (K,) array, optional
        Feasible starting point. By default the dominant eigenvector of
        ``sum_k R_k / beta_k`` scaled onto the power constraint.

    Returns
    -------
    w_c : (K,) array
        Final iterate, scaled so that ``w_c^H gram w_c = 1``.
    trace : ScaTrace
    """
    R_eff = np.array([check_hermitian(R, "R_eff") for R in R_eff])
    gram = check_hermitian(gram, "gram")
    beta = np.asarray(beta, dtype=float)
    if np.any(beta <= 0):
        raise ValueError("beta entries must be positive")
    if z0 is None:
        v = top_eigenvector((R_eff / beta[:, None, None]).sum(axis=0))
    else:
        v = np.asarray(z0, dtype=complex)
    z = v / math.sqrt(np.real(v.conj() @ gram @ v))
    trace = ScaTrace([maxmin_objective(z, R_eff, beta)], [z], [0.0])
    for _ in range(max_iter):
        sol = _sca_subproblem(z, R_eff, beta, gram)
        x = sol.x
        q = np.real(x.conj() @ gram @ x)
        if q > 0:
            x = x / math.sqrt(q)       # scaling up never hurts the max-min value
        f = maxmin_objective(x, R_eff, beta)
        if f < trace.objective[-1]:
            x, f = z, trace.objective[-1]
        trace.objective.append(f)
        trace.iterates.append(x)
        trace.residuals.append(sol.gap)
        done = abs(f - trace.objective[-2]) <= tol * max(1.0, abs(trace.objective[-2]))
        z = x
        if done:
            break
    else:
        trace.capped = True
        warnings.warn("SCA reached the iteration cap; returning the best iterate",
                      RuntimeWarning, stacklevel=2)
    return z, trace


def rs_lower_bound(P, t, w_c, W, R_eff):
    """Average RS sum-rate lower bound (bits/s/Hz) with the ``e^{-gamma}`` factor."""
    R_eff = np.asarray(R_eff)
    K = R_eff.shape[0]
    Q = _quad(W, R_eff)
    pk = P * t / K
    scale = math.exp(-EULER_GAMMA)
    if w_c is None or t >= 1.0:
        common = 0.0
    else:
        gc = np.real(np.einsum("i,kij,j->k", np.conj(w_c), R_eff, w_c))
        common = np.min(np.log2(1 + scale * P * (1 - t) * gc / (1 + pk * Q.sum(axis=1))))
    own = np.diag(Q)
    private = np.sum(np.log2(1 + scale * pk * own / (1 + pk * (Q.sum(axis=1) - own))))
    return float(common + private)


def rs_instantaneous_rates(H, F, w_c, W, split):
    """Common rate ``min_k log2(1 + SINR_c^k)`` and per-user private rates.

    Returns
    -------
    common : float
    private : (K,) array
    common_per_user : (K,) array
    """
    H = np.atleast_2d(H)
    G = np.abs(H.conj() @ F @ W) ** 2              # G[k, j] = |h_k^H F w_j|^2
    pk = split.private_power
    own = np.diag(G)
    total = G.sum(axis=1)
    private = np.log2(1 + pk * own / (1 + pk * (total - own)))
    if split.t >= 1.0 or w_c is None:
        per_user = np.zeros(H.shape[0])
    else:
        gc = np.abs(H.conj() @ F @ w_c) ** 2
        per_user = np.log2(1 + split.common_power * gc / (1 + pk * total))
    return float(np.min(per_user)), private, per_user


@dataclass
class RsDesign:
    split: PowerSplit
    w_c: np.ndarray
    trace: ScaTrace


def design_rate_splitting(P, R_eff, W, F, t=None, line_search=False, t_grid=None):
    """Power split and common precoder for given private precoders.

    ``t`` fixes the split; otherwise the closed-form rule is used, or with
    ``line_search`` the grid value maximizing :func:`rs_lower_bound`.
    """
    R_eff = np.asarray(R_eff)
    K = R_eff.shape[0]
    gram = F.conj().T @ F
    if t is not None:
        split = PowerSplit(P, float(t), K)
    elif line_search:
        grid = np.round(np.arange(1, 101) * 0.01, 2) if t_grid is None else t_grid
        best = None
        for tv in grid:
            d = design_rate_splitting(P, R_eff, W, F, t=tv)
            val = rs_lower_bound(P, tv, d.w_c, W, R_eff)
            if best is None or val > best[0]:
                best = (val, d)
        return best[1]
    else:
        split = power_split(P, R_eff, W)
    if split.t >= 1.0:
        return RsDesign(split, None, ScaTrace())
    beta = common_beta(split, R_eff, W)
    w_c, trace = sca_common_precoder(R_eff, beta, gram)
    return RsDesign(split, w_c, trace)
