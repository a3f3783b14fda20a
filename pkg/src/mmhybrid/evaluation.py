"""Monte Carlo sum-rate experiments and closed-form rate oracles."""

import math
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import Scenario, ScenarioSpec, make_rng
from .codebook import RF_KINDS, build_iid_codebook, build_rf_codebook, skew
from .precoding import (
    PrecoderError,
    effective_channels,
    effective_covariance,
    sbf_precoder,
    select_beams,
    slnr_quantized_precoder,
    slnr_statistical_precoder,
    zf_precoder,
)
from .rate_splitting import (
    PowerSplit,
    design_rate_splitting,
    rs_instantaneous_rates,
    rs_lower_bound,
)

SCHEMES = (
    "OSF+Stat+SBF",
    "OSF+Stat+SLNR",
    "TSF+AdpCB+ZF",
    "TSF+AdpCB+SLNR",
    "TSF+RVQ+ZF",
    "RS-OSF+Stat",
    "RS-TSF+AdpCB",
)
SPLIT_MODES = ("fixed", "sweep-optimal", "dof-scaled")
T_MODES = ("closed-form", "line-search")
FLAG_NAMES = ("duplicate-beams", "sbf-fallback", "skew-fallback", "sca-cap",
              "precoder-undefined")


def is_two_stage(scheme):
    return "TSF" in scheme


def is_rate_splitting(scheme):
    return scheme.startswith("RS-")


# --------------------------------------------------------------------------
# closed forms

def instantaneous_sum_rate(H, F, W, rho):
    """Sum rate with uniform power ``rho`` per stream and unit noise.

    Returns ``(R_sum, per_user)`` with
    ``SINR_k = rho |h_eff_k^H w_k|^2 / (1 + rho sum_{j != k} |h_eff_k^H w_j|^2)``.
    """
    G = np.abs(np.atleast_2d(H).conj() @ F @ W) ** 2
    own = np.diag(G)
    per_user = np.log2(1 + rho * own / (1 + rho * (G.sum(axis=1) - own)))
    return float(per_user.sum()), per_user


def _sorted_power(gains):
    g2 = np.abs(np.atleast_2d(gains)) ** 2
    return -np.sort(-g2, axis=1)


def strongest_path_oracle(kind, gains, rho, n_antennas, n_paths):
    """Per-user large-array rates for DFT-column channels.

    ``non-overlapped`` gives the exact rate ``log2(1 + rho (M/L) |g_1|^2)``;
    ``fully-overlapped`` gives the lower bound with the weaker paths of the
    user acting as interference. Gains are sorted by magnitude first.
    """
    g2 = _sorted_power(gains)
    a = rho * n_antennas / n_paths
    if kind in ("non-overlapped", "non-overlapped-vcr"):
        return np.log2(1 + a * g2[:, 0])
    if kind in ("fully-overlapped", "fully-overlapped-vcr"):
        return np.log2(1 + a * g2[:, 0] / (1 + a * g2[:, 1:].sum(axis=1)))
    raise ValueError(f"no closed-form rate for scenario {kind!r}")


def overlap_gap_bound(rho, n_antennas, n_paths):
    """Upper bound on the mean per-user gap between the two VCR extremes."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    return math.log2(1 + rho * n_antennas * (n_paths - 1) / n_paths)


def dof_feedback_bits(m, r, n_users, p_db):
    """Second-stage bits ``ceil(m (r - 1) / K * P_dB / 3)`` for a sum DoF of ``m``."""
    if not 1 <= m <= n_users:
        raise ValueError("target DoF m must satisfy 1 <= m <= K")
    if r <= 1:
        return 0
    return max(0, math.ceil(m * (r - 1) / n_users * p_db / 3.0 - 1e-12))


# --------------------------------------------------------------------------
# configuration and report

@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    scenario: ScenarioSpec
    schemes: tuple
    b_total: int = 6
    split: str = "sweep-optimal"
    b_rf: int = None
    b_bb: int = None
    dof_target: int = 1
    snr_db: tuple = (0.0, 10.0, 20.0)
    trials: int = 1000
    seed: int = 0
    rf_codebook: str = "uniform-angle"
    refine_codebook: bool = True
    rs_precoder: str = "slnr"
    t_mode: str = "closed-form"
    t_step: float = 0.01
    description: str = ""

    def __post_init__(self):
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown:
            raise ValueError(f"unknown scheme(s) {unknown}; expected {SCHEMES}")
        if not self.schemes:
            raise ValueError("at least one scheme is required")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.split not in SPLIT_MODES:
            raise ValueError(f"split must be one of {SPLIT_MODES}")
        if self.split == "fixed":
            if self.b_rf is None or self.b_bb is None:
                raise ValueError("fixed split needs b_rf and b_bb")
            if self.b_rf + self.b_bb != self.b_total:
                raise ValueError(f"inconsistent split: b_rf + b_bb = "
                                 f"{self.b_rf + self.b_bb} != b_total = {self.b_total}")
        if self.split == "dof-scaled" and self.b_rf is None:
            raise ValueError("dof-scaled split needs b_rf")
        if self.rs_precoder not in ("slnr", "sbf"):
            raise ValueError("rs_precoder must be 'slnr' or 'sbf'")
        if self.t_mode not in T_MODES:
            raise ValueError(f"t_mode must be one of {T_MODES}")
        if not 0 < self.t_step <= 1:
            raise ValueError("t_step must lie in (0, 1]")
        if self.b_total < 1:
            raise ValueError("b_total must be >= 1")
        if self.rf_codebook not in RF_KINDS:
            raise ValueError(f"rf_codebook must be one of {RF_KINDS}")
        if not 1 <= self.dof_target <= self.scenario.n_users:
            raise ValueError("dof_target must satisfy 1 <= m <= n_users")

    @property
    def one_stage_bits(self):
        """RF bits of the one-stage schemes (all feedback, or the shared B_RF)."""
        return self.b_rf if self.split == "dof-scaled" else self.b_total

    def splits(self, p_db):
        """Candidate ``(b_rf, b_bb)`` pairs of the two-stage schemes."""
        if self.split == "fixed":
            return [(self.b_rf, self.b_bb)]
        if self.split == "dof-scaled":
            r = min(self.scenario.n_paths, self.scenario.n_users)
            bb = dof_feedback_bits(self.dof_target, r, self.scenario.n_users, p_db)
            return [(self.b_rf, max(bb, 1))]
        # an RF codebook smaller than K cannot give K distinct beams
        K = self.scenario.n_users
        return [(b, self.b_total - b) for b in range(1, self.b_total)
                if 2 ** b >= K]


@dataclass
class RateRow:
    snr_db: float
    scheme: str
    selection: str
    b_rf: int
    b_bb: int
    mean_sum_rate: float
    stderr: float
    mean_common_rate: float
    mean_t: float
    per_user: np.ndarray
    interference_free: float
    rs_bound: float
    trials: int
    flags: dict = field(default_factory=dict)

    def flag_text(self):
        items = [f"{k}={v}" for k, v in sorted(self.flags.items()) if v]
        return ";".join(items) if items else "none"


@dataclass
class RateReport:
    config: ExperimentConfig
    rows: list

    def select(self, scheme, snr_db=None, selection=None):
        out = [r for r in self.rows if r.scheme == scheme
               and (snr_db is None or r.snr_db == snr_db)
               and (selection is None or r.selection == selection)]
        return out

    def row(self, scheme, snr_db, selection=None):
        rows = self.select(scheme, snr_db, selection)
        if selection is None:
            rows = [r for r in rows if r.selection != "fixed"] or rows
        if not rows:
            raise KeyError((scheme, snr_db, selection))
        return rows[0]


# --------------------------------------------------------------------------
# per-trial pipelines

@dataclass
class TrialOutcome:
    private: np.ndarray
    common: float = 0.0
    t: float = 1.0
    flags: Counter = field(default_factory=Counter)


def quantize_effective_channels(Heff, R_eff, base, adaptive, flags):
    """Columns ``hhat_k = ||h_eff_k|| c_k`` from per-user codebooks."""
    K = Heff.shape[0]
    Hhat = np.empty((Heff.shape[1], K), dtype=complex)
    for k in range(K):
        h = Heff[k]
        norm = np.linalg.norm(h)
        if adaptive:
            cb = skew(base, R_eff[k])
            if np.any(cb.fallback):
                flags["skew-fallback"] += 1
            entries = cb.entries
        else:
            entries = base.entries
        if norm == 0:
            Hhat[:, k] = 0
            continue
        gains = np.abs(entries @ (h / norm).conj()) ** 2
        Hhat[:, k] = norm * entries[int(np.argmax(gains))]
    return Hhat


class SchemeRunner:
    """Executes one scheme on one channel draw for every SNR point."""

    def __init__(self, config):
        self.config = config
        scen = config.scenario
        self._rf = {}
        self._iid = {}
        self.M, self.K = scen.n_antennas, scen.n_users

    def rf_codebook(self, bits):
        if bits not in self._rf:
            self._rf[bits] = build_rf_codebook(self.M, bits, self.config.rf_codebook)
        return self._rf[bits]

    def iid_codebook(self, bits, refine):
        key = (bits, refine)
        if key not in self._iid:
            self._iid[key] = build_iid_codebook(self.K, bits, self.config.seed, refine)
        return self._iid[key]

    def _first_stage(self, H, R, bits, flags):
        beams = select_beams(H, self.rf_codebook(bits))
        if beams.duplicates:
            flags["duplicate-beams"] += 1
        F = beams.F
        return F, effective_covariance(F, R)

    def one_stage(self, scheme, H, R, powers):
        """OSF (+ RS) pipeline; returns one outcome per power value."""
        flags = Counter()
        F, R_eff = self._first_stage(H, R, self.config.one_stage_bits, flags)
        K = self.K
        use_sbf = scheme == "OSF+Stat+SBF" or (
            is_rate_splitting(scheme) and self.config.rs_precoder == "sbf")
        W_sbf = None
        if use_sbf:
            W_sbf, fb = sbf_precoder(R_eff, F)
            if fb:
                flags["sbf-fallback"] += fb
        out = []
        for P in powers:
            rho = P / K
            W = W_sbf if use_sbf else slnr_statistical_precoder(R_eff, rho, F)
            oc = self._private_or_rs(scheme, H, F, W, R_eff, P, Counter(flags))
            out.append(oc)
        return out

    def two_stage(self, scheme, H, R, P, b_rf, b_bb):
        flags = Counter()
        F, R_eff = self._first_stage(H, R, b_rf, flags)
        Heff = effective_channels(H, F)
        adaptive = "AdpCB" in scheme
        base = self.iid_codebook(b_bb, refine=adaptive and self.config.refine_codebook)
        Hhat = quantize_effective_channels(Heff, R_eff, base, adaptive, flags)
        rho = P / self.K
        try:
            if scheme.endswith("ZF"):
                W = zf_precoder(Hhat, F)
            else:
                W = slnr_quantized_precoder(Hhat, rho, F)
        except PrecoderError:
            flags["precoder-undefined"] += 1
            return None, flags
        return self._private_or_rs(scheme, H, F, W, R_eff, P, flags), flags

    def _private_or_rs(self, scheme, H, F, W, R_eff, P, flags):
        if not is_rate_splitting(scheme):
            _, per_user = instantaneous_sum_rate(H, F, W, P / self.K)
            return TrialOutcome(per_user, 0.0, 1.0, flags)
        design = design_rate_splitting(
            P, R_eff, W, F, line_search=self.config.t_mode == "line-search")
        if design.trace.capped:
            flags["sca-cap"] += 1
        common, private, _ = rs_instantaneous_rates(H, F, design.w_c, W, design.split)
        oc = TrialOutcome(private, common, design.split.t, flags)
        oc.bound = rs_lower_bound(P, design.split.t, design.w_c, W, R_eff)
        return oc

    def rs_fixed_t(self, H, F, W, R_eff, P, t):
        """RS rates for a given split ``t``: ``(common, private, design)``."""
        d = design_rate_splitting(P, R_eff, W, F, t=t)
        common, private, _ = rs_instantaneous_rates(H, F, d.w_c, W, d.split)
        return common, private, d


def _interference_free(gains, rho, M):
    """Sum over users of ``log2(1 + rho (M / L_k) max_l |g_kl|^2)``."""
    return float(sum(np.log2(1 + rho * M / g.size * np.max(np.abs(g) ** 2))
                     for g in gains))


def trial_rng(seed, trial):
    return make_rng(seed, trial)


def monte_carlo(config):
    """Run every scheme of ``config`` over its SNR grid.

    Each trial uses its own generator keyed by ``(seed, trial)``; the same
    channel draw is shared by all schemes and SNR points of that trial, so
    curves are compared on common random numbers. Geometric scenarios redraw
    the AoDs every trial; VCR scenarios keep the assignment drawn from the
    master seed.
    """
    cfg = config
    scen = cfg.scenario
    K, M = scen.n_users, scen.n_antennas
    snrs = [float(s) for s in cfg.snr_db]
    powers = [10.0 ** (s / 10.0) for s in snrs]
    runner = SchemeRunner(cfg)
    fixed_scenario = None if not scen.is_vcr else Scenario(scen)

    # results[(scheme, split)][snr_index] -> list of (trial, outcome)
    results = {}
    free = np.zeros((cfg.trials, len(snrs)))

    def store(key, i, oc):
        results.setdefault(key, [[] for _ in snrs])[i].append(oc)

    for trial in range(cfg.trials):
        rng = trial_rng(cfg.seed, trial)
        scenario = fixed_scenario or Scenario(scen, rng)
        draw = scenario.draw(rng)
        H = draw.H
        R = scenario.covariances()
        for i, P in enumerate(powers):
            free[trial, i] = _interference_free(draw.paths.gains, P / K, M)
        for scheme in cfg.schemes:
            if not is_two_stage(scheme):
                for i, oc in enumerate(runner.one_stage(scheme, H, R, powers)):
                    store((scheme, None), i, oc)
                continue
            for i, (P, snr) in enumerate(zip(powers, snrs)):
                for b_rf, b_bb in cfg.splits(snr):
                    if is_rate_splitting(scheme):
                        oc, flags = _rs_two_stage_grid(runner, scheme, H, R, P, b_rf, b_bb, cfg)
                    else:
                        oc, flags = runner.two_stage(scheme, H, R, P, b_rf, b_bb)
                    if oc is None:
                        oc = TrialOutcome(None, 0.0, 1.0, flags)
                    store((scheme, (b_rf, b_bb)), i, oc)

    rows = []
    for (scheme, split), per_snr in results.items():
        for i, snr in enumerate(snrs):
            if not per_snr[i]:          # dof-scaled splits change with SNR
                continue
            rows.append(_aggregate(scheme, split, snr, per_snr[i], free[:, i], cfg))
    rows = _add_sweep_rows(rows, cfg)
    order = {s: n for n, s in enumerate(cfg.schemes)}
    rows.sort(key=lambda r: (r.snr_db, order[r.scheme], r.selection != "fixed",
                             r.b_rf, r.b_bb))
    return RateReport(cfg, rows)


def _rs_two_stage_grid(runner, scheme, H, R, P, b_rf, b_bb, cfg):
    """RS on top of TSF private precoders; outcomes for every ``t`` on the grid.

    The split is picked later on the empirical mean sum rate, so the outcome
    keeps the whole grid.
    """
    private_scheme = "TSF+AdpCB+ZF" if cfg.rs_precoder == "sbf" else "TSF+AdpCB+SLNR"
    flags = Counter()
    F, R_eff = runner._first_stage(H, R, b_rf, flags)
    Heff = effective_channels(H, F)
    base = runner.iid_codebook(b_bb, refine=cfg.refine_codebook)
    Hhat = quantize_effective_channels(Heff, R_eff, base, True, flags)
    try:
        if private_scheme.endswith("ZF"):
            W = zf_precoder(Hhat, F)
        else:
            W = slnr_quantized_precoder(Hhat, P / runner.K, F)
    except PrecoderError:
        flags["precoder-undefined"] += 1
        return None, flags
    grid = t_grid(cfg.t_step)
    commons, privates = [], []
    for t in grid:
        common, private, d = runner.rs_fixed_t(H, F, W, R_eff, P, t)
        if d.trace.capped:
            flags["sca-cap"] += 1
        commons.append(common)
        privates.append(private)
    oc = TrialOutcome(np.array(privates), np.array(commons), None, flags)
    oc.grid = grid
    return oc, flags


def t_grid(step):
    n = int(round(1.0 / step))
    return np.round(np.arange(1, n + 1) * (1.0 / n), 10)


def _aggregate(scheme, split, snr, outcomes, free, cfg):
    flags = Counter()
    for oc in outcomes:
        flags.update(oc.flags)
    valid = [oc for oc in outcomes if oc.private is not None]
    bound = float("nan")
    if valid and getattr(valid[0], "grid", None) is not None:
        # exhaustive split: pick the grid value with the largest mean sum rate
        grid = valid[0].grid
        totals = np.array([oc.common + oc.private.sum(axis=1) for oc in valid])
        best = int(np.argmax(totals.mean(axis=0)))
        private = np.array([oc.private[best] for oc in valid])
        common = np.array([oc.common[best] for oc in valid])
        t = np.full(len(valid), grid[best])
    elif valid:
        private = np.array([oc.private for oc in valid])
        common = np.array([oc.common for oc in valid])
        t = np.array([oc.t for oc in valid])
        bounds = [getattr(oc, "bound", None) for oc in valid]
        if bounds[0] is not None:
            bound = float(np.mean(bounds))
    else:
        private = np.full((0, cfg.scenario.n_users), np.nan)
        common = t = np.zeros(0)
    sums = private.sum(axis=1) + common
    n = sums.size
    stderr = float(np.std(sums, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    if split is None:
        b_rf, b_bb = cfg.one_stage_bits, 0
        selection = "fixed"
    else:
        b_rf, b_bb = split
        selection = "fixed" if cfg.split != "dof-scaled" else "dof-scaled"
    return RateRow(
        snr_db=snr, scheme=scheme, selection=selection, b_rf=b_rf, b_bb=b_bb,
        mean_sum_rate=float(np.mean(sums)) if n else float("nan"),
        stderr=stderr,
        mean_common_rate=float(np.mean(common)) if n else float("nan"),
        mean_t=float(np.mean(t)) if n else float("nan"),
        per_user=private.mean(axis=0) if n else np.full(cfg.scenario.n_users, np.nan),
        interference_free=float(np.mean(free)),
        rs_bound=bound, trials=n, flags=dict(flags))


def _add_sweep_rows(rows, cfg):
    if cfg.split != "sweep-optimal":
        return rows
    out = list(rows)
    groups = {}
    for r in rows:
        if is_two_stage(r.scheme):
            groups.setdefault((r.scheme, r.snr_db), []).append(r)
    for (scheme, snr), cands in groups.items():
        best = max(cands, key=lambda r: (r.mean_sum_rate, -r.b_bb))
        out.append(replace(best, selection="sweep-optimal"))
    return out
