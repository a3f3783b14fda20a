"""scikit-learn style front end for the hybrid precoders.

``fit`` takes one channel draw ``H`` (rows ``h_k``) and the users' long-term
covariances and designs the analog beamformer and digital precoder; ``predict``
returns per-user rates of the fitted design on a channel draw and ``score``
their sum. ``transform`` maps channels to their effective ``K``-dimensional
version ``F^H h_k``.

>>> est = HybridBeamformer(scheme="OSF+Stat+SLNR", b_rf=6, snr_db=10)
>>> est.fit(H, R).score(H)                                    # doctest: +SKIP
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_complex_matrix, check_hermitian_psd
from .codebook import build_iid_codebook, build_rf_codebook
from .evaluation import instantaneous_sum_rate, quantize_effective_channels
from .precoding import (
    effective_channels,
    effective_covariance,
    sbf_precoder,
    select_beams,
    slnr_quantized_precoder,
    slnr_statistical_precoder,
    zf_precoder,
)
from .rate_splitting import design_rate_splitting, rs_instantaneous_rates

NO_RS_SCHEMES = ("OSF+Stat+SBF", "OSF+Stat+SLNR", "TSF+AdpCB+ZF",
                 "TSF+AdpCB+SLNR", "TSF+RVQ+ZF")


def _check_inputs(H, covariances=None, n_antennas=None):
    H = check_complex_matrix(np.atleast_2d(H), "H", (None, n_antennas))
    if covariances is None:
        return H, None
    R = np.asarray(covariances, dtype=complex)
    K, M = H.shape
    if R.shape != (K, M, M):
        raise ValueError(f"covariances must have shape {(K, M, M)}, got {R.shape}")
    R = np.array([check_hermitian_psd(Rk, f"covariances[{k}]") for k, Rk in enumerate(R)])
    return H, R


class _PrecoderBase(BaseEstimator):

    def _analog_stage(self, H, R, bits):
        cb = build_rf_codebook(H.shape[1], bits, self.rf_codebook)
        beams = select_beams(H, cb)
        self.F_ = beams.F
        self.beam_indices_ = beams.indices
        self.R_eff_ = effective_covariance(beams.F, R)
        self.n_users_, self.n_antennas_ = H.shape
        self.flags_ = {"duplicate-beams": int(beams.duplicates > 0)}

    @property
    def power_(self):
        return 10.0 ** (self.snr_db / 10.0)

    def transform(self, H):
        """Effective channels ``F^H h_k`` as rows, shape (K, K)."""
        check_is_fitted(self, "F_")
        H, _ = _check_inputs(H, n_antennas=self.n_antennas_)
        return effective_channels(H, self.F_)

    def score(self, H, y=None):
        """Instantaneous sum rate (bits/s/Hz) of the fitted design on ``H``."""
        return float(np.sum(self.predict(H)))


class HybridBeamformer(_PrecoderBase):
    """Analog beam selection plus a digital precoder, without rate splitting.

    Parameters
    ----------
    scheme : str
        One of ``OSF+Stat+SBF``, ``OSF+Stat+SLNR`` (all feedback to the RF
        stage, digital precoder from statistics) or ``TSF+AdpCB+ZF``,
        ``TSF+AdpCB+SLNR``, ``TSF+RVQ+ZF`` (second-stage quantized feedback).
    b_rf, b_bb : int
        Feedback bits of the two stages; ``b_bb`` is ignored by the OSF
        schemes.
    snr_db : float
        Total transmit SNR ``P`` in dB, split evenly over the streams.
    rf_codebook : {"uniform-angle", "dft"}
    refine_codebook : bool
        Spread the quantization codebook (Grassmannian-style) before skewing.
    seed : int
        Seed of the quantization codebook.
    """

    def __init__(self, scheme="OSF+Stat+SLNR", b_rf=6, b_bb=0, snr_db=10.0,
                 rf_codebook="uniform-angle", refine_codebook=True, seed=0):
        self.scheme = scheme
        self.b_rf = b_rf
        self.b_bb = b_bb
        self.snr_db = snr_db
        self.rf_codebook = rf_codebook
        self.refine_codebook = refine_codebook
        self.seed = seed

    def fit(self, H, covariances):
        if self.scheme not in NO_RS_SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {NO_RS_SCHEMES}")
        H, R = _check_inputs(H, covariances)
        self._analog_stage(H, R, self.b_rf)
        K = self.n_users_
        rho = self.power_ / K
        if self.scheme == "OSF+Stat+SBF":
            W, fallbacks = sbf_precoder(self.R_eff_, self.F_)
            self.flags_["sbf-fallback"] = fallbacks
        elif self.scheme == "OSF+Stat+SLNR":
            W = slnr_statistical_precoder(self.R_eff_, rho, self.F_)
        else:
            if self.b_bb < 1:
                raise ValueError("two-stage schemes need b_bb >= 1")
            adaptive = "AdpCB" in self.scheme
            base = build_iid_codebook(K, self.b_bb, self.seed,
                                      refine=adaptive and self.refine_codebook)
            flags = {"skew-fallback": 0}
            Hhat = quantize_effective_channels(effective_channels(H, self.F_),
                                               self.R_eff_, base, adaptive, flags)
            self.flags_.update(flags)
            self.quantized_channels_ = Hhat
            if self.scheme.endswith("ZF"):
                W = zf_precoder(Hhat, self.F_)
            else:
                W = slnr_quantized_precoder(Hhat, rho, self.F_)
        self.W_ = W
        return self

    def predict(self, H):
        """Per-user rates ``log2(1 + SINR_k)`` of the fitted precoders on ``H``."""
        check_is_fitted(self, "W_")
        H, _ = _check_inputs(H, n_antennas=self.n_antennas_)
        _, per_user = instantaneous_sum_rate(H, self.F_, self.W_, self.power_ / self.n_users_)
        return per_user


class RateSplittingBeamformer(_PrecoderBase):
    """One-stage hybrid precoder with a common stream (rate splitting).

    The private precoders come from statistics (``private="slnr"`` or
    ``"sbf"``); the common precoder from the SCA max-min design.

    Parameters
    ----------
    b_rf : int
    snr_db : float
    private : {"slnr", "sbf"}
    t : float, optional
        Fixed private-power fraction. By default ``t = min(K / (P Gamma), 1)``.
    line_search : bool
        Pick ``t`` on a 0.01 grid by the average-rate lower bound instead.
    rf_codebook : {"uniform-angle", "dft"}
    """

    def __init__(self, b_rf=4, snr_db=20.0, private="slnr", t=None,
                 line_search=False, rf_codebook="uniform-angle"):
        self.b_rf = b_rf
        self.snr_db = snr_db
        self.private = private
        self.t = t
        self.line_search = line_search
        self.rf_codebook = rf_codebook

    def fit(self, H, covariances):
        if self.private not in ("slnr", "sbf"):
            raise ValueError("private must be 'slnr' or 'sbf'")
        H, R = _check_inputs(H, covariances)
        self._analog_stage(H, R, self.b_rf)
        P = self.power_
        if self.private == "sbf":
            W, fallbacks = sbf_precoder(self.R_eff_, self.F_)
            self.flags_["sbf-fallback"] = fallbacks
        else:
            W = slnr_statistical_precoder(self.R_eff_, P / self.n_users_, self.F_)
        design = design_rate_splitting(P, self.R_eff_, W, self.F_, t=self.t,
                                       line_search=self.line_search)
        self.W_ = W
        self.w_c_ = design.w_c
        self.split_ = design.split
        self.trace_ = design.trace
        self.flags_["sca-cap"] = int(design.trace.capped)
        return self

    def predict(self, H):
        """Per-user private rates; the common rate is in :meth:`common_rate`."""
        check_is_fitted(self, "W_")
        H, _ = _check_inputs(H, n_antennas=self.n_antennas_)
        _, private, _ = rs_instantaneous_rates(H, self.F_, self.w_c_, self.W_, self.split_)
        return private

    def common_rate(self, H):
        """``min_k log2(1 + SINR_c^k)`` of the common stream on ``H``."""
        check_is_fitted(self, "W_")
        H, _ = _check_inputs(H, n_antennas=self.n_antennas_)
        common, _, _ = rs_instantaneous_rates(H, self.F_, self.w_c_, self.W_, self.split_)
        return common

    def score(self, H, y=None):
        return float(np.sum(self.predict(H)) + self.common_rate(H))
