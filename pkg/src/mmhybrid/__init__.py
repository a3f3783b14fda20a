"""Limited-feedback hybrid precoding and rate splitting for multiuser mmWave.

The modules follow the signal chain: :mod:`.channel` draws sparse
channels, :mod:`.codebook` and :mod:`.precoding` build the analog and digital
stages, :mod:`.rate_splitting` adds the common stream and
:mod:`.evaluation` runs Monte Carlo experiments. :mod:`.estimators` wraps
the designs in a scikit-learn style interface.
"""

__version__ = "0.1.0"

from .channel import ArrayGeometry, Scenario, ScenarioSpec, steering_vector
from .codebook import build_iid_codebook, build_rf_codebook, quantize, skew
from .estimators import HybridBeamformer, RateSplittingBeamformer
from .evaluation import SCHEMES, ExperimentConfig, RateReport, monte_carlo
from .precoding import (
    sbf_precoder,
    select_beams,
    slnr_quantized_precoder,
    slnr_statistical_precoder,
    zf_precoder,
)
from .rate_splitting import design_rate_splitting, power_split, sca_common_precoder

__all__ = [
    "ArrayGeometry", "ExperimentConfig", "HybridBeamformer", "RateReport",
    "RateSplittingBeamformer", "SCHEMES", "Scenario", "ScenarioSpec",
    "build_iid_codebook", "build_rf_codebook", "design_rate_splitting",
    "monte_carlo", "power_split", "quantize", "sbf_precoder", "sca_common_precoder",
    "select_beams", "skew", "slnr_quantized_precoder", "slnr_statistical_precoder",
    "steering_vector", "zf_precoder",
]
