"""Ghost-corrected EPI reconstruction with structured low-rank (LORAKS) models."""

__version__ = "0.1.0"

from .estimators import AcLoraks, RacLoraks, ZeroFill
from .kspace import Dataset, KSpaceGrid, Polarity, SamplingPattern, fft2c, ifft2c, split_interleaved
from .metrics import esp, nrmse, ssos
from .solver import ReconConfig, ReconResult, ac_loraks, rac_objective, rac_loraks, zero_fill

__all__ = [
    "AcLoraks", "RacLoraks", "ZeroFill", "Dataset", "KSpaceGrid", "Polarity", "SamplingPattern",
    "fft2c", "ifft2c", "split_interleaved", "esp", "nrmse", "ssos", "ReconConfig", "ReconResult",
    "ac_loraks", "rac_objective", "rac_loraks", "zero_fill",
]
