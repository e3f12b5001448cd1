"""
Core package for cmvband.
Contains the band operators, their symbols, certified regions, spectral
numerics, the walk dilation and the experiment orchestration.
"""

from .models import *
from .errors import (
    AcceptanceFailure,
    CmvBandError,
    ConfigError,
    EmbeddingError,
    NumericFailure,
    OutputError,
    WalkBoundaryError,
)
from .config import Settings, get_settings
from .coin import embed, family_drift, family_g0
from .bandop import build_polar, build_T, build_Ttilde, tridiag_blocks
from .regions import certified_resolvent
from .orchestration import ExperimentRunner

__all__ = [
    'AcceptanceFailure',
    'CmvBandError',
    'ConfigError',
    'EmbeddingError',
    'NumericFailure',
    'OutputError',
    'WalkBoundaryError',
    'Settings',
    'get_settings',
    'embed',
    'family_drift',
    'family_g0',
    'build_T',
    'build_polar',
    'build_Ttilde',
    'tridiag_blocks',
    'certified_resolvent',
    'ExperimentRunner',
]
