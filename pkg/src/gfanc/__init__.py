"""Generative fixed-filter active noise control laboratory."""

from gfanc.errors import DivergenceError, GfancError, InvalidArgument, NonRealResult
from gfanc.signal_core import FS_HZ, NrSeries, Signal

__all__ = [
    "FS_HZ",
    "DivergenceError",
    "GfancError",
    "InvalidArgument",
    "NonRealResult",
    "NrSeries",
    "Signal",
]

__version__ = "0.1.0"
