"""Exact and Monte Carlo verification toolkit for dyadic couplings of
random walks and empirical processes with Gaussian processes."""

from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.1.0"

from .exact import InvalidParameter, LatticePMF
from .monotone import CapabilityError

__all__ = ["__version__", "InvalidParameter", "LatticePMF", "CapabilityError"]
