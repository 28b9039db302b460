"""Numerical laboratory for stochastic homogenization of elliptic PDEs."""

__version__ = "0.1.0"

from ._accel import USE_NUMBA, backend_name  # noqa: E402
