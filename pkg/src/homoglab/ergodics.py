"""Arnold's cat map on the unit 2-torus: orbits, time averages, exact periods."""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels

CAT_MATRIX = np.array([[2, 1], [1, 1]], dtype=np.int64)


def mod1(x):
    """Reduce into [0, 1); shifts negatives and maps values that round to 1.0 back to 0.0."""
    x = np.asarray(x, dtype=np.float64)
    r = x - np.floor(x)
    return np.where(r >= 1.0, 0.0, r)


class TorusPoint(NamedTuple):
    x1: float
    x2: float

    @classmethod
    def of(cls, x1, x2):
        return cls(float(mod1(x1)), float(mod1(x2)))


class RationalTorusPoint(NamedTuple):
    p1: int
    p2: int
    q: int

    @classmethod
    def of(cls, p1, p2, q):
        q = int(q)
        if q < 1:
            raise ValueError(f"denominator must be positive, got {q}")
        return cls(int(p1) % q, int(p2) % q, q)


@dataclass
class OrbitStats:
    length: int
    time_average: float
    bin_counts: np.ndarray


def cat_map_step(p):
    """One application of ``(x1, x2) -> (2 x1 + x2, x1 + x2) mod 1``.

    Accepts a single point or an ``(N, 2)`` array of points.
    """
    x = np.asarray(p, dtype=np.float64)
    y = np.stack([2.0 * x[..., 0] + x[..., 1], x[..., 0] + x[..., 1]], axis=-1)
    y = mod1(y)
    if isinstance(p, TorusPoint):
        return TorusPoint(float(y[0]), float(y[1]))
    return y


def cat_map_determinant():
    m = CAT_MATRIX
    return int(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])


def orbit(p0, n):
    """The ``(n, 2)`` array ``[T(p0), T^2(p0), ..., T^n(p0)]``."""
    if n < 1:
        raise ValueError("orbit length must be >= 1")
    x1, x2 = (float(v) for v in mod1(np.asarray(p0, dtype=np.float64)))
    return kernels.cat_orbit(x1, x2, int(n))


def detect_period(p0, max_iter):
    """Smallest ``k <= max_iter`` with ``T^k(p0) == p0`` in exact integer arithmetic, else None."""
    p0 = RationalTorusPoint.of(*p0)
    k = int(kernels.cat_periods(np.array([p0.p1]), np.array([p0.p2]), np.array([p0.q]), int(max_iter))[0])
    return None if k < 0 else k


def detect_periods(p1, p2, q, max_iter):
    """Vectorised :func:`detect_period`; ``-1`` marks "no return within ``max_iter``"."""
    q = np.asarray(q, dtype=np.int64)
    p1 = np.mod(np.asarray(p1, dtype=np.int64), q)
    p2 = np.mod(np.asarray(p2, dtype=np.int64), q)
    return kernels.cat_periods(p1, p2, np.broadcast_to(q, p1.shape).copy(), int(max_iter))


def rational_iterate(p0, k):
    """``T^k(p0)`` for a rational point, exactly."""
    p0 = RationalTorusPoint.of(*p0)
    a, b = kernels.cat_power_exact([p0.p1], [p0.p2], p0.q, k)
    return RationalTorusPoint(int(a[0]), int(b[0]), p0.q)


def birkhoff_time_average(p0, observable, n):
    """``(1/n) sum_{k=1}^{n} f(T^k(p0))`` with ``f`` vectorised over ``(N, 2)`` arrays."""
    pts = orbit(p0, n)
    return float(np.mean(observable(pts)))


def histogram(points, grid_m):
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    cells = np.minimum((pts * grid_m).astype(np.int64), grid_m - 1)
    counts = np.zeros((grid_m, grid_m), dtype=np.int64)
    np.add.at(counts, (cells[:, 0], cells[:, 1]), 1)
    return counts


def equidistribution_discrepancy(points, grid_m):
    """Max over the ``m x m`` cells of ``|empirical frequency - 1/m^2|``."""
    if grid_m < 2:
        raise ValueError("grid_m must be >= 2")
    counts = histogram(points, grid_m)
    n = counts.sum()
    if n == 0:
        raise ValueError("orbit must be non-empty")
    return float(np.max(np.abs(counts / n - 1.0 / grid_m**2)))


def orbit_stats(p0, observable, n, grid_m=16):
    pts = orbit(p0, n)
    return OrbitStats(
        length=int(n),
        time_average=float(np.mean(observable(pts))),
        bin_counts=histogram(pts, grid_m),
    )


def distinct_points(points):
    return int(np.unique(np.asarray(points).reshape(-1, 2), axis=0).shape[0])
