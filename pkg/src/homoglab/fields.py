"""Seeded coefficient fields: periodic, random checkerboard and a few fixed media.

Every field is a callable ``a(x)``. One-dimensional fields take an array of
points; n-dimensional fields take an array whose last axis has length n.
One-dimensional fields also expose ``breakpoints(s, t)``, the sorted
positions inside ``(s, t)`` where the field may jump. The 1D solver uses these
to align its quadrature partition.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

SEED_MAX = 2**64 - 1


def as_seed(value):
    """Validate a seed as an unsigned 64-bit integer."""
    seed = int(value)
    if seed < 0 or seed > SEED_MAX:
        raise ValueError(f"seed must lie in [0, 2**64), got {value}")
    return seed


@dataclass(frozen=True)
class EllipticityBounds:
    nu1: float
    nu2: float

    def __post_init__(self):
        if not self.nu1 > 0:
            raise ValueError(f"nu1 must be positive, got {self.nu1}")
        if not self.nu2 >= self.nu1:
            raise ValueError(f"nu2 ({self.nu2}) must be >= nu1 ({self.nu1})")

    def contains(self, values, tol=0.0):
        v = np.asarray(values)
        return bool(np.all(v >= self.nu1 - tol) and np.all(v <= self.nu2 + tol))


@dataclass(frozen=True)
class CheckerboardSpec:
    """I.i.d. tiles of unit size whose conductivity is ``kappas[k]`` with probability ``probs[k]``."""

    kappas: tuple
    probs: tuple
    dim: int = 1
    offset_enabled: bool = True
    bounds: EllipticityBounds = None

    def __post_init__(self):
        kappas = tuple(float(k) for k in self.kappas)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "kappas", kappas)
        object.__setattr__(self, "probs", probs)
        if len(kappas) == 0 or len(kappas) != len(probs):
            raise ValueError("kappas and probs must be non-empty and of equal length")
        if self.dim not in (1, 2):
            raise ValueError(f"only dim 1 and 2 are supported, got {self.dim}")
        if any(not k > 0 or not math.isfinite(k) for k in kappas):
            raise ValueError(f"kappas must be positive and finite, got {kappas}")
        if any(not 0 < p <= 1 for p in probs):
            raise ValueError(f"probs must lie in (0, 1], got {probs}")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ValueError(f"probs must sum to 1, got {math.fsum(probs)!r}")

    @property
    def ellipticity(self):
        if self.bounds is not None:
            return self.bounds
        return EllipticityBounds(min(self.kappas), max(self.kappas))

    @property
    def cumulative(self):
        return np.cumsum(np.asarray(self.probs))

    def validate_bounds(self):
        b = self.ellipticity
        if not b.contains(self.kappas):
            raise ValueError(
                f"kappas {self.kappas} violate ellipticity bounds [{b.nu1}, {b.nu2}]"
            )


@dataclass(frozen=True)
class Checkerboard1DSpec(CheckerboardSpec):
    dim: int = 1


@dataclass(frozen=True)
class Checkerboard2DSpec(CheckerboardSpec):
    dim: int = 2


def _points(x, dim):
    x = np.asarray(x, dtype=np.float64)
    if dim == 1:
        return x
    if x.shape[-1] != dim:
        raise ValueError(f"expected points with trailing axis {dim}, got shape {x.shape}")
    return x


def sample_tile_category(spec, seed, tile_index):
    """Category of each tile in ``tile_index`` (shape ``(..., dim)`` or ``(...)`` in 1D)."""
    idx = np.asarray(tile_index, dtype=np.int64)
    if spec.dim == 1:
        idx = idx[..., None]
    shape = idx.shape[:-1]
    flat = idx.reshape(-1, idx.shape[-1])
    cat = kernels.tile_categories(as_seed(seed), flat, spec.cumulative)
    return cat.reshape(shape)


@dataclass(frozen=True)
class FieldRealization:
    """One sample path of a checkerboard, fixed by ``(spec, seed)``.

    The point ``x`` lies in tile ``floor(x + offset)``.
    """

    spec: CheckerboardSpec
    seed: int
    offset: tuple

    @property
    def dim(self):
        return self.spec.dim

    @property
    def ellipticity(self):
        return self.spec.ellipticity

    def tile_index(self, x):
        x = _points(x, self.dim)
        off = np.asarray(self.offset) if self.dim > 1 else self.offset[0]
        return np.floor(x + off).astype(np.int64)

    def tile_categories(self, idx):
        return sample_tile_category(self.spec, self.seed, idx)

    def tile_values(self, idx):
        return np.asarray(self.spec.kappas)[self.tile_categories(idx)]

    def __call__(self, x):
        return self.tile_values(self.tile_index(x))

    def breakpoints(self, s, t):
        if self.dim != 1:
            raise ValueError("breakpoints are defined for 1D fields only")
        off = self.offset[0]
        k = np.arange(math.floor(s + off) + 1, math.ceil(t + off))
        b = k - off
        return b[(b > s) & (b < t)]


def make_realization(spec, seed):
    """Realization of ``spec`` for ``seed``; draws the global offset when enabled."""
    spec.validate_bounds()
    seed = as_seed(seed)
    if spec.offset_enabled:
        offset = tuple(float(u) for u in kernels.uniform_stream(seed, spec.dim))
    else:
        offset = (0.0,) * spec.dim
    return FieldRealization(spec=spec, seed=seed, offset=offset)


def eval_periodic_1d(x):
    """The smooth 1-periodic coefficient ``2 + sin(2 pi x)``."""
    return 2.0 + np.sin(2.0 * np.pi * np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class PeriodicField1D:
    dim: int = 1
    ellipticity: EllipticityBounds = field(default_factory=lambda: EllipticityBounds(1.0, 3.0))

    def __call__(self, x):
        return eval_periodic_1d(x)

    def breakpoints(self, s, t):
        return np.empty(0)


@dataclass(frozen=True)
class ConstantField:
    value: float
    dim: int = 1

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"coefficient must be positive, got {self.value}")

    @property
    def ellipticity(self):
        return EllipticityBounds(self.value, self.value)

    def __call__(self, x):
        x = _points(x, self.dim)
        shape = x.shape if self.dim == 1 else x.shape[:-1]
        return np.full(shape, float(self.value))

    def breakpoints(self, s, t):
        return np.empty(0)


@dataclass(frozen=True)
class StripeField:
    """Unit-width layers cycling through ``values`` along coordinate ``axis``."""

    values: tuple
    axis: int = 0
    dim: int = 2

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.values or min(self.values) <= 0:
            raise ValueError("stripe values must be non-empty and positive")
        if not 0 <= self.axis < self.dim:
            raise ValueError(f"axis {self.axis} out of range for dim {self.dim}")

    @property
    def ellipticity(self):
        return EllipticityBounds(min(self.values), max(self.values))

    def tile_values(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        coord = idx if self.dim == 1 else idx[..., self.axis]
        return np.asarray(self.values)[np.mod(coord, len(self.values))]

    def __call__(self, x):
        x = _points(x, self.dim)
        return self.tile_values(np.floor(x).astype(np.int64))


@dataclass(frozen=True)
class PiecewiseConstant1D:
    """``values[i]`` on ``[breaks[i], breaks[i+1])``; constant extension outside."""

    breaks: tuple
    values: tuple
    dim: int = 1

    def __post_init__(self):
        br = tuple(float(b) for b in self.breaks)
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "breaks", br)
        object.__setattr__(self, "values", vals)
        if len(br) != len(vals) + 1 or np.any(np.diff(br) <= 0):
            raise ValueError("need strictly increasing breaks with len(values) + 1 entries")
        if min(vals) <= 0:
            raise ValueError("values must be positive")

    @property
    def ellipticity(self):
        return EllipticityBounds(min(self.values), max(self.values))

    def __call__(self, x):
        i = np.searchsorted(np.asarray(self.breaks[1:-1]), np.asarray(x, dtype=float), side="right")
        return np.asarray(self.values)[i]

    def breakpoints(self, s, t):
        b = np.asarray(self.breaks[1:-1])
        return b[(b > s) & (b < t)]


@dataclass(frozen=True)
class ScaledField:
    """``a(x / eps)`` for a unit-scale field ``a``."""

    base: object
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")

    @property
    def dim(self):
        return self.base.dim

    @property
    def ellipticity(self):
        return self.base.ellipticity

    def __call__(self, x):
        return self.base(np.asarray(x, dtype=np.float64) / self.eps)

    def breakpoints(self, s, t):
        return self.eps * np.asarray(self.base.breakpoints(s / self.eps, t / self.eps))


def eval_scaled(realization, eps, x):
    """Evaluate the realization at ``x / eps``."""
    return ScaledField(realization, eps)(x)


def ensemble_mean_inverse(spec):
    """Closed-form ensemble mean of ``1/a`` for a checkerboard spec."""
    return math.fsum(p / k for p, k in zip(spec.probs, spec.kappas))


def spatial_average(realization, observable, window_length, n_samples):
    """Midpoint-rule mean of ``observable(a(x))`` over ``[0, R]^dim``."""
    if not window_length > 0:
        raise ValueError("window_length must be positive")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    dim = getattr(realization, "dim", 1)
    t = (np.arange(n_samples) + 0.5) * (window_length / n_samples)
    if dim == 1:
        return float(np.mean(observable(realization(t))))
    total = 0.0
    # row by row keeps memory at O(n_samples)
    for x1 in t:
        pts = np.stack([np.full_like(t, x1), t], axis=-1)
        total += math.fsum(observable(realization(pts)))
    return total / n_samples**2
