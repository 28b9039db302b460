"""Essentially exact solutions of ``-(a u')' = f`` on an interval.

In 1D the flux ``sigma = a u'`` satisfies ``sigma(x) = C - F(x)`` with
``F(x) = int_s^x f``. The Dirichlet data fix ``C`` and ``u`` follows by one
more integration. All integrals use 5-point Gauss-Legendre on a partition that
contains every jump of the coefficient, so piecewise-constant coefficients are
integrated without discretization bias.
"""

from dataclasses import dataclass, field

import numpy as np

_GX, _GW = np.polynomial.legendre.leggauss(5)
GAUSS_NODES = 0.5 * (_GX + 1.0)
GAUSS_WEIGHTS = 0.5 * _GW


@dataclass(frozen=True)
class Interval:
    s: float = 0.0
    t: float = 1.0

    def __post_init__(self):
        if not self.s < self.t:
            raise ValueError(f"interval needs s < t, got ({self.s}, {self.t})")

    @property
    def length(self):
        return self.t - self.s


@dataclass(frozen=True)
class Source1D:
    """Source term; ``antiderivative`` is any primitive of ``func`` when known."""

    func: object
    antiderivative: object = None

    def __call__(self, x):
        return np.broadcast_to(np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float), np.shape(x))


def linear_source():
    """``f(x) = -3 (2x - 1)`` with primitive ``3x - 3x^2``."""
    return Source1D(lambda x: -3.0 * (2.0 * x - 1.0), lambda x: 3.0 * x - 3.0 * x * x)


def constant_source(c):
    c = float(c)
    return Source1D(lambda x: np.full(np.shape(x), c), lambda x: c * np.asarray(x, dtype=float))


def _gauss_on(a, b):
    """Gauss nodes and weights on each ``[a_i, b_i]``; returns arrays of shape ``(n, 5)``."""
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    return a + (b - a) * GAUSS_NODES, (b - a) * GAUSS_WEIGHTS


class _Primitive:
    """``F(x) = int_s^x f`` evaluated at arbitrary points of ``[s, t]``."""

    def __init__(self, source, nodes):
        self.source = source
        self.nodes = nodes
        if source.antiderivative is not None:
            self._g0 = float(source.antiderivative(np.array(nodes[0])))
            self.at_nodes = self(nodes)
        else:
            xq, wq = _gauss_on(nodes[:-1], nodes[1:])
            cell = np.sum(wq * source(xq), axis=-1)
            self.at_nodes = np.concatenate([[0.0], np.cumsum(cell)])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.source.antiderivative is not None:
            return np.asarray(self.source.antiderivative(x), dtype=float) - self._g0
        i = np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, len(self.nodes) - 2)
        left = self.nodes[i]
        xq, wq = _gauss_on(left, x)
        return self.at_nodes[i] + np.sum(wq * self.source(xq), axis=-1)


def _partition(domain, n_cells, coeff):
    nodes = np.linspace(domain.s, domain.t, n_cells + 1)
    brk = getattr(coeff, "breakpoints", None)
    if brk is not None:
        b = np.asarray(brk(domain.s, domain.t), dtype=float)
        if b.size:
            nodes = np.union1d(nodes, b)
            # drop slivers produced by breakpoints that sit on a grid node up to rounding
            keep = np.concatenate([[True], np.diff(nodes) > 1e-13 * domain.length])
            nodes = nodes[keep]
            nodes[-1] = domain.t
    mid = 0.5 * (nodes[:-1] + nodes[1:])
    fine = np.empty(2 * nodes.size - 1)
    fine[0::2] = nodes
    fine[1::2] = mid
    return fine


@dataclass
class Solution1D:
    """Samples of ``u`` and ``sigma`` on ``x``; ``x[1::2]`` are cell midpoints.

    The coefficient is smooth (or constant) inside every cell ``[x[i], x[i+1]]``.
    Calling the solution evaluates ``u`` exactly (up to quadrature) at any point.
    """

    x: np.ndarray
    u: np.ndarray
    sigma: np.ndarray
    C: float
    coeff: object
    source: Source1D
    domain: Interval
    metadata: dict = field(default_factory=dict)
    _primitive: object = field(default=None, repr=False)
    _xq: np.ndarray = field(default=None, repr=False)
    _wq: np.ndarray = field(default=None, repr=False)
    _aq: np.ndarray = field(default=None, repr=False)
    _fq: np.ndarray = field(default=None, repr=False)

    def flux_at(self, x):
        return self.C - self._primitive(x)

    def gradient_at(self, x):
        x = np.asarray(x, dtype=float)
        return self.flux_at(x) / self.coeff(x)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(self.x, x, side="right") - 1, 0, len(self.x) - 2)
        xq, wq = _gauss_on(self.x[i], x)
        integrand = (self.C - self._primitive(xq)) / self.coeff(xq)
        return self.u[i] + np.sum(wq * integrand, axis=-1)

    def integrate(self, func):
        """``int func(x, a, sigma) dx`` by Gauss quadrature on the solution cells."""
        sig = self.C - self._fq
        return float(np.sum(self._wq * func(self._xq, self._aq, sig)))

    def energy(self):
        """``int a (u')^2 = int sigma^2 / a``."""
        return self.integrate(lambda x, a, s: s * s / a)

    def load_work(self):
        """``int f u``, with ``u`` evaluated exactly at the Gauss nodes."""
        uq = self(self._xq.ravel()).reshape(self._xq.shape)
        return float(np.sum(self._wq * self.source(self._xq) * uq))

    def gradient_l2(self):
        return float(np.sqrt(self.integrate(lambda x, a, s: (s / a) ** 2)))

    def rows(self):
        return [(float(x), float(u), float(s)) for x, u, s in zip(self.x, self.u, self.sigma)]


def solve_exact(coeff, f, domain=Interval(), n_cells=64, bc=(0.0, 0.0), metadata=None):
    """Solve ``-(a u')' = f`` on ``domain`` with ``u(s) = bc[0]``, ``u(t) = bc[1]``.

    ``coeff`` is a vectorised callable; if it has ``breakpoints(s, t)`` those
    positions are inserted in the quadrature partition. Nonzero ``bc`` is
    handled by an affine lift, which here only shifts the integration constant.
    """
    if n_cells < 2:
        raise ValueError("n_cells must be >= 2")
    x = _partition(domain, int(n_cells), coeff)
    prim = _Primitive(f, x)
    xq, wq = _gauss_on(x[:-1], x[1:])
    aq = np.asarray(coeff(xq), dtype=float)
    if not np.all(np.isfinite(aq)) or np.any(aq <= 0):
        bad = xq[~(np.isfinite(aq) & (aq > 0))]
        raise ValueError(f"coefficient must be positive and finite; fails at x={bad.ravel()[0]:.6g}")
    fq = prim(xq)
    ua, ub = (float(v) for v in bc)
    inv_int = np.sum(wq / aq)
    c = (ub - ua + np.sum(wq * fq / aq)) / inv_int
    du = np.sum(wq * (c - fq) / aq, axis=-1)
    u = ua + np.concatenate([[0.0], np.cumsum(du)])
    u[-1] = ub
    sigma = c - prim(x)
    meta = {"n_cells": int(n_cells), "n_points": int(x.size)}
    if metadata:
        meta.update(metadata)
    return Solution1D(
        x=x,
        u=u,
        sigma=sigma,
        C=float(c),
        coeff=coeff,
        source=f,
        domain=domain,
        metadata=meta,
        _primitive=prim,
        _xq=xq,
        _wq=wq,
        _aq=aq,
        _fq=fq,
    )


def _simpson_l2(x, g):
    h = x[2::2] - x[:-2:2]
    sq = g * g
    total = np.sum(h / 6.0 * (sq[:-2:2] + 4.0 * sq[1::2] + sq[2::2]))
    return float(np.sqrt(max(total, 0.0)))


def l2_error(sol, ref):
    """``||u - ref||_{L^2}`` by composite Simpson on the solution grid."""
    return _simpson_l2(sol.x, sol.u - np.asarray(ref(sol.x), dtype=float))


def flux_of(sol):
    return sol.sigma


def flux_l2_error(sol, ref_flux):
    """``||sigma - ref_flux||_{L^2}`` by composite Simpson on the solution grid."""
    return _simpson_l2(sol.x, sol.sigma - np.asarray(ref_flux(sol.x), dtype=float))
