"""Effective coefficients: closed form in 1D, periodization cell problems in 2D."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.integrate
import scipy.sparse as sp

from . import fem2d
from ._accel import threads_from_env
from .fields import CheckerboardSpec, ConstantField, ensemble_mean_inverse, make_realization

log = logging.getLogger(__name__)

SEED_MASK = 2**64 - 1


@dataclass
class EffectiveTensor:
    matrix: np.ndarray
    provenance: str
    L: int = None
    M: int = 1
    stderr: np.ndarray = None
    asymmetry: float = 0.0
    raw: np.ndarray = None
    realized_bounds: "VoigtReussBounds" = None
    samples: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if self.stderr is None:
            self.stderr = np.zeros_like(self.matrix)

    @property
    def eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix)

    def apply(self, xi):
        return self.matrix @ np.asarray(xi, dtype=float)


@dataclass
class Corrector:
    L: int
    xi: np.ndarray
    chi: np.ndarray
    grad: np.ndarray
    coeff: np.ndarray
    elements_per_tile: int
    diagnostics: fem2d.CGDiagnostics = None

    def problem(self):
        return fem2d.PeriodicCellProblem(self.L, self.coeff.reshape(self.chi.shape), self.xi, self.elements_per_tile)

    def flux_average(self):
        """Cell average of ``a (grad chi + xi)``."""
        return np.mean(self.coeff[:, None] * (self.grad + self.xi[None, :]), axis=0)


@dataclass(frozen=True)
class VoigtReussBounds:
    harmonic: float
    arithmetic: float


class EnergyReport(NamedTuple):
    flux_value: float
    energy_value: float
    gap: float


@dataclass
class SpdReport:
    passed: bool
    symmetry_gap: float
    eigenvalues: np.ndarray
    lower_margin: float
    upper_margin: float
    violations: list

    @property
    def verdict(self):
        return "pass" if self.passed else "fail"


def harmonic_mean_1d(coeff, period=1.0):
    """Harmonic mean ``1 / <1/a>`` of a 1D coefficient.

    Accepts a :class:`CheckerboardSpec` (closed form), a constant field, an
    array of equally weighted values, or a callable integrated adaptively over
    one ``period``.
    """
    if isinstance(coeff, CheckerboardSpec):
        return 1.0 / ensemble_mean_inverse(coeff)
    if isinstance(coeff, ConstantField):
        return float(coeff.value)
    if callable(coeff):
        val, _ = scipy.integrate.quad(
            lambda x: 1.0 / float(coeff(np.array([x]))[0]), 0.0, period, epsabs=1e-14, epsrel=1e-13, limit=200
        )
        return period / val
    v = np.asarray(coeff, dtype=float)
    return 1.0 / np.mean(1.0 / v)


def voigt_reuss_bounds(spec):
    """Harmonic (lower) and arithmetic (upper) means of a spec or of equally weighted values."""
    if isinstance(spec, CheckerboardSpec):
        return VoigtReussBounds(
            harmonic=1.0 / ensemble_mean_inverse(spec),
            arithmetic=math.fsum(p * k for p, k in zip(spec.probs, spec.kappas)),
        )
    v = np.asarray(spec, dtype=float).ravel()
    return VoigtReussBounds(harmonic=float(1.0 / np.mean(1.0 / v)), arithmetic=float(np.mean(v)))


def cell_coefficients(realization, L, elements_per_tile=4):
    """Per-element values on the torus ``[0, L)^2``, shape ``(N, N)`` indexed ``[j, i]``.

    Fields with ``tile_values`` are read tile by tile (tiles ``0 .. L-1`` per axis);
    anything else is sampled at element centroids.
    """
    m = int(elements_per_tile)
    n = int(L) * m
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    tile_values = getattr(realization, "tile_values", None)
    if tile_values is not None:
        idx = np.stack([i // m, j // m], axis=-1)
        return np.asarray(tile_values(idx), dtype=float)
    pts = np.stack([(i + 0.5) / m, (j + 0.5) / m], axis=-1)
    return np.asarray(realization(pts), dtype=float)


def _corrector_from_coeff(coeff, L, xi, elements_per_tile, tol, max_iter=None):
    xi = np.asarray(xi, dtype=float)
    if not np.any(xi != 0):
        raise ValueError("direction xi must be nonzero")
    problem = fem2d.PeriodicCellProblem(L, coeff, xi, elements_per_tile)
    chi, diag = fem2d.solve_periodic_cell(problem, tol=tol, max_iter=max_iter)
    grad = fem2d.periodic_element_gradients(problem, chi)
    return Corrector(int(L), xi, chi, grad, problem.coeff.ravel(), int(elements_per_tile), diag)


def corrector_solve(realization, L, xi, elements_per_tile=4, tol=1e-10, max_iter=None):
    """Periodic corrector for mean gradient ``xi`` on the ``L x L`` torus of unit tiles."""
    coeff = cell_coefficients(realization, L, elements_per_tile)
    return _corrector_from_coeff(coeff, L, xi, elements_per_tile, tol, max_iter)


def _tensor_from_coeff(coeff, L, elements_per_tile, tol):
    cols = []
    diags = []
    for j in range(2):
        e = np.zeros(2)
        e[j] = 1.0
        cor = _corrector_from_coeff(coeff, L, e, elements_per_tile, tol)
        cols.append(cor.flux_average())
        diags.append(cor.diagnostics)
    raw = np.stack(cols, axis=1)
    scale = np.max(np.abs(raw))
    asym = float(np.max(np.abs(raw - raw.T)) / scale) if scale > 0 else 0.0
    return raw, asym, diags


def effective_tensor_single(realization, L, elements_per_tile=4, tol=1e-10):
    """Periodization estimate of the effective tensor from one realization.

    Column ``j`` is the cell average of ``a (grad chi_j + e_j)``. The result is
    symmetrized; the relative asymmetry of the raw matrix is kept in ``asymmetry``.
    """
    coeff = cell_coefficients(realization, L, elements_per_tile)
    raw, asym, diags = _tensor_from_coeff(coeff, L, elements_per_tile, tol)
    if asym > 1e-6:
        log.warning("effective tensor asymmetry %.3e exceeds 1e-6 before symmetrization", asym)
    return EffectiveTensor(
        matrix=0.5 * (raw + raw.T),
        provenance="periodization",
        L=int(L),
        M=1,
        asymmetry=asym,
        raw=raw,
        realized_bounds=voigt_reuss_bounds(coeff),
        metadata={
            "seed": getattr(realization, "seed", None),
            "elements_per_tile": int(elements_per_tile),
            "cg_iterations": [d.iterations for d in diags],
            "cg_residuals": [d.residual for d in diags],
            "tol": tol,
        },
    )


def ensemble_seeds(seed0, M):
    return [(int(seed0) + k) & SEED_MASK for k in range(int(M))]


def effective_tensor_ensemble(spec, L, M, seed0=0, elements_per_tile=4, tol=1e-10, workers=None):
    """Mean and standard error of periodization estimates over ``M`` seeds ``seed0 + k``.

    Failed realizations are recorded in ``failures``; the ensemble needs at
    least ``ceil(M / 2)`` successes.
    """
    if M < 2:
        raise ValueError("ensemble size M must be >= 2")
    seeds = ensemble_seeds(seed0, M)

    def job(seed):
        return effective_tensor_single(make_realization(spec, seed), L, elements_per_tile, tol)

    workers = threads_from_env() if workers is None else max(1, int(workers))
    results = [None] * len(seeds)
    failures = []
    with ThreadPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
        futures = [pool.submit(job, s) for s in seeds]
        for k, fut in enumerate(futures):
            try:
                results[k] = fut.result()
            except (fem2d.ConvergenceError, ArithmeticError, ValueError) as exc:
                failures.append({"index": k, "seed": seeds[k], "error": str(exc)})
                log.warning("realization %d (seed %d) failed: %s", k, seeds[k], exc)
    samples = [r for r in results if r is not None]
    quorum = math.ceil(M / 2)
    if len(samples) < quorum:
        raise RuntimeError(f"only {len(samples)} of {M} realizations succeeded (quorum {quorum})")
    stack = np.stack([r.matrix for r in samples])
    m = len(samples)
    mean = stack.mean(axis=0)
    stderr = stack.std(axis=0, ddof=1) / math.sqrt(m) if m > 1 else np.zeros_like(mean)
    return EffectiveTensor(
        matrix=mean,
        provenance="periodization",
        L=int(L),
        M=m,
        stderr=stderr,
        asymmetry=max(r.asymmetry for r in samples),
        raw=None,
        realized_bounds=voigt_reuss_bounds(spec),
        samples=samples,
        failures=failures,
        metadata={"seed0": int(seed0), "seeds": seeds, "elements_per_tile": int(elements_per_tile), "tol": tol},
    )


def energy_consistency(corrector, realization=None, xi=None):
    """Compare ``xi . <a(grad chi + xi)>`` with ``<(xi + grad chi) . a (xi + grad chi)>``.

    When ``realization`` is given the coefficients are re-read from it, so the
    check also confirms the corrector belongs to that medium.
    """
    xi = corrector.xi if xi is None else np.asarray(xi, dtype=float)
    coeff = corrector.coeff
    if realization is not None:
        coeff = cell_coefficients(realization, corrector.L, corrector.elements_per_tile).ravel()
    problem = fem2d.PeriodicCellProblem(
        corrector.L, coeff.reshape(corrector.chi.shape), xi, corrector.elements_per_tile
    )
    flux = float(xi @ np.mean(coeff[:, None] * (corrector.grad + xi[None, :]), axis=0))
    kref = fem2d.element_stiffness_q1(1.0, problem.h, problem.h)
    w = corrector.chi.ravel()[problem.connectivity()] + problem.local_linear(xi)[None, :]
    energy = float(np.sum(coeff * np.einsum("ei,ij,ej->e", w, kref, w)) / corrector.L**2)
    gap = abs(flux - energy) / abs(energy) if energy != 0 else abs(flux)
    return EnergyReport(flux, energy, gap)


def zero_trial_energy(corrector, xi=None):
    """Energy of the trial field ``chi = 0``, i.e. ``xi . <a> xi``."""
    xi = corrector.xi if xi is None else np.asarray(xi, dtype=float)
    return float(np.mean(corrector.coeff) * (xi @ xi))


def spd_check(A, nu1, nu2, tol=1e-8, symmetry_tol=1e-6):
    """Check symmetry and that all eigenvalues lie in ``[nu1 - tol, nu2 + tol]``."""
    if isinstance(A, EffectiveTensor):
        sym_gap = A.asymmetry
        M = A.matrix
    else:
        M = np.atleast_2d(np.asarray(A, dtype=float))
        scale = np.max(np.abs(M))
        sym_gap = float(np.max(np.abs(M - M.T)) / scale) if scale > 0 else 0.0
    ev = np.linalg.eigvalsh(0.5 * (M + M.T))
    lower = float(ev.min() - nu1)
    upper = float(nu2 - ev.max())
    violations = []
    if sym_gap > symmetry_tol:
        violations.append(f"asymmetry {sym_gap:.3e} > {symmetry_tol:.1e}")
    if lower < -tol:
        violations.append(f"eigenvalue {ev.min():.6g} below nu1={nu1:.6g} by {-lower:.6g}")
    if upper < -tol:
        violations.append(f"eigenvalue {ev.max():.6g} above nu2={nu2:.6g} by {-upper:.6g}")
    return SpdReport(not violations, sym_gap, ev, lower, upper, violations)


def periodized_1d(realization, L, elements_per_tile=4, tol=1e-12):
    """1D periodization estimate from a P1 periodic cell problem on ``[0, L)``."""
    m = int(elements_per_tile)
    n = int(L) * m
    if int(L) < 2:
        raise ValueError("L must be >= 2")
    h = 1.0 / m
    tile_values = getattr(realization, "tile_values", None)
    if tile_values is not None:
        a = np.asarray(tile_values(np.arange(n) // m), dtype=float)
    else:
        a = np.asarray(realization((np.arange(n) + 0.5) * h), dtype=float)
    i = np.arange(n)
    ip = (i + 1) % n
    rows = np.concatenate([i, i, ip, ip])
    cols = np.concatenate([i, ip, i, ip])
    vals = np.concatenate([a, -a, -a, a]) / h
    K = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    rhs = np.zeros(n)
    np.add.at(rhs, i, a)
    np.add.at(rhs, ip, -a)
    x, _ = fem2d.cg_solve(K[1:, 1:], rhs[1:], tol=tol)
    chi = np.concatenate([[0.0], x])
    grad = (chi[ip] - chi[i]) / h
    return float(np.mean(a * (grad + 1.0)))
