"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line; run with ``-s`` to see them.
"""

import math

import numpy as np
import pytest

from homoglab import ergodics, fem2d
from homoglab.fields import (
    Checkerboard1DSpec,
    Checkerboard2DSpec,
    ConstantField,
    PeriodicField1D,
    ScaledField,
    StripeField,
    make_realization,
    spatial_average,
)
from homoglab.homog import (
    corrector_solve,
    effective_tensor_ensemble,
    effective_tensor_single,
    energy_consistency,
    harmonic_mean_1d,
    spd_check,
    voigt_reuss_bounds,
)
from homoglab.solve1d import l2_error, linear_source, solve_exact
from homoglab.studies import StudyConfig, run_study


def report(n, ok, detail):
    print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def cubic(x):
    return x * (x - 0.5) * (x - 1.0) / math.sqrt(3.0)


def test_criterion_01_periodic_harmonic_mean():
    val = harmonic_mean_1d(PeriodicField1D())
    report(1, abs(val - math.sqrt(3.0)) < 1e-8, f"harmonic mean {val:.12f} vs sqrt(3)")


def test_criterion_02_homogenized_solution():
    sol = solve_exact(ConstantField(math.sqrt(3.0)), linear_source(), n_cells=64)
    err = l2_error(sol, cubic)
    report(2, err < 1e-8, f"L2 error {err:.3e}")


def test_criterion_03_periodic_sweep():
    ref = solve_exact(ConstantField(math.sqrt(3.0)), linear_source(), n_cells=256)
    errs = []
    for k in range(1, 9):
        eps = 2.0**-k
        sol = solve_exact(ScaledField(PeriodicField1D(), eps), linear_source(), n_cells=max(256, int(64 / eps)))
        errs.append(l2_error(sol, ref))
    decreasing = all(b < a for a, b in zip(errs[1:], errs[2:]))
    ok = decreasing and errs[-1] < 1e-3 and errs[0] > 5e-3
    report(3, ok, "errors " + ", ".join(f"{e:.2e}" for e in errs))


def test_criterion_04_random_checkerboard_rate():
    spec = Checkerboard1DSpec([1.0, 3.0], [0.5, 0.5])
    abar = harmonic_mean_1d(spec)
    ubar = solve_exact(ConstantField(abar), linear_source(), n_cells=512)
    ratios = []
    for seed in range(5):
        r = make_realization(spec, seed)
        e = [l2_error(solve_exact(ScaledField(r, eps), linear_source(), n_cells=512), ubar) for eps in (2.0**-2, 2.0**-8)]
        ratios.append(e[1] / e[0])
    hits = sum(q <= 1 / 3 for q in ratios)
    ok = abar == 1.5 and hits >= 4
    report(4, ok, f"abar={abar!r}; ratios " + ", ".join(f"{q:.3f}" for q in ratios) + f"; {hits}/5 within 1/3")


def test_criterion_05_birkhoff_spatial_average():
    spec = Checkerboard1DSpec([1.0, 3.0], [0.5, 0.5])
    rel = []
    for seed in range(5):
        r = make_realization(spec, seed)
        val = spatial_average(r, lambda v: 1.0 / v, 4096.0, 4096 * 16)
        rel.append(abs(val - 2 / 3) / (2 / 3))
    report(5, all(e < 0.02 for e in rel), "relative errors " + ", ".join(f"{e:.4f}" for e in rel))


def test_criterion_06_periodization_sanity():
    homogeneous = effective_tensor_single(ConstantField(3.0, dim=2), 8).matrix
    exact = np.array_equal(homogeneous, 3.0 * np.eye(2))
    stripes = {}
    ok = exact
    for axis in (0, 1):
        A = effective_tensor_single(StripeField((1.0, 3.0), axis=axis), 8).matrix
        target = np.diag([1.5, 2.0]) if axis == 0 else np.diag([2.0, 1.5])
        stripes[axis] = A
        ok &= bool(np.all(np.abs(np.diag(A) - np.diag(target)) <= 0.02 * np.diag(target)))
        ok &= bool(abs(A[0, 1]) < 0.02)
    report(6, ok, f"constant exact={exact}; stripes diag {np.diag(stripes[0])}, {np.diag(stripes[1])}")


def test_criterion_07_two_phase_duality():
    A = effective_tensor_ensemble(Checkerboard2DSpec([1.0, 4.0], [0.5, 0.5]), 16, 16, seed0=0, elements_per_tile=4)
    mean_diag = 0.5 * (A.matrix[0, 0] + A.matrix[1, 1])
    off = abs(A.matrix[0, 1])
    ok = abs(mean_diag - 2.0) <= 0.2 and off <= 0.1 and A.M == 16
    report(7, ok, f"mean diagonal {mean_diag:.4f} (target 2), off-diagonal {off:.4f}, M={A.M}")


def test_criterion_08_structural_properties():
    specs = [
        Checkerboard2DSpec([1.0, 10.0, 50.0, 100.0], [0.4, 0.2, 0.2, 0.2]),
        Checkerboard2DSpec([1.0, 4.0], [0.5, 0.5]),
    ]
    worst_sym = worst_gap = 0.0
    worst_margin = math.inf
    count = 0
    failures = []
    for spec in specs:
        for seed in range(30):
            r = make_realization(spec, seed)
            A = effective_tensor_single(r, 8)
            b = A.realized_bounds
            ev = A.eigenvalues
            margin = min(ev.min() - (b.harmonic - 1e-8), (b.arithmetic + 1e-8) - ev.max())
            gaps = [energy_consistency(corrector_solve(r, 8, xi), r).gap for xi in ([1.0, 0.0], [0.0, 1.0], [0.6, 0.8])]
            spd = spd_check(A, spec.ellipticity.nu1, spec.ellipticity.nu2)
            worst_sym = max(worst_sym, A.asymmetry)
            worst_gap = max(worst_gap, max(gaps))
            worst_margin = min(worst_margin, margin)
            count += 1
            if A.asymmetry >= 1e-6 or margin < 0 or max(gaps) >= 1e-6 or not spd.passed:
                failures.append(seed)
    ok = not failures and count >= 50
    report(
        8,
        ok,
        f"{count} realizations; max asymmetry {worst_sym:.2e}, max energy gap {worst_gap:.2e}, "
        f"min bound margin {worst_margin:.3e}, failing seeds {failures}",
    )


def test_criterion_09_energy_density_weak_limit():
    details = []
    ok = True
    fields = {
        "periodic": {"type": "periodic"},
        "checkerboard": {"type": "checkerboard", "kappas": [1.0, 3.0], "probs": [0.5, 0.5]},
    }
    for name, fld in fields.items():
        rep = run_study(StudyConfig(kind="energy-1d", field=fld, eps=[2.0**-k for k in range(1, 7)], seed=0))
        eps = np.array(rep.column("eps"))
        gap = np.array(rep.column("energy_gap"))
        for b in (0, 1):
            first = gap[(eps == 0.5) & (np.array(rep.column("bump")) == b)][0]
            last = gap[(eps == 2.0**-6) & (np.array(rep.column("bump")) == b)][0]
            ok &= bool(last < first)
            details.append(f"{name}/bump{b}: {first:.2e} -> {last:.2e}")
    report(9, ok, "; ".join(details))


def _returns_exactly(q, periods):
    """Iterate the integer cat map on all points of the 1/q lattice and confirm first returns."""
    p1, p2 = np.meshgrid(np.arange(q), np.arange(q), indexing="ij")
    a, b = p1.ravel().copy(), p2.ravel().copy()
    a0, b0 = a.copy(), b.copy()
    first = np.zeros(a.size, dtype=np.int64)
    for k in range(1, int(periods.max()) + 1):
        a, b = (2 * a + b) % q, (a + b) % q
        back = (a == a0) & (b == b0) & (first == 0)
        first[back] = k
    return np.array_equal(first, periods)


def test_criterion_10_ergodics():
    det_ok = ergodics.cat_map_determinant() == 1 and round(np.linalg.det(ergodics.CAT_MATRIX.astype(float))) == 1
    period_ok = True
    for q in range(1, 65):
        p1, p2 = np.meshgrid(np.arange(q), np.arange(q), indexing="ij")
        periods = ergodics.detect_periods(p1.ravel(), p2.ravel(), q, 10 * q + 10)
        if np.any(periods < 1) or not _returns_exactly(q, periods):
            period_ok = False
    x0 = (1 / 32, (math.pi / 32) % 1.0)
    avg = ergodics.birkhoff_time_average(x0, lambda p: np.cos(2 * np.pi * p[:, 0]) * np.cos(2 * np.pi * p[:, 1]), 10**5)
    disc = ergodics.equidistribution_discrepancy(ergodics.orbit(x0, 10**5), 8)
    ok = det_ok and period_ok and abs(avg) < 0.02 and disc < 0.08
    report(10, ok, f"det ok={det_ok}; periods ok for q<=64: {period_ok}; time average {avg:.2e}; discrepancy {disc:.2e}")


def test_criterion_11_two_dimensional_smoke(tmp_path):
    cfg = StudyConfig(kind="convergence-2d", mesh=128, eps=[0.5, 0.25, 0.125], seed=0)
    rep = run_study(cfg, tmp_path)
    gaps = rep.column("rel_l2_gap")
    resid = rep.column("cg_residual")
    field_rows = [len(rep.extras[f"field_eps{k}.csv"].rows) for k in range(3)]
    sol_rows = [len(rep.extras[f"solution_eps{k}.csv"].rows) for k in range(3)]
    shapes_ok = field_rows == [128 * 128] * 3 and sol_rows == [129 * 129] * 3
    files_ok = all((tmp_path / f"{stem}_eps{k}.csv").exists() for stem in ("field", "solution", "flux") for k in range(3))
    ok = all(r < 1e-10 for r in resid) and gaps[0] > gaps[1] > gaps[2] and shapes_ok and files_ok
    report(
        11,
        ok,
        "gaps " + ", ".join(f"{g:.3f}" for g in gaps) + "; residuals " + ", ".join(f"{r:.1e}" for r in resid),
    )
