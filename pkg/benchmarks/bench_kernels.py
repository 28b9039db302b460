"""Time each hot kernel under the numba and pure-numpy implementations.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both implementations are always importable from ``homoglab.kernels.IMPLEMENTATIONS``
regardless of ``HOMOGLAB_DISABLE_NUMBA``, so one process compares them side by side.
The first numba call (compilation) is excluded from timing.
"""

import argparse
import time

import numpy as np

from homoglab import fem2d
from homoglab.fields import Checkerboard2DSpec
from homoglab.kernels import IMPLEMENTATIONS


def workloads():
    spec = Checkerboard2DSpec([1.0, 10.0, 50.0, 100.0], [0.4, 0.2, 0.2, 0.2])
    i, j = np.meshgrid(np.arange(1024), np.arange(1024))
    tiles = np.stack([i.ravel(), j.ravel()], axis=1).astype(np.int64)
    cum = spec.cumulative

    q = 97
    p1, p2 = np.meshgrid(np.arange(q), np.arange(q))
    p1, p2, qq = p1.ravel().astype(np.int64), p2.ravel().astype(np.int64), np.full(q * q, q, dtype=np.int64)

    mesh = fem2d.StructuredMesh(256, 256)
    conn = mesh.connectivity()
    coef = np.random.default_rng(0).choice(spec.kappas, mesh.n_elements)
    kref = fem2d.element_stiffness_q1(1.0, mesh.hx, mesh.hy)

    A, b = fem2d.assemble_dirichlet(mesh, coef, fem2d.gaussian_source())
    dinv = 1.0 / A.diagonal()
    x0 = np.zeros_like(b)

    return [
        ("tile_categories", "1M tiles", lambda k: k(0, tiles, cum)),
        ("cat_orbit", "1e6 steps", lambda k: k(1 / 32, np.pi / 32, 10**6)),
        ("cat_periods", f"q={q}, {q * q} pts", lambda k: k(p1, p2, qq, 10**4)),
        ("q1_triplets", "256x256 mesh", lambda k: k(conn, coef, kref)),
        ("pcg", "256x256 checkerboard", lambda k: k(A, b, x0, dinv, 1e-10, 20000)),
    ]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'kernel':36s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s}")
    for key, size, run in workloads():
        label = f"{key} ({size})"
        impl_np = IMPLEMENTATIONS["numpy"][key]
        impl_nb = IMPLEMENTATIONS["numba"][key]
        run(impl_nb)  # compile
        t_np = best_of(lambda: run(impl_np), args.repeat)
        t_nb = best_of(lambda: run(impl_nb), args.repeat)
        print(f"{label:36s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
