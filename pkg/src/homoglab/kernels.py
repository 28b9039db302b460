"""Hot inner loops, each in a numba and a pure-numpy flavour.

The public names at the bottom of the module are bound to one flavour based
on :data:`homoglab._accel.USE_NUMBA`. Both flavours stay importable under
their private names so tests and ``benchmarks/`` can compare them directly.

Hashing constants (splitmix64, Steele/Lea/Flood 2014)::

    mix(z):  z += 0x9E3779B97F4A7C15
             z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
             z  = (z ^ (z >> 27)) * 0x94D049BB133111EB
             z  =  z ^ (z >> 31)

A tile with integer coordinates (c_1, ..., c_n) under seed s hashes to
``h = mix(... mix(mix(s) ^ c_1) ... ^ c_n)`` where negative coordinates are
taken in two's complement. ``u = (h >> 11) * 2**-53`` lies in [0, 1).
"""

import numpy as np

from ._accel import USE_NUMBA, njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
OFFSET_TAG = np.uint64(0x6F66667365742D75)  # b"offset-u"
INV_2_53 = 1.0 / 9007199254740992.0

_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


# ---------------------------------------------------------------------------
# splitmix64 hashing
# ---------------------------------------------------------------------------


def _mix_np(z):
    with np.errstate(over="ignore"):
        z = z + GOLDEN
        z = (z ^ (z >> _S30)) * MIX1
        z = (z ^ (z >> _S27)) * MIX2
    return z ^ (z >> _S31)


@njit
def _mix_nb(z):
    z = z + GOLDEN
    z = (z ^ (z >> _S30)) * MIX1
    z = (z ^ (z >> _S27)) * MIX2
    return z ^ (z >> _S31)


def mix64(values):
    """Apply the splitmix64 finalizer elementwise to unsigned 64-bit words."""
    z = np.atleast_1d(np.asarray(values, dtype=np.uint64))
    return _mix_np(z)


def _tile_hash_np(seed, idx):
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    h = np.full(idx.shape[0], seed, dtype=np.uint64)
    h = _mix_np(h)
    for j in range(idx.shape[1]):
        h = _mix_np(h ^ idx[:, j].view(np.uint64))
    return h


def _tile_categories_np(seed, idx, cum):
    h = _tile_hash_np(np.uint64(seed), idx)
    u = (h >> _S11).astype(np.float64) * INV_2_53
    cat = np.searchsorted(cum, u, side="right")
    return np.minimum(cat, cum.shape[0] - 1).astype(np.int64)


@njit
def _tile_categories_nb(seed, idx, cum):
    n = idx.shape[0]
    d = idx.shape[1]
    k_last = cum.shape[0] - 1
    out = np.empty(n, dtype=np.int64)
    h0 = _mix_nb(seed)
    for i in range(n):
        h = h0
        for j in range(d):
            h = _mix_nb(h ^ np.uint64(idx[i, j]))
        u = np.float64(h >> _S11) * INV_2_53
        k = 0
        while k < k_last and not (u < cum[k]):
            k += 1
        out[i] = k
    return out


def _call_tile_categories_nb(seed, idx, cum):
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    cum = np.ascontiguousarray(cum, dtype=np.float64)
    return _tile_categories_nb(np.uint64(seed), idx, cum)


def uniform_stream(seed, count, tag=OFFSET_TAG):
    """``count`` uniforms in [0, 1) drawn from a tagged sub-stream of ``seed``."""
    base = _mix_np(_mix_np(np.array([seed], dtype=np.uint64)) ^ np.uint64(tag))
    h = _mix_np(base ^ np.arange(count, dtype=np.uint64))
    return (h >> _S11).astype(np.float64) * INV_2_53


# ---------------------------------------------------------------------------
# cat map on the 2-torus
# ---------------------------------------------------------------------------


def _cat_orbit_np(x1, x2, n):
    out = np.empty((n, 2))
    for k in range(n):
        y1 = 2.0 * x1 + x2
        y2 = x1 + x2
        x1 = y1 - np.floor(y1)
        x2 = y2 - np.floor(y2)
        out[k, 0] = x1
        out[k, 1] = x2
    return out


@njit
def _cat_orbit_nb(x1, x2, n):
    out = np.empty((n, 2))
    for k in range(n):
        y1 = 2.0 * x1 + x2
        y2 = x1 + x2
        x1 = y1 - np.floor(y1)
        x2 = y2 - np.floor(y2)
        out[k, 0] = x1
        out[k, 1] = x2
    return out


def _cat_periods_np(p1, p2, q, max_iter):
    p1 = np.asarray(p1, dtype=np.int64)
    p2 = np.asarray(p2, dtype=np.int64)
    q = np.asarray(q, dtype=np.int64)
    out = np.full(p1.shape, -1, dtype=np.int64)
    a, b = p1.copy(), p2.copy()
    active = np.arange(p1.size)
    for k in range(1, max_iter + 1):
        if active.size == 0:
            break
        qa = q[active]
        a_new = (2 * a + b) % qa
        b = (a + b) % qa
        a = a_new
        hit = (a == p1[active]) & (b == p2[active])
        if hit.any():
            out[active[hit]] = k
            keep = ~hit
            active, a, b = active[keep], a[keep], b[keep]
    return out


@njit
def _cat_periods_nb(p1, p2, q, max_iter):
    n = p1.shape[0]
    out = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        a = p1[i]
        b = p2[i]
        qi = q[i]
        for k in range(1, max_iter + 1):
            a, b = (2 * a + b) % qi, (a + b) % qi
            if a == p1[i] and b == p2[i]:
                out[i] = k
                break
    return out


def _call_cat_periods_nb(p1, p2, q, max_iter):
    return _cat_periods_nb(
        np.ascontiguousarray(p1, dtype=np.int64),
        np.ascontiguousarray(p2, dtype=np.int64),
        np.ascontiguousarray(q, dtype=np.int64),
        int(max_iter),
    )


def cat_power_exact(p1, p2, q, k):
    """Apply the integer cat map ``k`` times (``k`` may vary per point)."""
    a = np.array(p1, dtype=np.int64, copy=True)
    b = np.array(p2, dtype=np.int64, copy=True)
    q = np.broadcast_to(np.asarray(q, dtype=np.int64), a.shape)
    k = np.broadcast_to(np.asarray(k, dtype=np.int64), a.shape)
    for step in range(int(k.max(initial=0))):
        m = k > step
        a_new = np.where(m, (2 * a + b) % q, a)
        b = np.where(m, (a + b) % q, b)
        a = a_new
    return a, b


# ---------------------------------------------------------------------------
# Q1 assembly triplets
# ---------------------------------------------------------------------------


def _q1_triplets_np(conn, coef, kref):
    nl = conn.shape[1]
    rows = np.repeat(conn, nl, axis=1).ravel()
    cols = np.tile(conn, (1, nl)).ravel()
    vals = (coef[:, None, None] * kref[None, :, :]).ravel()
    return rows, cols, vals


@njit
def _q1_triplets_nb(conn, coef, kref):
    ne = conn.shape[0]
    nl = conn.shape[1]
    m = ne * nl * nl
    rows = np.empty(m, dtype=np.int64)
    cols = np.empty(m, dtype=np.int64)
    vals = np.empty(m)
    p = 0
    for e in range(ne):
        c = coef[e]
        for i in range(nl):
            for j in range(nl):
                rows[p] = conn[e, i]
                cols[p] = conn[e, j]
                vals[p] = c * kref[i, j]
                p += 1
    return rows, cols, vals


def _call_q1_triplets_nb(conn, coef, kref):
    return _q1_triplets_nb(
        np.ascontiguousarray(conn, dtype=np.int64),
        np.ascontiguousarray(coef, dtype=np.float64),
        np.ascontiguousarray(kref, dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# Jacobi-preconditioned conjugate gradients
# ---------------------------------------------------------------------------


def _pcg_np(A, b, x0, dinv, tol, max_iter):
    bnorm = np.sqrt(b @ b)
    x = x0.copy()
    r = b - A @ x
    res = np.sqrt(r @ r) / bnorm
    if res <= tol:
        return x, 0, res
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        res = np.sqrt(r @ r) / bnorm
        if res <= tol:
            return x, it, res
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, max_iter, res


@njit
def _csr_matvec(indptr, indices, data, x, out):
    for i in range(indptr.shape[0] - 1):
        s = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            s += data[k] * x[indices[k]]
        out[i] = s


@njit
def _pcg_csr_nb(indptr, indices, data, b, x0, dinv, tol, max_iter):
    n = b.shape[0]
    bnorm = np.sqrt(np.dot(b, b))
    x = x0.copy()
    Ap = np.empty(n)
    _csr_matvec(indptr, indices, data, x, Ap)
    r = b - Ap
    res = np.sqrt(np.dot(r, r)) / bnorm
    if res <= tol:
        return x, 0, res
    z = dinv * r
    p = z.copy()
    rz = np.dot(r, z)
    for it in range(1, max_iter + 1):
        _csr_matvec(indptr, indices, data, p, Ap)
        alpha = rz / np.dot(p, Ap)
        for i in range(n):
            x[i] += alpha * p[i]
            r[i] -= alpha * Ap[i]
        res = np.sqrt(np.dot(r, r)) / bnorm
        if res <= tol:
            return x, it, res
        rz_new = 0.0
        for i in range(n):
            z[i] = dinv[i] * r[i]
            rz_new += r[i] * z[i]
        beta = rz_new / rz
        rz = rz_new
        for i in range(n):
            p[i] = z[i] + beta * p[i]
    return x, max_iter, res


def _pcg_nb(A, b, x0, dinv, tol, max_iter):
    x, it, res = _pcg_csr_nb(
        A.indptr.astype(np.int64),
        A.indices.astype(np.int64),
        A.data.astype(np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
        np.ascontiguousarray(x0, dtype=np.float64),
        np.ascontiguousarray(dinv, dtype=np.float64),
        float(tol),
        int(max_iter),
    )
    return x, int(it), float(res)


IMPLEMENTATIONS = {
    "numpy": {
        "tile_categories": _tile_categories_np,
        "cat_orbit": _cat_orbit_np,
        "cat_periods": _cat_periods_np,
        "q1_triplets": _q1_triplets_np,
        "pcg": _pcg_np,
    },
    "numba": {
        "tile_categories": _call_tile_categories_nb,
        "cat_orbit": _cat_orbit_nb,
        "cat_periods": _call_cat_periods_nb,
        "q1_triplets": _call_q1_triplets_nb,
        "pcg": _pcg_nb,
    },
}

_active = IMPLEMENTATIONS["numba" if USE_NUMBA else "numpy"]

tile_categories = _active["tile_categories"]
cat_orbit = _active["cat_orbit"]
cat_periods = _active["cat_periods"]
q1_triplets = _active["q1_triplets"]
# scipy CSR matvec is already compiled; the numba CG measured slower, so it stays opt-in
pcg = IMPLEMENTATIONS["numpy"]["pcg"]
