"""Declarative experiments and the CSV reports they write.

A study is described by a JSON object (see ``docs/config_schema.json``). Keys
are checked strictly: unknown keys anywhere raise :class:`ConfigError`.
"""

import dataclasses
import datetime
import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, ergodics, fem2d, homog, solve1d
from ._accel import backend_name
from .fields import (
    CheckerboardSpec,
    ConstantField,
    PeriodicField1D,
    ScaledField,
    StripeField,
    as_seed,
    make_realization,
)

log = logging.getLogger(__name__)

KINDS = (
    "convergence-1d",
    "convergence-2d",
    "energy-1d",
    "ergodic",
    "homogenize",
    "dump-field",
    "solve1d",
    "solve2d",
)

NUMERICAL_ERRORS = (fem2d.ConvergenceError, ArithmeticError)

RASTER_MAGIC = b"HOMOGLAB"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_FIELD_KEYS = {
    "periodic": {"type"},
    "checkerboard": {"type", "kappas", "probs", "dim", "offset"},
    "constant": {"type", "value", "dim"},
    "stripes": {"type", "values", "axis"},
}
_SOURCE_KEYS = {
    "linear": {"type"},
    "constant": {"type", "value"},
    "gaussian": {"type", "C", "L"},
}

FOUR_PHASE_FIELD = {
    "type": "checkerboard",
    "kappas": [1.0, 10.0, 50.0, 100.0],
    "probs": [0.4, 0.2, 0.2, 0.2],
    "dim": 2,
    "offset": False,
}

_DEFAULTS = {
    "convergence-1d": {
        "field": {"type": "periodic"},
        "source": {"type": "linear"},
        "eps": [2.0**-k for k in range(1, 9)],
    },
    "energy-1d": {
        "field": {"type": "periodic"},
        "source": {"type": "linear"},
        "eps": [2.0**-k for k in range(1, 7)],
    },
    "convergence-2d": {
        "field": FOUR_PHASE_FIELD,
        "source": {"type": "gaussian", "C": 5.0, "L": 0.05},
        "eps": [0.5, 0.25, 0.125],
    },
    "homogenize": {
        "field": {"type": "checkerboard", "kappas": [1.0, 4.0], "probs": [0.5, 0.5], "dim": 2, "offset": False},
        "eps": [1.0],
    },
    "dump-field": {"field": FOUR_PHASE_FIELD, "eps": [0.125]},
    "solve1d": {"field": {"type": "periodic"}, "source": {"type": "linear"}, "eps": [0.0625]},
    "solve2d": {"field": FOUR_PHASE_FIELD, "source": {"type": "gaussian", "C": 5.0, "L": 0.05}, "eps": [0.125]},
    "ergodic": {"eps": [1.0]},
}


@dataclass
class StudyConfig:
    """One experiment. ``eps`` values must be positive and strictly decreasing."""

    kind: str
    field: dict = None
    source: dict = None
    eps: list = None
    domain: list = None
    n_cells: int = 256
    cells_per_period: int = 64
    mesh: int = 128
    L: int = 16
    M: int = 8
    elements_per_tile: int = 4
    tol: float = 1e-10
    seed: int = 0
    grid: int = 256
    bumps: list = None
    n_orbit: int = 1000
    n_long: int = 100000
    grid_m: int = 8
    max_period_iter: int = 100000
    dump_solutions: bool = True
    binary_sidecar: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown study kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        defaults = _DEFAULTS[self.kind]
        if self.field is None:
            self.field = json.loads(json.dumps(defaults.get("field", {"type": "periodic"})))
        if self.source is None:
            self.source = dict(defaults.get("source", {"type": "linear"}))
        if self.eps is None:
            self.eps = list(defaults["eps"])
        if self.domain is None:
            self.domain = [0.0, 1.0]
        if self.bumps is None:
            self.bumps = [[0.5, 0.3], [0.45, 0.25]]
        self._validate()

    def _validate(self):
        _check_keys("field", self.field, _FIELD_KEYS)
        _check_keys("source", self.source, _SOURCE_KEYS)
        try:
            self.eps = [float(e) for e in self.eps]
        except (TypeError, ValueError):
            raise ConfigError("eps must be a list of numbers")
        if not self.eps or any(not e > 0 for e in self.eps):
            raise ConfigError("eps values must be positive")
        if any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise ConfigError("eps values must be strictly decreasing")
        if len(self.domain) != 2 or not self.domain[0] < self.domain[1]:
            raise ConfigError("domain must be [s, t] with s < t")
        for name in ("n_cells", "cells_per_period", "mesh", "L", "M", "elements_per_tile", "grid", "n_orbit", "n_long", "grid_m", "max_period_iter"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        try:
            self.seed = as_seed(self.seed)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc))
        for b in self.bumps:
            if len(b) != 2 or b[1] <= 0:
                raise ConfigError("bumps must be [center, halfwidth] pairs")
        try:
            build_field(self.field)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid field: {exc}")

    @classmethod
    def from_dict(cls, data, kind=None):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        cfg_kind = data.pop("kind", None)
        if kind is not None and cfg_kind is not None and cfg_kind != kind:
            raise ConfigError(f"config kind {cfg_kind!r} does not match subcommand kind {kind!r}")
        known = {f.name for f in dataclasses.fields(cls)} - {"kind"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(kind=kind or cfg_kind or "", **data)

    @classmethod
    def load(cls, path, kind=None):
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})")
        return cls.from_dict(data, kind=kind)

    def to_dict(self):
        return dataclasses.asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _check_keys(name, obj, table):
    if not isinstance(obj, dict) or "type" not in obj:
        raise ConfigError(f"{name} must be an object with a 'type' key")
    allowed = table.get(obj["type"])
    if allowed is None:
        raise ConfigError(f"unknown {name} type {obj['type']!r}; expected one of {', '.join(table)}")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"unknown {name} keys for type {obj['type']!r}: {', '.join(unknown)}")


def build_spec(cfg_field):
    """The checkerboard spec of a field config, or None for deterministic fields."""
    if cfg_field["type"] != "checkerboard":
        return None
    return CheckerboardSpec(
        kappas=cfg_field["kappas"],
        probs=cfg_field["probs"],
        dim=int(cfg_field.get("dim", 1)),
        offset_enabled=bool(cfg_field.get("offset", True)),
    )


def build_field(cfg_field, seed=0):
    kind = cfg_field["type"]
    if kind == "periodic":
        return PeriodicField1D()
    if kind == "constant":
        return ConstantField(float(cfg_field["value"]), dim=int(cfg_field.get("dim", 1)))
    if kind == "stripes":
        return StripeField(tuple(cfg_field["values"]), axis=int(cfg_field.get("axis", 0)))
    return make_realization(build_spec(cfg_field), seed)


def build_source_1d(cfg_source):
    kind = cfg_source["type"]
    if kind == "linear":
        return solve1d.linear_source()
    if kind == "constant":
        return solve1d.constant_source(cfg_source["value"])
    raise ConfigError(f"source type {kind!r} is not available in 1D")


def build_source_2d(cfg_source):
    kind = cfg_source["type"]
    if kind == "gaussian":
        return fem2d.gaussian_source(C=float(cfg_source.get("C", 5.0)), L=float(cfg_source.get("L", 0.05)))
    if kind == "constant":
        c = float(cfg_source["value"])
        return lambda x: np.full(np.shape(x)[:-1], c)
    raise ConfigError(f"source type {kind!r} is not available in 2D")


def effective_coefficient_1d(cfg_field):
    """Homogenized coefficient of a 1D field config (ensemble value for random fields)."""
    spec = build_spec(cfg_field)
    if spec is not None:
        return homog.harmonic_mean_1d(spec)
    return homog.harmonic_mean_1d(build_field(cfg_field))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    s = str(v)
    if any(c in s for c in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


@dataclass
class CsvReport:
    columns: list
    rows: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    rasters: dict = field(default_factory=dict)

    def add(self, *row):
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} entries, expected {len(self.columns)}")
        self.rows.append(tuple(row))

    def body(self):
        lines = [",".join(self.columns)]
        lines.extend(",".join(_fmt(v) for v in row) for row in self.rows)
        return "\n".join(lines) + "\n"

    def header(self):
        return "".join(f"# {k}: {v}\n" for k, v in self.provenance.items())

    def write(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.header() + self.body())
        return path

    def column(self, name):
        k = self.columns.index(name)
        return [row[k] for row in self.rows]


def provenance(cfg):
    return {
        "generator": f"homoglab {__version__}",
        "kind": cfg.kind,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "backend": backend_name(),
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    }


def read_csv(path):
    """Parse a report written by :meth:`CsvReport.write` into (header dict, columns, rows)."""
    header, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition(": ")
            header[k] = v
        elif line:
            body.append(line.split(","))
    return header, body[0], body[1:]


def write_raster(path, values):
    """Row-major float64 little-endian raster with a 16-byte header: magic, nx, ny (uint32)."""
    values = np.asarray(values, dtype="<f8")
    ny, nx = values.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(RASTER_MAGIC + struct.pack("<II", nx, ny))
        fh.write(np.ascontiguousarray(values).tobytes())
    return path


def read_raster(path):
    raw = Path(path).read_bytes()
    if raw[:8] != RASTER_MAGIC:
        raise ValueError(f"{path}: not a homoglab raster")
    nx, ny = struct.unpack("<II", raw[8:16])
    return np.frombuffer(raw[16:], dtype="<f8").reshape(ny, nx)


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------


def _n_cells_1d(cfg, eps):
    length = cfg.domain[1] - cfg.domain[0]
    return max(int(cfg.n_cells), int(math.ceil(cfg.cells_per_period * length / eps)))


def _solution_report(cfg, sol):
    rep = CsvReport(["x", "u", "sigma"], provenance=provenance(cfg))
    for row in sol.rows():
        rep.add(*row)
    return rep


def _homogenized_1d(cfg, f, domain):
    abar = effective_coefficient_1d(cfg.field)
    ubar = solve1d.solve_exact(ConstantField(abar), f, domain, n_cells=cfg.n_cells)
    return abar, ubar


def run_convergence_1d(cfg):
    """``||u_eps - ubar||`` and ``||sigma_eps - abar ubar'||`` for each eps on one realization."""
    base = build_field(cfg.field, cfg.seed)
    f = build_source_1d(cfg.source)
    domain = solve1d.Interval(*cfg.domain)
    abar, ubar = _homogenized_1d(cfg, f, domain)
    rep = CsvReport(
        ["eps", "l2_error", "flux_l2_error", "abar", "seed", "n_cells", "status"], provenance=provenance(cfg)
    )
    rep.provenance["abar"] = repr(abar)
    rep.extras["homogenized.csv"] = _solution_report(cfg, ubar)
    for k, eps in enumerate(cfg.eps):
        n = _n_cells_1d(cfg, eps)
        try:
            sol = solve1d.solve_exact(ScaledField(base, eps), f, domain, n_cells=n, metadata={"eps": eps})
            err = solve1d.l2_error(sol, ubar)
            ferr = solve1d.flux_l2_error(sol, ubar.flux_at)
            rep.add(eps, err, ferr, abar, cfg.seed, n, "ok")
            if cfg.dump_solutions:
                rep.extras[f"solution_eps{k}.csv"] = _solution_report(cfg, sol)
        except (ValueError, *NUMERICAL_ERRORS) as exc:
            log.warning("eps=%g failed: %s", eps, exc)
            rep.add(eps, math.nan, math.nan, abar, cfg.seed, n, f"error: {exc}")
    return rep


def bump(center, halfwidth):
    """Smooth bump ``exp(1 - 1/(1 - r^2))`` supported on ``|x - center| < halfwidth``."""

    def phi(x):
        r = (np.asarray(x, dtype=float) - center) / halfwidth
        out = np.zeros_like(r)
        inside = np.abs(r) < 1.0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
        return out

    return phi


def run_energy_convergence(cfg):
    """``|int phi sigma_eps u_eps' - int phi abar (ubar')^2|`` per eps and bump."""
    base = build_field(cfg.field, cfg.seed)
    f = build_source_1d(cfg.source)
    domain = solve1d.Interval(*cfg.domain)
    abar, ubar = _homogenized_1d(cfg, f, domain)
    bumps = [bump(c, w) for c, w in cfg.bumps]
    limits = [ubar.integrate(lambda x, a, s, p=p: p(x) * s * s / a) for p in bumps]
    rep = CsvReport(
        ["eps", "bump", "energy_gap", "energy_eps", "energy_limit", "seed", "n_cells", "status"],
        provenance=provenance(cfg),
    )
    for eps in cfg.eps:
        n = _n_cells_1d(cfg, eps)
        try:
            sol = solve1d.solve_exact(ScaledField(base, eps), f, domain, n_cells=n)
            for b, (p, lim) in enumerate(zip(bumps, limits)):
                val = sol.integrate(lambda x, a, s, p=p: p(x) * s * s / a)
                rep.add(eps, b, abs(val - lim), val, lim, cfg.seed, n, "ok")
        except (ValueError, *NUMERICAL_ERRORS) as exc:
            for b, lim in enumerate(limits):
                rep.add(eps, b, math.nan, math.nan, lim, cfg.seed, n, f"error: {exc}")
    return rep


ERGODIC_STARTS = (
    ("x0", (1.0 / 32.0, math.pi / 32.0), None),
    ("y0", (1.0 / 32.0, 1.0 / 32.0), (1, 1, 32)),
    ("origin", (0.0, 0.0), (0, 0, 1)),
)


def run_ergodic_demo(cfg):
    """Cat-map orbits for the standard starting points plus discrepancy and period diagnostics."""
    rep = CsvReport(
        ["start", "x1", "x2", "n", "grid_m", "discrepancy", "distinct_points", "time_average_cos", "period"],
        provenance=provenance(cfg),
    )

    def cos_obs(p):
        return np.cos(2 * np.pi * p[:, 0]) * np.cos(2 * np.pi * p[:, 1])

    for label, x, rational in ERGODIC_STARTS:
        p0 = ergodics.TorusPoint.of(*x)
        period = ergodics.detect_period(rational, cfg.max_period_iter) if rational else None
        for n in (cfg.n_orbit, cfg.n_long):
            pts = ergodics.orbit(p0, n)
            rep.add(
                label,
                p0.x1,
                p0.x2,
                n,
                cfg.grid_m,
                ergodics.equidistribution_discrepancy(pts, cfg.grid_m),
                ergodics.distinct_points(pts),
                float(np.mean(cos_obs(pts))),
                period,
            )
        orbit_rep = CsvReport(["n", "x1", "x2"], provenance=provenance(cfg))
        for k, (a, b) in enumerate(ergodics.orbit(p0, cfg.n_orbit), start=1):
            orbit_rep.add(k, float(a), float(b))
        rep.extras[f"orbit_{label}.csv"] = orbit_rep
    return rep


def _raster_report(cfg, mesh, values):
    rep = CsvReport(["i", "j", "x1", "x2", "value"], provenance=provenance(cfg))
    c = mesh.centroids()
    j, i = np.divmod(np.arange(mesh.n_elements), mesh.nx)
    for a, b, (p, q), v in zip(i, j, c, values):
        rep.add(int(a), int(b), float(p), float(q), float(v))
    return rep


def _nodal_report(cfg, sol):
    rep = CsvReport(["i", "j", "x1", "x2", "u"], provenance=provenance(cfg))
    for row in sol.nodal_rows():
        rep.add(*row)
    return rep


def _flux_report(cfg, sol):
    rep = CsvReport(["e", "x1c", "x2c", "flux1", "flux2"], provenance=provenance(cfg))
    for row in sol.flux_rows():
        rep.add(*row)
    return rep


def _homogenized_tensor(cfg):
    spec = build_spec(cfg.field)
    if spec is None:
        fld = build_field(cfg.field, cfg.seed)
        return homog.effective_tensor_single(fld, max(2, cfg.L), cfg.elements_per_tile, cfg.tol)
    return homog.effective_tensor_ensemble(
        spec, cfg.L, max(2, cfg.M), seed0=cfg.seed, elements_per_tile=cfg.elements_per_tile, tol=cfg.tol
    )


def run_convergence_2d(cfg):
    """Relative L2 gap between ``u_eps`` (one fixed realization) and the ``A0``-constant solution."""
    realization = build_field(cfg.field, cfg.seed)
    f = build_source_2d(cfg.source)
    mesh = fem2d.StructuredMesh(cfg.mesh, cfg.mesh)
    a0 = _homogenized_tensor(cfg)
    u0 = fem2d.solve_dirichlet_values(mesh, a0.matrix, f, tol=cfg.tol)
    norm0 = u0.l2_norm()
    rep = CsvReport(
        ["eps", "rel_l2_gap", "cg_iterations", "cg_residual", "seed", "L", "M", "mesh", "elements_per_tile", "status"],
        provenance=provenance(cfg),
    )
    rep.provenance["A0"] = json.dumps(a0.matrix.tolist())
    rep.extras["solution_homog.csv"] = _nodal_report(cfg, u0)
    for k, eps in enumerate(cfg.eps):
        try:
            sol = fem2d.solve_dirichlet(mesh, realization, eps, f, tol=cfg.tol)
            gap = fem2d.l2_norm(mesh, sol.u - u0.u) / norm0
            rep.add(eps, gap, sol.diagnostics.iterations, sol.diagnostics.residual, cfg.seed, a0.L, a0.M, cfg.mesh, cfg.elements_per_tile, "ok")
            if cfg.dump_solutions:
                rep.extras[f"field_eps{k}.csv"] = _raster_report(cfg, mesh, sol.coeff)
                rep.extras[f"solution_eps{k}.csv"] = _nodal_report(cfg, sol)
                rep.extras[f"flux_eps{k}.csv"] = _flux_report(cfg, sol)
                if cfg.binary_sidecar:
                    rep.rasters[f"field_eps{k}.bin"] = sol.coeff.reshape(mesh.ny, mesh.nx)
                    rep.rasters[f"solution_eps{k}.bin"] = sol.u.reshape(mesh.ny + 1, mesh.nx + 1)
        except (ValueError, *NUMERICAL_ERRORS) as exc:
            log.warning("eps=%g failed: %s", eps, exc)
            rep.add(eps, math.nan, -1, math.nan, cfg.seed, a0.L, a0.M, cfg.mesh, cfg.elements_per_tile, f"error: {exc}")
    return rep


def run_homogenize(cfg):
    """Effective tensor table plus a JSON summary with bounds and SPD verdicts."""
    spec = build_spec(cfg.field)
    if spec is not None and spec.dim == 1:
        abar = homog.harmonic_mean_1d(spec)
        tensor = homog.EffectiveTensor([[abar]], provenance="formula", L=cfg.L, M=0)
        bounds = homog.voigt_reuss_bounds(spec)
        nu = spec.ellipticity
    else:
        tensor = _homogenized_tensor(cfg)
        fld = build_field(cfg.field, cfg.seed)
        bounds = homog.voigt_reuss_bounds(spec) if spec is not None else tensor.realized_bounds
        nu = fld.ellipticity
    rep = CsvReport(["entry", "i", "j", "mean", "stderr", "L", "M"], provenance=provenance(cfg))
    n = tensor.matrix.shape[0]
    for i in range(n):
        for j in range(n):
            rep.add(f"A{i + 1}{j + 1}", i, j, tensor.matrix[i, j], tensor.stderr[i, j], tensor.L, tensor.M)
    spd = homog.spd_check(tensor, nu.nu1, nu.nu2)
    per_sample_ok = all(
        s.eigenvalues.min() >= s.realized_bounds.harmonic - 1e-8
        and s.eigenvalues.max() <= s.realized_bounds.arithmetic + 1e-8
        for s in tensor.samples
    )
    ev = tensor.eigenvalues
    summary = {
        "kind": cfg.kind,
        "provenance": tensor.provenance,
        "matrix": tensor.matrix.tolist(),
        "stderr": tensor.stderr.tolist(),
        "eigenvalues": ev.tolist(),
        "L": tensor.L,
        "M": tensor.M,
        "elements_per_tile": cfg.elements_per_tile,
        "seed0": cfg.seed,
        "voigt_reuss": {"harmonic": bounds.harmonic, "arithmetic": bounds.arithmetic},
        "realization_bounds_check": "pass" if per_sample_ok else "fail",
        "spd_check": spd.verdict,
        "spd_violations": spd.violations,
        "max_asymmetry": tensor.asymmetry,
        "failures": tensor.failures,
        "backend": backend_name(),
    }
    rep.extras["summary.json"] = summary
    return rep


def run_dump_field(cfg):
    """Rasterize one realization at ``eps = cfg.eps[0]`` on a ``grid`` (x ``grid``) cell-centred lattice."""
    fld = build_field(cfg.field, cfg.seed)
    eps = cfg.eps[0]
    scaled = ScaledField(fld, eps)
    s, t = cfg.domain
    n = cfg.grid
    centers = s + (np.arange(n) + 0.5) * (t - s) / n
    if getattr(fld, "dim", 1) == 1:
        rep = CsvReport(["i", "x", "value"], provenance=provenance(cfg))
        for i, (x, v) in enumerate(zip(centers, scaled(centers))):
            rep.add(i, float(x), float(v))
        return rep
    mesh = fem2d.StructuredMesh(n, n, s, t, s, t)
    values = scaled(mesh.centroids())
    rep = _raster_report(cfg, mesh, values)
    if cfg.binary_sidecar:
        rep.rasters["field.bin"] = values.reshape(n, n)
    return rep


def run_solve1d(cfg):
    fld = build_field(cfg.field, cfg.seed)
    f = build_source_1d(cfg.source)
    eps = cfg.eps[0]
    sol = solve1d.solve_exact(ScaledField(fld, eps), f, solve1d.Interval(*cfg.domain), n_cells=_n_cells_1d(cfg, eps))
    return _solution_report(cfg, sol)


def run_solve2d(cfg):
    fld = build_field(cfg.field, cfg.seed)
    f = build_source_2d(cfg.source)
    mesh = fem2d.StructuredMesh(cfg.mesh, cfg.mesh)
    sol = fem2d.solve_dirichlet(mesh, fld, cfg.eps[0], f, tol=cfg.tol)
    rep = _nodal_report(cfg, sol)
    rep.provenance["cg_iterations"] = sol.diagnostics.iterations
    rep.provenance["cg_residual"] = repr(sol.diagnostics.residual)
    rep.extras["flux.csv"] = _flux_report(cfg, sol)
    return rep


RUNNERS = {
    "convergence-1d": (run_convergence_1d, "convergence.csv"),
    "convergence-2d": (run_convergence_2d, "convergence2d.csv"),
    "energy-1d": (run_energy_convergence, "energy.csv"),
    "ergodic": (run_ergodic_demo, "ergodic.csv"),
    "homogenize": (run_homogenize, "effective_tensor.csv"),
    "dump-field": (run_dump_field, "field.csv"),
    "solve1d": (run_solve1d, "solution.csv"),
    "solve2d": (run_solve2d, "solution.csv"),
}


def write_outputs(report, out_dir, main_name):
    """Write the main table, every extra table or JSON document, and raster sidecars."""
    out = Path(out_dir)
    written = [report.write(out / main_name)]
    for name, extra in report.extras.items():
        if isinstance(extra, CsvReport):
            written.append(extra.write(out / name))
        else:
            p = out / name
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(json.dumps(extra, indent=2, sort_keys=True) + "\n")
            written.append(p)
    for name, values in report.rasters.items():
        written.append(write_raster(out / name, values))
    return written


def run_study(cfg, out_dir=None):
    runner, main_name = RUNNERS[cfg.kind]
    report = runner(cfg)
    if out_dir is not None:
        write_outputs(report, out_dir, main_name)
    return report
