import json
import subprocess
import sys

import numpy as np
import pytest

from homoglab import studies
from homoglab._accel import threads_from_env
from homoglab.cli import cli_main
from homoglab.studies import ConfigError, StudyConfig, read_csv, read_raster, run_study, write_raster


def write_config(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def body(path):
    return "".join(line for line in open(path) if not line.startswith("# "))


class TestConfig:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="epss"):
            StudyConfig.from_dict({"kind": "convergence-1d", "epss": [0.5]})

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError, match="kapas"):
            StudyConfig.from_dict({"kind": "convergence-1d", "field": {"type": "checkerboard", "kapas": [1]}})

    def test_eps_must_decrease(self):
        with pytest.raises(ConfigError, match="decreasing"):
            StudyConfig.from_dict({"kind": "convergence-1d", "eps": [0.25, 0.5]})
        with pytest.raises(ConfigError, match="positive"):
            StudyConfig.from_dict({"kind": "convergence-1d", "eps": [0.5, -1.0]})

    def test_invalid_field(self):
        bad = {"type": "checkerboard", "kappas": [1, 3], "probs": [0.5, 0.6]}
        with pytest.raises(ConfigError, match="invalid field"):
            StudyConfig.from_dict({"kind": "convergence-1d", "field": bad})

    def test_kind_mismatch(self):
        with pytest.raises(ConfigError, match="does not match"):
            StudyConfig.from_dict({"kind": "ergodic"}, kind="homogenize")

    def test_roundtrip_and_digest(self):
        cfg = StudyConfig(kind="convergence-1d", seed=3)
        again = StudyConfig.from_dict(cfg.to_dict())
        assert again.digest() == cfg.digest()
        assert StudyConfig(kind="convergence-1d", seed=4).digest() != cfg.digest()


class TestStudies:
    def test_periodic_convergence_sweep(self):
        rep = run_study(StudyConfig(kind="convergence-1d"))
        err = rep.column("l2_error")
        assert len(err) == 8
        assert all(b < a for a, b in zip(err[1:], err[2:]))
        assert err[-1] < 1e-3 and err[0] > 5e-3
        assert set(rep.column("status")) == {"ok"}

    def test_already_homogenized(self):
        cfg = StudyConfig(kind="convergence-1d", field={"type": "constant", "value": 3 ** 0.5}, eps=[0.5])
        rep = run_study(cfg)
        assert rep.column("l2_error")[0] < 1e-14

    def test_energy_gap_shrinks_and_limit_is_bump_independent(self):
        rep = run_study(StudyConfig(kind="energy-1d"))
        gap = np.array(rep.column("energy_gap")).reshape(-1, 2)
        assert np.all(gap[-1] < gap[0])
        for b in (0, 1):
            eps_vals = np.array(rep.column("energy_eps")).reshape(-1, 2)[:, b]
            lim = np.array(rep.column("energy_limit")).reshape(-1, 2)[0, b]
            assert abs(eps_vals[-1] - lim) < 1e-4 * abs(lim)

    def test_energy_homogenized_is_exact(self):
        cfg = StudyConfig(kind="energy-1d", field={"type": "constant", "value": 3 ** 0.5}, eps=[0.5, 0.25])
        assert max(run_study(cfg).column("energy_gap")) < 1e-14

    def test_ergodic_demo(self):
        rep = run_study(StudyConfig(kind="ergodic"))
        rows = {(r[0], r[3]): dict(zip(rep.columns, r)) for r in rep.rows}
        assert rows[("x0", 1000)]["discrepancy"] < 0.08
        assert rows[("y0", 1000)]["period"] == 24
        assert rows[("origin", 1000)]["period"] == 1
        assert rows[("x0", 1000)]["period"] is None
        assert len(rep.extras["orbit_x0.csv"].rows) == 1000

    def test_homogeneous_2d_gap_small(self):
        cfg = StudyConfig(
            kind="convergence-2d", field={"type": "constant", "value": 2.0, "dim": 2}, mesh=32, L=4, dump_solutions=False
        )
        rep = run_study(cfg)
        assert max(rep.column("rel_l2_gap")) < 1e-8

    def test_failure_isolation(self, monkeypatch):
        real = studies.solve1d.solve_exact

        def flaky(coeff, f, domain, n_cells=64, metadata=None, **kw):
            if metadata and metadata.get("eps") == 0.25:
                raise ArithmeticError("injected")
            return real(coeff, f, domain, n_cells=n_cells, metadata=metadata, **kw)

        reference = run_study(StudyConfig(kind="convergence-1d", eps=[0.5, 0.25, 0.125]))
        monkeypatch.setattr(studies.solve1d, "solve_exact", flaky)
        rep = run_study(StudyConfig(kind="convergence-1d", eps=[0.5, 0.25, 0.125]))
        assert rep.column("status")[1].startswith("error") and "injected" in rep.column("status")[1]
        assert np.isnan(rep.column("l2_error")[1])
        assert rep.rows[0] == reference.rows[0] and rep.rows[2] == reference.rows[2]

    def test_dump_field_shapes(self):
        rep = run_study(StudyConfig(kind="dump-field", grid=32))
        assert rep.columns == ["i", "j", "x1", "x2", "value"] and len(rep.rows) == 32 * 32
        assert set(rep.column("value")) <= {1.0, 10.0, 50.0, 100.0}
        rep1 = run_study(StudyConfig(kind="dump-field", field={"type": "periodic"}, grid=64))
        assert rep1.columns == ["i", "x", "value"] and len(rep1.rows) == 64


class TestRaster:
    def test_roundtrip(self, tmp_path, rng):
        v = rng.standard_normal((5, 7))
        p = write_raster(tmp_path / "r.bin", v)
        raw = p.read_bytes()
        assert raw[:8] == b"HOMOGLAB" and len(raw) == 16 + 35 * 8
        assert int.from_bytes(raw[8:12], "little") == 7 and int.from_bytes(raw[12:16], "little") == 5
        np.testing.assert_array_equal(read_raster(p), v)

    def test_sidecar_matches_csv(self, tmp_path):
        cfg = StudyConfig(kind="dump-field", grid=16, binary_sidecar=True)
        run_study(cfg, tmp_path)
        grid = read_raster(tmp_path / "field.bin")
        _, cols, rows = read_csv(tmp_path / "field.csv")
        vals = np.array([float(r[cols.index("value")]) for r in rows]).reshape(16, 16)
        np.testing.assert_array_equal(grid, vals)


class TestCli:
    def test_converge_1d(self, tmp_path):
        cfg = write_config(tmp_path, {"field": {"type": "periodic"}})
        out = tmp_path / "runs" / "p1"
        assert cli_main(["converge-1d", "--config", cfg, "--out", str(out), "--quiet"]) == 0
        header, cols, rows = read_csv(out / "convergence.csv")
        assert cols[:3] == ["eps", "l2_error", "flux_l2_error"] and len(rows) == 8
        assert {"config_sha256", "seed", "generator"} <= set(header)
        assert (out / "homogenized.csv").exists() and (out / "solution_eps7.csv").exists()

    def test_missing_config(self, tmp_path, capsys):
        assert cli_main(["converge-1d", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1
        assert "not found" in capsys.readouterr().err

    def test_unknown_flag_and_subcommand(self, capsys):
        assert cli_main(["converge-1d", "--frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err
        assert cli_main(["converge-3d"]) == 1
        assert cli_main([]) == 1

    def test_unknown_config_key_exit_code(self, tmp_path):
        cfg = write_config(tmp_path, {"field": {"type": "periodic"}, "typo": 1})
        assert cli_main(["converge-1d", "--config", cfg, "--out", str(tmp_path)]) == 1

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert cli_main(["converge-1d", "--config", str(p), "--out", str(tmp_path)]) == 1

    def test_numerical_failure_exit_code(self, tmp_path, monkeypatch):
        def boom(cfg):
            raise studies.fem2d.ConvergenceError(10, 1e-2, 1e-10)

        monkeypatch.setitem(studies.RUNNERS, "solve2d", (boom, "solution.csv"))
        assert cli_main(["solve2d", "--out", str(tmp_path), "--quiet"]) == 2

    def test_homogenize(self, tmp_path):
        cfg = write_config(tmp_path, {"field": {"type": "checkerboard", "kappas": [1, 4], "probs": [0.5, 0.5], "dim": 2, "offset": False}, "L": 8, "M": 4})
        assert cli_main(["homogenize", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
        _, cols, rows = read_csv(tmp_path / "effective_tensor.csv")
        assert cols == ["entry", "i", "j", "mean", "stderr", "L", "M"] and len(rows) == 4
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["spd_check"] == "pass" and summary["realization_bounds_check"] == "pass"

    def test_homogenize_1d_uses_formula(self, tmp_path):
        cfg = write_config(tmp_path, {"field": {"type": "checkerboard", "kappas": [1, 3], "probs": [0.5, 0.5]}})
        assert cli_main(["homogenize", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["provenance"] == "formula" and summary["matrix"] == [[1.5]]

    def test_reproducible_bodies(self, tmp_path):
        cfg = write_config(tmp_path, {"field": {"type": "checkerboard", "kappas": [1, 3], "probs": [0.5, 0.5]}, "eps": [0.25, 0.0625]})
        for name in ("a", "b"):
            assert cli_main(["converge-1d", "--config", cfg, "--seed", "17", "--out", str(tmp_path / name), "--quiet"]) == 0
        for f in ("convergence.csv", "solution_eps1.csv", "homogenized.csv"):
            assert body(tmp_path / "a" / f) == body(tmp_path / "b" / f)
        assert cli_main(["converge-1d", "--config", cfg, "--seed", "18", "--out", str(tmp_path / "c"), "--quiet"]) == 0
        assert body(tmp_path / "a" / "solution_eps1.csv") != body(tmp_path / "c" / "solution_eps1.csv")

    def test_seed_override_validated(self, tmp_path):
        assert cli_main(["ergodic-orbit", "--seed", "-3", "--out", str(tmp_path)]) == 1

    def test_solve_commands(self, tmp_path):
        assert cli_main(["solve1d", "--out", str(tmp_path / "one"), "--quiet"]) == 0
        _, cols, rows = read_csv(tmp_path / "one" / "solution.csv")
        assert cols == ["x", "u", "sigma"] and float(rows[0][1]) == 0.0
        cfg = write_config(tmp_path, {"mesh": 32, "eps": [0.25]})
        assert cli_main(["solve2d", "--config", cfg, "--out", str(tmp_path / "two"), "--quiet"]) == 0
        _, cols, rows = read_csv(tmp_path / "two" / "solution.csv")
        assert cols == ["i", "j", "x1", "x2", "u"] and len(rows) == 33 * 33
        _, cols, rows = read_csv(tmp_path / "two" / "flux.csv")
        assert cols == ["e", "x1c", "x2c", "flux1", "flux2"] and len(rows) == 32 * 32

    def test_module_entry_point(self, tmp_path):
        res = subprocess.run(
            [sys.executable, "-m", "homoglab", "ergodic-orbit", "--out", str(tmp_path), "--quiet"], capture_output=True
        )
        assert res.returncode == 0
        assert (tmp_path / "ergodic.csv").exists() and (tmp_path / "orbit_y0.csv").exists()


class TestThreadsEnv:
    def test_values(self, monkeypatch):
        monkeypatch.setenv("HOMOGLAB_THREADS", "3")
        assert threads_from_env() == 3
        monkeypatch.setenv("HOMOGLAB_THREADS", "0")
        assert threads_from_env() >= 1
        for bad in ("-1", "many"):
            monkeypatch.setenv("HOMOGLAB_THREADS", bad)
            with pytest.raises(ValueError):
                threads_from_env()

    def test_cli_rejects_bad_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HOMOGLAB_THREADS", "-2")
        cfg = write_config(tmp_path, {"L": 4, "M": 2})
        assert cli_main(["homogenize", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 1


def test_schema_matches_config_fields():
    import dataclasses
    from pathlib import Path

    schema = json.loads((Path(__file__).parents[1] / "docs" / "config_schema.json").read_text())
    assert set(schema["properties"]) == {f.name for f in dataclasses.fields(StudyConfig)}
    field_types = {alt["properties"]["type"]["const"]: set(alt["properties"]) for alt in schema["$defs"]["field"]["oneOf"]}
    assert field_types == studies._FIELD_KEYS
    source_types = {alt["properties"]["type"]["const"]: set(alt["properties"]) for alt in schema["$defs"]["source"]["oneOf"]}
    assert source_types == studies._SOURCE_KEYS
    assert set(schema["properties"]["kind"]["enum"]) == set(studies.KINDS)


@pytest.mark.parametrize("name", ["periodic.json", "checker2d.json", "fig_2d.json"])
def test_shipped_example_configs_load(name):
    from pathlib import Path

    path = Path(__file__).parents[1] / "docs" / "examples" / name
    assert StudyConfig.load(path).kind in studies.KINDS
