import json
import subprocess
import sys
from importlib import resources

import pytest

from vacpol import __version__
from vacpol.cli import main
from vacpol.pipeline import (ConfigError, MissingUpstreamError, RunConfig, load_config,
                             stage_decompose, stage_density, stage_flow, stage_report)

SMALL = ["--set", "physics.k=2", "--set", "physics.m_lambda=2", "--set", "density.n_points=60",
         "--set", "physics.lambda0=5,7.58"]


@pytest.fixture
def cache(tmp_path, monkeypatch):
    path = tmp_path / "cache"
    monkeypatch.setenv("VACPOL_CACHE_DIR", str(path))
    return path


def small_cfg(out, **kw):
    cfg = load_config(None, ["physics.k=2", "physics.m_lambda=2", "density.n_points=60",
                             "physics.lambda0=5,7.58", f"output.dir={out}"])
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg.validate()


class TestConfig:
    def test_defaults(self):
        cfg = RunConfig().validate()
        assert (cfg.Z, cfg.K, cfg.M_lambda, cfg.intervals, cfg.tol) == (92, 8, 5, 6, 0.1)

    def test_ini_and_overrides(self, tmp_path):
        ini = tmp_path / "c.ini"
        ini.write_text("[physics]\nk = 4\nlambda = 0.2, 0.3\n[flow]\ncoulomb = yes\n")
        cfg = load_config(ini, ["physics.k=5"])
        assert cfg.K == 5 and cfg.lambdas == (0.2, 0.3) and cfg.coulomb is True

    def test_bundled_profile(self):
        ref = resources.files("vacpol") / "data" / "reduced.ini"
        with resources.as_file(ref) as path:
            cfg = load_config(path)
        assert cfg.lambda0s == (5.0, 7.58) and cfg.lambdas == (0.2, 0.3, 0.4)

    @pytest.mark.parametrize("item", ["physics.k=0", "physics.zz=1", "nodot=1", "physics.k",
                                      "flow.coulomb=maybe", "physics.lambda=9", "density.n_points=3",
                                      "decompose.uehling_sign=2", "fit.knots=0,0.5,0.4,1"])
    def test_invalid(self, item):
        with pytest.raises(ConfigError):
            load_config(None, [item])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.ini")

    def test_hash_ignores_output_location(self, tmp_path):
        a = small_cfg(tmp_path / "a")
        b = small_cfg(tmp_path / "b", workers=2)
        assert a.config_hash() == b.config_hash()
        assert small_cfg(tmp_path / "a", tol=0.05).config_hash() != a.config_hash()


class TestStages:
    def test_density_cache(self, tmp_path, cache):
        out = tmp_path / "deep" / "out"
        first = stage_density(small_cfg(out))
        assert out.is_dir()
        assert (first.computed, first.cache_hits) == (2, 0)
        before = {p.name: p.read_bytes() for p in first.paths}
        second = stage_density(small_cfg(out))
        assert (second.computed, second.cache_hits) == (0, 2)
        assert {p.name: p.read_bytes() for p in second.paths} == before

    def test_missing_upstream(self, tmp_path, cache):
        with pytest.raises(MissingUpstreamError, match="'density'"):
            stage_decompose(small_cfg(tmp_path))
        with pytest.raises(MissingUpstreamError, match="'flow'"):
            stage_report(small_cfg(tmp_path))
        with pytest.raises(MissingUpstreamError, match="'extrapolate'"):
            stage_flow(small_cfg(tmp_path, fit_source="extrapolated"))

    def test_flow_options(self, tmp_path, cache):
        res = stage_flow(small_cfg(tmp_path, coulomb=True))
        d = json.loads(res.paths[0].read_text())
        assert d["label"] == "coulomb" and d["nu5_report"] == pytest.approx(0.03, abs=1e-14)
        spec = tmp_path / "spec.csv"
        spec.write_text("n,p_n\n1,0.6\n2,0.3\n")
        with pytest.raises(ConfigError):
            stage_flow(small_cfg(tmp_path, spectrum=str(spec), intervals=6))
        d = json.loads(stage_flow(small_cfg(tmp_path, spectrum=str(spec), intervals=1)).paths[0].read_text())
        assert d["label"] == "spec" and len(d["ratios"]) == 1


class TestCli:
    def run(self, out, *args):
        return main(["-o", str(out), *SMALL, *args])

    def test_all_outputs_and_provenance(self, tmp_path, cache, capsys):
        out = tmp_path / "out"
        assert self.run(out, "all") == 0
        text = capsys.readouterr().out
        assert "uranium: nu5=0.0147432" in text
        assert "coulomb" in text and "reference" in text
        cfg_hash = small_cfg(out).config_hash()
        files = sorted(p for p in out.iterdir() if p.is_file())
        assert {p.name for p in files} >= {"report.txt", "report.json", "plot_flows.csv", "plot_w5_fit.csv",
                                           "extrapolation.json", "w5_curve.csv", "flow_uranium.json",
                                           "flow_coulomb.json", "decomp_L0.3_L05.json"}
        for p in files:
            body = p.read_text()
            if p.suffix == ".json":
                prov = json.loads(body)["provenance"]
                assert prov == {"config_hash": cfg_hash, "version": __version__}
            else:
                assert body.startswith(f"# vacpol {__version__} config {cfg_hash}")

    def test_report_side_by_side(self, tmp_path, cache, capsys):
        out = tmp_path / "out"
        assert self.run(out, "flow") == 0
        assert self.run(out, "flow", "--coulomb") == 0
        assert self.run(out, "report") == 0
        rows = json.loads((out / "report.json").read_text())["runs"]
        by = {r["label"]: r for r in rows}
        assert by["uranium"]["density_r1"] == pytest.approx(5.87e-4, abs=1e-6)
        assert by["coulomb"]["density_r1"] == pytest.approx(1.194e-3, abs=1e-6)
        assert by["uranium"]["nu5"] < by["coulomb"]["nu5"]

    def test_deterministic(self, tmp_path, monkeypatch, capsys):
        runs = []
        for name in ("a", "b"):
            monkeypatch.setenv("VACPOL_CACHE_DIR", str(tmp_path / f"cache_{name}"))
            out = tmp_path / name
            assert self.run(out, "all") == 0
            runs.append({p.name: p.read_bytes() for p in out.iterdir() if p.is_file()})
        assert runs[0] == runs[1]

    def test_exit_codes(self, tmp_path, cache, capsys):
        out = tmp_path / "out"
        assert main(["-o", str(out), "--set", "physics.k=0", "density"]) == 2
        assert main(["-o", str(out), "decompose"]) == 2
        assert "run the 'density' stage first" in capsys.readouterr().err
        assert self.run(out, "density") == 0
        code = main(["-o", str(out), *SMALL, "--set", "decompose.tol=1e-12",
                     "--set", "decompose.max_frequencies=0", "decompose"])
        assert code == 3
        assert "numerical failure" in capsys.readouterr().err

    def test_density_flags(self, tmp_path, cache, capsys):
        out = tmp_path / "out"
        assert main(["-o", str(out), "density", "--K", "2", "--M-lambda", "1", "--lambda", "0.3",
                     "--lambda0", "7.58", "--n-points", "20"]) == 0
        assert "1 computed, 0 from cache" in capsys.readouterr().out
        side = json.loads((out / "density_L0.3_L07.58.json").read_text())
        assert side["params"]["K"] == 2

    def test_console_entry(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "vacpol.cli", "--version"], capture_output=True, text=True)
        assert proc.returncode == 0 and __version__ in proc.stdout
