"""Staged pipeline: density -> decompose -> extrapolate -> flow -> report.

Every stage reads its inputs from, and writes its artifacts to, the output
directory. Densities are additionally cached under a content hash so that an
unchanged configuration never recomputes them. All emitted files carry the
configuration hash and the package version.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import json
import logging
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .decomp import Decomposition, decompose
from .density import assemble_density, read_density, working_interval, write_density
from .extrapolation import (PUBLISHED_FIT, FlatDirectionWarning, PiecewiseW5, W5Samples, eval_w5,
                            extrapolate, fit_piecewise)
from .flow import (WICHMANN_KROLL_DENSITY, SpectrumTable, coulomb_spectrum, integrate_flow,
                   uranium_spectrum)
from .radial import ALPHA, PhysicalParams
from .uehling import u_position

log = logging.getLogger("vacpol")

CACHE_ENV = "VACPOL_CACHE_DIR"

__all__ = [
    "ConfigError",
    "MissingUpstreamError",
    "RunConfig",
    "load_config",
    "stage_density",
    "stage_decompose",
    "stage_extrapolate",
    "stage_flow",
    "stage_report",
]


class ConfigError(ValueError):
    """Invalid configuration value."""


class MissingUpstreamError(ConfigError):
    """An upstream artifact is missing; the message names the stage to run."""


def _floats(text) -> tuple:
    if isinstance(text, (int, float)):
        return (float(text),)
    if isinstance(text, (tuple, list)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _opt_float(text):
    if text is None or str(text).strip().lower() in ("", "auto", "none"):
        return None
    return float(text)


# (section, key) -> (field name, parser)
_KEYS = {
    ("physics", "z"): ("Z", int),
    ("physics", "alpha"): ("alpha", float),
    ("physics", "k"): ("K", int),
    ("physics", "m_lambda"): ("M_lambda", int),
    ("physics", "lambda"): ("lambdas", _floats),
    ("physics", "lambda0"): ("lambda0s", _floats),
    ("density", "n_points"): ("n_points", int),
    ("density", "a"): ("a", _opt_float),
    ("density", "b"): ("b", _opt_float),
    ("density", "n_per_panel"): ("n_per_panel", int),
    ("density", "workers"): ("workers", int),
    ("decompose", "tol"): ("tol", float),
    ("decompose", "max_frequencies"): ("max_frequencies", int),
    ("decompose", "n_candidates"): ("n_candidates", int),
    ("decompose", "uehling_sign"): ("uehling_sign", str),
    ("decompose", "literal"): ("literal", _bool),
    ("extrapolate", "eta0"): ("eta0", float),
    ("extrapolate", "grad_tol"): ("grad_tol", float),
    ("fit", "source"): ("fit_source", str),
    ("fit", "knots"): ("knots", _floats),
    ("flow", "spectrum"): ("spectrum", str),
    ("flow", "intervals"): ("intervals", int),
    ("flow", "coulomb"): ("coulomb", _bool),
    ("output", "dir"): ("out_dir", str),
}

# fields that do not change any numerical result; `coulomb` only selects
# which flow path runs, and the two paths write differently named files
_NON_SEMANTIC = {"out_dir", "workers", "coulomb"}


@dataclass
class RunConfig:
    Z: int = 92
    alpha: float = ALPHA
    K: int = 8
    M_lambda: int = 5
    lambdas: tuple = (0.3,)
    lambda0s: tuple = (7.58,)
    n_points: int = 400
    a: Optional[float] = None
    b: Optional[float] = None
    n_per_panel: int = 16
    workers: int = 1
    tol: float = 0.1
    max_frequencies: int = 12
    n_candidates: int = 3
    uehling_sign: str = "auto"
    literal: bool = False
    eta0: float = 2.0
    grad_tol: float = 1e-10
    fit_source: str = "published"
    knots: tuple = PUBLISHED_FIT.knots
    spectrum: str = "uranium"
    intervals: int = 6
    coulomb: bool = False
    out_dir: str = "vacpol_out"

    def validate(self) -> "RunConfig":
        try:
            for lam in self.lambdas:
                for lam0 in self.lambda0s:
                    p = self.params(lam, lam0)
                    if self.a is None or self.b is None:
                        working_interval(p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not self.lambdas or not self.lambda0s:
            raise ConfigError("need at least one Lambda and one Lambda0")
        if self.n_points < 8:
            raise ConfigError("n_points must be >= 8")
        if self.n_per_panel < 2:
            raise ConfigError("n_per_panel must be >= 2")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not 0 < self.tol:
            raise ConfigError("tol must be positive")
        if self.max_frequencies < 0 or self.n_candidates < 1:
            raise ConfigError("bad decomposition limits")
        if self.uehling_sign not in ("auto", "1", "-1", "0", "+1"):
            raise ConfigError("uehling_sign must be auto, 1, -1 or 0")
        if self.intervals < 0:
            raise ConfigError("intervals must be >= 0")
        if self.a is not None and self.b is not None and not self.a < self.b:
            raise ConfigError("need a < b")
        try:
            PiecewiseW5(1.0, 0.0, self.knots, (1.0,) * (len(self.knots) - 1))
        except ValueError as exc:
            raise ConfigError(f"knots: {exc}") from exc
        return self

    def params(self, Lambda: float, Lambda0: float) -> PhysicalParams:
        return PhysicalParams(Z=self.Z, alpha=self.alpha, K=self.K, M_lambda=self.M_lambda,
                              Lambda=Lambda, Lambda0=Lambda0)

    @property
    def gamma(self) -> float:
        return self.Z * self.alpha

    def semantic_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in _NON_SEMANTIC:
            d.pop(k)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}

    def config_hash(self) -> str:
        blob = json.dumps(self.semantic_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    def provenance(self) -> dict:
        return {"config_hash": self.config_hash(), "version": __version__}

    def apply(self, section: str, key: str, value) -> None:
        try:
            name, parse = _KEYS[(section.lower(), key.lower())]
        except KeyError:
            raise ConfigError(f"unknown config key [{section}] {key}") from None
        try:
            setattr(self, name, parse(value))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {key} = {value!r}: {exc}") from exc


def load_config(path=None, overrides: Optional[list] = None) -> RunConfig:
    """Read an INI file (sections physics, density, decompose, extrapolate,
    fit, flow, output), then apply 'section.key=value' overrides."""
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path}")
        for section in parser.sections():
            for key, value in parser.items(section):
                cfg.apply(section, key, value)
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        lhs, value = item.split("=", 1)
        section, key = lhs.split(".", 1)
        cfg.apply(section.strip(), key.strip(), value.strip())
    return cfg.validate()


# ------------------------------------------------------------------ helpers

def _tag(Lambda: float, Lambda0: float) -> str:
    return f"L{Lambda:g}_L0{Lambda0:g}"


def _comment(cfg: RunConfig) -> str:
    return f"vacpol {__version__} config {cfg.config_hash()}"


def _write_json(path: Path, payload: dict, cfg: RunConfig) -> Path:
    payload = dict(payload)
    payload["provenance"] = cfg.provenance()
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _write_csv(path: Path, header: list, columns: list, cfg: RunConfig) -> Path:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {_comment(cfg)}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(v)) for v in row])
    return path


def _cache_dir(cfg: RunConfig) -> Path:
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else cfg.out / ".cache"


def _density_key(cfg: RunConfig, Lambda: float, Lambda0: float) -> str:
    d = {"params": cfg.params(Lambda, Lambda0).as_dict(), "n_points": cfg.n_points,
         "a": cfg.a, "b": cfg.b, "n_per_panel": cfg.n_per_panel, "version": __version__}
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:24]


@dataclass
class StageResult:
    paths: list = field(default_factory=list)
    cache_hits: int = 0
    computed: int = 0


# ------------------------------------------------------------------- stages

def stage_density(cfg: RunConfig) -> StageResult:
    """Spectral density for every (Lambda, Lambda0) of the configuration."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    cache = _cache_dir(cfg)
    cache.mkdir(parents=True, exist_ok=True)
    res = StageResult()
    for lam in cfg.lambdas:
        for lam0 in cfg.lambda0s:
            key = _density_key(cfg, lam, lam0)
            cached = cache / f"{key}.csv"
            if cached.exists() and cached.with_suffix(".json").exists():
                dens = read_density(cached)
                res.cache_hits += 1
                log.info("density %s: cache hit %s", _tag(lam, lam0), key)
            else:
                dens = assemble_density(cfg.params(lam, lam0), n_points=cfg.n_points, a=cfg.a,
                                        b=cfg.b, n_per_panel=cfg.n_per_panel, workers=cfg.workers)
                tmp = cache / f"{key}.tmp.csv"
                write_density(dens, tmp, tmp.with_suffix(".json"))
                os.replace(tmp.with_suffix(".json"), cached.with_suffix(".json"))
                os.replace(tmp, cached)
                res.computed += 1
                log.info("density %s: computed", _tag(lam, lam0))
            target = cfg.out / f"density_{_tag(lam, lam0)}.csv"
            write_density(dens, target, extra_meta={"provenance": cfg.provenance(), "cache_key": key},
                          comment=_comment(cfg))
            res.paths += [target, target.with_suffix(".json")]
    return res


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise MissingUpstreamError(f"missing {path.name}; run the '{stage}' stage first")
    return path


def stage_decompose(cfg: RunConfig) -> StageResult:
    """Decompose every density; writes decomp_<tag>.json and plot-ready CSV."""
    res = StageResult()
    sign = cfg.uehling_sign if cfg.uehling_sign == "auto" else int(cfg.uehling_sign)
    for lam in cfg.lambdas:
        for lam0 in cfg.lambda0s:
            tag = _tag(lam, lam0)
            dens = read_density(_require(cfg.out / f"density_{tag}.csv", "density"))
            gamma = dens.params.gamma
            dec = decompose(dens.grid, dens.values, gamma, tol=cfg.tol,
                            max_frequencies=cfg.max_frequencies, uehling_sign=sign,
                            n_candidates=cfg.n_candidates, literal=cfg.literal)
            payload = dec.to_dict()
            payload["Lambda"], payload["Lambda0"] = lam, lam0
            p_json = _write_json(cfg.out / f"decomp_{tag}.json", payload, cfg)
            x = dens.grid
            u = dec.uehling_sign * u_position(x, gamma, literal=cfg.literal)
            cols = [x, dens.values, dec.c1 * x, u, dec.w1 / x, dec.oscillation_part(x),
                    dec.w5 / x ** 5, dec.remainder, dens.values - dec.c1 * x]
            header = ["x", "y", "c1_x", "uehling", "w1_over_x", "oscillations", "w5_over_x5",
                      "remainder", "y_minus_linear"]
            p_csv = _write_csv(cfg.out / f"decomp_{tag}.csv", header, cols, cfg)
            res.paths += [p_json, p_csv]
            res.computed += 1
            log.info("decompose %s: w5=%.6g remainder=%.3g", tag, dec.w5, dec.remainder_norm)
    return res


def stage_extrapolate(cfg: RunConfig) -> StageResult:
    """Lambda0 -> infinity extrapolation of w5 and, when the samples allow,
    the piecewise fit of w5(x) with x = Lambda / gamma."""
    samples = W5Samples()
    for lam in cfg.lambdas:
        for lam0 in cfg.lambda0s:
            dec = Decomposition.load(_require(cfg.out / f"decomp_{_tag(lam, lam0)}.json", "decompose"))
            samples.add(lam, lam0, dec.w5)
    try:
        samples.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    with warnings.catch_warnings():
        # recorded in flat_directions and logged instead
        warnings.simplefilter("ignore", FlatDirectionWarning)
        ext = extrapolate(samples, eta0=cfg.eta0, grad_tol=cfg.grad_tol)
    if ext.flat_directions:
        log.warning("extrapolate: not identified by the samples: %s", ", ".join(ext.flat_directions))
    payload = ext.to_dict()
    payload["samples"] = samples.to_dict()["entries"]
    gamma = cfg.gamma
    xs = np.array([lam / gamma for lam in sorted(ext.w5_inf)])
    ws = np.array([ext.w5_inf[lam] for lam in sorted(ext.w5_inf)])
    fit_note = "not attempted"
    res = StageResult()
    inside = (xs > 0) & (xs <= 1)
    try:
        fit = fit_piecewise(xs[inside], ws[inside], cfg.knots)
        res.paths.append(_write_json(cfg.out / "fit.json", fit.to_dict(), cfg))
        fit_note = "fitted"
    except ValueError as exc:
        fit_note = f"insufficient samples for a piecewise fit: {exc}"
    payload["fit"] = fit_note
    res.paths.append(_write_json(cfg.out / "extrapolation.json", payload, cfg))
    res.paths.append(_write_csv(cfg.out / "w5_curve.csv", ["x", "Lambda", "w5_inf"],
                                [xs, xs * gamma, ws], cfg))
    res.computed = 1
    log.info("extrapolate: beta=%.6g eta=%.6g (%s)", ext.beta, ext.eta, fit_note)
    return res


def _load_fit(cfg: RunConfig) -> PiecewiseW5:
    src = cfg.fit_source
    if src == "published":
        return PUBLISHED_FIT
    if src == "extrapolated":
        d = json.loads(_require(cfg.out / "fit.json", "extrapolate").read_text())
        d.pop("provenance", None)
        return PiecewiseW5.from_dict(d)
    path = Path(src)
    if not path.exists():
        raise ConfigError(f"fit file {src} not found")
    d = json.loads(path.read_text())
    d.pop("provenance", None)
    return PiecewiseW5.from_dict(d)


def _load_spectrum(cfg: RunConfig) -> SpectrumTable:
    if cfg.coulomb:
        return coulomb_spectrum(cfg.gamma, cfg.intervals + 1)
    if cfg.spectrum == "uranium":
        return uranium_spectrum()
    path = Path(cfg.spectrum)
    if not path.exists():
        raise ConfigError(f"spectrum file {cfg.spectrum} not found")
    return SpectrumTable.from_csv(path)


def stage_flow(cfg: RunConfig) -> StageResult:
    """Integrate the dilated flow; writes flow_<label>.json/.csv."""
    fit = _load_fit(cfg)
    spec = _load_spectrum(cfg)
    try:
        fr = integrate_flow(fit, spec, cfg.gamma, cfg.intervals, Z=cfg.Z,
                            tail_ratio=1.0 if cfg.coulomb else None)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    label = "coulomb" if cfg.coulomb else (spec.label or "spectrum")
    payload = fr.to_dict()
    nu_report = fr.nu5_zero if fr.nu5_zero is not None else fr.nu5_final
    payload.update({"label": label, "spectrum": list(spec.p), "fit": fit.to_dict(),
                    "nu5_report": nu_report, "density_r1_report": nu_report / (8.0 * np.pi),
                    # the Coulomb path is already continued to 0+, so no separate remainder
                    "nu5_minus_remainder_report": nu_report if cfg.coulomb else fr.nu5_with_remainder})
    cfg.out.mkdir(parents=True, exist_ok=True)
    res = StageResult()
    res.paths.append(_write_json(cfg.out / f"flow_{label}.json", payload, cfg))
    t = fr.trajectory
    res.paths.append(_write_csv(cfg.out / f"flow_{label}.csv", ["x", "omega", "nu5", "w5"],
                                [t[:, 0], t[:, 1], t[:, 2], t[:, 3]], cfg))
    res.computed = 1
    log.info("flow %s: nu5=%.6g", label, fr.nu5_final)
    return res


def _flow_rows(cfg: RunConfig) -> list[dict]:
    rows = []
    for path in sorted(cfg.out.glob("flow_*.json")):
        d = json.loads(path.read_text())
        rows.append({
            "label": d["label"],
            "nu5": d["nu5_report"],
            "nu5_with_remainder": d["nu5_minus_remainder_report"],
            "remainder": d["remainder_estimate"],
            "density_r1": d["density_r1_report"],
        })
    return rows


def stage_report(cfg: RunConfig) -> StageResult:
    """Summary table (atom vs one-electron ion) plus the flow plot data."""
    rows = _flow_rows(cfg)
    if not rows:
        raise MissingUpstreamError("no flow_*.json found; run the 'flow' stage first")
    res = StageResult()
    lines = [f"# {_comment(cfg)}",
             f"{'run':<12} {'nu5':>12} {'nu5-remainder':>14} {'density(r=1)':>14}"]
    for r in rows:
        lines.append(f"{r['label']:<12} {r['nu5']:>12.5g} {r['nu5_with_remainder']:>14.5g} "
                     f"{r['density_r1']:>14.4g}")
    lines.append(f"{'reference':<12} {'':>12} {'':>14} {WICHMANN_KROLL_DENSITY:>14.4g}"
                 "   (exact one-electron value)")
    (cfg.out / "report.txt").write_text("\n".join(lines) + "\n")
    res.paths.append(cfg.out / "report.txt")
    res.paths.append(_write_json(cfg.out / "report.json",
                                 {"runs": rows, "wichmann_kroll_density_r1": WICHMANN_KROLL_DENSITY}, cfg))
    # flows of nu5 (atom) and w5 (ion) on the atom's trajectory
    atom = [p for p in sorted(cfg.out.glob("flow_*.csv")) if p.stem != "flow_coulomb"]
    if atom:
        with open(atom[0]) as fh:
            data = np.array([r for r in csv.reader(l for l in fh if not l.startswith("#"))][1:], dtype=float)
        x, nu, w = data[:, 0], data[:, 2], data[:, 3]
        res.paths.append(_write_csv(cfg.out / "plot_flows.csv", ["x", "nu5", "w5", "nu5_minus_w5"],
                                    [x, nu, w, nu - w], cfg))
    fx = np.linspace(0.005, 1.0, 200)
    fit = _load_fit(cfg)
    res.paths.append(_write_csv(cfg.out / "plot_w5_fit.csv", ["x", "w5"], [fx, eval_w5(fit, fx)], cfg))
    res.computed = 1
    return res
