"""Regularised vacuum spectral density y(x) of the Dirac-Coulomb operator.

    y(x) = sum_{0<|kappa|<=K} 2|kappa| (y_{kappa-} - y_{kappa+} - y~_kappa)

with y_{kappa+-} the momentum integral of |F|^2 + |G|^2 over the continuum
between the cut-offs, and y~ the bound states with principal number
|kappa| + n <= M_lambda and binding momentum p >= Lambda.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .radial import BoundState, PhysicalParams, _continuum_fg, bound_solution

__all__ = [
    "SampledDensity",
    "GridRangeError",
    "working_interval",
    "momentum_nodes",
    "channel_density",
    "assemble_density",
    "write_density",
    "read_density",
]


class GridRangeError(ValueError):
    """Raised when a grid leaves the working interval [a, b]."""


@dataclass
class SampledDensity:
    grid: np.ndarray
    values: np.ndarray
    params: PhysicalParams
    a: float
    b: float
    channel_breakdown: Optional[dict] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.shape != self.values.shape:
            raise ValueError("grid and values must have the same shape")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("density values must be finite")

    def half_trace(self, r):
        """(1/2) Tr R(r) = y(|r|) / (8 pi r^2), interpolated on the grid."""
        r = np.abs(np.asarray(r, dtype=float))
        return np.interp(r, self.grid, self.values) / (8.0 * np.pi * r ** 2)


def working_interval(params: PhysicalParams) -> tuple[float, float]:
    """Default [a, b]: a = 2/Lambda0, b = K / (2 gamma sqrt(Lambda0))."""
    a = 2.0 / params.Lambda0
    b = params.K / (2.0 * params.gamma * math.sqrt(params.Lambda0))
    if b <= a:
        raise ValueError(f"empty working interval [{a:.4g}, {b:.4g}]; raise K")
    return a, b


def momentum_nodes(lo: float, hi: float, b: float, n_per_panel: int = 16):
    """Composite Gauss-Legendre rule on [lo, hi] with panels no wider than
    pi / (2 b), enough to follow the e^(2ipx) oscillation up to x = b."""
    if not lo < hi:
        raise ValueError("need lo < hi")
    n_panels = max(1, int(math.ceil((hi - lo) / (math.pi / (2.0 * b)))))
    t, w = np.polynomial.legendre.leggauss(n_per_panel)
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _check_grid(grid, a, b) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    tol = 1e-12 * max(1.0, abs(b))
    if grid.min() < a - tol or grid.max() > b + tol:
        raise GridRangeError(f"grid [{grid.min():.4g}, {grid.max():.4g}] leaves [{a:.4g}, {b:.4g}]")
    return grid


def _continuum_integral(params, kappa, grid, branch, nodes, weights, chunk=64):
    gamma = params.gamma
    s = math.sqrt(kappa * kappa - gamma * gamma)
    out = np.zeros_like(grid)
    for start in range(0, len(nodes), chunk):
        p = nodes[start:start + chunk]
        w = weights[start:start + chunk]
        z = branch * np.sqrt(1.0 + p * p)
        y = gamma * z / p
        F, G = _continuum_fg(kappa, s, p, z, y, grid, branch)
        out += w @ (F * F + G * G)
    return out


def bound_states(params: PhysicalParams, kappa: int) -> list[BoundState]:
    """Bound states of channel kappa kept by the M_lambda and Lambda cut-offs."""
    out = []
    n = 0 if kappa < 0 else 1
    while abs(kappa) + n <= params.M_lambda:
        st = BoundState(kappa, n, params.gamma)
        if st.p >= params.Lambda:
            out.append(st)
        n += 1
    return out


def channel_density(params: PhysicalParams, kappa: int, grid, *, n_per_panel: int = 16,
                    b_panel: Optional[float] = None):
    """(y_minus, y_plus, y_bound) for one angular channel on `grid`."""
    if kappa == 0:
        raise ValueError("kappa must be nonzero")
    grid = np.asarray(grid, dtype=float)
    b = b_panel if b_panel is not None else float(grid.max())
    nodes, weights = momentum_nodes(params.Lambda, params.Lambda0, b, n_per_panel)
    y_minus = _continuum_integral(params, kappa, grid, -1, nodes, weights)
    y_plus = _continuum_integral(params, kappa, grid, +1, nodes, weights)
    y_bound = np.zeros_like(grid)
    for st in bound_states(params, kappa):
        y_bound += bound_solution(params, st, grid).density()
    return y_minus, y_plus, y_bound


def _channel_job(args):
    params, kappa, grid, n_per_panel, b_panel = args
    ym, yp, yb = channel_density(params, kappa, grid, n_per_panel=n_per_panel, b_panel=b_panel)
    return 2 * abs(kappa) * (ym - yp - yb)


def _kappas(K: int) -> list[int]:
    # fixed summation order: -1, 1, -2, 2, ...
    return [sgn * k for k in range(1, K + 1) for sgn in (-1, 1)]


def assemble_density(params: PhysicalParams, grid=None, *, n_points: int = 400,
                     a: Optional[float] = None, b: Optional[float] = None,
                     n_per_panel: int = 16, workers: int = 1,
                     keep_channels: bool = False) -> SampledDensity:
    """Sum the channel contributions on a grid inside [a, b].

    Channels may be evaluated in a process pool; the reduction always runs
    in the fixed kappa order so results do not depend on `workers`.
    """
    a0, b0 = working_interval(params)
    a = a0 if a is None else a
    b = b0 if b is None else b
    if grid is None:
        grid = np.linspace(a, b, n_points)
    grid = _check_grid(grid, a, b)
    kappas = _kappas(params.K)
    jobs = [(params, k, grid, n_per_panel, b) for k in kappas]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_channel_job, jobs))
    else:
        parts = [_channel_job(j) for j in jobs]
    total = np.zeros_like(grid)
    for part in parts:
        total = total + part
    breakdown = {k: part for k, part in zip(kappas, parts)} if keep_channels else None
    meta = {
        "n_per_panel": n_per_panel,
        "half_trace": "(1/2) Tr R(r) = y(|r|) / (8 pi r^2)",
    }
    return SampledDensity(grid, total, params, a, b, breakdown, meta)


def write_density(dens: SampledDensity, csv_path, json_path=None, extra_meta: Optional[dict] = None,
                  comment: Optional[str] = None):
    """CSV with columns x, y (and y_k<kappa> per channel) plus a JSON sidecar.
    `comment` goes on a leading '#' line of the CSV."""
    csv_path = Path(csv_path)
    json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
    cols = ["x", "y"]
    data = [dens.grid, dens.values]
    if dens.channel_breakdown:
        for k, arr in dens.channel_breakdown.items():
            cols.append(f"y_k{k}")
            data.append(arr)
    with open(csv_path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(cols)
        for row in zip(*data):
            w.writerow([repr(float(v)) for v in row])
    sidecar = {"params": dens.params.as_dict(), "a": dens.a, "b": dens.b, **dens.meta}
    if extra_meta:
        sidecar.update(extra_meta)
    json_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return csv_path, json_path


def read_density(csv_path, json_path=None) -> SampledDensity:
    csv_path = Path(csv_path)
    json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
    side = json.loads(json_path.read_text())
    p = side["params"]
    params = PhysicalParams(Z=p["Z"], alpha=p["alpha"], K=p["K"], M_lambda=p["M_lambda"],
                            Lambda=p["Lambda"], Lambda0=p["Lambda0"])
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    breakdown = None
    if len(header) > 2:
        breakdown = {int(h[3:]): body[:, i] for i, h in enumerate(header) if h.startswith("y_k")}
    meta = {k: v for k, v in side.items() if k not in ("params", "a", "b")}
    return SampledDensity(body[:, 0], body[:, 1], params, side["a"], side["b"], breakdown, meta)
