"""Piecewise-dilated flow of the running constant nu5.

On the spectral interval (lambda_{n+1}, lambda_n], i.e. x in (1/(n+1), 1/n],
the one-electron flow of w5 is rescaled by (lambda_n - lambda_{n+1}) / dw_n
with dw_n = gamma / (n (n + 1)):

    nu5(x) = w5(1) - sum_{n: x < 1/n} ratio_n (w5(1/n) - w5(max(1/(n+1), x)))
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .extrapolation import PiecewiseW5, eval_w5

__all__ = [
    "WICHMANN_KROLL_DENSITY",
    "SpectrumTable",
    "FlowResult",
    "coulomb_spectrum",
    "uranium_spectrum",
    "dilatation_ratios",
    "integrate_flow",
    "remainder_estimate",
    "density",
    "density_limit",
]

# Exact one-electron (Z = 92) density at one Compton length; reference only.
WICHMANN_KROLL_DENSITY = 1.3e-3


@dataclass(frozen=True)
class SpectrumTable:
    """Binding momenta lambda_n = p_n, n = 1..N, strictly decreasing in (0, 1)."""

    p: tuple
    label: str = ""

    def __post_init__(self):
        p = tuple(float(v) for v in self.p)
        object.__setattr__(self, "p", p)
        if not p:
            raise ValueError("empty spectrum")
        if any(not 0.0 < v < 1.0 for v in p):
            raise ValueError("p_n must lie in (0, 1)")
        if any(b >= a for a, b in zip(p, p[1:])):
            raise ValueError("p_n must be strictly decreasing")

    def __len__(self) -> int:
        return len(self.p)

    def lam(self, n: int) -> float:
        """lambda_n, 1-based."""
        return self.p[n - 1]

    @classmethod
    def from_csv(cls, path, label: Optional[str] = None) -> "SpectrumTable":
        """Read columns (n, p_n); '#' lines and a header row are skipped."""
        path = Path(path)
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(line for line in fh if not line.lstrip().startswith("#")):
                if not row or not row[0].strip():
                    continue
                try:
                    rows.append((int(row[0]), float(row[1])))
                except ValueError:
                    continue  # header
        rows.sort()
        if [n for n, _ in rows] != list(range(1, len(rows) + 1)):
            raise ValueError(f"{path}: n must run 1..N without gaps")
        return cls(tuple(v for _, v in rows), label or path.stem)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "p_n"])
            for n, v in enumerate(self.p, 1):
                w.writerow([n, repr(v)])
        return path


def uranium_spectrum() -> SpectrumTable:
    """Bundled s-orbital spectrum of the Uranium atom."""
    ref = resources.files("vacpol") / "data" / "uranium_s.csv"
    with resources.as_file(ref) as path:
        return SpectrumTable.from_csv(path, "uranium")


def coulomb_spectrum(gamma: float, n_max: int) -> SpectrumTable:
    """lambda_n = gamma / n, for which every dilatation ratio is exactly 1."""
    return SpectrumTable(tuple(gamma / n for n in range(1, n_max + 1)), "coulomb")


def dilatation_ratios(spectrum: SpectrumTable, gamma: float, n_intervals: int) -> list[float]:
    """(lambda_n - lambda_{n+1}) / dw_n for n = 1..n_intervals."""
    if n_intervals > len(spectrum) - 1:
        raise ValueError(f"spectrum of length {len(spectrum)} supports at most "
                         f"{len(spectrum) - 1} intervals, asked for {n_intervals}")
    return [(spectrum.lam(n) - spectrum.lam(n + 1)) * n * (n + 1) / gamma
            for n in range(1, n_intervals + 1)]


@dataclass
class FlowResult:
    ratios: list
    drops: list              # ratio_n * (w5(1/n) - w5(1/(n+1)))
    trajectory: np.ndarray   # columns x, omega, nu5, w5
    nu5_final: float
    remainder_estimate: float
    nu5_with_remainder: float
    nu5_zero: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def density_at(self, r, *, with_remainder: bool = False):
        return density(self.nu5_with_remainder if with_remainder else self.nu5_final, r)

    def to_dict(self) -> dict:
        return {
            "ratios": list(self.ratios),
            "drops": list(self.drops),
            "nu5_final": self.nu5_final,
            "remainder_estimate": self.remainder_estimate,
            "nu5_with_remainder": self.nu5_with_remainder,
            "density_r1": density_limit(self.nu5_final),
            "density_r1_with_remainder": density_limit(self.nu5_with_remainder),
            "nu5_zero": self.nu5_zero,
            "meta": self.meta,
        }


def _omega_of_x(x, n, lam_n, lam_n1):
    """Inverse of x(omega) = (1/n)(1 - (lam_n - omega) / ((n+1)(lam_n - lam_n1)))."""
    return lam_n - (lam_n - lam_n1) * (n + 1) * (1.0 - n * x)


def integrate_flow(fit: PiecewiseW5, spectrum: SpectrumTable, gamma: float, n_intervals: int,
                   *, samples_per_interval: int = 25, Z: Optional[int] = None,
                   tail_ratio: Optional[float] = None) -> FlowResult:
    """Flow nu5 from x = 1 down through `n_intervals` spectral intervals.

    The integral of w5' over each interval telescopes to endpoint values. If
    Z is given, the remainder (w5(1/(n+2)) - chi) / Z beyond the last
    interval is also reported, together with nu5 minus that remainder.
    If `tail_ratio` is given, the flow is continued from 1/(n_intervals+1)
    to 0+ with that fixed ratio (1 for the Coulomb spectrum) as `nu5_zero`.
    """
    if n_intervals < 0:
        raise ValueError("n_intervals must be non-negative")
    ratios = dilatation_ratios(spectrum, gamma, n_intervals)
    nu = float(eval_w5(fit, 1.0))
    rows = [(1.0, spectrum.lam(1), nu, nu)]
    drops = []
    for n, ratio in enumerate(ratios, 1):
        x_hi, x_lo = 1.0 / n, 1.0 / (n + 1)
        w_hi = float(eval_w5(fit, x_hi))
        xs = np.linspace(x_hi, x_lo, samples_per_interval + 1)[1:]
        ws = eval_w5(fit, xs)
        lam_n, lam_n1 = spectrum.lam(n), spectrum.lam(n + 1)
        for x, w in zip(xs, ws):
            rows.append((float(x), _omega_of_x(x, n, lam_n, lam_n1), nu - ratio * (w_hi - w), float(w)))
        drop = ratio * (w_hi - float(ws[-1]))
        drops.append(drop)
        nu -= drop
    rem = 0.0
    if Z is not None:
        rem = remainder_estimate(fit, Z, n_intervals + 1)
    nu_zero = None
    if tail_ratio is not None:
        nu_zero = nu - tail_ratio * (float(eval_w5(fit, 1.0 / (n_intervals + 1))) - fit.at_zero())
    meta = {"gamma": gamma, "n_intervals": n_intervals, "spectrum": spectrum.label}
    return FlowResult(ratios, drops, np.array(rows), nu, rem, nu - rem, nu_zero, meta)


def remainder_estimate(fit: PiecewiseW5, Z: int, n_cut: int) -> float:
    """(w5(1/(n_cut + 1)) - w5(0+)) / Z."""
    if n_cut < 1:
        raise ValueError("n_cut must be >= 1")
    if Z <= 0:
        raise ValueError("Z must be positive")
    return (float(eval_w5(fit, 1.0 / (n_cut + 1))) - fit.at_zero()) / Z


def density(nu5: float, r) -> float:
    """nu(r) = nu5 / (8 pi r^7) for |r| > 1 (Compton units)."""
    r_arr = np.abs(np.asarray(r, dtype=float))
    if np.any(r_arr <= 1.0):
        raise ValueError("density is defined for |r| > 1; use r slightly above 1")
    out = nu5 / (8.0 * math.pi * r_arr ** 7)
    return out if np.ndim(r) else float(out)


def density_limit(nu5: float) -> float:
    """Limit of nu(r) as |r| -> 1+, i.e. nu5 / (8 pi)."""
    return nu5 / (8.0 * math.pi)
