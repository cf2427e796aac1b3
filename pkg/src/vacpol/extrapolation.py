"""Cut-off extrapolation of w5 and its piecewise power-law fit.

Extrapolation minimises

    f({w_L}, beta, eta) = sum_{(L, L0)} (w_L + beta L0^(-eta) - w5(L, L0))^2

and the fit is

    w5(x) = upsilon x^xi_1 + chi                 on (0, t_1]
    w5(x) = w5(t_{i-1}) (x / t_{i-1})^xi_i       on (t_{i-1}, t_i]
"""
from __future__ import annotations

import json
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

__all__ = [
    "W5Samples",
    "PiecewiseW5",
    "PUBLISHED_FIT",
    "ExtrapolationResult",
    "ExtrapolationError",
    "FlatDirectionWarning",
    "extrapolate",
    "eval_w5",
    "fit_piecewise",
]


class ExtrapolationError(RuntimeError):
    """Gradient descent could not make progress (step-size backoff exhausted)."""


class FlatDirectionWarning(UserWarning):
    """A fitted parameter is not determined by the data."""


@dataclass
class W5Samples:
    """Set of (Lambda, Lambda0, w5) measurements."""

    entries: list = field(default_factory=list)

    def __post_init__(self):
        self.entries = [(float(l), float(l0), float(w)) for l, l0, w in self.entries]
        for l, l0, w in self.entries:
            if not (l > 0 and l0 > l and math.isfinite(w)):
                raise ValueError(f"invalid sample ({l}, {l0}, {w})")

    def add(self, Lambda: float, Lambda0: float, w5: float) -> None:
        self.entries.append((float(Lambda), float(Lambda0), float(w5)))

    def by_lambda(self) -> dict:
        groups = defaultdict(list)
        for l, l0, w in self.entries:
            groups[l].append((l0, w))
        return {l: sorted(groups[l]) for l in sorted(groups)}

    def validate(self) -> None:
        groups = self.by_lambda()
        if not groups:
            raise ValueError("no samples")
        for l, rows in groups.items():
            if len({l0 for l0, _ in rows}) < 2:
                raise ValueError(f"Lambda={l}: need at least 2 distinct Lambda0 values")

    def to_dict(self) -> dict:
        return {"entries": [list(e) for e in sorted(self.entries)]}

    @classmethod
    def from_dict(cls, d) -> "W5Samples":
        return cls([tuple(e) for e in d["entries"]])


@dataclass
class ExtrapolationResult:
    w5_inf: dict
    beta: float
    eta: float
    objective: float
    iterations: int
    flat_directions: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "w5_inf": {repr(k): v for k, v in sorted(self.w5_inf.items())},
            "beta": self.beta,
            "eta": self.eta,
            "objective": self.objective,
            "iterations": self.iterations,
            "flat_directions": list(self.flat_directions),
        }


def _solve_linear(eta: float, lam_idx, l0, w, n_lam):
    """Exact least squares for ({w_L}, beta) at fixed eta."""
    A = np.zeros((len(w), n_lam + 1))
    A[np.arange(len(w)), lam_idx] = 1.0
    A[:, -1] = l0 ** (-eta)
    coef, *_ = np.linalg.lstsq(A, w, rcond=None)
    r = A @ coef - w
    return coef, r


def extrapolate(samples: W5Samples, *, eta0: float = 2.0, lr: float = 1.0,
                grad_tol: float = 1e-10, max_iter: int = 20000,
                max_backtracks: int = 60) -> ExtrapolationResult:
    """Minimise f by gradient descent on eta with ({w_L}, beta) projected out.

    For fixed eta the objective is quadratic in ({w_L}, beta), so those are
    solved exactly and their gradient vanishes; the remaining gradient is
    df/deta = sum 2 r (-beta log L0 L0^-eta). Steps use a learning rate that
    is halved until f decreases and doubled after each accepted step.
    """
    samples.validate()
    # sorted so the result does not depend on sample order
    entries = sorted(samples.entries)
    lams = sorted({e[0] for e in entries})
    lam_index = {l: i for i, l in enumerate(lams)}
    lam_idx = np.array([lam_index[e[0]] for e in entries])
    l0 = np.array([e[1] for e in entries])
    w = np.array([e[2] for e in entries])
    n = len(lams)

    def state(eta):
        coef, r = _solve_linear(eta, lam_idx, l0, w, n)
        f = float(r @ r)
        g = float(2.0 * r @ (-coef[-1] * np.log(l0) * l0 ** (-eta)))
        return f, g, coef

    eta = float(eta0)
    f, g, coef = state(eta)
    scale = max(1.0, float(w @ w))
    it = 0
    while abs(g) > grad_tol * scale and it < max_iter:
        it += 1
        step = lr
        for _ in range(max_backtracks):
            trial = eta - step * g
            if trial > 0:
                ft, gt, ct = state(trial)
                if ft < f:
                    break
            step *= 0.5
        else:
            if f <= 1e-28 * scale:
                break
            raise ExtrapolationError(f"step-size backoff exhausted at eta={eta:.6g}, |grad|={abs(g):.3g}")
        eta, f, g, coef = trial, ft, gt, ct
        lr = step * 2.0

    flat = []
    distinct_l0 = len(set(l0.tolist()))
    beta = float(coef[-1])
    h = 1e-4 * max(1.0, eta)
    curv = (state(eta + h)[0] - 2.0 * f + state(eta - h)[0]) / (h * h)
    if distinct_l0 < 3 or abs(beta) < 1e-12 * math.sqrt(scale) or curv <= 1e-12 * scale:
        flat.append("eta")
        warnings.warn("eta is not identified by these samples (flat direction)", FlatDirectionWarning,
                      stacklevel=2)
    if abs(beta) < 1e-12 * math.sqrt(scale):
        flat.append("beta")
    w_inf = {l: float(coef[i]) for i, l in enumerate(lams)}
    return ExtrapolationResult(w_inf, beta, float(eta), f, it, flat)


@dataclass(frozen=True)
class PiecewiseW5:
    """Piecewise power law on (0, 1] chained for continuity at the knots."""

    upsilon: float
    chi: float
    knots: tuple  # t_0 = 0 < t_1 < ... < t_k = 1
    xi: tuple     # one exponent per interval

    def __post_init__(self):
        knots = tuple(float(t) for t in self.knots)
        xi = tuple(float(v) for v in self.xi)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "xi", xi)
        if knots[0] != 0.0 or knots[-1] != 1.0:
            raise ValueError("knots must start at 0 and end at 1")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ValueError("knots must be strictly increasing")
        if len(xi) != len(knots) - 1:
            raise ValueError("need one exponent per interval")

    def knot_values(self) -> list[float]:
        """w5 at t_1, ..., t_k."""
        vals = [self.upsilon * self.knots[1] ** self.xi[0] + self.chi]
        for i in range(1, len(self.xi)):
            vals.append(vals[-1] * (self.knots[i + 1] / self.knots[i]) ** self.xi[i])
        return vals

    def at_zero(self) -> float:
        """Limit x -> 0+, equal to chi."""
        return self.chi

    def to_dict(self) -> dict:
        return {"upsilon": self.upsilon, "chi": self.chi, "knots": list(self.knots), "xi": list(self.xi)}

    @classmethod
    def from_dict(cls, d) -> "PiecewiseW5":
        return cls(d["upsilon"], d["chi"], tuple(d["knots"]), tuple(d["xi"]))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, path) -> "PiecewiseW5":
        return cls.from_dict(json.loads(Path(path).read_text()))


# reference fit constants for Z = 92, used when no fit has been computed
PUBLISHED_FIT = PiecewiseW5(upsilon=0.72, chi=0.03, knots=(0.0, 0.13, 0.20, 0.23, 1.0),
                            xi=(1.36, 1.35, 1.24, 0.84))


def eval_w5(fit: PiecewiseW5, x, *, extend: bool = False):
    """w5(x) for x in (0, 1]. With `extend=True`, x > 1 gives 0 instead of
    raising; x <= 0 always raises."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs <= 0) or (not extend and np.any(xs > 1.0)):
        raise ValueError("w5 is defined on (0, 1]")
    t = fit.knots
    anchors = fit.knot_values()
    out = np.zeros_like(xs)
    i = np.searchsorted(t, xs, side="left")  # x in (t[i-1], t[i]]
    first = i == 1
    out[first] = fit.upsilon * xs[first] ** fit.xi[0] + fit.chi
    for k in range(2, len(t)):
        sel = i == k
        out[sel] = anchors[k - 2] * (xs[sel] / t[k - 1]) ** fit.xi[k - 1]
    # x > 1 stays 0
    return out if np.ndim(x) else float(out[0])


def fit_piecewise(xs: Sequence[float], ws: Sequence[float], knots: Iterable[float],
                  *, xi_bounds=(1e-3, 20.0), joint: bool = True) -> PiecewiseW5:
    """Fit (upsilon, chi, xi_i) to samples of w5 on (0, 1] for fixed knots.

    Start: on the first interval a 1-d search over xi_1 with (upsilon, chi)
    solved linearly; on later intervals least squares in log-log space
    through the value already fixed at the left knot. With `joint=True` all
    parameters are then refined together on log w5, so a short interval does
    not inherit the noise of the anchors fitted before it. Continuity holds
    by construction either way.
    """
    xs = np.asarray(xs, dtype=float)
    ws = np.asarray(ws, dtype=float)
    knots = tuple(float(t) for t in knots)
    if xs.shape != ws.shape or xs.ndim != 1:
        raise ValueError("xs and ws must be 1-d of equal length")
    if np.any(xs <= 0) or np.any(xs > 1):
        raise ValueError("samples must lie in (0, 1]")
    order = np.argsort(xs)
    xs, ws = xs[order], ws[order]

    sel = xs <= knots[1]
    x1, w1 = xs[sel], ws[sel]
    if len(x1) < 3:
        raise ValueError(f"need at least 3 samples in (0, {knots[1]}]")

    def lin(xi):
        A = np.column_stack([x1 ** xi, np.ones_like(x1)])
        c, *_ = np.linalg.lstsq(A, w1, rcond=None)
        r = A @ c - w1
        return float(r @ r), c

    grid = np.linspace(*xi_bounds, 400)
    vals = [lin(g)[0] for g in grid]
    j = int(np.argmin(vals))
    lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, len(grid) - 1)]
    res = minimize_scalar(lambda v: lin(v)[0], bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    xi1 = float(res.x)
    _, (ups, chi) = lin(xi1)
    xi = [xi1]
    anchor = ups * knots[1] ** xi1 + chi
    for k in range(2, len(knots)):
        t0, t1 = knots[k - 1], knots[k]
        s = (xs > t0) & (xs <= t1)
        if not np.any(s):
            raise ValueError(f"no samples in ({t0}, {t1}]")
        if anchor <= 0 or np.any(ws[s] <= 0):
            raise ValueError("log-log fit needs positive values")
        dx = np.log(xs[s] / t0)
        dl = np.log(ws[s] / anchor)
        xk = float(dx @ dl / (dx @ dx))
        xi.append(xk)
        anchor = anchor * (t1 / t0) ** xk
    start = PiecewiseW5(float(ups), float(chi), knots, tuple(xi))
    if not joint or np.any(ws <= 0):
        return start

    log_w = np.log(ws)

    def resid(theta):
        fit = PiecewiseW5(theta[0], theta[1], knots, tuple(theta[2:]))
        model = eval_w5(fit, xs)
        return np.log(np.maximum(model, 1e-300)) - log_w

    theta0 = np.array([start.upsilon, start.chi, *start.xi])
    lo_b = [-np.inf, -np.inf] + [xi_bounds[0]] * len(xi)
    hi_b = [np.inf, np.inf] + [xi_bounds[1]] * len(xi)
    sol = least_squares(resid, np.clip(theta0, lo_b, hi_b), bounds=(lo_b, hi_b),
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    if float(sol.cost) > 0.5 * float(resid(theta0) @ resid(theta0)):
        return start
    t = sol.x
    return PiecewiseW5(float(t[0]), float(t[1]), knots, tuple(float(v) for v in t[2:]))
