"""Restricted Laplace transform on [a, b] and the decomposition

    y(x) = c1 x + u(x) + c2 delta(x) + w1/x + s(x) + w5/x^5 + O(x)

where s is a finite sum of oscillations c_w e^(i w x) with c_{-w} = conj(c_w).
The fit runs in the Laplace domain on real p and on the imaginary axis p = iq;
frequencies are added greedily from spikes of the residual on the imaginary
axis.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .specfun import expint_en
from .uehling import u_position

__all__ = [
    "NoSpikeError",
    "DecompositionError",
    "CoarseGridError",
    "LaplaceOperator",
    "laplace_transform",
    "transform_linear",
    "transform_inverse_power",
    "transform_oscillation",
    "e_hat_zero",
    "find_frequency",
    "Decomposition",
    "decompose",
    "norms",
]


class NoSpikeError(RuntimeError):
    """The residual shows no oscillation peak above the noise floor."""


class DecompositionError(RuntimeError):
    """The greedy loop ran out of frequencies before meeting the tolerance."""


class CoarseGridError(RuntimeError):
    """Refining the sample grid changes a transform beyond tolerance."""


# ---------------------------------------------------------------- transforms

def _phi(z):
    """phi0(z) = int_0^1 e^(-z s) ds, phi1(z) = int_0^1 s e^(-z s) ds."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    ez = np.exp(-zs)
    phi0 = np.where(small, 1 - z / 2 + z * z / 6 - z ** 3 / 24, (1 - ez) / zs)
    phi1 = np.where(small, 0.5 - z / 3 + z * z / 8 - z ** 3 / 30, (1 - (1 + zs) * ez) / (zs * zs))
    return phi0, phi1


def _filon_matrix(grid: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Weights W with int f e^(-p x) dx ~ W @ f for f piecewise linear on grid."""
    x0, x1 = grid[:-1], grid[1:]
    h = x1 - x0
    z = p[:, None] * h[None, :]
    phi0, phi1 = _phi(z)
    base = h[None, :] * np.exp(-p[:, None] * x0[None, :])
    left = base * (phi0 - phi1)   # weight on f_i
    right = base * phi1           # weight on f_{i+1}
    W = np.zeros((len(p), len(grid)), dtype=complex)
    W[:, :-1] += left
    W[:, 1:] += right
    return W


def laplace_transform(grid, values, p, *, check: bool = False, rtol: float = 1e-6):
    """int_a^b f(x) e^(-p x) dx over the sample grid, f linear between samples.

    With `check=True` the result is compared against the same rule on every
    second sample and `CoarseGridError` is raised if they differ by more
    than `rtol` (relative to the largest magnitude).
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values)
    p_arr = np.atleast_1d(np.asarray(p, dtype=complex))
    out = _filon_matrix(grid, p_arr) @ values
    if check:
        if len(grid) < 5:
            raise CoarseGridError("need at least 5 samples for a refinement check")
        idx = np.arange(0, len(grid), 2)
        if idx[-1] != len(grid) - 1:
            idx = np.append(idx, len(grid) - 1)
        coarse = _filon_matrix(grid[idx], p_arr) @ values[idx]
        scale = max(np.max(np.abs(out)), 1e-300)
        if np.max(np.abs(coarse - out)) > rtol * scale * 4.0:
            raise CoarseGridError("Laplace transform not converged on this grid")
    if np.ndim(p) == 0:
        out = out[0]
        return out.real if np.isrealobj(p) and np.isrealobj(values) else out
    return out


def transform_linear(p, a: float, b: float):
    """Transform of f(x) = x: d/dp[(e^(-b p) - e^(-a p)) / p]."""
    p = np.asarray(p, dtype=complex)
    small = np.abs(p) < 1e-6
    ps = np.where(small, 1.0, p)
    val = (a * np.exp(-a * ps) - b * np.exp(-b * ps)) / ps + (np.exp(-a * ps) - np.exp(-b * ps)) / ps ** 2
    return np.where(small, 0.5 * (b * b - a * a) - p * (b ** 3 - a ** 3) / 3.0, val)


def transform_inverse_power(m: int, p: float, a: float, b: float) -> float:
    """e_m(p): transform of x^(-m-1), a^(-m) E_{m+1}(a p) - b^(-m) E_{m+1}(b p); real p >= 0."""
    if m == 0 and p == 0:
        return math.log(b / a)
    return a ** (-m) * float(expint_en(m + 1, a * p)) - b ** (-m) * float(expint_en(m + 1, b * p))


def e_hat_zero(m: int, a: float, b: float) -> float:
    """e_m(0) = int_a^b x^(-m-1) dx."""
    return math.log(b / a) if m == 0 else (a ** (-m) - b ** (-m)) / m


def transform_oscillation(omega: float, p, a: float, b: float):
    """s_w(p) = (e^(-(p - i w) a) - e^(-(p - i w) b)) / (p - i w), transform of e^(i w x)."""
    d = np.asarray(p, dtype=complex) - 1j * omega
    small = np.abs(d) < 1e-9
    ds = np.where(small, 1.0, d)
    return np.where(small, b - a, (np.exp(-ds * a) - np.exp(-ds * b)) / ds)


# ------------------------------------------------------------------ operator

@dataclass
class LaplaceOperator:
    """Discrete transform on a fixed sample grid at a fixed set of p values:
    real p in `p_real` and imaginary p = i q for q in `q_imag`."""

    grid: np.ndarray
    p_real: np.ndarray
    q_imag: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.a, self.b = float(self.grid[0]), float(self.grid[-1])
        self.W_real = _filon_matrix(self.grid, self.p_real.astype(complex)).real
        self.W_imag = _filon_matrix(self.grid, 1j * self.q_imag)
        # rows scaled so every equation has O(1) weight near x = a
        self.row_scale = np.exp(self.p_real * self.a)

    @classmethod
    def for_grid(cls, grid, *, n_real: int = 33, q_factor: float = 4.0,
                 max_q_samples: int = 4096):
        grid = np.asarray(grid, dtype=float)
        a, b = grid[0], grid[-1]
        p_real = np.linspace(0.0, 8.0 / (b - a), n_real)
        dq = math.pi / (4.0 * (b - a))
        h = float(np.max(np.diff(grid)))
        q_max = min(math.pi / h, 4.0 * math.pi * q_factor * len(grid) / (b - a))
        n_q = min(max_q_samples, int(q_max / dq) + 1)
        q_imag = dq * np.arange(n_q)
        return cls(grid, p_real, q_imag)

    def stacked(self, f) -> np.ndarray:
        """Real vector of all transform samples of x-space samples f."""
        r = (self.W_real @ f) * self.row_scale
        c = self.W_imag @ f
        return np.concatenate([r, c.real, c.imag])

    def imag_axis(self, f) -> np.ndarray:
        return self.W_imag @ f


# ---------------------------------------------------------- frequency search

def _spike_candidates(mag: np.ndarray, q: np.ndarray, prominence: float, floor: float):
    """Interior local maxima of |R(iq)| whose drop to the lower neighbouring
    minimum is at least `prominence` times their height, sorted by height."""
    out = []
    n = len(mag)
    for i in range(1, n - 1):
        if mag[i] >= mag[i - 1] and mag[i] > mag[i + 1] and mag[i] > floor:
            j = i
            while j > 0 and mag[j - 1] <= mag[j]:
                j -= 1
            k = i
            while k < n - 1 and mag[k + 1] <= mag[k]:
                k += 1
            drop = mag[i] - max(mag[j], mag[k])
            if drop >= prominence * mag[i]:
                out.append((mag[i], q[i]))
    out.sort(key=lambda t: -t[0])
    return [qq for _, qq in out]


def _cos_sin_hat(op_rows: np.ndarray, grid: np.ndarray, omega: float):
    cos_hat = op_rows @ np.cos(omega * grid)
    sin_hat = op_rows @ np.sin(omega * grid)
    return cos_hat, sin_hat


def _matched(residual_b, cos_b, sin_b):
    """max over c1^2 + c2^2 = 1 of |<R, c1 sin + c2 cos>| and the maximiser."""
    s_ = np.vdot(sin_b, residual_b)
    c_ = np.vdot(cos_b, residual_b)
    v = np.array([s_, c_])
    m = np.real(np.outer(v, np.conj(v)))
    evals, evecs = np.linalg.eigh(m)
    vec = evecs[:, -1]
    if vec[np.argmax(np.abs(vec))] < 0:
        vec = -vec
    return math.sqrt(max(evals[-1], 0.0)), float(vec[0]), float(vec[1])


def find_frequency(residual_hat, q, grid, *, neighbourhood=None, prominence: float = 0.25,
                   floor_rel: float = 1e-10, n_scan: int = 201, rank: int = 0, W_imag=None):
    """Locate an oscillation frequency in a residual sampled on p = i q.

    Picks the `rank`-th highest interior spike of |R(iq)| (0 = highest), takes
    the neighbourhood B around it (or `neighbourhood` if given), and returns
    (omega, c1, c2): the omega in B maximising the convolution of R with
    c1 sin^ + c2 cos^ restricted to B, with c1^2 + c2^2 = 1.
    """
    residual_hat = np.asarray(residual_hat)
    q = np.asarray(q, dtype=float)
    grid = np.asarray(grid, dtype=float)
    a, b = grid[0], grid[-1]
    mag = np.abs(residual_hat)
    floor = floor_rel * max(np.max(mag), 1e-300)
    if neighbourhood is None:
        cands = _spike_candidates(mag, q, prominence, floor)
        if len(cands) <= rank or np.max(mag) == 0.0:
            raise NoSpikeError("no oscillation spike above the noise floor")
        q0 = cands[rank]
        half = math.pi / (b - a)
        lo, hi = max(q0 - half, q[1]), min(q0 + half, q[-1])
    else:
        lo, hi = neighbourhood
    mask = (q >= lo) & (q <= hi)
    if mask.sum() < 3:
        raise NoSpikeError("neighbourhood holds fewer than 3 samples")
    rows = W_imag[mask] if W_imag is not None else _filon_matrix(grid, 1j * q[mask])
    rb = residual_hat[mask]

    def score(w):
        ch, sh = _cos_sin_hat(rows, grid, w)
        return _matched(rb, ch, sh)

    omegas = np.linspace(lo, hi, n_scan)
    scores = [score(w)[0] for w in omegas]
    i = int(np.argmax(scores))
    w_lo, w_hi = omegas[max(i - 1, 0)], omegas[min(i + 1, n_scan - 1)]
    res = minimize_scalar(lambda w: -score(w)[0], bounds=(w_lo, w_hi), method="bounded",
                          options={"xatol": 1e-10 * max(1.0, hi)})
    w_best = float(res.x) if -res.fun >= scores[i] else float(omegas[i])
    _, c1, c2 = score(w_best)
    return w_best, c1, c2


# ------------------------------------------------------------- decomposition

@dataclass
class Decomposition:
    c1: float
    c2: float
    w1: float
    w5: float
    oscillations: list  # [(omega, c_omega complex)], omega > 0; c_{-omega} = conj
    remainder_norm: float
    oscillation_norm: float
    a: float
    b: float
    uehling_sign: int = 1
    grid: Optional[np.ndarray] = None
    remainder: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def frequencies(self) -> list[float]:
        """Full symmetric set Omega = {+-omega}."""
        ws = [w for w, _ in self.oscillations]
        return sorted([-w for w in ws] + ws)

    def oscillation_part(self, x):
        x = np.asarray(x, dtype=float)
        s = np.zeros_like(x)
        for w, c in self.oscillations:
            s += 2.0 * (c * np.exp(1j * w * x)).real
        return s

    def smooth_part(self, x, gamma: float):
        """c1 x + u + w1/x + s + w5/x^5 on x (the delta term has no support there)."""
        x = np.asarray(x, dtype=float)
        u = self.uehling_sign * u_position(x, gamma) if gamma else 0.0
        return self.c1 * x + u + self.w1 / x + self.oscillation_part(x) + self.w5 / x ** 5

    def to_dict(self) -> dict:
        d = {
            "c1": self.c1, "c2": self.c2, "w1": self.w1, "w5": self.w5,
            "oscillations": [[w, c.real, c.imag] for w, c in self.oscillations],
            "remainder_norm": self.remainder_norm,
            "oscillation_norm": self.oscillation_norm,
            "a": self.a, "b": self.b, "uehling_sign": self.uehling_sign,
            "meta": self.meta,
        }
        if self.grid is not None:
            d["grid"] = [float(v) for v in self.grid]
            d["remainder"] = [float(v) for v in self.remainder]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Decomposition":
        grid = np.array(d["grid"]) if "grid" in d else None
        rem = np.array(d["remainder"]) if "remainder" in d else None
        return cls(d["c1"], d["c2"], d["w1"], d["w5"],
                   [(w, complex(re, im)) for w, re, im in d["oscillations"]],
                   d["remainder_norm"], d["oscillation_norm"], d["a"], d["b"],
                   d.get("uehling_sign", 1), grid, rem, d.get("meta", {}))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, path) -> "Decomposition":
        return cls.from_dict(json.loads(Path(path).read_text()))


def norms(remainder, grid, oscillations: Sequence, a: float, b: float) -> tuple[float, float]:
    """(||O||_2, ||s||): the remainder L2 norm and the oscillation norm, both
    scaled by e_4(0) = (a^-4 - b^-4)/4."""
    e4 = e_hat_zero(4, a, b)
    remainder = np.asarray(remainder, dtype=float)
    l2 = math.sqrt(float(np.trapezoid(remainder ** 2, grid))) / ((b - a) * e4)
    acc = 0.0
    for w, c in oscillations:
        s_plus = complex(transform_oscillation(w, 0.0, a, b))
        s_minus = complex(transform_oscillation(-w, 0.0, a, b))
        acc += abs(np.conj(c) * s_minus + c * s_plus) ** 2
    return l2, math.sqrt(acc) / e4


@dataclass
class _Fit:
    coef: np.ndarray
    omegas: list
    lsq: float
    remainder: np.ndarray
    l2: float
    osc: float
    oscillations: list


class _Fitter:
    """Linear least squares in the Laplace domain for a fixed frequency set."""

    def __init__(self, grid, values, u_samples, op: LaplaceOperator):
        self.grid = grid
        self.values = values
        self.u = u_samples
        self.op = op
        self.a, self.b = op.a, op.b
        n_r = len(op.p_real)
        n_q = len(op.q_imag)
        delta = np.concatenate([op.row_scale, np.ones(n_q), np.zeros(n_q)])
        self.base_cols = [op.stacked(grid), delta, op.stacked(1.0 / grid), op.stacked(grid ** -5.0)]
        self.x_cols = [grid, np.zeros_like(grid), 1.0 / grid, grid ** -5.0]
        self.target = op.stacked(values - u_samples)
        self.n_rows = n_r + 2 * n_q

    def fit(self, omegas) -> _Fit:
        cols = list(self.base_cols)
        xcols = list(self.x_cols)
        for w in omegas:
            cw, sw = np.cos(w * self.grid), np.sin(w * self.grid)
            cols += [self.op.stacked(cw), self.op.stacked(sw)]
            xcols += [cw, sw]
        A = np.column_stack(cols)
        scale = np.linalg.norm(A, axis=0)
        scale[scale == 0] = 1.0
        sol, *_ = np.linalg.lstsq(A / scale, self.target, rcond=None)
        coef = sol / scale
        lsq = float(np.sum((A @ coef - self.target) ** 2))
        model = np.column_stack(xcols) @ coef
        remainder = self.values - self.u - model
        osc = [(float(w), complex(coef[4 + 2 * k], -coef[5 + 2 * k]) / 2.0) for k, w in enumerate(omegas)]
        l2, on = norms(remainder, self.grid, osc, self.a, self.b)
        return _Fit(coef, list(omegas), lsq, remainder, l2, on, osc)

    def residual_imag(self, fit: _Fit):
        """Residual transform on the imaginary axis, delta column included."""
        return self.op.imag_axis(fit.remainder) - fit.coef[1]

    def refine(self, omegas, lo, hi, w0):
        """Minimise the least-squares residual over the newest frequency."""
        lo, hi = max(lo, 1e-9), max(hi, lo + 1e-9)
        res = minimize_scalar(lambda w: self.fit(list(omegas) + [w]).lsq, bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-11 * max(1.0, hi)})
        w = float(res.x)
        if self.fit(list(omegas) + [w0]).lsq < res.fun:
            w = w0
        return w

    def refine_all(self, omegas, half: float, sweeps: int = 4) -> list:
        """Coordinate sweeps of `refine` over every frequency, each kept
        within `half` of its current value; stops once a sweep moves no
        frequency by more than 1e-10 relative."""
        omegas = list(omegas)
        if len(omegas) < 2:
            return omegas
        for _ in range(sweeps):
            moved = 0.0
            for k in range(len(omegas)):
                others = omegas[:k] + omegas[k + 1:]
                w_old = omegas[k]
                w_new = self.refine(others, w_old - half, w_old + half, w_old)
                # keep position k so coefficient order stays stable
                omegas[k] = w_new
                moved = max(moved, abs(w_new - w_old) / max(1.0, abs(w_old)))
            if moved < 1e-10:
                break
        return omegas


def _greedy(fitter: _Fitter, op: LaplaceOperator, grid, tol: float, max_frequencies: int,
            n_candidates: int):
    """Add frequencies until the remainder norm meets `tol`; returns the
    accepted fit with the smallest oscillation norm and the l2 history."""
    half = math.pi / (op.b - op.a)
    current = fitter.fit([])
    accepted = [current] if current.l2 <= tol else []
    history = [current.l2]
    while not accepted and len(current.omegas) < max_frequencies:
        rhat = fitter.residual_imag(current)
        trials = []
        for rank in range(n_candidates):
            try:
                w0, _, _ = find_frequency(rhat, op.q_imag, grid, rank=rank, W_imag=op.W_imag)
            except NoSpikeError:
                break
            w = fitter.refine(current.omegas, w0 - half, w0 + half, w0)
            if any(abs(w - v) < 1e-6 for v in current.omegas):
                continue
            omegas = fitter.refine_all(current.omegas + [w], 0.5 * half)
            if len({round(v, 6) for v in omegas}) < len(omegas):
                continue
            trials.append(fitter.fit(omegas))
        if not trials:
            break
        ok = [t for t in trials if t.l2 <= tol]
        if ok:
            accepted = ok
            break
        current = min(trials, key=lambda t: t.l2)
        history.append(current.l2)
    if not accepted:
        raise DecompositionError(
            f"remainder norm {min(history):.3g} above {tol} after {len(current.omegas)} frequencies")
    return min(accepted, key=lambda t: t.osc), history


def decompose(grid, values, gamma: float, *, tol: float = 0.1, max_frequencies: int = 12,
              uehling_sign="auto", n_candidates: int = 3, literal: bool = False,
              op: Optional[LaplaceOperator] = None) -> Decomposition:
    """Greedy decomposition of sampled y on [a, b].

    The Uehling term enters with a fixed unit coefficient; its sign is taken
    as given (+1 / -1) or, with "auto", as the one whose complete
    decomposition leaves the smaller remainder norm. Each step tries the
    `n_candidates` highest spikes, refines the new frequency and then all
    frequencies jointly against the full least-squares residual, and keeps
    the best. Among fits with remainder_norm <= tol the one with the
    smallest oscillation norm is returned.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if grid.ndim != 1 or len(grid) < 8 or np.any(np.diff(grid) <= 0):
        raise ValueError("need an increasing grid with at least 8 samples")
    op = op or LaplaceOperator.for_grid(grid)
    u = u_position(grid, gamma, literal=literal) if gamma else np.zeros_like(grid)

    if uehling_sign == "auto":
        signs = (1, -1) if gamma else (1,)
    elif uehling_sign in (1, -1, 0):
        signs = (int(uehling_sign),)
    else:
        raise ValueError("uehling_sign must be 'auto', 1, -1 or 0")

    results = []
    errors = []
    for sign in signs:
        try:
            best, history = _greedy(_Fitter(grid, values, sign * u, op), op, grid, tol,
                                    max_frequencies, n_candidates)
        except DecompositionError as exc:
            errors.append(exc)
            continue
        results.append((best.l2, sign, best, history))
    if not results:
        raise errors[0]
    # ties go to +1, the first sign tried
    _, sign, best, history = min(results, key=lambda r: r[0])
    c1, c2, w1, w5 = (float(v) for v in best.coef[:4])
    return Decomposition(c1, c2, w1, w5, best.oscillations, best.l2, best.osc, op.a, op.b, sign,
                         grid.copy(), best.remainder, {"l2_history": history})
