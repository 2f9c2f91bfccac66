"""Moduli of continuity, their integral regularity constants, and the extremal f*."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

# 8-point Gauss-Legendre rule on [0, 1]
_GX, _GW = np.polynomial.legendre.leggauss(8)
_GX = 0.5 * (_GX + 1.0)
_GW = 0.5 * _GW


class Modulus:
    """Base class: a nondecreasing function with omega(0) = 0."""

    family = "abstract"

    def _eval(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, t):
        arr = np.asarray(t, dtype=float)
        if np.any(arr < 0):
            raise ValueError("modulus argument must be nonnegative")
        out = np.zeros_like(arr)
        pos = arr > 0
        out[pos] = self._eval(arr[pos])
        return float(out) if out.ndim == 0 else out

    def params(self) -> dict:
        return {"family": self.family}

    def __repr__(self):
        return f"{type(self).__name__}({self.params()})"


class PowerModulus(Modulus):
    family = "power"

    def __init__(self, alpha: float):
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        self.alpha = float(alpha)

    def _eval(self, t):
        return t ** self.alpha

    def params(self):
        return {"family": self.family, "alpha": self.alpha}


class PowerLogModulus(Modulus):
    """t**alpha * (1 + log(1 + 1/t)): behaves like t**alpha log(1/t) near 0."""

    family = "power_log"

    def __init__(self, alpha: float):
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        self.alpha = float(alpha)
        grid = np.logspace(-12, 6, 2000)
        if np.any(np.diff(self._eval(grid)) < 0):
            raise ValueError(f"power_log modulus is not monotone for alpha={alpha}")

    def _eval(self, t):
        return t ** self.alpha * (1.0 + np.log1p(1.0 / t))

    def params(self):
        return {"family": self.family, "alpha": self.alpha}


class TabulatedModulus(Modulus):
    """Monotone (PCHIP) interpolation in log-log coordinates with power-law tails."""

    family = "tabulated"

    def __init__(self, t, w):
        t = np.asarray(t, dtype=float)
        w = np.asarray(w, dtype=float)
        if t.ndim != 1 or len(t) < 2 or len(t) != len(w):
            raise ValueError("need matching 1-D tables with at least two entries")
        if np.any(t <= 0) or np.any(w <= 0):
            raise ValueError("table entries must be positive")
        order = np.argsort(t)
        t, w = t[order], w[order]
        if np.any(np.diff(w) < 0):
            raise ValueError("tabulated modulus must be nondecreasing")
        self.t, self.w = t, w
        self._lt, self._lw = np.log(t), np.log(w)
        self._interp = PchipInterpolator(self._lt, self._lw, extrapolate=False)
        self._s0 = (self._lw[1] - self._lw[0]) / (self._lt[1] - self._lt[0])
        self._s1 = max(0.0, (self._lw[-1] - self._lw[-2]) / (self._lt[-1] - self._lt[-2]))
        if self._s0 <= 0:
            raise ValueError("first table slope must be positive so that omega(0+) = 0")

    def _eval(self, t):
        lt = np.log(t)
        out = self._interp(lt)
        lo = lt < self._lt[0]
        hi = lt > self._lt[-1]
        out[lo] = self._lw[0] + self._s0 * (lt[lo] - self._lt[0])
        out[hi] = self._lw[-1] + self._s1 * (lt[hi] - self._lt[-1])
        return np.exp(out)

    def params(self):
        return {"family": self.family, "t": self.t.tolist(), "w": self.w.tolist()}


def modulus_from_config(cfg: dict) -> Modulus:
    fam = cfg.get("family")
    if fam == "power":
        return PowerModulus(cfg.get("alpha", 0.5))
    if fam in ("power_log", "power-log"):
        return PowerLogModulus(cfg.get("alpha", 0.5))
    if fam == "tabulated":
        return TabulatedModulus(cfg["t"], cfg["w"])
    raise ValueError(f"unknown modulus family {fam!r}")


def omega_eval(m: Modulus, t):
    return m(t)


# --- integrals -----------------------------------------------------------------


def _integral_to_zero(fun: Callable, x: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """int_0^x fun(t) dt for x > 0 by dyadic cells [x/2^(j+1), x/2^j] with tail extrapolation."""
    x = np.asarray(x, dtype=float)
    total = np.zeros_like(x)
    prev = np.full_like(x, np.nan)
    qprev = np.full_like(x, np.nan)
    done = x <= 0
    hi = x.copy()
    for _ in range(4000):
        if done.all():
            break
        act = ~done
        idx = np.flatnonzero(act)
        lo = 0.5 * hi[act]
        width = hi[act] - lo
        nodes = lo[:, None] + width[:, None] * _GX[None]
        c = (fun(nodes) * _GW[None]).sum(axis=1) * width
        total[act] += c
        with np.errstate(divide="ignore", invalid="ignore"):
            q = c / prev[act]
        decaying = np.isfinite(q) & (q > 0) & (q < 0.999)
        tail = np.where(decaying, c * q / (1.0 - q), 0.0)
        # exact geometric decay (power laws) lets the tail be summed in closed form
        stable = decaying & (np.abs(q - qprev[act]) <= 1e-9 * q)
        fin = (np.abs(c) <= 1e-3 * tol) | stable | (decaying & (np.abs(tail) <= 1e-3 * tol))
        total[idx[fin]] += tail[fin]
        done[idx[fin]] = True
        prev[act] = c
        qprev[act] = q
        hi[act] = lo
    return total


def _integral_between(fun: Callable, a: np.ndarray, b: float) -> np.ndarray:
    """int_a^b fun(t) dt with cells of ratio <= 2 (for a <= b, positive a)."""
    a = np.asarray(a, dtype=float)
    out = np.zeros_like(a)
    for i, ai in enumerate(a.ravel()):
        if ai >= b:
            continue
        ncell = max(1, int(math.ceil(math.log2(b / ai))))
        edges = ai * (b / ai) ** (np.arange(ncell + 1) / ncell)
        lo, width = edges[:-1], np.diff(edges)
        nodes = lo[:, None] + width[:, None] * _GX[None]
        out.flat[i] = float(((fun(nodes) * _GW[None]).sum(axis=1) * width).sum())
    return out


def f_star(m: Modulus, x):
    """f*(x) = int_0^|x| omega(t)/t dt, even in x."""
    arr = np.asarray(x, dtype=float)
    if np.any(np.abs(arr) > 1.0 + 1e-15):
        raise ValueError("f_star is defined on [-1, 1]")
    ax = np.abs(np.atleast_1d(arr))
    out = _integral_to_zero(lambda t: m(t) / t, ax)
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


@dataclass
class RegularityResult:
    C_prime: float
    C_second: float
    ok: bool
    diagnostic: str = ""
    decade_sups: dict = field(default_factory=dict)


def _extrapolated_sup(seq: np.ndarray) -> tuple[float, bool, str]:
    """Limit of a nondecreasing sequence of per-decade running sups."""
    s = np.maximum.accumulate(seq)
    inc = np.diff(s)
    scale = max(abs(s[-1]), 1e-300)
    if len(inc) < 2 or inc[-1] <= 1e-9 * scale:
        return float(s[-1]), True, "converged"
    if inc[-2] <= 0:
        return float(s[-1]), True, "converged"
    q = inc[-1] / inc[-2]
    if q < 0.9:
        return float(s[-1] + inc[-1] * q / (1.0 - q)), True, f"geometric tail, ratio {q:.3f}"
    return math.inf, False, f"running sup grows by {inc[-1]:.3g} per decade (ratio {q:.3f})"


def verify_regularity(m: Modulus, grid=None, X: float | None = None) -> RegularityResult:
    """Both integral conditions: sup (1/w(x)) int_0^x w/t and sup (x/w(x)) int_x^X w/t^2."""
    if grid is None:
        top = 1.0 if X is None else X
        grid = top * np.logspace(-8, 0, 81)
    grid = np.sort(np.asarray(grid, dtype=float))
    if grid[0] <= 0 or math.log10(grid[-1] / grid[0]) < 4 - 1e-9:
        raise ValueError("grid must be positive and span at least four decades")
    X = float(grid[-1] if X is None else X)
    w = m(grid)
    i1 = _integral_to_zero(lambda t: m(t) / t, grid) / w
    # cumulative int_x^X over consecutive grid intervals
    pieces = np.array([_integral_between(lambda t: m(t) / t ** 2, np.array([grid[i]]), grid[i + 1])[0]
                       for i in range(len(grid) - 1)])
    tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    if X > grid[-1]:
        tail += _integral_between(lambda t: m(t) / t ** 2, np.array([grid[-1]]), X)[0]
    i2 = grid * tail / w
    # running sups sampled at decade marks, from the top of the grid downwards
    marks = grid[-1] * 10.0 ** -np.arange(0, int(math.floor(math.log10(grid[-1] / grid[0]) + 1e-9)) + 1)
    s1 = np.array([i1[grid >= mk * (1 - 1e-12)].max() for mk in marks])
    s2 = np.array([i2[grid >= mk * (1 - 1e-12)].max() for mk in marks])
    c1, ok1, msg1 = _extrapolated_sup(s1)
    c2, ok2, msg2 = _extrapolated_sup(s2)
    diag = f"first condition: {msg1}; second condition: {msg2}"
    return RegularityResult(c1, c2, ok1 and ok2, diag, {"first": s1.tolist(), "second": s2.tolist()})


# --- boundary data -------------------------------------------------------------


@dataclass(eq=False)
class BoundaryData:
    """Boundary values as a function of arclength on ``curve``."""

    curve: object
    func: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    C_f: float | None = None

    def __call__(self, s):
        return self.func(np.asarray(s, dtype=float))

    def at_points(self, s):
        return self(s)

    @classmethod
    def from_point_function(cls, curve, g: Callable[[np.ndarray], np.ndarray], name: str = "custom"):
        return cls(curve, lambda s: g(curve.point_at(s)), name)


def builtin_boundary(curve, name: str, **kw) -> BoundaryData:
    if name == "abs_sqrt":
        axis = kw.get("axis", 0)
        return BoundaryData.from_point_function(curve, lambda p: np.sqrt(np.abs(p[..., axis])), name)
    if name == "coordinate":
        axis = kw.get("axis", 0)
        return BoundaryData.from_point_function(curve, lambda p: p[..., axis].copy(), name)
    if name == "constant":
        c = float(kw.get("value", 1.0))
        return BoundaryData(curve, lambda s: np.full(np.shape(s), c), name)
    raise ValueError(f"unknown builtin boundary function {name!r}")


def tabulated_boundary(curve, s_tab, f_tab) -> BoundaryData:
    s_tab = np.asarray(s_tab, dtype=float)
    f_tab = np.asarray(f_tab, dtype=float)
    return BoundaryData(curve, lambda s: np.interp(s, s_tab, f_tab), "tabulated")


def holder_seminorm(bd: BoundaryData, m: Modulus, pairs) -> float:
    """sup |f(M2) - f(M1)| / omega(|M1 M2|) over arclength pairs (K, 2)."""
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    p1 = bd.curve.point_at(pairs[:, 0])
    p2 = bd.curve.point_at(pairs[:, 1])
    chord = np.linalg.norm(p2 - p1, axis=1)
    ok = chord > bd.curve.tol
    if not ok.any():
        return 0.0
    df = np.abs(bd(pairs[ok, 1]) - bd(pairs[ok, 0]))
    return float((df / m(chord[ok])).max())
