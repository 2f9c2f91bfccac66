"""Pseudoharmonic extension f0 of boundary data off a chord-arc curve.

Chain of fields:

* g: the value f(M_kn) of the owning cell omega_kn, 0 outside the cover;
* g1: average of g over the ball of radius d/8;
* g2, g0: two further averages with radius d0/8, d0 the smoothed distance;
* f0 = cutoff * g0, with a quintic radial cutoff reaching 0 at R0.

All evaluators accept a single point (3,) or an array (N, 3).
"""
from __future__ import annotations

import csv

import numpy as np

from . import _backend
from .geometry import Curve, dyadic_points, in_tilde, max_level
from .modulus import BoundaryData, Modulus
from .smooth_distance import kernel_args

_OFFSETS_7 = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float)


class ExtensionError(ValueError):
    pass


class PseudoharmonicExtension:
    """Evaluator for g, g1, g2, g0 and f0 built from the dyadic nodes up to ``n_max``.

    ``floor`` is the resolution floor: closer to the curve than this, f0 is
    replaced by the boundary value at the nearest point.
    """

    def __init__(self, curve: Curve, bd: BoundaryData, modulus: Modulus, n_max: int = 10,
                 R0: float | None = None, outer_order: int = 3, d0_order: int = 3,
                 ray_degree: int = 15, dist_ray_degree: int = 21, radius_rule: str = "as_written",
                 h_ratio: float = 1.0 / 32.0, floor: float | None = None, impl=None):
        if n_max < 0:
            raise ValueError("n_max must be nonnegative")
        if n_max > max_level(curve):
            raise ExtensionError(f"n_max={n_max} exceeds the curve's resolvable level {max_level(curve)}")
        self.curve = curve
        self.bd = bd
        self.modulus = modulus
        self.n_max = n_max
        self.lam = curve.total_length
        rmax = float(np.linalg.norm(curve.vertices - curve.centroid, axis=1).max())
        self.R0 = 3.0 * curve.diameter if R0 is None else float(R0)
        if self.R0 <= 2.0 * rmax:
            raise ExtensionError("R0 must exceed twice the curve's radius about its centroid")
        self.width = min(self.lam, self.R0 - 2.0 * rmax)
        self.h_ratio = h_ratio
        self.floor = self.lam * 2.0 ** -n_max / 4.0 if floor is None else float(floor)
        self.radius_rule = radius_rule
        self.settings = dict(outer_order=outer_order, d0_order=d0_order, ray_degree=ray_degree,
                             dist_ray_degree=dist_ray_degree)

        pts, vals, offsets = [], [], []
        count = 0
        for m in range(n_max + 1):
            offsets.append(count)
            p = dyadic_points(curve, m)
            s = np.arange(2 ** m + 1) * (self.lam * 2.0 ** -m)
            pts.append(p)
            vals.append(np.asarray(bd(np.minimum(s, self.lam)), dtype=float))
            count += len(p)
        self.centers = np.concatenate(pts)
        self.node_values = np.concatenate(vals)
        self.offsets = np.array(offsets, dtype=np.intp)
        args = kernel_args(
            curve, n_max=n_max, centers=self.centers, values=self.node_values, offsets=self.offsets,
            radius_rule=radius_rule, r0=self.R0, width=self.width, floor=self.floor, **self.settings,
        )
        self.kernel = (impl or _backend).FieldKernel(*args)

    # ---------------------------------------------------------------- helpers
    def level_points(self, m: int) -> np.ndarray:
        return self.centers[self.offsets[m]:self.offsets[m] + 2 ** m + 1]

    def _run(self, p, what):
        arr = np.asarray(p, dtype=float)
        out = self.kernel.eval(arr.reshape(-1, 3), what)
        return out if arr.ndim > 1 else float(out[0])

    def _checked(self, p, what):
        arr = np.asarray(p, dtype=float).reshape(-1, 3)
        d, _ = self.kernel.nearest(arr)
        if np.any(d <= 0.0):
            raise ExtensionError("point lies on the curve (d = 0)")
        return self._run(p, what)

    def distance(self, p):
        return self._run(p, "dist")

    # ---------------------------------------------------------------- fields
    def eval_g(self, p):
        return self._checked(p, "g")

    def eval_g1(self, p):
        return self._checked(p, "g1")

    def eval_g2(self, p):
        return self._checked(p, "g2")

    def eval_g0(self, p):
        """Double average before the cutoff."""
        return self._checked(p, "g0")

    def cutoff(self, p):
        return self._run(p, "cut")

    def eval_f0(self, p):
        arr = np.asarray(p, dtype=float)
        pts = arr.reshape(-1, 3)
        out = self.kernel.eval(pts, "f0")
        bad = ~np.isfinite(out)
        if bad.any():
            _, s = self.kernel.nearest(pts[bad])
            out[bad] = self.bd(s)
        return out if arr.ndim > 1 else float(out[0])

    # ---------------------------------------------------------------- derivatives
    def _steps(self, pts, h_ratio):
        d, _ = self.kernel.nearest(pts)
        if h_ratio >= 0.5:
            raise ExtensionError("FD step h = h_ratio*d must stay below d/2")
        if np.any(d <= 0.0):
            raise ExtensionError("point lies on the curve (d = 0)")
        return h_ratio * d

    def _stencil(self, p, h_ratio, field):
        arr = np.asarray(p, dtype=float)
        pts = arr.reshape(-1, 3)
        h = self._steps(pts, self.h_ratio if h_ratio is None else h_ratio)
        nb = pts[:, None, :] + h[:, None, None] * _OFFSETS_7[None]
        allp = np.concatenate([pts, nb.reshape(-1, 3)])
        vals = field(allp)
        c = vals[: len(pts)]
        nbv = vals[len(pts):].reshape(len(pts), 6)
        return arr, h, c, nbv

    def gradient_f0(self, p, h_ratio: float | None = None, field=None):
        arr, h, _, nbv = self._stencil(p, h_ratio, field or self.eval_f0)
        g = np.stack([nbv[:, 0] - nbv[:, 1], nbv[:, 2] - nbv[:, 3], nbv[:, 4] - nbv[:, 5]], axis=1) / (2 * h[:, None])
        return g if arr.ndim > 1 else g[0]

    def laplacian_f0(self, p, h_ratio: float | None = None, field=None):
        arr, h, c, nbv = self._stencil(p, h_ratio, field or self.eval_f0)
        lap = (nbv.sum(axis=1) - 6.0 * c) / (h * h)
        return lap if arr.ndim > 1 else float(lap[0])

    def gradient_and_laplacian(self, p, h_ratio: float | None = None, field=None):
        """Both FD quantities from one 7-point stencil."""
        arr, h, c, nbv = self._stencil(p, h_ratio, field or self.eval_f0)
        g = np.stack([nbv[:, 0] - nbv[:, 1], nbv[:, 2] - nbv[:, 3], nbv[:, 4] - nbv[:, 5]], axis=1) / (2 * h[:, None])
        lap = (nbv.sum(axis=1) - 6.0 * c) / (h * h)
        if arr.ndim == 1:
            return g[0], float(lap[0])
        return g, lap

    def directional_derivative(self, p, direction, h: float):
        """Central difference of f0 along a unit ``direction`` with absolute step ``h``."""
        e = np.asarray(direction, dtype=float)
        e = e / np.linalg.norm(e)
        pts = np.asarray(p, dtype=float).reshape(-1, 3)
        v = self.eval_f0(np.concatenate([pts + h * e, pts - h * e]))
        return (v[: len(pts)] - v[len(pts):]) / (2 * h)

    # ---------------------------------------------------------------- export
    def sample_field(self, points, path=None) -> np.ndarray:
        """Rows x, y, z, d, f0, |grad f0|, laplacian; written as CSV when ``path`` is given."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        d, _ = self.kernel.nearest(pts)
        f0 = self.eval_f0(pts)
        g, lap = self.gradient_and_laplacian(pts)
        rows = np.column_stack([pts, d, f0, np.linalg.norm(g, axis=1), lap])
        if path is not None:
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["x", "y", "z", "d", "f0", "grad_norm", "laplacian"])
                for r in rows:
                    w.writerow([repr(float(x)) for x in r])
        return rows

    def shell_samples(self, n: int, count: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform points of the shell Omega~_n minus Omega~_{n+1}, by rejection."""
        pad = 2.0 * self.lam * 2.0 ** -n
        lo_box = self.curve.vertices.min(axis=0) - pad
        hi_box = self.curve.vertices.max(axis=0) + pad
        out, got = [], 0
        for _ in range(1000):
            cand = rng.uniform(lo_box, hi_box, size=(max(4 * count, 256), 3))
            keep = cand[in_tilde(self.curve, n, cand) & ~in_tilde(self.curve, n + 1, cand)]
            out.append(keep)
            got += len(keep)
            if got >= count:
                break
        if got < count:
            raise ExtensionError(f"shell {n} sampling failed")
        return np.concatenate(out)[:count]


def build_extension(curve: Curve, bd: BoundaryData, modulus: Modulus, **kw) -> PseudoharmonicExtension:
    return PseudoharmonicExtension(curve, bd, modulus, **kw)


def eval_g(ext: PseudoharmonicExtension, p):
    return ext.eval_g(p)


def eval_g1(ext: PseudoharmonicExtension, p):
    return ext.eval_g1(p)


def eval_f0(ext: PseudoharmonicExtension, p):
    return ext.eval_f0(p)


def gradient_f0(ext: PseudoharmonicExtension, p, h_ratio: float = 1.0 / 32.0):
    return ext.gradient_f0(p, h_ratio)


def laplacian_f0(ext: PseudoharmonicExtension, p, h_ratio: float = 1.0 / 32.0):
    return ext.laplacian_f0(p, h_ratio)

