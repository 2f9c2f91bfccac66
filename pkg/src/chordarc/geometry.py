"""Polyline curves, distance queries, dyadic points and cover predicates.

A curve is an arclength-parameterized polyline.  Level ``n`` of the dyadic
system places ``2**n + 1`` points ``M_kn`` at arclength ``k * Lambda_n`` with
``Lambda_n = 2**-n * Lambda``.  Balls of radius ``2 * Lambda_n`` around them
form the neighbourhood ``Omega~_n``; the shell ``Omega_n`` removes the next
level, and the cells ``omega_kn`` split the shell by first hit.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

SPHERE_TOL = 1e-12


class CurveError(ValueError):
    """Invalid polyline input."""


class SelfIntersectionError(CurveError):
    def __init__(self, i: int, j: int, gap: float):
        super().__init__(f"segments {i} and {j} come within {gap:.3e} of each other")
        self.pair = (i, j)
        self.gap = gap


class SubdivisionError(ValueError):
    def __init__(self, n: int, max_level: int):
        super().__init__(f"level {n} is below vertex resolution; max feasible level is {max_level}")
        self.max_level = max_level


@dataclass(frozen=True)
class CellId:
    level: int
    index: int
    kind: str  # "omega_cell", "beta_cell" or "shell"


@dataclass(frozen=True)
class CoverMembership:
    in_tilde: bool
    in_shell: bool
    omega_cell: CellId | None


@dataclass(frozen=True)
class DyadicCover:
    level: int
    points: np.ndarray
    spacing: float


@dataclass(frozen=True, eq=False)
class Curve:
    vertices: np.ndarray
    cumulative_arclength: np.ndarray
    chord_arc_C0: float
    tol: float = 1e-9

    @property
    def total_length(self) -> float:
        return float(self.cumulative_arclength[-1])

    @property
    def n_segments(self) -> int:
        return len(self.vertices) - 1

    @property
    def seg_start(self) -> np.ndarray:
        return self.vertices[:-1]

    @property
    def seg_vec(self) -> np.ndarray:
        return np.diff(self.vertices, axis=0)

    @cached_property
    def centroid(self) -> np.ndarray:
        # arclength-weighted centroid of the polyline
        mids = 0.5 * (self.vertices[:-1] + self.vertices[1:])
        w = np.diff(self.cumulative_arclength)
        return (mids * w[:, None]).sum(axis=0) / w.sum()

    @cached_property
    def diameter(self) -> float:
        v = self.vertices
        best = 0.0
        for i0 in range(0, len(v), 512):
            diff = v[i0:i0 + 512, None, :] - v[None, :, :]
            best = max(best, float(np.sqrt((diff ** 2).sum(-1)).max()))
        return best

    @cached_property
    def hash_index(self) -> "SegmentHash":
        return SegmentHash(self)

    def point_at(self, s) -> np.ndarray:
        """Points at arclength ``s`` (scalar or array), clamped to [0, Lambda]."""
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.total_length)
        out = np.empty(s.shape + (3,))
        for a in range(3):
            out[..., a] = np.interp(s, self.cumulative_arclength, self.vertices[:, a])
        return out

    def tangent_at(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        idx = np.clip(np.searchsorted(self.cumulative_arclength, s, side="right") - 1, 0, self.n_segments - 1)
        t = self.seg_vec[idx]
        return t / np.linalg.norm(t, axis=1)[:, None]


def _segment_pair_distance(p0, p1, q0, q1):
    """Vectorized minimum distance between segments [p0,p1] and [q0,q1]."""
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = (d1 * d1).sum(-1)
    e = (d2 * d2).sum(-1)
    f = (d2 * r).sum(-1)
    c = (d1 * r).sum(-1)
    b = (d1 * d2).sum(-1)
    den = a * e - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(den > 1e-300, np.clip((b * f - c * e) / den, 0.0, 1.0), 0.0)
        t = (b * s + f) / e
        s = np.where(t < 0.0, np.clip(-c / a, 0.0, 1.0), np.where(t > 1.0, np.clip((b - c) / a, 0.0, 1.0), s))
    t = np.clip(t, 0.0, 1.0)
    diff = (p0 + s[..., None] * d1) - (q0 + t[..., None] * d2)
    return np.sqrt((diff * diff).sum(-1))


def build_curve(vertices, tol: float = 1e-9, pair_budget: int = 2000, seed: int = 0) -> Curve:
    """Validate a polyline and attach its arclength table and chord-arc constant."""
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 3 or len(v) < 2:
        raise CurveError("need at least two 3-D vertices")
    if not np.all(np.isfinite(v)):
        raise CurveError("vertices must be finite")
    seg = np.diff(v, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    bad = np.flatnonzero(lengths <= tol)
    if bad.size:
        raise CurveError(f"degenerate segment {int(bad[0])} (consecutive vertices coincide)")
    if np.linalg.norm(v[0] - v[-1]) <= tol:
        raise CurveError("closed curves are not supported")
    nseg = len(seg)
    if nseg >= 2:
        u = seg / lengths[:, None]
        back = np.flatnonzero((u[:-1] * u[1:]).sum(1) < -1.0 + 1e-12)
        if back.size:
            i = int(back[0])
            raise SelfIntersectionError(i, i + 1, 0.0)
    if nseg >= 3:
        ii, jj = np.triu_indices(nseg, k=2)
        for c0 in range(0, len(ii), 200_000):
            i = ii[c0:c0 + 200_000]
            j = jj[c0:c0 + 200_000]
            gap = _segment_pair_distance(v[i], v[i + 1], v[j], v[j + 1])
            hit = np.flatnonzero(gap <= tol)
            if hit.size:
                h = hit[0]
                raise SelfIntersectionError(int(i[h]), int(j[h]), float(gap[h]))
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    curve = Curve(v, cum, 1.0, tol)
    c0 = chord_arc_constant(curve, pair_budget=pair_budget, seed=seed)
    return Curve(v, cum, c0, tol)


def chord_arc_constant(curve: Curve, pair_budget: int = 2000, seed: int = 0) -> float:
    """Sup of arc/chord over all vertex pairs plus random arclength pairs."""
    v = curve.vertices
    cum = curve.cumulative_arclength
    best = 1.0
    for i0 in range(0, len(v), 256):
        chord = np.linalg.norm(v[i0:i0 + 256, None, :] - v[None, :, :], axis=-1)
        arc = np.abs(cum[i0:i0 + 256, None] - cum[None, :])
        ok = chord > curve.tol
        if ok.any():
            best = max(best, float((arc[ok] / chord[ok]).max()))
    if pair_budget > 0:
        rng = np.random.default_rng(seed)
        s = rng.uniform(0.0, curve.total_length, size=(pair_budget, 2))
        p = curve.point_at(s)
        chord = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
        arc = np.abs(s[:, 0] - s[:, 1])
        ok = chord > curve.tol
        if ok.any():
            best = max(best, float((arc[ok] / chord[ok]).max()))
    return best


def max_level(curve: Curve) -> int:
    return int(math.floor(math.log2(curve.total_length / curve.tol)))


def dyadic_points(curve: Curve, n: int) -> np.ndarray:
    if n < 0:
        raise ValueError("level must be nonnegative")
    if curve.total_length * 2.0 ** -n < curve.tol:
        raise SubdivisionError(n, max_level(curve))
    s = np.arange(2 ** n + 1) * (curve.total_length * 2.0 ** -n)
    pts = curve.point_at(s)
    pts[0] = curve.vertices[0]
    pts[-1] = curve.vertices[-1]
    return pts


def subdivide(curve: Curve, n: int) -> DyadicCover:
    """The ``2**n + 1`` points at arclength ``k * Lambda_n``."""
    return DyadicCover(n, dyadic_points(curve, n), curve.total_length * 2.0 ** -n)


def _point_segment(points, a, vec, lens2):
    """Distances from points (M,3) to segments; returns (M,S) distances and params."""
    w = points[:, None, :] - a[None, :, :]
    t = np.clip((w * vec[None]).sum(-1) / lens2[None], 0.0, 1.0)
    q = a[None] + t[..., None] * vec[None]
    diff = points[:, None, :] - q
    return np.sqrt((diff * diff).sum(-1)), t


def distance_bruteforce(curve: Curve, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reference distance query: checks every segment.  Ties go to the smallest s."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    a, vec = curve.seg_start, curve.seg_vec
    lens = np.diff(curve.cumulative_arclength)
    d_out = np.empty(len(pts))
    s_out = np.empty(len(pts))
    chunk = max(1, 2_000_000 // max(1, len(a)))
    for i0 in range(0, len(pts), chunk):
        d, t = _point_segment(pts[i0:i0 + chunk], a, vec, lens ** 2)
        dmin = d.min(axis=1, keepdims=True)
        # first segment within relative tie tolerance of the minimum
        j = np.argmax(d <= dmin * (1.0 + SPHERE_TOL) + 1e-300, axis=1)
        rows = np.arange(len(j))
        d_out[i0:i0 + chunk] = d[rows, j]
        s_out[i0:i0 + chunk] = curve.cumulative_arclength[j] + t[rows, j] * lens[j]
    return d_out, curve.point_at(s_out), s_out


class SegmentHash:
    """Uniform grid over segment bounding boxes for nearest-segment queries."""

    def __init__(self, curve: Curve, cell: float | None = None):
        self.curve = curve
        lens = np.diff(curve.cumulative_arclength)
        self.cell = float(cell if cell is not None else max(lens.mean(), 1e-12))
        self.lo = curve.vertices.min(axis=0) - self.cell
        self.buckets: dict[tuple[int, int, int], list[int]] = {}
        a, b = curve.vertices[:-1], curve.vertices[1:]
        for i in range(len(a)):
            c0 = self._key(np.minimum(a[i], b[i]))
            c1 = self._key(np.maximum(a[i], b[i]))
            for ix in range(c0[0], c1[0] + 1):
                for iy in range(c0[1], c1[1] + 1):
                    for iz in range(c0[2], c1[2] + 1):
                        self.buckets.setdefault((ix, iy, iz), []).append(i)
        self.keys = np.array(list(self.buckets.keys()), dtype=np.int64)
        self.members = list(self.buckets.values())

    def _key(self, p):
        return tuple(int(x) for x in np.floor((np.asarray(p) - self.lo) / self.cell))

    def query(self, p) -> tuple[float, np.ndarray, float]:
        p = np.asarray(p, dtype=float)
        k = np.array(self._key(p))
        curve = self.curve
        lens = np.diff(curve.cumulative_arclength)
        # occupied buckets grouped by Chebyshev ring around the query cell
        rings = np.abs(self.keys - k).max(axis=1)
        order = np.argsort(rings, kind="stable")
        best_d, best_s = math.inf, 0.0
        seen: set[int] = set()
        i = 0
        while i < len(order):
            ring = rings[order[i]]
            # every segment in this ring or beyond lies at least (ring - 1) * cell away
            if best_d <= (ring - 1) * self.cell:
                break
            cand = []
            while i < len(order) and rings[order[i]] == ring:
                for sid in self.members[order[i]]:
                    if sid not in seen:
                        seen.add(sid)
                        cand.append(sid)
                i += 1
            if cand:
                cand = np.array(sorted(cand))
                d, t = _point_segment(p[None], curve.seg_start[cand], curve.seg_vec[cand], lens[cand] ** 2)
                d, t = d[0], t[0]
                for j in range(len(cand)):
                    s = curve.cumulative_arclength[cand[j]] + t[j] * lens[cand[j]]
                    if d[j] < best_d * (1.0 - SPHERE_TOL) or (d[j] <= best_d * (1.0 + SPHERE_TOL) and s < best_s):
                        best_d, best_s = float(d[j]), float(s)
        return best_d, curve.point_at(best_s), best_s


def distance_to_curve(curve: Curve, p) -> tuple[float, np.ndarray, float]:
    """Distance from a single point to the curve, its nearest point and arclength."""
    if curve.n_segments > 64:
        return curve.hash_index.query(p)
    d, q, s = distance_bruteforce(curve, np.asarray(p, dtype=float)[None])
    return float(d[0]), q[0], float(s[0])


def distances(curve: Curve, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batch distance query; see :func:`distance_to_curve`."""
    return distance_bruteforce(curve, points)


def first_hit(points, centers, radius) -> np.ndarray:
    """Index of the first closed ball containing each point, or -1."""
    pts = np.atleast_2d(points)
    r2 = (radius * radius) * (1.0 + 2 * SPHERE_TOL)
    out = np.full(len(pts), -1, dtype=np.intp)
    for i0 in range(0, len(pts), 4096):
        diff = pts[i0:i0 + 4096, None, :] - centers[None]
        inside = (diff * diff).sum(-1) <= r2
        any_in = inside.any(axis=1)
        out[i0:i0 + 4096] = np.where(any_in, np.argmax(inside, axis=1), -1)
    return out


def in_tilde(curve: Curve, n: int, points) -> np.ndarray:
    """Membership in Omega~_n, the union of closed balls B(M_kn, 2 Lambda_n)."""
    return first_hit(points, dyadic_points(curve, n), 2.0 * curve.total_length * 2.0 ** -n) >= 0


def cover_membership(curve: Curve, n: int, p) -> CoverMembership:
    if n < 0:
        raise ValueError("level must be nonnegative")
    p = np.asarray(p, dtype=float)[None]
    lam_n = curve.total_length * 2.0 ** -n
    k = int(first_hit(p, dyadic_points(curve, n), 2.0 * lam_n)[0])
    if k < 0:
        return CoverMembership(False, False, None)
    nxt = bool(in_tilde(curve, n + 1, p)[0])
    if nxt:
        return CoverMembership(True, False, None)
    return CoverMembership(True, True, CellId(n, k, "omega_cell"))


def beta_cell_membership(curve: Curve, n: int, k: int, p) -> bool:
    """First-hit membership in the level-n beta cell centred at M_{k,n-2}."""
    if n < 2:
        raise ValueError("beta cells need n >= 2")
    centers = dyadic_points(curve, n - 2)
    if not 0 <= k < len(centers):
        raise IndexError(k)
    hit = first_hit(np.asarray(p, dtype=float)[None], centers, 2.0 * curve.total_length * 2.0 ** -(n - 2))
    return int(hit[0]) == k


def sigma_shell(d: float) -> int:
    """The integer n with 2**(n-1) < d <= 2**n."""
    if not d > 0:
        raise ValueError("d must be positive")
    m, e = math.frexp(d)
    return e - 1 if m == 0.5 else e


def point_level(curve: Curve, p, n_max: int) -> int:
    """Highest level m <= n_max with p in Omega~_m, or -1 (levels are nested)."""
    p = np.asarray(p, dtype=float)[None]
    level = -1
    for m in range(n_max + 1):
        if in_tilde(curve, m, p)[0]:
            level = m
        else:
            break
    return level


# --- builtin curves and loaders -------------------------------------------------


def segment_curve() -> Curve:
    return build_curve([[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])


def quarter_circle_curve(n_vertices: int = 64) -> Curve:
    t = np.linspace(0.0, np.pi / 2, n_vertices)
    return build_curve(np.stack([np.cos(t), np.sin(t), np.zeros_like(t)], axis=1))


def helix_curve(turns: float = 1.0, radius: float = 0.5, pitch: float = 0.6, n_vertices: int = 96) -> Curve:
    t = np.linspace(0.0, 2 * np.pi * turns, n_vertices)
    z = pitch * t / (2 * np.pi)
    pts = np.stack([radius * np.cos(t), radius * np.sin(t), z - z.mean()], axis=1)
    return build_curve(pts)


BUILTIN_CURVES = {
    "segment": segment_curve,
    "quarter_circle": quarter_circle_curve,
    "helix": helix_curve,
}


def load_curve(path, tol: float = 1e-9) -> Curve:
    """Read vertices from CSV (``x,y,z`` rows, optional header) or JSON."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        data = json.loads(text)
        verts = data["vertices"] if isinstance(data, dict) else data
    else:
        verts = []
        for row in csv.reader(text.splitlines()):
            if not row or not "".join(row).strip():
                continue
            try:
                verts.append([float(x) for x in row[:3]])
            except ValueError:
                if verts:
                    raise CurveError(f"bad CSV row: {row}") from None
                continue  # header
    return build_curve(verts, tol=tol)


def omega_cells(curve: Curve, points, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized cell lookup: (level n, index k) of the omega_kn holding each point.

    Points outside Omega~_0 get (-1, -1); points still inside Omega~_{n_max}
    report level n_max.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    level = np.full(len(pts), -1, dtype=np.intp)
    index = np.full(len(pts), -1, dtype=np.intp)
    alive = np.ones(len(pts), dtype=bool)
    for m in range(n_max + 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        hit = first_hit(pts[idx], dyadic_points(curve, m), 2.0 * curve.total_length * 2.0 ** -m)
        inside = hit >= 0
        level[idx[inside]] = m
        index[idx[inside]] = hit[inside]
        alive[idx[~inside]] = False
    return level, index
