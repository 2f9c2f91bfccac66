"""Ball and sphere rules, adaptive octrees and direct Newtonian sums."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import roots_jacobi

from . import _backend


# --- sphere and ball rules -----------------------------------------------------


def _signed_perms(v):
    out = set()
    import itertools

    for perm in itertools.permutations(v):
        for signs in itertools.product((-1.0, 1.0), repeat=3):
            out.add(tuple(s * x for s, x in zip(signs, perm)))
    return np.array(sorted(out))


def sphere_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Positive rule on the unit sphere exact to ``degree``; weights sum to one."""
    if degree <= 3:
        x = _signed_perms((1.0, 0.0, 0.0))
        return x, np.full(len(x), 1.0 / 6.0)
    if degree <= 5:
        a = _signed_perms((1.0, 0.0, 0.0))
        c = _signed_perms((1.0, 1.0, 1.0)) / math.sqrt(3.0)
        return np.vstack([a, c]), np.concatenate([np.full(6, 1 / 15), np.full(8, 3 / 40)])
    if degree <= 7:
        a = _signed_perms((1.0, 0.0, 0.0))
        b = _signed_perms((1.0, 1.0, 0.0)) / math.sqrt(2.0)
        c = _signed_perms((1.0, 1.0, 1.0)) / math.sqrt(3.0)
        w = np.concatenate([np.full(6, 1 / 21), np.full(12, 4 / 105), np.full(8, 27 / 840)])
        return np.vstack([a, b, c]), w
    if degree <= 9:
        a = _signed_perms((1.0, 0.0, 0.0))
        c = _signed_perms((1.0, 1.0, 1.0)) / math.sqrt(3.0)
        p, q = 0.888073833977115, 0.459700843380983
        e = _signed_perms((p, q, 0.0))
        w = np.concatenate([np.full(6, 1 / 105), np.full(8, 9 / 280), np.full(24, 1 / 35)])
        return np.vstack([a, c, e]), w
    if degree <= 11:
        a = _signed_perms((1.0, 0.0, 0.0))
        b = _signed_perms((1.0, 1.0, 0.0)) / math.sqrt(2.0)
        c = _signed_perms((1.0, 1.0, 1.0)) / math.sqrt(3.0)
        d = _signed_perms((1.0, 1.0, 3.0)) / math.sqrt(11.0)
        w = np.concatenate([np.full(6, 4 / 315), np.full(12, 64 / 2835), np.full(8, 27 / 1280),
                            np.full(24, 14641 / 725760)])
        return np.vstack([a, b, c, d]), w
    # Gauss-Legendre in cos(theta) times the trapezoid rule in phi
    nu = (degree + 2) // 2
    nphi = degree + 1
    u, wu = np.polynomial.legendre.leggauss(nu)
    phi = (np.arange(nphi) + 0.5) * (2 * np.pi / nphi)
    uu, pp = np.meshgrid(u, phi, indexing="ij")
    st = np.sqrt(1.0 - uu ** 2)
    x = np.stack([st * np.cos(pp), st * np.sin(pp), uu], axis=-1).reshape(-1, 3)
    w = (wu[:, None] * np.full(nphi, 1.0 / nphi)[None]).ravel() / 2.0
    return x, w


@dataclass(frozen=True)
class BallRule:
    """Product rule for the normalized ball average, exact to ``order``.

    Radial nodes are Gauss nodes in u = r**2 for the weight sqrt(u); odd radial
    powers never matter because the spherical factor is centrally symmetric.
    """

    order: int = 6
    radial_nodes: np.ndarray = field(init=False, repr=False)
    radial_weights: np.ndarray = field(init=False, repr=False)
    sphere_nodes: np.ndarray = field(init=False, repr=False)
    sphere_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be positive")
        j_max = self.order // 2
        m = (j_max + 2) // 2
        x, w = roots_jacobi(m, 0.0, 0.5)
        u = 0.5 * (x + 1.0)
        object.__setattr__(self, "radial_nodes", np.sqrt(u))
        object.__setattr__(self, "radial_weights", w / w.sum())
        sx, sw = sphere_rule(self.order)
        object.__setattr__(self, "sphere_nodes", sx)
        object.__setattr__(self, "sphere_weights", sw)

    @property
    def nodes(self) -> np.ndarray:
        return (self.radial_nodes[:, None, None] * self.sphere_nodes[None]).reshape(-1, 3)

    @property
    def weights(self) -> np.ndarray:
        return (self.radial_weights[:, None] * self.sphere_weights[None]).ravel()


def ball_average(field_fn: Callable, center, r: float, rule: BallRule):
    """Normalized integral of ``field_fn`` over the ball of radius r."""
    if not r > 0:
        raise ValueError("radius must be positive")
    pts = np.asarray(center, dtype=float)[None] + r * rule.nodes
    vals = np.asarray(field_fn(pts))
    if not np.all(np.isfinite(vals)):
        raise ValueError("field evaluation failed inside the ball")
    return np.tensordot(rule.weights, vals, axes=(0, 0))


# --- octree --------------------------------------------------------------------


class OctreeBudgetError(RuntimeError):
    def __init__(self, cells: int, achieved_theta: float):
        super().__init__(f"cell budget exceeded at {cells} cells; achieved theta {achieved_theta:.3g}")
        self.achieved_theta = achieved_theta


@dataclass
class OctreeMesh:
    centers: np.ndarray
    half_widths: np.ndarray
    levels: np.ndarray
    box: tuple
    theta: float
    excluded_volume: float
    floor_limited: np.ndarray
    fractions: np.ndarray | None = None

    @property
    def sizes(self) -> np.ndarray:
        return 2.0 * self.half_widths

    @property
    def effective_sizes(self) -> np.ndarray:
        """Cube side with the cell's kept volume (differs from ``sizes`` on cut cells)."""
        if self.fractions is None:
            return self.sizes
        return self.sizes * np.cbrt(self.fractions)

    @property
    def volumes(self) -> np.ndarray:
        return self.effective_sizes ** 3

    def __len__(self):
        return len(self.centers)

    def gauss_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """2x2x2 Gauss points of every cell, as sub-cubes of half the size."""
        pts = self.centers[:, None, :] + self.sizes[:, None, None] * _GAUSS2[None]
        return pts.reshape(-1, 3), np.repeat(0.5 * self.effective_sizes, 8)

    def to_json(self, path=None, density=None) -> str:
        cells = []
        dens = None if density is None else np.asarray(density(self.centers))
        for i in range(len(self.centers)):
            row = {"center": self.centers[i].tolist(), "size": float(self.sizes[i])}
            if dens is not None:
                row["density"] = float(dens[i])
            cells.append(row)
        text = json.dumps({"box": [list(map(float, b)) for b in self.box], "theta": self.theta, "cells": cells})
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


_CORNERS = np.array([[a, b, c] for a in (-1, 1) for b in (-1, 1) for c in (-1, 1)], float)
_GAUSS2 = _CORNERS / (2.0 * math.sqrt(3.0))
_PROBES = np.vstack([np.zeros((1, 3)), _CORNERS, _signed_perms((1.0, 0.0, 0.0))])


def _as_distance(target) -> Callable:
    if callable(target):
        return target
    from .geometry import distances

    return lambda p: distances(target, p)[0]


def build_octree(curve_or_distance, box, theta: float, exclusion: Callable | None = None,
                 min_size: float | None = None, max_size: float | None = None,
                 max_cells: int = 2_000_000, refine: Callable | None = None,
                 boundary_samples: int = 0) -> OctreeMesh:
    """Whitney-type octree: leaves satisfy size <= theta * dist(center).

    ``box`` is ``(lo, hi)``; it is split into equal root cubes.  Cells whose
    probe points disagree about ``exclusion`` are refined down to ``min_size``
    and then classified by their centre; excluded leaves are dropped and their
    volume is booked as excluded.  ``refine(centers, sizes)`` may force extra
    splits.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    dist = _as_distance(curve_or_distance)
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    ext = hi - lo
    side = float(ext.min())
    counts = np.rint(ext / side).astype(int)
    if np.any(np.abs(counts * side - ext) > 1e-9 * side):
        raise ValueError("box extents must be integer multiples of the shortest side")
    if min_size is None:
        min_size = side / 2 ** 12
    grid = np.stack(np.meshgrid(*[np.arange(c) for c in counts], indexing="ij"), -1).reshape(-1, 3)
    centers = lo + (grid + 0.5) * side
    sizes = np.full(len(centers), side)
    levels = np.zeros(len(centers), dtype=int)
    out_c, out_s, out_l, out_floor, out_frac = [], [], [], [], []
    if boundary_samples:
        g = (np.arange(boundary_samples) + 0.5) / boundary_samples - 0.5
        sub = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    excluded = 0.0
    n_done = 0
    while len(centers):
        d = dist(centers)
        split = sizes > theta * d
        if max_size is not None:
            split |= sizes > max_size
        mixed = np.zeros(len(centers), bool)
        if exclusion is not None:
            probes = centers[:, None, :] + 0.5 * sizes[:, None, None] * _PROBES[None]
            flags = exclusion(probes.reshape(-1, 3)).reshape(len(centers), -1)
            mixed = flags.any(axis=1) & ~flags.all(axis=1)
            split |= mixed
        if refine is not None:
            split |= refine(centers, sizes)
        can = sizes * 0.5 >= min_size * (1.0 - 1e-12)
        go = split & can
        leaf = ~go
        if leaf.any():
            lc, ls, ll = centers[leaf].copy(), sizes[leaf], levels[leaf]
            drop = exclusion(lc) if exclusion is not None else np.zeros(len(lc), bool)
            frac = np.ones(len(lc))
            cut = np.flatnonzero(mixed[leaf]) if boundary_samples else np.zeros(0, int)
            if len(cut):
                step = max(1, 2 ** 20 // len(sub))
                for c0 in range(0, len(cut), step):
                    cc = cut[c0:c0 + step]
                    sp = lc[cc, None, :] + ls[cc, None, None] * sub[None]
                    out = ~exclusion(sp.reshape(-1, 3)).reshape(len(cc), -1)
                    frac[cc] = out.mean(1)
                    kept = out.any(1)
                    lc[cc[kept]] = (sp[kept] * out[kept, :, None]).sum(1) / out[kept].sum(1)[:, None]
                    drop[cc] = ~kept
            excluded += float((ls[drop] ** 3).sum() + (ls[~drop] ** 3 * (1.0 - frac[~drop])).sum())
            keep = ~drop
            out_frac.append(frac[keep])
            out_c.append(lc[keep])
            out_s.append(ls[keep])
            out_l.append(ll[keep])
            out_floor.append((split[leaf] & ~can[leaf])[keep])
            n_done += int(keep.sum())
        pc, ps, pl = centers[go], sizes[go], levels[go]
        if n_done + 8 * len(pc) > max_cells:
            allc = np.vstack(out_c + [pc]) if out_c else pc
            alls = np.concatenate(out_s + [ps]) if out_s else ps
            raise OctreeBudgetError(n_done + 8 * len(pc), float(np.max(alls / np.maximum(dist(allc), 1e-300))))
        centers = (pc[:, None, :] + 0.25 * ps[:, None, None] * _CORNERS[None]).reshape(-1, 3)
        sizes = np.repeat(ps * 0.5, 8)
        levels = np.repeat(pl + 1, 8)
    cat = (lambda xs, shape: np.concatenate(xs) if xs else np.zeros(shape))
    return OctreeMesh(
        centers=np.vstack(out_c) if out_c else np.zeros((0, 3)),
        half_widths=0.5 * cat(out_s, (0,)),
        levels=cat(out_l, (0,)).astype(int),
        box=(tuple(lo), tuple(hi)),
        theta=theta,
        excluded_volume=excluded,
        floor_limited=cat(out_floor, (0,)).astype(bool),
        fractions=cat(out_frac, (0,)) if boundary_samples else None,
    )


# --- Newtonian potential -------------------------------------------------------


@dataclass
class SourceDensity:
    """Density with optional support predicate and near-curve exclusion floor."""

    evaluator: Callable[[np.ndarray], np.ndarray]
    support: Callable[[np.ndarray], np.ndarray] | None = None
    floor: float = 0.0
    distance: Callable[[np.ndarray], np.ndarray] | None = None

    def values(self, points) -> np.ndarray:
        points = np.atleast_2d(points)
        vals = np.zeros(len(points))
        mask = np.ones(len(points), bool)
        if self.support is not None:
            mask &= self.support(points)
        if self.floor > 0 and self.distance is not None:
            mask &= self.distance(points) >= self.floor
        if mask.any():
            vals[mask] = self.evaluator(points[mask])
        if not np.all(np.isfinite(vals)):
            raise ValueError("density is not finite on its support")
        return vals


def newtonian_potential(src: SourceDensity, mesh: OctreeMesh, targets, theta_near: float = 0.3):
    """(1/4pi) sum_cells src(center) vol / rho, splitting near cells once."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    dens = src.values(mesh.centers)
    pot, _ = _backend.cell_potential(mesh.centers, mesh.effective_sizes, dens, targets, theta_near)
    return pot


def potential_of_cells(centers, sizes, dens, targets, theta_near: float = 0.3):
    pot, _ = _backend.cell_potential(centers, sizes, dens, np.atleast_2d(targets), theta_near)
    return pot


# --- sphere patches ------------------------------------------------------------


def orthonormal_frame(axis) -> np.ndarray:
    e3 = np.asarray(axis, dtype=float)
    e3 = e3 / np.linalg.norm(e3)
    helper = np.array([1.0, 0.0, 0.0]) if abs(e3[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(e3, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e3, e1)
    return np.stack([e1, e2, e3])


@dataclass
class SurfaceRule:
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.points)


def sphere_patch_rule(center, R: float, axis, classify: Callable, refine: Callable | None = None,
                      base: tuple[int, int] = (12, 24), gauss: int = 3, max_depth: int = 6,
                      seam_depth: int | None = None) -> SurfaceRule:
    """Adaptive product-Gauss rule on a sphere, refined where labels change.

    The sphere is parameterized by (u, phi) with u = cos(theta), in which the
    area element is the constant R**2.  A patch is split while its probe
    labels disagree (a seam passes through it) or ``refine(points, diam)``
    asks for it; seams stop splitting at ``seam_depth``.  Leaf nodes keep
    their own labels.
    """
    center = np.asarray(center, dtype=float)
    frame = orthonormal_frame(axis)
    gx, gw = np.polynomial.legendre.leggauss(gauss)

    def to_xyz(u, ph):
        st = np.sqrt(np.clip(1.0 - u * u, 0.0, None))
        dirs = (st * np.cos(ph))[..., None] * frame[0] + (st * np.sin(ph))[..., None] * frame[1] + u[..., None] * frame[2]
        return dirs

    nu, nph = base
    ue = np.linspace(-1.0, 1.0, nu + 1)
    pe = np.linspace(0.0, 2 * np.pi, nph + 1)
    U0, P0 = np.meshgrid(ue[:-1], pe[:-1], indexing="ij")
    u0, p0 = U0.ravel(), P0.ravel()
    du = np.full(len(u0), 2.0 / nu)
    dp = np.full(len(u0), 2 * np.pi / nph)
    leaves = []
    probe = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5], [0.5, 0.0], [0.0, 0.5], [1.0, 0.5], [0.5, 1.0]])
    for depth in range(max_depth + 1):
        if len(u0) == 0:
            break
        pu = u0[:, None] + du[:, None] * probe[None, :, 0]
        pp = p0[:, None] + dp[:, None] * probe[None, :, 1]
        pts = center + R * to_xyz(pu, pp)
        lab = np.asarray(classify(pts.reshape(-1, 3))).reshape(len(u0), -1)
        split = np.any(lab != lab[:, :1], axis=1)
        if seam_depth is not None and depth >= seam_depth:
            split[:] = False
        if refine is not None:
            diam = np.linalg.norm(pts[:, 0] - pts[:, 3], axis=1)
            diam = np.maximum(diam, np.linalg.norm(pts[:, 1] - pts[:, 2], axis=1))
            split |= refine(pts[:, 4], diam)
        if depth == max_depth:
            split[:] = False
        leaf = ~split
        if leaf.any():
            leaves.append((u0[leaf], p0[leaf], du[leaf], dp[leaf]))
        s = split
        u0 = np.concatenate([u0[s], u0[s] + 0.5 * du[s], u0[s], u0[s] + 0.5 * du[s]])
        p0 = np.concatenate([p0[s], p0[s], p0[s] + 0.5 * dp[s], p0[s] + 0.5 * dp[s]])
        du = np.tile(0.5 * du[s], 4)
        dp = np.tile(0.5 * dp[s], 4)
    U = np.concatenate([l[0] for l in leaves])
    Pp = np.concatenate([l[1] for l in leaves])
    DU = np.concatenate([l[2] for l in leaves])
    DP = np.concatenate([l[3] for l in leaves])
    nu_ = (U[:, None, None] + DU[:, None, None] * 0.5 * (gx[None, :, None] + 1.0)) * np.ones((1, 1, gauss))
    np_ = (Pp[:, None, None] + DP[:, None, None] * 0.5 * (gx[None, None, :] + 1.0)) * np.ones((1, gauss, 1))
    w = (DU * DP)[:, None, None] * 0.25 * gw[None, :, None] * gw[None, None, :] * R * R
    normals = to_xyz(nu_.ravel(), np_.ravel())
    points = center + R * normals
    labels = np.asarray(classify(points))
    return SurfaceRule(points, normals, w.ravel(), labels)
