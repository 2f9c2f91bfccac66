"""Harmonic approximant v built from the pseudoharmonic extension.

Writing E for the complement of the tube Omega~_{n-2}, the approximant is

    v(M0) = -(1/4pi) int_E lap f0 / rho  +  (1/4pi) int Phi_n / rho.

The first term is evaluated through Green's identity on the tube boundary
(method "surface"), which only needs f0 and its normal derivative there:

    -(1/4pi) int_E lap f0 / rho
        = (1/4pi) sum_S [f0 n.(P - M0)/rho^3 + d_n f0 / rho] dS + f0(M0) [M0 in E]

with n the outward normal of the tube.  The plain volume sum with a finite
difference Laplacian is kept as method "volume" for cross-checks.

Cell masses int_{beta_k} lap f0 are fluxes of grad f0 through the boundary of
the first-hit cell beta_k of the ball B(M_{k,n-2}, 2 Lambda_{n-2}).  Seams
shared by two cells enter both with opposite signs, so the masses add up to
the flux through the tube boundary exactly.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .extension import PseudoharmonicExtension
from .geometry import Curve, dyadic_points, first_hit, sigma_shell
from .quadrature import (OctreeMesh, SurfaceRule, build_octree, orthonormal_frame,
                         potential_of_cells, sphere_patch_rule)

FOUR_PI = 4.0 * math.pi
C1_GRID = tuple(range(2, 33))
LEVEL_MARGIN = 2


class ApproximantError(ValueError):
    pass


class C1SelectionError(ApproximantError):
    def __init__(self, fractions):
        super().__init__(f"no C1 in {C1_GRID[0]}..{C1_GRID[-1]} reaches half volume; "
                         f"best fractions {np.round(fractions, 3).tolist()}")
        self.fractions = fractions


# --- C1 selection ----------------------------------------------------------------


def _ball_grid(resolution: int) -> np.ndarray:
    """Cell centres of a regular grid in the unit cube, restricted to the unit ball."""
    t = (np.arange(resolution) + 0.5) / resolution * 2.0 - 1.0
    g = np.stack(np.meshgrid(t, t, t, indexing="ij"), -1).reshape(-1, 3)
    return g[(g * g).sum(1) <= 1.0]


def outside_fractions(curve: Curve, n: int, C1: float, resolution: int = 40) -> np.ndarray:
    """Per k: volume fraction of B(M_{k,n-2}, C1 Lambda_n) outside Omega~_{n-2}."""
    lam_n = curve.total_length * 2.0 ** -n
    tube_c = dyadic_points(curve, n - 2)
    tube_r = 2.0 * curve.total_length * 2.0 ** -(n - 2)
    unit = _ball_grid(resolution)
    out = np.empty(len(tube_c))
    for k, c in enumerate(tube_c):
        pts = c + C1 * lam_n * unit
        out[k] = float(np.mean(first_hit(pts, tube_c, tube_r) < 0))
    return out


def choose_C1(curve: Curve, n: int, resolution: int = 40) -> float:
    """Smallest grid C1 whose balls are at least half outside the tube Omega~_{n-2}."""
    if n < 2:
        raise ApproximantError("n >= 2 is required")
    best = None
    for c1 in C1_GRID:
        fr = outside_fractions(curve, n, c1, resolution)
        best = fr if best is None else np.maximum(best, fr)
        if fr.min() >= 0.5:
            return float(c1)
    raise C1SelectionError(best)


def level_for_delta(delta: float) -> int:
    """n with 2**(-n-1) < delta <= 2**(-n)."""
    if not 0.0 < delta <= 1.0:
        raise ApproximantError("delta must lie in (0, 1]")
    return -sigma_shell(delta)


# --- approximant -----------------------------------------------------------------


@dataclass
class SurfaceData:
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    owner: np.ndarray
    labels: np.ndarray
    f0: np.ndarray
    dnf0: np.ndarray


@dataclass
class HarmonicApproximant:
    ext: PseudoharmonicExtension
    n: int
    C1: float
    centers: np.ndarray
    beta_radius: float
    chi_radius: float
    masses: np.ndarray
    chi_volumes: np.ndarray
    gammas: np.ndarray
    surface: SurfaceData
    phi_mesh: OctreeMesh
    phi_density: np.ndarray
    phi_members: np.ndarray
    method: str = "surface"
    volume_mesh: OctreeMesh | None = None
    volume_density: np.ndarray | None = None
    stats: dict = field(default_factory=dict)

    @property
    def lam_n(self) -> float:
        return self.ext.lam * 2.0 ** -self.n

    @property
    def delta(self) -> float:
        return 2.0 ** -self.n

    @property
    def phi_scale(self) -> float:
        """Lambda_n^-2 omega(Lambda_n)."""
        return float(self.ext.modulus(self.lam_n)) / self.lam_n ** 2

    def cell_mass(self, k: int) -> tuple[float, float]:
        """(mass, C_kn) with C_kn = mass / (Lambda_{n-2} omega(Lambda_{n-2}))."""
        lam2 = self.ext.lam * 2.0 ** -(self.n - 2)
        m = float(self.masses[k])
        return m, m / (lam2 * float(self.ext.modulus(lam2)))

    def gamma(self, k: int) -> float:
        return float(self.gammas[k])

    def balance_residuals(self) -> np.ndarray:
        return self.masses + self.gammas * self.phi_scale * self.chi_volumes

    def global_balance(self) -> float:
        """|sum of masses + int Phi| relative to sum |mass|."""
        total_phi = float((self.phi_density * self.phi_mesh.volumes).sum())
        scale = float(np.abs(self.masses).sum())
        return abs(float(self.masses.sum()) + total_phi) / scale if scale > 0 else abs(total_phi)

    def phi_total(self, p):
        """Phi_n at p: sum of gamma_k Lambda_n^-2 omega(Lambda_n) over the chi cells holding p."""
        arr = np.asarray(p, dtype=float)
        pts = arr.reshape(-1, 3)
        tube = self._tube_mask(pts)
        d2 = ((pts[:, None, :] - self.centers[None]) ** 2).sum(-1)
        inside = d2 <= self.chi_radius ** 2
        val = (inside * self.gammas[None]).sum(1) * self.phi_scale
        val[tube] = 0.0
        return val if arr.ndim > 1 else float(val[0])

    def _tube_mask(self, pts) -> np.ndarray:
        return first_hit(pts, self.centers, self.beta_radius) >= 0

    def source_separation(self) -> float:
        """Smallest curve distance over all source nodes, in units of 2 Lambda_n."""
        s = self.surface
        pts = self.volume_mesh.centers if self.method == "volume" else s.points[s.labels == -1]
        pts = np.vstack([pts, self.phi_mesh.centers])
        if len(pts) == 0:
            return math.inf
        d, _ = self.ext.kernel.nearest(pts)
        return float(d.min() / (2.0 * self.lam_n))

    def eval_v(self, p):
        arr = np.asarray(p, dtype=float)
        pts = arr.reshape(-1, 3)
        if self.method == "surface":
            s = self.surface
            outer = s.labels == -1
            w = s.weights[outer]
            val = _backend.layer_potential(s.points[outer], s.normals[outer], s.dnf0[outer] * w,
                                           s.f0[outer] * w, pts) / FOUR_PI
            outside = ~self._tube_mask(pts)
            if outside.any():
                val[outside] += self.ext.eval_f0(pts[outside])
        else:
            val = -potential_of_cells(self.volume_mesh.centers, self.volume_mesh.sizes,
                                      self.volume_density, pts)
        val = val + potential_of_cells(self.phi_mesh.centers, self.phi_mesh.sizes, self.phi_density, pts)
        return val if arr.ndim > 1 else float(val[0])

    def gradient_v(self, p, h: float):
        """Central-difference gradient of v with absolute step h."""
        arr = np.asarray(p, dtype=float)
        pts = arr.reshape(-1, 3)
        off = np.eye(3)
        stencil = np.concatenate([pts[:, None, :] + h * off[None], pts[:, None, :] - h * off[None]], axis=1)
        vals = self.eval_v(stencil.reshape(-1, 3)).reshape(len(pts), 6)
        g = (vals[:, :3] - vals[:, 3:]) / (2 * h)
        return g if arr.ndim > 1 else g[0]

    def directional_derivative(self, p, direction, h: float):
        e = np.asarray(direction, dtype=float)
        e = e / np.linalg.norm(e)
        pts = np.asarray(p, dtype=float).reshape(-1, 3)
        vals = self.eval_v(np.concatenate([pts + h * e, pts - h * e]))
        return (vals[: len(pts)] - vals[len(pts):]) / (2 * h)

    def summary(self) -> dict:
        res = self.balance_residuals()
        scale = np.maximum(np.abs(self.masses), 1e-300)
        return {
            "n": self.n,
            "C1": self.C1,
            "method": self.method,
            "gamma": {"min": float(self.gammas.min()), "max": float(self.gammas.max()),
                      "max_abs": float(np.abs(self.gammas).max())},
            "source_cells": int(len(self.phi_mesh) + (len(self.volume_mesh) if self.volume_mesh is not None else 0)),
            "surface_nodes": int(len(self.surface.points)),
            "mass_balance_max_abs": float(np.abs(res).max()),
            "mass_balance_max_rel": float((np.abs(res) / scale).max()),
            "global_balance_rel": self.global_balance(),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.summary(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def _normal_derivative(ext: PseudoharmonicExtension, pts, normals, h_ratio: float):
    """Central difference of f0 along the normals and the midpoint value (f+ + f-)/2."""
    d, _ = ext.kernel.nearest(pts)
    h = h_ratio * d
    both = np.concatenate([pts + h[:, None] * normals, pts - h[:, None] * normals])
    vals = ext.eval_f0(both)
    fp, fm = vals[: len(pts)], vals[len(pts):]
    return (fp - fm) / (2 * h), 0.5 * (fp + fm), d


def _surface_quadrature(ext: PseudoharmonicExtension, centers, R, grading: float, base, gauss, max_depth,
                        seam_depth):
    pts, nrm, wts, own, lab = [], [], [], [], []
    K = len(centers)
    R2 = R * R * (1.0 + 2e-12)
    for j in range(K):
        def classify(p, j=j):
            d2 = ((p[:, None, :] - centers[None]) ** 2).sum(-1)
            inside = d2 <= R2
            inside[:, j] = False
            earlier = inside[:, :j].any(1)
            later = inside[:, j + 1:]
            lab = np.full(len(p), -1)
            if later.shape[1]:
                lab = np.where(later.any(1), j + 1 + np.argmax(later, axis=1), -1)
            return np.where(earlier, -2, lab)

        def refine(mid, diam):
            d, _ = ext.kernel.nearest(mid)
            return (diam > grading * d) & (classify(mid) != -2)

        # keep the curve crossings away from the poles of the (u, phi) chart
        tangent = centers[min(j + 1, K - 1)] - centers[max(j - 1, 0)]
        axis = orthonormal_frame(tangent)[0]
        rule: SurfaceRule = sphere_patch_rule(centers[j], R, axis, classify, refine, base=base,
                                              gauss=gauss, max_depth=max_depth,
                                              seam_depth=seam_depth)
        keep = rule.labels != -2
        pts.append(rule.points[keep])
        nrm.append(rule.normals[keep])
        wts.append(rule.weights[keep])
        lab.append(rule.labels[keep])
        own.append(np.full(int(keep.sum()), j))
    return (np.vstack(pts), np.vstack(nrm), np.concatenate(wts), np.concatenate(own), np.concatenate(lab))


def _cubic_box(lo, hi):
    ext = hi - lo
    side = float(ext.min())
    counts = np.ceil(ext / side - 1e-9)
    mid = 0.5 * (lo + hi)
    half = 0.5 * counts * side
    return mid - half, mid + half


def build(ext: PseudoharmonicExtension, delta: float, *, C1: float | None = None, theta: float = 0.4,
          method: str = "surface", grading: float = 1.0, base=(12, 24), gauss: int = 3,
          max_depth: int = 8, seam_depth: int = 3, h_ratio: float | None = None, phi_min_cells: int = 32,
          max_cells: int = 400_000) -> HarmonicApproximant:
    """Assemble v_delta at the level n with 2**(-n-1) < delta <= 2**(-n)."""
    n = level_for_delta(delta)
    if n < 2:
        raise ApproximantError(f"delta={delta} gives level n={n}; beta cells need n >= 2, so delta <= 0.25")
    if n + LEVEL_MARGIN > ext.n_max:
        raise ApproximantError(f"level n={n} needs an extension with n_max >= {n + LEVEL_MARGIN} (have {ext.n_max})")
    if method not in ("surface", "volume"):
        raise ValueError("method must be 'surface' or 'volume'")
    curve = ext.curve
    h_ratio = ext.h_ratio if h_ratio is None else h_ratio
    if C1 is None:
        C1 = choose_C1(curve, n)
    lam_n = ext.lam * 2.0 ** -n
    centers = dyadic_points(curve, n - 2)
    beta_r = 2.0 * ext.lam * 2.0 ** -(n - 2)
    chi_r = C1 * lam_n
    K = len(centers)

    # flux masses through the cell boundaries
    P, N, W, own, lab = _surface_quadrature(ext, centers, beta_r, grading, base, gauss, max_depth, seam_depth)
    dn, f0, d = _normal_derivative(ext, P, N, h_ratio)
    f0 = np.where(lab == -1, f0, 0.0)
    usable = d >= 2.0 * ext.floor
    dn = np.where(usable, dn, 0.0)
    flux = dn * W
    masses = np.bincount(own, weights=flux, minlength=K)
    seam = lab >= 0
    masses -= np.bincount(lab[seam], weights=flux[seam], minlength=K)
    surface = SurfaceData(P, N, W, own, lab, f0, dn)

    # Phi_n on the chi cells: one octree over their union minus the tube
    lo = centers.min(0) - chi_r
    hi = centers.max(0) + chi_r
    box = _cubic_box(lo, hi)
    chi2 = chi_r * chi_r

    def excluded(p):
        in_chi = (((p[:, None, :] - centers[None]) ** 2).sum(-1) <= chi2).any(1)
        return ~in_chi | (first_hit(p, centers, beta_r) >= 0)

    dist = lambda p: ext.kernel.nearest(p)[0]
    mesh = build_octree(dist, box, theta, exclusion=excluded, min_size=chi_r / phi_min_cells,
                        max_cells=max_cells)
    members = (((mesh.centers[:, None, :] - centers[None]) ** 2).sum(-1) <= chi2)
    vols = mesh.volumes
    chi_vol = (members * vols[:, None]).sum(0)
    scale = float(ext.modulus(lam_n)) / lam_n ** 2
    gam = np.zeros(K)
    for k in range(K):
        if chi_vol[k] > 0:
            gam[k] = -masses[k] / (scale * chi_vol[k])
        elif masses[k] != 0.0:
            raise ApproximantError(f"chi cell {k} is empty but carries mass {masses[k]:.3g}")
    density = (members * gam[None]).sum(1) * scale

    vmesh = vdens = None
    if method == "volume":
        vmesh, vdens = _volume_source(ext, centers, beta_r, theta, max_cells)

    approx = HarmonicApproximant(ext=ext, n=n, C1=float(C1), centers=centers, beta_radius=beta_r,
                                 chi_radius=chi_r, masses=masses, chi_volumes=chi_vol, gammas=gam,
                                 surface=surface, phi_mesh=mesh, phi_density=density, phi_members=members,
                                 method=method, volume_mesh=vmesh, volume_density=vdens)
    approx.stats = {"surface_nodes": int(len(P)), "dropped_nodes": int((~usable).sum()),
                    "phi_cells": int(len(mesh))}
    return approx


def _volume_source(ext: PseudoharmonicExtension, centers, beta_r, theta, max_cells):
    """Octree over supp f0 minus the tube with the FD Laplacian as density."""
    c = ext.curve.centroid
    box = (c - ext.R0, c + ext.R0)
    dist = lambda p: ext.kernel.nearest(p)[0]
    excl = lambda p: first_hit(p, centers, beta_r) >= 0
    mesh = build_octree(dist, box, theta, exclusion=excl, min_size=beta_r / 16, max_cells=max_cells)
    dens = ext.laplacian_f0(mesh.centers)
    return mesh, dens


def build_level(ext: PseudoharmonicExtension, n: int, **kw) -> HarmonicApproximant:
    return build(ext, 2.0 ** -n, **kw)


def cell_mass(approx: HarmonicApproximant, k: int):
    return approx.cell_mass(k)


def gamma(approx: HarmonicApproximant, k: int) -> float:
    return approx.gamma(k)


def phi_total(approx: HarmonicApproximant, p):
    return approx.phi_total(p)


def eval_v(approx: HarmonicApproximant, p):
    return approx.eval_v(p)
