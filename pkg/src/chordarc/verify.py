"""Numerical checks of the direct and converse estimates and the sharpness obstruction."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .approximant import HarmonicApproximant
from .extension import PseudoharmonicExtension
from .modulus import BoundaryData, Modulus, f_star
from .quadrature import build_octree, potential_of_cells, sphere_rule

BAND_RATIO = 4.0


class VerifyError(ValueError):
    pass


def band_ratio(values) -> float:
    """max/min of positive values; inf if any is zero."""
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return 1.0
    lo = float(v.min())
    return math.inf if lo <= 0 else float(v.max()) / lo


def in_band(values, ratio: float = BAND_RATIO) -> bool:
    return band_ratio(values) <= ratio


# --- direct estimates -------------------------------------------------------------


def curve_samples(curve, samples: int) -> tuple[np.ndarray, np.ndarray]:
    s = np.linspace(0.0, curve.total_length, samples)
    return s, curve.point_at(s)


def sup_error(approx: HarmonicApproximant, bd: BoundaryData, samples: int = 200) -> float:
    if samples < 100:
        raise VerifyError("at least 100 curve samples are required")
    s, pts = curve_samples(bd.curve, samples)
    return float(np.abs(approx.eval_v(pts) - bd(s)).max())


def tube_samples(curve, distance, lo: float, hi: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points with lo < d <= hi, by rejection from the padded bounding box."""
    box_lo = curve.vertices.min(0) - hi
    box_hi = curve.vertices.max(0) + hi
    out, got = [], 0
    for _ in range(2000):
        cand = rng.uniform(box_lo, box_hi, size=(max(8 * count, 512), 3))
        d = distance(cand)
        keep = cand[(d > lo) & (d <= hi)]
        out.append(keep)
        got += len(keep)
        if got >= count:
            return np.concatenate(out)[:count]
    raise VerifyError(f"could not sample {count} points with {lo:.3g} < d <= {hi:.3g}")


def shell_gradient(approx: HarmonicApproximant, delta: float | None = None, samples: int = 200,
                   rng: np.random.Generator | None = None, inner: bool = False) -> float:
    """sup |grad v| over delta/2 < d <= delta (or d <= delta/2 with ``inner``); step delta/64."""
    delta = approx.delta if delta is None else delta
    rng = rng or np.random.default_rng(0)
    ext = approx.ext
    dist = lambda p: ext.kernel.nearest(p)[0]
    lo, hi = (0.0, delta / 2) if inner else (delta / 2, delta)
    pts = tube_samples(ext.curve, dist, lo, hi, samples, rng)
    g = approx.gradient_v(pts, delta / 64.0)
    return float(np.linalg.norm(g, axis=1).max())


def support_distance_bound(approx: HarmonicApproximant, pts) -> np.ndarray:
    """Lower bound for the distance from points in the tube to every source."""
    d = np.sqrt(((pts[:, None, :] - approx.centers[None]) ** 2).sum(-1))
    return np.clip((approx.beta_radius - d).max(1), 0.0, None)


def harmonicity_residual(approx: HarmonicApproximant, count: int = 200, rng: np.random.Generator | None = None,
                         degree: int = 11) -> float:
    """max |sphere mean of v - v(p)| / (|v(p)| + omega(delta)) over tube points with d < 2 delta."""
    rng = rng or np.random.default_rng(0)
    ext = approx.ext
    dist = lambda p: ext.kernel.nearest(p)[0]
    pts = tube_samples(ext.curve, dist, 0.0, 2.0 * approx.delta, count, rng)
    r = support_distance_bound(approx, pts) / 8.0
    if np.any(r <= 0):
        raise VerifyError("tube sample touches the source support")
    x, w = sphere_rule(degree)
    ring = pts[:, None, :] + r[:, None, None] * x[None]
    vals = approx.eval_v(np.concatenate([pts, ring.reshape(-1, 3)]))
    v0 = vals[: len(pts)]
    mean = vals[len(pts):].reshape(len(pts), -1) @ w
    scale = np.abs(v0) + float(ext.modulus(approx.delta))
    return float((np.abs(mean - v0) / scale).max())


# --- representation identity ------------------------------------------------------


def gaussian_field(p):
    p = np.atleast_2d(p)
    return np.exp(-(p * p).sum(1))


def gaussian_laplacian(p):
    p = np.atleast_2d(p)
    r2 = (p * p).sum(1)
    return (4.0 * r2 - 6.0) * np.exp(-r2)


def representation_check(field_fn, laplacian_fn, targets, theta: float = 0.4, half_width: float = 6.0,
                         eps: float = 1e-12, min_size: float | None = None, max_cells: int = 2_000_000) -> float:
    """max |F(M0) + (1/4pi) int lap F / rho| / (|F(M0)| + eps) on an octree graded towards the targets."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    box = (np.full(3, -half_width), np.full(3, half_width))

    def dist(p):
        d2 = ((p[:, None, :] - targets[None]) ** 2).sum(-1)
        return np.sqrt(d2.min(1))

    if min_size is None:
        min_size = 2.0 * half_width / 2 ** 14
    mesh = build_octree(dist, box, theta, min_size=min_size, max_cells=max_cells)
    nodes, sizes = mesh.gauss_nodes()
    pot = potential_of_cells(nodes, sizes, laplacian_fn(nodes), targets)
    f = field_fn(targets)
    return float((np.abs(f + pot) / (np.abs(f) + eps)).max())


# --- converse: increments from approximants ----------------------------------------


def reconstruct_increment(family: dict, bd: BoundaryData, s1: float, s2: float, nodes: int = 32) -> float:
    """Bound B(M1, M2) = |(f-v)(M2)| + |(f-v)(M1)| + |M1M2| |mean of dv/dnu along M1M2|.

    ``family`` maps delta to approximants; the smallest delta >= 2|M1M2| is used.
    """
    curve = bd.curve
    m1, m2 = curve.point_at(np.array([s1, s2]))
    chord = float(np.linalg.norm(m2 - m1))
    if chord == 0.0:
        return 0.0
    ok = [d for d in family if d >= 2.0 * chord]
    if not ok:
        raise VerifyError(f"no approximant with delta >= {2 * chord:.3g} in the family")
    approx = family[min(ok)]
    f1, f2 = bd(np.array([s1, s2]))
    v1, v2 = approx.eval_v(np.stack([m1, m2]))
    x, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (x + 1.0)
    line = m1 + t[:, None] * (m2 - m1)
    dv = approx.directional_derivative(line, m2 - m1, approx.delta / 64.0)
    integral = 0.5 * float(w @ dv)
    return abs(f2 - v2) + abs(f1 - v1) + chord * abs(integral)


@dataclass
class RecoveryReport:
    chords: np.ndarray
    bounds: np.ndarray
    increments: np.ndarray
    bins: list
    bin_sups: list

    @property
    def ratio_band(self) -> float:
        return band_ratio(self.bin_sups)


def holder_recovery(family: dict, bd: BoundaryData, modulus: Modulus, pairs: int = 1000,
                    rng: np.random.Generator | None = None) -> RecoveryReport:
    """B/omega(|M1M2|) over random pairs with chords spread log-uniformly over the family's range."""
    rng = rng or np.random.default_rng(0)
    curve = bd.curve
    deltas = sorted(family)
    lo, hi = deltas[0] / 4.0, deltas[-1] / 2.0
    target = np.exp(rng.uniform(math.log(lo), math.log(hi), pairs))
    s1 = rng.uniform(0.0, curve.total_length - target)
    s2 = s1 + target
    chords = np.linalg.norm(curve.point_at(s2) - curve.point_at(s1), axis=1)
    # group by approximant so each one evaluates its batch at once
    B = np.empty(pairs)
    which = np.array([min(d for d in deltas if d >= 2.0 * c) for c in chords])
    x, w = np.polynomial.legendre.leggauss(32)
    t = 0.5 * (x + 1.0)
    f = bd(np.concatenate([s1, s2]))
    for dlt in deltas:
        idx = np.flatnonzero(which == dlt)
        if len(idx) == 0:
            continue
        a = family[dlt]
        m1 = curve.point_at(s1[idx])
        m2 = curve.point_at(s2[idx])
        v = a.eval_v(np.concatenate([m1, m2]))
        e = m2 - m1
        u = e / np.linalg.norm(e, axis=1)[:, None]
        line = m1[:, None, :] + t[None, :, None] * e[:, None, :]
        h = a.delta / 64.0
        vp = a.eval_v((line + h * u[:, None, :]).reshape(-1, 3)).reshape(len(idx), -1)
        vm = a.eval_v((line - h * u[:, None, :]).reshape(-1, 3)).reshape(len(idx), -1)
        integral = 0.5 * ((vp - vm) / (2 * h)) @ w
        B[idx] = (np.abs(f[pairs + idx] - v[len(idx):]) + np.abs(f[idx] - v[: len(idx)])
                  + chords[idx] * np.abs(integral))
    incr = np.abs(f[pairs:] - f[:pairs])
    ratio = B / modulus(chords)
    edges = deltas[0] / 4.0 * 2.0 ** np.arange(0, 64)
    edges = edges[edges <= hi * (1 + 1e-12) * 2]
    bins, sups = [], []
    for a_, b_ in zip(edges[:-1], edges[1:]):
        sel = (chords > a_) & (chords <= b_)
        if sel.sum() >= 5:
            bins.append((float(a_), float(b_)))
            sups.append(float(ratio[sel].max()))
    return RecoveryReport(chords, B, incr, bins, sups)


# --- extension diagnostics ----------------------------------------------------------


def boundary_samples(ext: PseudoharmonicExtension, n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points on the boundary of Omega~_n (sphere points outside the other balls)."""
    centers = ext.level_points(n)
    R = 2.0 * ext.lam * 2.0 ** -n
    out, got = [], 0
    for _ in range(1000):
        k = rng.integers(0, len(centers), size=4 * count)
        u = rng.normal(size=(4 * count, 3))
        u /= np.linalg.norm(u, axis=1)[:, None]
        pts = centers[k] + R * u
        d2 = ((pts[:, None, :] - centers[None]) ** 2).sum(-1)
        d2[np.arange(len(pts)), k] = np.inf
        keep = pts[(d2 > R * R).all(1)]
        out.append(keep)
        got += len(keep)
        if got >= count:
            return np.concatenate(out)[:count]
    raise VerifyError("boundary sampling failed")


def alpha_decay(ext: PseudoharmonicExtension, levels, samples: int = 200,
                rng: np.random.Generator | None = None) -> list[float]:
    """alpha_n = sup over the boundary of Omega~_n of |grad f0| d."""
    rng = rng or np.random.default_rng(0)
    out = []
    for n in levels:
        if n > ext.n_max:
            raise VerifyError(f"level {n} exceeds n_max={ext.n_max}")
        pts = boundary_samples(ext, n, samples, rng)
        d, _ = ext.kernel.nearest(pts)
        g = ext.gradient_f0(pts)
        out.append(float((np.linalg.norm(g, axis=1) * d).max()))
    return out


def extension_bounds(ext: PseudoharmonicExtension, levels, samples: int = 500,
                     rng: np.random.Generator | None = None) -> list[dict]:
    """Per shell: sups of |g0 - g|/w(d), |grad f0| d/w(d), |lap f0| d^2/w(d)."""
    rng = rng or np.random.default_rng(0)
    rows = []
    for n in levels:
        pts = ext.shell_samples(n, samples, rng)
        d, _ = ext.kernel.nearest(pts)
        w = ext.modulus(d)
        g0 = ext.eval_g0(pts)
        g = ext.eval_g(pts)
        grad, lap = ext.gradient_and_laplacian(pts)
        rows.append({
            "n": n,
            "g0_minus_g": float((np.abs(g0 - g) / w).max()),
            "gradient": float((np.linalg.norm(grad, axis=1) * d / w).max()),
            "laplacian": float((np.abs(lap) * d * d / w).max()),
        })
    return rows


# --- decay report -----------------------------------------------------------------


@dataclass
class DecayRecord:
    n: int
    delta: float
    E: float
    G: float
    E_ratio: float
    G_ratio: float
    harmonicity: float
    alpha: float
    gamma_max: float
    runtime: float = 0.0


@dataclass
class DecayReport:
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    CSV_FIELDS = ("n", "delta", "E", "G", "E_ratio", "G_ratio", "harmonicity", "alpha", "gamma_max")

    def bands(self) -> dict:
        return {
            "E_ratio": band_ratio([r.E_ratio for r in self.records]),
            "G_ratio": band_ratio([r.G_ratio for r in self.records]),
        }

    def passed(self, noise_ratio: float = 0.05, harmonic_tol: float = 1e-3) -> bool:
        """Ratio bands within the limit and small harmonic residuals.

        A column whose normalized values all sit below ``noise_ratio`` is
        quadrature noise (constant data) and is not band-checked.
        """
        if not self.records:
            return False
        ok = all(r.harmonicity <= harmonic_tol for r in self.records)
        for key in ("E_ratio", "G_ratio"):
            vals = [getattr(r, key) for r in self.records]
            if max(vals) > noise_ratio:
                ok &= in_band(vals)
        return bool(ok)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_FIELDS)
        for r in self.records:
            w.writerow([r.n] + [f"{getattr(r, k):.10e}" for k in self.CSV_FIELDS[1:]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_json(self, path=None) -> str:
        data = {"records": [asdict(r) for r in self.records], "bands": self.bands(),
                "passed": self.passed(self.meta.get("noise_ratio", 0.05), self.meta.get("harmonic_tol", 1e-3)),
                "meta": self.meta}
        text = json.dumps(data, indent=2, sort_keys=True, default=float)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


# --- sharpness ----------------------------------------------------------------------


@dataclass
class SharpnessRecord:
    ell: int
    delta: float
    lam: float
    A: float
    r: float
    x: float
    lower: float
    upper: float
    ratio: float


@dataclass
class SharpnessReport:
    records: list
    ell_star: int | None
    extrapolated_ell: float | None
    kappa: float
    C1p: float
    C2p: float

    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.records])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ell", "delta", "lambda", "A", "r", "x", "lower", "upper", "ratio", "violated"])
        for r in self.records:
            w.writerow([r.ell] + [f"{v:.12e}" for v in (r.delta, r.lam, r.A, r.r, r.x, r.lower, r.upper, r.ratio)]
                       + [int(r.lower > r.upper)])
        w.writerow(["ell_star", "none" if self.ell_star is None else self.ell_star])
        if self.ell_star is None:
            w.writerow(["extrapolated_ell", "none" if self.extrapolated_ell is None else f"{self.extrapolated_ell:.6f}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def sharpness_harness(m: Modulus, deltas, lams, C1p: float = 1.0, C2p: float = 1.0,
                      kappa: float = 3.0, ells=None) -> SharpnessReport:
    """Both sides of the second-difference contradiction along (delta_l, lambda_l).

    lower = 2 f*(A delta) with A = sqrt(lambda/2); upper = (kappa C2p + 4 C1p) w(delta).
    """
    deltas = np.asarray(deltas, dtype=float)
    lams = np.asarray(lams, dtype=float)
    if deltas.shape != lams.shape or deltas.ndim != 1:
        raise VerifyError("delta and lambda sequences must have equal length")
    if np.any(lams <= 4.0):
        raise VerifyError("every lambda must exceed 4")
    ells = np.arange(1, len(deltas) + 1) if ells is None else np.asarray(ells)
    A = np.sqrt(lams / 2.0)
    x = A * deltas
    if np.any(x > 1.0):
        raise VerifyError("A*delta must stay within [0, 1]")
    lower = 2.0 * np.asarray(f_star(m, x))
    upper = (kappa * C2p + 4.0 * C1p) * m(deltas)
    ratio = lower / upper
    recs = [SharpnessRecord(int(ells[i]), float(deltas[i]), float(lams[i]), float(A[i]),
                            float(lams[i] * deltas[i] / 2.0), float(x[i]), float(lower[i]), float(upper[i]),
                            float(ratio[i])) for i in range(len(deltas))]
    hit = np.flatnonzero(lower > upper)
    ell_star = int(ells[hit[0]]) if len(hit) else None
    extrap = None
    if ell_star is None and len(ratio) >= 2:
        # linear trend of log(ratio) in ell from the last two records
        slope = math.log(ratio[-1] / ratio[-2]) / float(ells[-1] - ells[-2])
        if slope > 1e-12:
            extrap = float(ells[-1] + math.log(1.0 / ratio[-1]) / slope)
    return SharpnessReport(recs, ell_star, extrap, kappa, C1p, C2p)


def sharpness_closed_form(alpha: float, A, kappa: float = 3.0, C1p: float = 1.0, C2p: float = 1.0):
    """Ratio for w = t**alpha, where f*(x) = x**alpha / alpha."""
    return 2.0 / alpha * np.asarray(A, dtype=float) ** alpha / (kappa * C2p + 4.0 * C1p)


def log_floor_check(m: Modulus, x) -> float:
    """min of f*(x) - log(2) w(x/2); nonnegative when the floor holds."""
    x = np.asarray(x, dtype=float)
    return float((np.asarray(f_star(m, x)) - math.log(2.0) * m(x / 2.0)).min())


def default_sharpness_sequences(count: int = 6, constant_lambda: float | None = None):
    ells = np.arange(1, count + 1)
    deltas = 4.0 ** -ells.astype(float)
    lams = np.full(count, constant_lambda) if constant_lambda is not None else 2.0 ** (ells + 3.0)
    return deltas, lams


__all__ = [
    "BAND_RATIO", "DecayRecord", "DecayReport", "RecoveryReport", "SharpnessRecord", "SharpnessReport",
    "VerifyError", "alpha_decay", "band_ratio", "boundary_samples", "default_sharpness_sequences",
    "extension_bounds", "gaussian_field", "gaussian_laplacian", "harmonicity_residual", "holder_recovery",
    "in_band", "log_floor_check", "reconstruct_increment", "representation_check", "sharpness_closed_form",
    "sharpness_harness", "shell_gradient", "sup_error", "support_distance_bound", "tube_samples",
]
