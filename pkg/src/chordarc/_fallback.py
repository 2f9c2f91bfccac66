"""Pure-Python twin of ``_kernels``: same algorithms, same results, much slower."""
from __future__ import annotations

import math

import numpy as np

SPHERE_TOL = 1e-12


def _sigma(d: float) -> int:
    m, e = math.frexp(d)
    return e - 1 if m == 0.5 else e


def _cut(t: float) -> float:
    if t <= 0.0:
        return 1.0
    if t >= 1.0:
        return 0.0
    return 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


class FieldKernel:
    def __init__(self, seg_a, seg_v, seg_s0, lam, c0w, nmax, centers, values, offsets,
                 rays, ray_w, drays, dray_w, outer_x, outer_w, d0_x, d0_w, radius_rule, centroid, r0, width, floor_d):
        self.seg_a = np.asarray(seg_a, float)
        self.seg_v = np.asarray(seg_v, float)
        self.seg_len = np.linalg.norm(self.seg_v, axis=1)
        self.seg_len2 = self.seg_len ** 2
        self.seg_s0 = np.asarray(seg_s0, float)
        self.lam, self.c0w, self.nmax = float(lam), float(c0w), int(nmax)
        self.centers = np.asarray(centers, float)
        self.values = np.asarray(values, float)
        self.offsets = np.asarray(offsets, np.intp)
        self.rays = np.asarray(rays, float)
        self.ray_w = np.asarray(ray_w, float)
        self.drays = np.asarray(drays, float)
        self.dray_w = np.asarray(dray_w, float)
        self.ox, self.ow = np.asarray(outer_x, float), np.asarray(outer_w, float)
        self.dx, self.dw = np.asarray(d0_x, float), np.asarray(d0_w, float)
        self.radius_rule = int(radius_rule)
        self.cen = np.asarray(centroid, float)
        self.r0, self.width, self.floor_d = float(r0), float(width), float(floor_d)

    # distance
    def dist(self, p):
        w = p[None, :] - self.seg_a
        t = np.clip((w * self.seg_v).sum(1) / self.seg_len2, 0.0, 1.0)
        q = w - t[:, None] * self.seg_v
        dd = (q * q).sum(1)
        best, bs = math.inf, 0.0
        for i in range(len(dd)):
            if dd[i] < best * (1.0 - 2.0 * SPHERE_TOL):
                best = dd[i]
                bs = self.seg_s0[i] + t[i] * self.seg_len[i]
        return math.sqrt(best), bs

    def seg_dists(self, p):
        w = p[None, :] - self.seg_a
        t = np.clip((w * self.seg_v).sum(1) / self.seg_len2, 0.0, 1.0)
        q = w - t[:, None] * self.seg_v
        return np.sqrt((q * q).sum(1))

    # g
    def g_at(self, p, d, s):
        if d <= 0.0:
            return math.nan
        mh = min(int(math.floor(math.log2(2.0 * self.lam * (1.0 + SPHERE_TOL) / d))), self.nmax)
        for m in range(mh, -1, -1):
            lm = math.ldexp(self.lam, -m)
            r2 = 4.0 * lm * lm * (1.0 + 2.0 * SPHERE_TOL)
            span = self.c0w * (d + 2.0 * lm)
            k0 = max(0, int(math.floor((s - span) / lm)))
            k1 = min(1 << m, int(math.ceil((s + span) / lm)))
            base = self.offsets[m]
            c = self.centers[base + k0:base + k1 + 1]
            hit = np.flatnonzero(((p[None] - c) ** 2).sum(1) <= r2)
            if hit.size:
                return float(self.values[base + k0 + hit[0]])
        return 0.0

    def g_point(self, p):
        d, s = self.dist(p)
        return self.g_at(p, d, s)

    def g1_at(self, p):
        d, s = self.dist(p)
        if d <= 0.0:
            return math.nan
        r = d / 8.0
        m_top = min(int(math.floor(math.log2(2.0 * self.lam * (1.0 + SPHERE_TOL) / (d - r)))) + 1, self.nmax)
        m_lo = max(0, int(math.floor(math.log2(self.lam / (2.0 * (d + r))))) - 1)
        ws, r2s = [], []
        for m in range(m_lo, m_top + 1):
            lm = math.ldexp(self.lam, -m)
            R = 2.0 * lm
            span = self.c0w * (d + R + r)
            k0 = max(0, int(math.floor((s - span) / lm)))
            k1 = min(1 << m, int(math.ceil((s + span) / lm)))
            base = self.offsets[m]
            for k in range(k0, k1 + 1):
                w = p - self.centers[base + k]
                if abs(math.sqrt(w @ w) - R) <= r * (1.0 + 1e-9):
                    ws.append(w)
                    r2s.append(R * R * (1.0 + 2.0 * SPHERE_TOL))
        gc = self.g_at(p, d, s)
        if not ws:
            return gc
        ws = np.array(ws)
        r2s = np.array(r2s)
        total = 0.0
        for i, xi in enumerate(self.rays):
            b = ws @ xi
            disc = b * b - ((ws * ws).sum(1) - r2s)
            ts = []
            for bj, dj in zip(b, disc):
                if dj > 0.0:
                    sq = math.sqrt(dj)
                    for t in (-bj - sq, -bj + sq):
                        if 0.0 < t < r:
                            ts.append(t)
            if not ts:
                total += self.ray_w[i] * gc
                continue
            ts.sort()
            acc = gc * ts[0] ** 3
            edges = ts + [r]
            for a, b2 in zip(edges[:-1], edges[1:]):
                if b2 > a:
                    val = self.g_point(p + 0.5 * (a + b2) * xi)
                    acc += val * (b2 ** 3 - a ** 3)
            total += self.ray_w[i] * acc / r ** 3
        return total

    # smoothed distance
    def d1_of(self, d):
        return math.ldexp(1.0, _sigma(d) - 1)

    def avg_radius(self, d):
        if self.radius_rule == 0:
            return math.ldexp(1.0, _sigma(d / math.sqrt(2.0)) - 1) / 8.0
        return self.d1_of(d) / 8.0

    def capsule_fraction(self, p, rho, a):
        sel = np.flatnonzero(self.seg_dists(p) <= a + rho)
        if sel.size == 0:
            return 0.0
        total = 0.0
        for j, xi in enumerate(self.drays):
            ivals = []
            for i in sel:
                L = self.seg_len[i]
                u = self.seg_v[i] / L
                w = p - self.seg_a[i]
                t_lo, t_hi = math.inf, -math.inf
                xu, wu = xi @ u, w @ u
                pp = xi - xu * u
                qq = w - wu * u
                qa, qb, qc = pp @ pp, pp @ qq, qq @ qq - a * a
                c_lo, c_hi = 1.0, -1.0
                if qa < 1e-14:
                    if qc <= 0.0:
                        c_lo, c_hi = -math.inf, math.inf
                else:
                    disc = qb * qb - qa * qc
                    if disc > 0.0:
                        sq = math.sqrt(disc)
                        c_lo, c_hi = (-qb - sq) / qa, (-qb + sq) / qa
                if c_hi > c_lo:
                    if abs(xu) < 1e-14:
                        s_lo, s_hi = (-math.inf, math.inf) if 0.0 <= wu <= L else (1.0, -1.0)
                    elif xu > 0.0:
                        s_lo, s_hi = -wu / xu, (L - wu) / xu
                    else:
                        s_lo, s_hi = (L - wu) / xu, -wu / xu
                    c_lo, c_hi = max(c_lo, s_lo), min(c_hi, s_hi)
                    if c_hi > c_lo:
                        t_lo, t_hi = c_lo, c_hi
                for ww in (w, w - self.seg_v[i]):
                    bb = xi @ ww
                    disc = bb * bb - (ww @ ww - a * a)
                    if disc > 0.0:
                        sq = math.sqrt(disc)
                        t_lo, t_hi = min(t_lo, -bb - sq), max(t_hi, -bb + sq)
                t_lo, t_hi = max(t_lo, 0.0), min(t_hi, rho)
                if t_hi > t_lo:
                    ivals.append((t_lo, t_hi))
            if not ivals:
                continue
            ivals.sort()
            acc = 0.0
            cl, ch = ivals[0]
            for lo, hi in ivals[1:]:
                if lo <= ch:
                    ch = max(ch, hi)
                else:
                    acc += ch ** 3 - cl ** 3
                    cl, ch = lo, hi
            acc += ch ** 3 - cl ** 3
            total += self.dray_w[j] * acc / rho ** 3
        return total

    def d2_at(self, p):
        d, _ = self.dist(p)
        if d <= 0.0:
            return math.nan
        rho = self.avg_radius(d)
        j_lo = int(math.floor(math.log2(d - rho))) + 1
        j_hi = int(math.floor(math.log2(d + rho)))
        if j_hi < j_lo:
            return self.d1_of(d)
        res = math.ldexp(1.0, j_hi)
        for j in range(j_lo, j_hi + 1):
            a = math.ldexp(1.0, j)
            res -= 0.5 * a * self.capsule_fraction(p, rho, a)
        return res

    def d0_at(self, p):
        d, _ = self.dist(p)
        if d <= 0.0:
            return math.nan
        rho = self.avg_radius(d)
        return float(sum(w * self.d2_at(p + rho * x) for x, w in zip(self.dx, self.dw)))

    def g2_at(self, p):
        r = self.d0_at(p) / 8.0
        return float(sum(w * self.g1_at(p + r * x) for x, w in zip(self.ox, self.ow)))

    def g0_at(self, p):
        r = self.d0_at(p) / 8.0
        return float(sum(w * self.g2_at(p + r * x) for x, w in zip(self.ox, self.ow)))

    def cutoff(self, p):
        rr = float(np.linalg.norm(p - self.cen))
        return _cut((rr - (self.r0 - self.width)) / self.width)

    def f0_at(self, p):
        d, _ = self.dist(p)
        if d < self.floor_d:
            return math.nan
        c = self.cutoff(p)
        if c == 0.0:
            return 0.0
        return c * self.g0_at(p)

    def eval(self, points, what):
        P = np.asarray(points, float).reshape(-1, 3)
        fn = {
            "dist": lambda q: self.dist(q)[0],
            "g": self.g_point,
            "g1": self.g1_at,
            "d1": lambda q: self.d1_of(self.dist(q)[0]),
            "d2": self.d2_at,
            "d0": self.d0_at,
            "g2": self.g2_at,
            "g0": self.g0_at,
            "f0": self.f0_at,
            "cut": self.cutoff,
        }
        if what not in fn:
            raise ValueError(what)
        f = fn[what]
        return np.array([f(q) for q in P], dtype=float)

    def nearest(self, points):
        P = np.asarray(points, float).reshape(-1, 3)
        res = [self.dist(q) for q in P]
        return np.array([r[0] for r in res]), np.array([r[1] for r in res])


def cell_potential(centers, sizes, dens, targets, theta_near):
    C = np.asarray(centers, float).reshape(-1, 3)
    H = np.asarray(sizes, float)
    W = np.asarray(dens, float)
    T = np.asarray(targets, float).reshape(-1, 3)
    keep = W != 0.0
    C, H, W = C[keep], H[keep], W[keep]
    offs = np.array([[a - 0.5, b - 0.5, c - 0.5] for a in (0, 1) for b in (0, 1) for c in (0, 1)]) * 0.5
    out = np.zeros(len(T))
    nsplit = 0
    for j, t in enumerate(T):
        e = t[None] - C
        r = np.sqrt((e * e).sum(1))
        split = H > theta_near * r
        acc = float((W[~split] * H[~split] ** 3 / r[~split]).sum())
        if split.any():
            nsplit += int(split.sum())
            es = e[split][:, None, :] - offs[None] * H[split][:, None, None]
            rc = np.sqrt((es * es).sum(-1))
            if np.any(rc < 1e-14 * H[split][:, None]):
                raise ValueError("target coincides with an unsplittable source cell")
            acc += float((W[split][:, None] * 0.125 * H[split][:, None] ** 3 / rc).sum())
        out[j] = acc / (4.0 * np.pi)
    return out, nsplit


def layer_potential(points, normals, q, mu, targets):
    P = np.asarray(points, float).reshape(-1, 3)
    N = np.asarray(normals, float).reshape(-1, 3)
    Q = np.asarray(q, float)
    MU = np.asarray(mu, float)
    T = np.asarray(targets, float).reshape(-1, 3)
    out = np.zeros(len(T))
    chunk = max(1, 4_000_000 // max(1, len(P)))
    for i0 in range(0, len(T), chunk):
        e = P[None] - T[i0:i0 + chunk, None, :]
        r2 = (e * e).sum(-1)
        r = np.sqrt(r2)
        out[i0:i0 + chunk] = (Q[None] / r).sum(1) + (MU[None] * (e * N[None]).sum(-1) / (r2 * r)).sum(1)
    return out
