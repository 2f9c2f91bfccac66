# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False, nonecheck=False
"""Compiled evaluation of the dyadic extension chain and direct potential sums.

Ball averages of the piecewise-constant fields are computed exactly along a
fixed set of rays: the cell boundaries of g are spheres and the level sets of
the distance are capsules, so every ray splits into a handful of intervals on
which the integrand is constant.
"""
import numpy as np

from libc.math cimport sqrt, floor, ceil, log2, fabs, ldexp, frexp, NAN, INFINITY

cdef enum:
    MAX_SPHERES = 2048
    MAX_CROSS = 4096
    MAX_SEGS = 4096

cdef double SPHERE_TOL = 1e-12
cdef double FOUR_PI = 12.566370614359172


cdef inline int sigma_shell(double d) noexcept nogil:
    cdef int e
    cdef double m = frexp(d, &e)
    if m == 0.5:
        return e - 1
    return e


cdef inline void sort_small(double* a, int n) noexcept nogil:
    cdef int i, j
    cdef double x
    for i in range(1, n):
        x = a[i]
        j = i - 1
        while j >= 0 and a[j] > x:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = x


cdef inline void sort_pairs(double* lo, double* hi, int n) noexcept nogil:
    cdef int i, j
    cdef double x, y
    for i in range(1, n):
        x = lo[i]
        y = hi[i]
        j = i - 1
        while j >= 0 and lo[j] > x:
            lo[j + 1] = lo[j]
            hi[j + 1] = hi[j]
            j -= 1
        lo[j + 1] = x
        hi[j + 1] = y


cdef inline double smooth_cut(double t) noexcept nogil:
    if t <= 0.0:
        return 1.0
    if t >= 1.0:
        return 0.0
    return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


cdef class FieldKernel:
    """State for evaluating g, g1, d1, d2, d0, g2, g0 and f0 at points."""

    cdef double[:, ::1] seg_a
    cdef double[:, ::1] seg_v
    cdef double[::1] seg_len
    cdef double[::1] seg_len2
    cdef double[::1] seg_s0
    cdef int nseg
    cdef double lam
    cdef double c0w
    cdef int nmax
    cdef double[:, ::1] centers
    cdef double[::1] values
    cdef Py_ssize_t[::1] offsets
    cdef double[:, ::1] rays
    cdef double[::1] ray_w
    cdef int nray
    cdef double[:, ::1] drays
    cdef double[::1] dray_w
    cdef int ndray
    cdef double[:, ::1] ox
    cdef double[::1] ow
    cdef int no
    cdef double[:, ::1] dx
    cdef double[::1] dw
    cdef int nd
    cdef int radius_rule
    cdef double cen0, cen1, cen2
    cdef double r0, width, floor_d

    def __init__(self, seg_a, seg_v, seg_s0, double lam, double c0w, int nmax,
                 centers, values, offsets, rays, ray_w, drays, dray_w, outer_x, outer_w, d0_x, d0_w,
                 int radius_rule, centroid, double r0, double width, double floor_d):
        self.seg_a = np.ascontiguousarray(seg_a, dtype=np.float64)
        self.seg_v = np.ascontiguousarray(seg_v, dtype=np.float64)
        lens = np.linalg.norm(np.asarray(seg_v, dtype=np.float64), axis=1)
        self.seg_len = np.ascontiguousarray(lens)
        self.seg_len2 = np.ascontiguousarray(lens * lens)
        self.seg_s0 = np.ascontiguousarray(seg_s0, dtype=np.float64)
        self.nseg = self.seg_a.shape[0]
        if self.nseg > MAX_SEGS:
            raise ValueError("too many segments for the compiled kernel")
        self.lam = lam
        self.c0w = c0w
        self.nmax = nmax
        self.centers = np.ascontiguousarray(centers, dtype=np.float64)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.offsets = np.ascontiguousarray(offsets, dtype=np.intp)
        self.rays = np.ascontiguousarray(rays, dtype=np.float64)
        self.ray_w = np.ascontiguousarray(ray_w, dtype=np.float64)
        self.nray = self.rays.shape[0]
        self.drays = np.ascontiguousarray(drays, dtype=np.float64)
        self.dray_w = np.ascontiguousarray(dray_w, dtype=np.float64)
        self.ndray = self.drays.shape[0]
        self.ox = np.ascontiguousarray(outer_x, dtype=np.float64)
        self.ow = np.ascontiguousarray(outer_w, dtype=np.float64)
        self.no = self.ox.shape[0]
        self.dx = np.ascontiguousarray(d0_x, dtype=np.float64)
        self.dw = np.ascontiguousarray(d0_w, dtype=np.float64)
        self.nd = self.dx.shape[0]
        self.radius_rule = radius_rule
        self.cen0 = centroid[0]
        self.cen1 = centroid[1]
        self.cen2 = centroid[2]
        self.r0 = r0
        self.width = width
        self.floor_d = floor_d

    # ------------------------------------------------------------------ distance
    cdef double dist(self, double* p, double* s_out) noexcept nogil:
        cdef int i
        cdef double best = INFINITY, bs = 0.0
        cdef double wx, wy, wz, t, qx, qy, qz, dd
        for i in range(self.nseg):
            wx = p[0] - self.seg_a[i, 0]
            wy = p[1] - self.seg_a[i, 1]
            wz = p[2] - self.seg_a[i, 2]
            t = (wx * self.seg_v[i, 0] + wy * self.seg_v[i, 1] + wz * self.seg_v[i, 2]) / self.seg_len2[i]
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            qx = wx - t * self.seg_v[i, 0]
            qy = wy - t * self.seg_v[i, 1]
            qz = wz - t * self.seg_v[i, 2]
            dd = qx * qx + qy * qy + qz * qz
            if dd < best * (1.0 - 2.0 * SPHERE_TOL):
                best = dd
                bs = self.seg_s0[i] + t * self.seg_len[i]
        s_out[0] = bs
        return sqrt(best)

    cdef double seg_dist(self, int i, double* p) noexcept nogil:
        cdef double wx, wy, wz, t, qx, qy, qz
        wx = p[0] - self.seg_a[i, 0]
        wy = p[1] - self.seg_a[i, 1]
        wz = p[2] - self.seg_a[i, 2]
        t = (wx * self.seg_v[i, 0] + wy * self.seg_v[i, 1] + wz * self.seg_v[i, 2]) / self.seg_len2[i]
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        qx = wx - t * self.seg_v[i, 0]
        qy = wy - t * self.seg_v[i, 1]
        qz = wz - t * self.seg_v[i, 2]
        return sqrt(qx * qx + qy * qy + qz * qz)

    # ------------------------------------------------------------------ g
    cdef double g_at(self, double* p, double d, double s) noexcept nogil:
        cdef int m, mh
        cdef Py_ssize_t k, k0, k1, kmax, base
        cdef double lm, R2, span, ex, ey, ez
        if d <= 0.0:
            return NAN
        mh = <int>floor(log2(2.0 * self.lam * (1.0 + SPHERE_TOL) / d))
        if mh > self.nmax:
            mh = self.nmax
        m = mh
        while m >= 0:
            lm = ldexp(self.lam, -m)
            R2 = 4.0 * lm * lm * (1.0 + 2.0 * SPHERE_TOL)
            span = self.c0w * (d + 2.0 * lm)
            kmax = (<Py_ssize_t>1) << m
            k0 = <Py_ssize_t>floor((s - span) / lm)
            k1 = <Py_ssize_t>ceil((s + span) / lm)
            if k0 < 0:
                k0 = 0
            if k1 > kmax:
                k1 = kmax
            base = self.offsets[m]
            for k in range(k0, k1 + 1):
                ex = p[0] - self.centers[base + k, 0]
                ey = p[1] - self.centers[base + k, 1]
                ez = p[2] - self.centers[base + k, 2]
                if ex * ex + ey * ey + ez * ez <= R2:
                    return self.values[base + k]
            m -= 1
        return 0.0

    cdef double g_point(self, double* p) noexcept nogil:
        cdef double s
        cdef double d = self.dist(p, &s)
        return self.g_at(p, d, s)

    cdef double g1_at(self, double* p) noexcept nogil:
        cdef double s, d, r, d_lo, d_hi, lm, R, span, ex, ey, ez, D
        cdef double gc, total, acc, t_prev, tm, val, b, cc, disc, sq, t1, t2, r3
        cdef double q[3]
        cdef double wx[MAX_SPHERES]
        cdef double wy[MAX_SPHERES]
        cdef double wz[MAX_SPHERES]
        cdef double wr2[MAX_SPHERES]
        cdef double ts[MAX_CROSS]
        cdef int m, m_lo, m_top, nc = 0, i, j, nt
        cdef Py_ssize_t k, k0, k1, kmax, base
        d = self.dist(p, &s)
        if d <= 0.0:
            return NAN
        r = d / 8.0
        d_lo = d - r
        d_hi = d + r
        m_top = <int>floor(log2(2.0 * self.lam * (1.0 + SPHERE_TOL) / d_lo)) + 1
        if m_top > self.nmax:
            m_top = self.nmax
        m_lo = <int>floor(log2(self.lam / (2.0 * d_hi))) - 1
        if m_lo < 0:
            m_lo = 0
        for m in range(m_lo, m_top + 1):
            lm = ldexp(self.lam, -m)
            R = 2.0 * lm
            span = self.c0w * (d + R + r)
            kmax = (<Py_ssize_t>1) << m
            k0 = <Py_ssize_t>floor((s - span) / lm)
            k1 = <Py_ssize_t>ceil((s + span) / lm)
            if k0 < 0:
                k0 = 0
            if k1 > kmax:
                k1 = kmax
            base = self.offsets[m]
            for k in range(k0, k1 + 1):
                ex = p[0] - self.centers[base + k, 0]
                ey = p[1] - self.centers[base + k, 1]
                ez = p[2] - self.centers[base + k, 2]
                D = sqrt(ex * ex + ey * ey + ez * ez)
                if fabs(D - R) <= r * (1.0 + 1e-9) and nc < MAX_SPHERES:
                    wx[nc] = ex
                    wy[nc] = ey
                    wz[nc] = ez
                    wr2[nc] = R * R * (1.0 + 2.0 * SPHERE_TOL)
                    nc += 1
        gc = self.g_at(p, d, s)
        if nc == 0:
            return gc
        r3 = r * r * r
        total = 0.0
        for i in range(self.nray):
            nt = 0
            for j in range(nc):
                b = self.rays[i, 0] * wx[j] + self.rays[i, 1] * wy[j] + self.rays[i, 2] * wz[j]
                cc = wx[j] * wx[j] + wy[j] * wy[j] + wz[j] * wz[j] - wr2[j]
                disc = b * b - cc
                if disc > 0.0:
                    sq = sqrt(disc)
                    t1 = -b - sq
                    t2 = -b + sq
                    if t1 > 0.0 and t1 < r:
                        ts[nt] = t1
                        nt += 1
                    if t2 > 0.0 and t2 < r:
                        ts[nt] = t2
                        nt += 1
            if nt == 0:
                total += self.ray_w[i] * gc
                continue
            sort_small(ts, nt)
            acc = gc * ts[0] * ts[0] * ts[0]
            t_prev = ts[0]
            for j in range(1, nt + 1):
                if j < nt:
                    t1 = ts[j]
                else:
                    t1 = r
                if t1 > t_prev:
                    tm = 0.5 * (t_prev + t1)
                    q[0] = p[0] + tm * self.rays[i, 0]
                    q[1] = p[1] + tm * self.rays[i, 1]
                    q[2] = p[2] + tm * self.rays[i, 2]
                    val = self.g_point(q)
                    acc += val * (t1 * t1 * t1 - t_prev * t_prev * t_prev)
                t_prev = t1
            total += self.ray_w[i] * acc / r3
        return total

    # ------------------------------------------------------------------ distance smoothing
    cdef inline double d1_of(self, double d) noexcept nogil:
        return ldexp(1.0, sigma_shell(d) - 1)

    cdef inline double avg_radius(self, double d) noexcept nogil:
        if self.radius_rule == 0:
            return ldexp(1.0, sigma_shell(d / sqrt(2.0)) - 1) / 8.0
        return self.d1_of(d) / 8.0

    cdef double capsule_fraction(self, double* p, double rho, double a) noexcept nogil:
        """Volume fraction of B(p, rho) where the distance to the curve is <= a."""
        cdef int sel[MAX_SEGS]
        cdef double lo[MAX_SEGS]
        cdef double hi[MAX_SEGS]
        cdef int ns = 0, i, j, ni
        cdef double total = 0.0, acc, cur_lo, cur_hi
        cdef double xi0, xi1, xi2, ux, uy, uz, L, wx, wy, wz, xu, wu
        cdef double px, py, pz, qx, qy, qz, qa, qb, qc, disc, sq, c_lo, c_hi, s_lo, s_hi
        cdef double t_lo, t_hi, e_lo, e_hi, bb, cc, rho3
        for i in range(self.nseg):
            if self.seg_dist(i, p) <= a + rho:
                sel[ns] = i
                ns += 1
        if ns == 0:
            return 0.0
        rho3 = rho * rho * rho
        for j in range(self.ndray):
            xi0 = self.drays[j, 0]
            xi1 = self.drays[j, 1]
            xi2 = self.drays[j, 2]
            ni = 0
            for i in range(ns):
                L = self.seg_len[sel[i]]
                ux = self.seg_v[sel[i], 0] / L
                uy = self.seg_v[sel[i], 1] / L
                uz = self.seg_v[sel[i], 2] / L
                wx = p[0] - self.seg_a[sel[i], 0]
                wy = p[1] - self.seg_a[sel[i], 1]
                wz = p[2] - self.seg_a[sel[i], 2]
                t_lo = INFINITY
                t_hi = -INFINITY
                # cylinder body clipped to the slab 0 <= axial <= L
                xu = xi0 * ux + xi1 * uy + xi2 * uz
                wu = wx * ux + wy * uy + wz * uz
                px = xi0 - xu * ux
                py = xi1 - xu * uy
                pz = xi2 - xu * uz
                qx = wx - wu * ux
                qy = wy - wu * uy
                qz = wz - wu * uz
                qa = px * px + py * py + pz * pz
                qb = px * qx + py * qy + pz * qz
                qc = qx * qx + qy * qy + qz * qz - a * a
                c_lo = 1.0
                c_hi = -1.0
                if qa < 1e-14:
                    if qc <= 0.0:
                        c_lo = -INFINITY
                        c_hi = INFINITY
                else:
                    disc = qb * qb - qa * qc
                    if disc > 0.0:
                        sq = sqrt(disc)
                        c_lo = (-qb - sq) / qa
                        c_hi = (-qb + sq) / qa
                if c_hi > c_lo:
                    if fabs(xu) < 1e-14:
                        if wu >= 0.0 and wu <= L:
                            s_lo = -INFINITY
                            s_hi = INFINITY
                        else:
                            s_lo = 1.0
                            s_hi = -1.0
                    elif xu > 0.0:
                        s_lo = -wu / xu
                        s_hi = (L - wu) / xu
                    else:
                        s_lo = (L - wu) / xu
                        s_hi = -wu / xu
                    if s_lo > c_lo:
                        c_lo = s_lo
                    if s_hi < c_hi:
                        c_hi = s_hi
                    if c_hi > c_lo:
                        t_lo = c_lo
                        t_hi = c_hi
                # end caps
                bb = xi0 * wx + xi1 * wy + xi2 * wz
                cc = wx * wx + wy * wy + wz * wz - a * a
                disc = bb * bb - cc
                if disc > 0.0:
                    sq = sqrt(disc)
                    e_lo = -bb - sq
                    e_hi = -bb + sq
                    if e_lo < t_lo:
                        t_lo = e_lo
                    if e_hi > t_hi:
                        t_hi = e_hi
                wx = wx - self.seg_v[sel[i], 0]
                wy = wy - self.seg_v[sel[i], 1]
                wz = wz - self.seg_v[sel[i], 2]
                bb = xi0 * wx + xi1 * wy + xi2 * wz
                cc = wx * wx + wy * wy + wz * wz - a * a
                disc = bb * bb - cc
                if disc > 0.0:
                    sq = sqrt(disc)
                    e_lo = -bb - sq
                    e_hi = -bb + sq
                    if e_lo < t_lo:
                        t_lo = e_lo
                    if e_hi > t_hi:
                        t_hi = e_hi
                if t_lo < 0.0:
                    t_lo = 0.0
                if t_hi > rho:
                    t_hi = rho
                if t_hi > t_lo:
                    lo[ni] = t_lo
                    hi[ni] = t_hi
                    ni += 1
            if ni == 0:
                continue
            sort_pairs(lo, hi, ni)
            acc = 0.0
            cur_lo = lo[0]
            cur_hi = hi[0]
            for i in range(1, ni):
                if lo[i] <= cur_hi:
                    if hi[i] > cur_hi:
                        cur_hi = hi[i]
                else:
                    acc += cur_hi * cur_hi * cur_hi - cur_lo * cur_lo * cur_lo
                    cur_lo = lo[i]
                    cur_hi = hi[i]
            acc += cur_hi * cur_hi * cur_hi - cur_lo * cur_lo * cur_lo
            total += self.dray_w[j] * acc / rho3
        return total

    cdef double d2_at(self, double* p) noexcept nogil:
        cdef double s, d, rho, lo, hi, res, a
        cdef int j_lo, j_hi, j
        d = self.dist(p, &s)
        if d <= 0.0:
            return NAN
        rho = self.avg_radius(d)
        lo = d - rho
        hi = d + rho
        j_lo = <int>floor(log2(lo)) + 1
        j_hi = <int>floor(log2(hi))
        if j_hi < j_lo:
            return self.d1_of(d)
        res = ldexp(1.0, j_hi)
        for j in range(j_lo, j_hi + 1):
            a = ldexp(1.0, j)
            res -= 0.5 * a * self.capsule_fraction(p, rho, a)
        return res

    cdef double d0_at(self, double* p) noexcept nogil:
        cdef double s, d, rho, tot = 0.0
        cdef double q[3]
        cdef int i
        d = self.dist(p, &s)
        if d <= 0.0:
            return NAN
        rho = self.avg_radius(d)
        for i in range(self.nd):
            q[0] = p[0] + rho * self.dx[i, 0]
            q[1] = p[1] + rho * self.dx[i, 1]
            q[2] = p[2] + rho * self.dx[i, 2]
            tot += self.dw[i] * self.d2_at(q)
        return tot

    # ------------------------------------------------------------------ outer averages
    cdef double g2_at(self, double* p) noexcept nogil:
        cdef double r = self.d0_at(p) / 8.0, tot = 0.0
        cdef double q[3]
        cdef int i
        for i in range(self.no):
            q[0] = p[0] + r * self.ox[i, 0]
            q[1] = p[1] + r * self.ox[i, 1]
            q[2] = p[2] + r * self.ox[i, 2]
            tot += self.ow[i] * self.g1_at(q)
        return tot

    cdef double g0_at(self, double* p) noexcept nogil:
        cdef double r = self.d0_at(p) / 8.0, tot = 0.0
        cdef double q[3]
        cdef int i
        for i in range(self.no):
            q[0] = p[0] + r * self.ox[i, 0]
            q[1] = p[1] + r * self.ox[i, 1]
            q[2] = p[2] + r * self.ox[i, 2]
            tot += self.ow[i] * self.g2_at(q)
        return tot

    cdef double cutoff(self, double* p) noexcept nogil:
        cdef double ex = p[0] - self.cen0, ey = p[1] - self.cen1, ez = p[2] - self.cen2
        cdef double rr = sqrt(ex * ex + ey * ey + ez * ez)
        return smooth_cut((rr - (self.r0 - self.width)) / self.width)

    cdef double f0_at(self, double* p) noexcept nogil:
        cdef double s, c
        cdef double d = self.dist(p, &s)
        if d < self.floor_d:
            return NAN
        c = self.cutoff(p)
        if c == 0.0:
            return 0.0
        return c * self.g0_at(p)

    # ------------------------------------------------------------------ python API
    def eval(self, points, str what):
        cdef double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        cdef Py_ssize_t n = P.shape[0], i
        out = np.empty(n)
        cdef double[::1] o = out
        cdef double s
        cdef double q[3]
        cdef int code
        codes = {"dist": 0, "g": 1, "g1": 2, "d1": 3, "d2": 4, "d0": 5, "g2": 6, "g0": 7, "f0": 8, "cut": 9}
        if what not in codes:
            raise ValueError(what)
        code = codes[what]
        with nogil:
            for i in range(n):
                q[0] = P[i, 0]
                q[1] = P[i, 1]
                q[2] = P[i, 2]
                if code == 0:
                    o[i] = self.dist(q, &s)
                elif code == 1:
                    o[i] = self.g_point(q)
                elif code == 2:
                    o[i] = self.g1_at(q)
                elif code == 3:
                    o[i] = self.d1_of(self.dist(q, &s))
                elif code == 4:
                    o[i] = self.d2_at(q)
                elif code == 5:
                    o[i] = self.d0_at(q)
                elif code == 6:
                    o[i] = self.g2_at(q)
                elif code == 7:
                    o[i] = self.g0_at(q)
                elif code == 8:
                    o[i] = self.f0_at(q)
                else:
                    o[i] = self.cutoff(q)
        return out

    def nearest(self, points):
        """Distance and nearest arclength for each point."""
        cdef double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        cdef Py_ssize_t n = P.shape[0], i
        d = np.empty(n)
        sv = np.empty(n)
        cdef double[::1] dv = d
        cdef double[::1] ss = sv
        cdef double s
        cdef double q[3]
        with nogil:
            for i in range(n):
                q[0] = P[i, 0]
                q[1] = P[i, 1]
                q[2] = P[i, 2]
                dv[i] = self.dist(q, &s)
                ss[i] = s
        return d, sv


# ---------------------------------------------------------------------- potentials

def cell_potential(centers, sizes, dens, targets, double theta_near):
    """(1/4pi) sum dens*size^3/rho over cubes, splitting once when size/rho > theta_near.

    Returns the potentials and the number of split interactions.  Raises if a
    target sits on a child centre (unsplittable cell).
    """
    cdef double[:, ::1] C = np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, 3)
    cdef double[::1] H = np.ascontiguousarray(sizes, dtype=np.float64)
    cdef double[::1] W = np.ascontiguousarray(dens, dtype=np.float64)
    cdef double[:, ::1] T = np.ascontiguousarray(targets, dtype=np.float64).reshape(-1, 3)
    cdef Py_ssize_t nc = C.shape[0], nt = T.shape[0], i, j
    out = np.zeros(nt)
    cdef double[::1] o = out
    cdef double ex, ey, ez, r, h, acc, vol, qx, qy, qz, rc
    cdef long nsplit = 0
    cdef int a, b, c, bad = 0
    with nogil:
        for j in range(nt):
            acc = 0.0
            for i in range(nc):
                if W[i] == 0.0:
                    continue
                ex = T[j, 0] - C[i, 0]
                ey = T[j, 1] - C[i, 1]
                ez = T[j, 2] - C[i, 2]
                r = sqrt(ex * ex + ey * ey + ez * ez)
                h = H[i]
                vol = h * h * h
                if h > theta_near * r:
                    nsplit += 1
                    for a in range(2):
                        for b in range(2):
                            for c in range(2):
                                qx = ex - (a - 0.5) * 0.5 * h
                                qy = ey - (b - 0.5) * 0.5 * h
                                qz = ez - (c - 0.5) * 0.5 * h
                                rc = sqrt(qx * qx + qy * qy + qz * qz)
                                if rc < 1e-14 * h:
                                    bad = 1
                                else:
                                    acc += W[i] * 0.125 * vol / rc
                else:
                    acc += W[i] * vol / r
            o[j] = acc / FOUR_PI
    if bad:
        raise ValueError("target coincides with an unsplittable source cell")
    return out, int(nsplit)


def layer_potential(points, normals, q, mu, targets):
    """sum_i q_i/rho_i + mu_i n_i.(P_i - M)/rho_i^3 at each target M."""
    cdef double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    cdef double[:, ::1] N = np.ascontiguousarray(normals, dtype=np.float64).reshape(-1, 3)
    cdef double[::1] Q = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[::1] MU = np.ascontiguousarray(mu, dtype=np.float64)
    cdef double[:, ::1] T = np.ascontiguousarray(targets, dtype=np.float64).reshape(-1, 3)
    cdef Py_ssize_t ns = P.shape[0], nt = T.shape[0], i, j
    out = np.zeros(nt)
    cdef double[::1] o = out
    cdef double ex, ey, ez, r2, r, acc
    with nogil:
        for j in range(nt):
            acc = 0.0
            for i in range(ns):
                ex = P[i, 0] - T[j, 0]
                ey = P[i, 1] - T[j, 1]
                ez = P[i, 2] - T[j, 2]
                r2 = ex * ex + ey * ey + ez * ez
                r = sqrt(r2)
                acc += Q[i] / r + MU[i] * (N[i, 0] * ex + N[i, 1] * ey + N[i, 2] * ez) / (r2 * r)
            o[j] = acc
    return out
