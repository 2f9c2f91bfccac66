"""The ten acceptance criteria, one test each.

Every test prints a ``PASS``/``FAIL criterion N`` line (collected again in the
terminal summary) before asserting.
"""
import json
import time

import numpy as np
import pytest

from chordarc import verify as V
from chordarc.cli import main
from chordarc.geometry import distances, dyadic_points, helix_curve, omega_cells, segment_curve
from chordarc.modulus import PowerModulus
from chordarc.quadrature import SourceDensity, build_octree, newtonian_potential
from chordarc.smooth_distance import SmoothDistance

from conftest import ACCEPTANCE_LINES

LEVELS = (3, 4, 5)


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def test_1_newton_shell():
    t0 = time.perf_counter()
    targets = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    dist = lambda p: np.sqrt(((p[:, None, :] - targets[None]) ** 2).sum(-1)).min(1)
    mesh = build_octree(dist, (np.full(3, -1.0), np.full(3, 1.0)), 0.4,
                        exclusion=lambda p: (p * p).sum(1) > 1.0, min_size=1 / 64)
    pot = newtonian_potential(SourceDensity(lambda p: np.ones(len(p))), mesh, targets)
    err = np.abs(pot - [0.5, 1 / 6])
    elapsed = time.perf_counter() - t0
    ok = err.max() <= 1e-3 and elapsed < 10
    assert report(1, ok, f"Newton shell errors centre {err[0]:.2e}, distance 2 {err[1]:.2e} "
                         f"(tol 1e-3), {elapsed:.1f}s")


def test_2_representation_identity():
    t0 = time.perf_counter()
    targets = np.random.default_rng(2).uniform(-1, 1, (20, 3))
    r4 = V.representation_check(V.gaussian_field, V.gaussian_laplacian, targets, theta=0.4)
    r2 = V.representation_check(V.gaussian_field, V.gaussian_laplacian, targets, theta=0.2)
    elapsed = time.perf_counter() - t0
    ok = r4 <= 1e-2 and r4 / r2 >= 1.5 and elapsed < 60
    assert report(2, ok, f"representation residual {r4:.2e} at theta 0.4, {r2:.2e} at 0.2 "
                         f"(shrink {r4 / r2:.1f}x), {elapsed:.1f}s")


@pytest.mark.slow
def test_3_extension_bounds(default_ext):
    t0 = time.perf_counter()
    rows = V.extension_bounds(default_ext, range(2, 7), samples=500, rng=np.random.default_rng(3))
    bands = {k: V.band_ratio([r[k] for r in rows]) for k in ("g0_minus_g", "gradient", "laplacian")}
    elapsed = time.perf_counter() - t0
    ok = all(b <= V.BAND_RATIO for b in bands.values()) and elapsed < 300
    detail = ", ".join(f"{k} band {b:.2f}" for k, b in bands.items())
    assert report(3, ok, f"extension shells 2..6: {detail}, {elapsed:.0f}s")


def test_4_smooth_distance(segment):
    t0 = time.perf_counter()
    sd = SmoothDistance(segment)
    rng = np.random.default_rng(4)
    pts = rng.uniform(-2.5, 2.5, (1000, 3))
    d = sd.distance(pts)
    lower_ok = all(np.all(f(pts) >= 0.5 * d) for f in (sd.d1, sd.d2, sd.d0))
    e = np.eye(3)
    ratio, grad, hess = [], [], []
    for n in range(-6, 1):
        x = rng.uniform(-1, 1, 200)
        r = 2.0 ** n * rng.uniform(0.5, 1.0, 200) + 1e-15
        phi = rng.uniform(0, 2 * np.pi, 200)
        p = np.stack([x, r * np.cos(phi), r * np.sin(phi)], 1)
        dp = sd.distance(p)
        h = dp / 64
        c = sd.d0(p)
        plus = np.stack([sd.d0(p + h[:, None] * e[i]) for i in range(3)], 1)
        minus = np.stack([sd.d0(p - h[:, None] * e[i]) for i in range(3)], 1)
        ratio.append((c / dp).max())
        grad.append(np.linalg.norm((plus - minus) / (2 * h[:, None]), axis=1).max())
        hess.append((np.abs(plus + minus - 2 * c[:, None]).max(1) / h ** 2 * dp).max())
    bands = [V.band_ratio(v) for v in (ratio, grad, hess)]
    elapsed = time.perf_counter() - t0
    ok = lower_ok and all(b <= V.BAND_RATIO for b in bands) and elapsed < 120
    assert report(4, ok, f"smooth distance lower bounds {'hold' if lower_ok else 'violated'}, "
                         f"d0/d max {max(ratio):.2f} band {bands[0]:.2f}, gradient band {bands[1]:.2f}, "
                         f"hessian*d band {bands[2]:.2f}, {elapsed:.0f}s")


@pytest.fixture(scope="module")
def decay(approximants, abs_sqrt, sqrt_modulus):
    t0 = time.perf_counter()
    rows = []
    for n in LEVELS:
        a = approximants(n)
        rng = np.random.default_rng([7, n])
        w = float(sqrt_modulus(a.delta))
        E = V.sup_error(a, abs_sqrt, 200)
        G = V.shell_gradient(a, a.delta, 200, rng)
        H = V.harmonicity_residual(a, 200, rng)
        rows.append((n, E / w, G * a.delta / w, H))
    return rows, time.perf_counter() - t0


@pytest.mark.slow
def test_5_direct_theorem(decay):
    rows, elapsed = decay
    e_band = V.band_ratio([r[1] for r in rows])
    g_band = V.band_ratio([r[2] for r in rows])
    harm = max(r[3] for r in rows)
    ok = e_band <= V.BAND_RATIO and g_band <= V.BAND_RATIO and harm <= 1e-3 and elapsed < 600
    per = "; ".join(f"n={n} E/w {e:.3f} G*d/w {g:.4f}" for n, e, g, _ in rows)
    assert report(5, ok, f"direct theorem E band {e_band:.2f}, G band {g_band:.2f}, "
                         f"harmonicity {harm:.1e} ({per}), {elapsed:.0f}s")


@pytest.mark.slow
def test_6_mass_balance(approximants):
    per_cell, glob = 0.0, 0.0
    for n in LEVELS:
        a = approximants(n)
        per_cell = max(per_cell, float(np.abs(a.balance_residuals()).max() / np.abs(a.masses).max()))
        glob = max(glob, a.global_balance())
    ok = per_cell <= 1e-12 and glob <= 1e-9
    assert report(6, ok, f"mass balance per-cell {per_cell:.1e} (tol 1e-12), global {glob:.1e} (tol 1e-9)")


@pytest.mark.slow
def test_7_converse_recovery(approximants, abs_sqrt, sqrt_modulus):
    family = {2.0 ** -n: approximants(n) for n in LEVELS}
    t0 = time.perf_counter()
    rep = V.holder_recovery(family, abs_sqrt, sqrt_modulus, pairs=1000, rng=np.random.default_rng(7))
    elapsed = time.perf_counter() - t0
    finite = bool(np.isfinite(rep.bounds / sqrt_modulus(rep.chords)).all())
    band = rep.ratio_band
    ok = finite and band <= V.BAND_RATIO and elapsed < 180
    sups = ", ".join(f"{s:.2f}" for s in rep.bin_sups)
    assert report(7, ok, f"converse B/w per octave [{sups}] band {band:.2f}, {elapsed:.0f}s")


def test_8_sharpness():
    t0 = time.perf_counter()
    m = PowerModulus(0.5)
    deltas, lams = V.default_sharpness_sequences(6)
    rep = V.sharpness_harness(m, deltas, lams)
    closed = V.sharpness_closed_form(0.5, np.sqrt(lams / 2.0))
    dev = float(np.abs(rep.ratios() - closed).max())
    increasing = bool(np.all(np.diff(rep.ratios()) > 0))
    floor = V.log_floor_check(m, np.geomspace(1e-6, 1.0, 100))
    elapsed = time.perf_counter() - t0
    ok = dev <= 1e-9 and increasing and rep.ell_star is not None and floor >= -1e-9 and elapsed < 1
    assert report(8, ok, f"sharpness closed-form deviation {dev:.1e}, ell* = {rep.ell_star}, "
                         f"log floor margin {floor:.2e}, {elapsed * 1e3:.0f}ms")


def test_9_geometry_exactness():
    t0 = time.perf_counter()
    violations, pairs = 0, 0
    rng = np.random.default_rng(9)
    n_max, per_curve, draw = 9, 5000, 8000
    for curve in (segment_curve(), helix_curve()):
        L = curve.total_length
        levels = {m: dyadic_points(curve, m) for m in range(n_max + 4)}
        u, v = rng.normal(size=(2, draw, 3))
        u /= np.linalg.norm(u, axis=1)[:, None]
        v /= np.linalg.norm(v, axis=1)[:, None]
        p = curve.point_at(rng.uniform(0, L, draw)) + (L * 2.0 ** -rng.uniform(1, n_max, draw))[:, None] * u
        d = distances(curve, p)[0]
        # p' in B(p, d/8) lies in the same or a neighbouring cell
        q = p + (d / 8 * rng.uniform(0, 1, draw) ** (1 / 3))[:, None] * v
        n, k = omega_cells(curve, p, n_max + 3)
        n1, k1 = omega_cells(curve, q, n_max + 3)
        use = np.flatnonzero((n >= 0) & (n <= n_max) & (n1 >= 0))[:per_curve]
        n, k, n1, k1, d = n[use], k[use], n1[use], k1[use], d[use]
        lam = L * 2.0 ** -n
        violations += int(((d < 0.5 * lam - 1e-12) | (d > 2 * lam + 1e-12)).sum())
        M = np.array([levels[a][b] for a, b in zip(n, k)])
        M1 = np.array([levels[a][b] for a, b in zip(n1, k1)])
        violations += int((np.linalg.norm(M - M1, axis=1) >= 55 * lam).sum())
        violations += int(((n1 < n - 2) | (n1 > n + 3)).sum())
        pairs += len(use)
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and pairs == 2 * per_curve and elapsed < 60
    assert report(9, ok, f"geometry: {violations} violations over {pairs} neighbour pairs, {elapsed:.0f}s")


@pytest.mark.slow
def test_10_determinism(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"curve": "segment", "modulus": {"family": "power", "alpha": 0.5},
                               "boundary": {"builtin": "abs_sqrt"}, "levels": [3], "seed": 11}))
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        main(["run", str(cfg), "--out", str(out)])
        outs.append((out / "decay.csv").read_bytes())
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    assert report(10, ok, f"determinism: two runs {'byte-identical' if ok else 'differ'} ({len(outs[0])} bytes)")
