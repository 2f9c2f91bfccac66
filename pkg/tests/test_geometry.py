import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chordarc.geometry import (
    CurveError, SelfIntersectionError, SubdivisionError, beta_cell_membership, build_curve,
    chord_arc_constant, cover_membership, distance_bruteforce, distance_to_curve, dyadic_points,
    first_hit, helix_curve, in_tilde, load_curve, max_level, omega_cells, quarter_circle_curve,
    sigma_shell, subdivide,
)


def test_segment_basics(segment):
    assert segment.total_length == 2.0
    assert segment.chord_arc_C0 == pytest.approx(1.0)
    np.testing.assert_allclose(segment.centroid, 0.0, atol=1e-15)


def test_rejects_bad_polylines():
    with pytest.raises(CurveError):
        build_curve([[0, 0, 0]])
    with pytest.raises(CurveError):
        build_curve([[0, 0, 0], [0, 0, 0], [1, 0, 0]])
    with pytest.raises(CurveError):
        build_curve([[0, 0, 0], [1, 0, 0], [0, 0, 0]])
    with pytest.raises(SelfIntersectionError) as info:
        build_curve([[0, 0, 0], [2, 0, 0], [1, 1, 0], [1, -1, 0]])
    assert info.value.pair == (0, 2)


def test_chord_arc_of_quarter_circle():
    # arc/chord on a circle is theta / (2 sin(theta/2)), worst at pi/2
    c = quarter_circle_curve(257)
    assert c.chord_arc_C0 == pytest.approx((np.pi / 2) / (2 * np.sin(np.pi / 4)), rel=1e-3)


def test_chord_arc_holds_on_random_pairs():
    c = helix_curve()
    rng = np.random.default_rng(1)
    s = rng.uniform(0, c.total_length, size=(10_000, 2))
    p = c.point_at(s)
    chord = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    arc = np.abs(s[:, 0] - s[:, 1])
    assert np.all(arc <= c.chord_arc_C0 * chord + 1e-9)


@pytest.mark.parametrize("p, d, s", [((0, 1, 0), 1.0, 1.0), ((2, 0, 0), 1.0, 2.0), ((-3, 0, 4), np.hypot(2, 4), 0.0)])
def test_distance_examples(segment, p, d, s):
    dist, nearest, arc = distance_to_curve(segment, p)
    assert dist == pytest.approx(d)
    assert arc == pytest.approx(s)
    np.testing.assert_allclose(nearest, segment.point_at(s))


def test_distance_tie_takes_smallest_arclength():
    # every chord midpoint of the inscribed polygon is equally close to the centre
    c = quarter_circle_curve(64)
    d, _, s = distance_to_curve(c, (0, 0, 0))
    half = 0.5 * c.cumulative_arclength[1]
    assert d == pytest.approx(np.cos(np.pi / 2 / 63 / 2), rel=1e-12)
    assert s == pytest.approx(half, rel=1e-9)
    dense = np.linspace(0, c.total_length, 200_001)
    assert d <= np.linalg.norm(c.point_at(dense), axis=1).min() + 1e-12


def test_hash_matches_bruteforce():
    c = helix_curve(turns=2.0, n_vertices=400)
    rng = np.random.default_rng(2)
    pts = rng.uniform(-1, 1, size=(300, 3))
    d_ref, _, _ = distance_bruteforce(c, pts)
    d_hash = np.array([distance_to_curve(c, p)[0] for p in pts])
    np.testing.assert_allclose(d_hash, d_ref, rtol=0, atol=1e-12)


def test_dyadic_nesting(segment):
    c = helix_curve()
    for n in range(6):
        coarse, fine = dyadic_points(c, n), dyadic_points(c, n + 1)
        np.testing.assert_allclose(fine[::2], coarse, atol=1e-12)
    cov = subdivide(segment, 3)
    assert cov.spacing == 0.25 and len(cov.points) == 9


def test_chord_lower_bound_between_neighbours():
    c = helix_curve()
    for n in range(8):
        p = dyadic_points(c, n)
        chords = np.linalg.norm(np.diff(p, axis=0), axis=1)
        assert np.all(chords >= c.total_length * 2.0 ** -n / c.chord_arc_C0 - 1e-12)


def test_subdivision_floor():
    c = build_curve([[0, 0, 0], [1e-6, 0, 0]], tol=1e-9)
    assert max_level(c) == 9
    dyadic_points(c, 9)
    with pytest.raises(SubdivisionError) as info:
        dyadic_points(c, 12)
    assert info.value.max_level == 9


def test_cover_membership_examples(segment):
    m = cover_membership(segment, 1, (0, 1.5, 0))
    assert m.in_tilde and m.in_shell
    # (-1, 0, 0) is 1.80 away, so the first ball already holds p
    assert m.omega_cell.index == 0
    assert cover_membership(segment, 1, (0.9, 1.5, 0)).omega_cell.index == 1
    assert not cover_membership(segment, 1, (0, 10.0, 0)).in_tilde
    inner = cover_membership(segment, 1, (0, 0.5, 0))
    assert inner.in_tilde and not inner.in_shell and inner.omega_cell is None


def test_shell_distance_bound(segment):
    # 1/2 Lambda_n <= d <= 2 Lambda_n inside the shell
    rng = np.random.default_rng(3)
    c = helix_curve()
    for curve in (segment, c):
        for n in range(5):
            lam = curve.total_length * 2.0 ** -n
            pts = curve.point_at(rng.uniform(0, curve.total_length, 4000)) + rng.normal(size=(4000, 3)) * lam
            shell = in_tilde(curve, n, pts) & ~in_tilde(curve, n + 1, pts)
            d, _, _ = distance_bruteforce(curve, pts[shell])
            assert shell.sum() > 50
            assert d.min() >= 0.5 * lam - 1e-12 and d.max() <= 2 * lam + 1e-12


def test_first_hit_prefers_smallest_index():
    centers = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    assert first_hit(np.array([[0.5, 0, 0]]), centers, 1.0)[0] == 0
    assert first_hit(np.array([[1.8, 0, 0]]), centers, 1.0)[0] == 1
    assert first_hit(np.array([[5.0, 0, 0]]), centers, 1.0)[0] == -1


def test_beta_cells_disjoint(segment):
    rng = np.random.default_rng(4)
    pts = rng.uniform(-3, 3, size=(500, 3))
    centers = dyadic_points(segment, 1)
    for p in pts:
        hits = [k for k in range(len(centers)) if beta_cell_membership(segment, 3, k, p)]
        assert len(hits) <= 1
    assert beta_cell_membership(segment, 3, 0, (-1, 0.3, 0))
    with pytest.raises(ValueError):
        beta_cell_membership(segment, 1, 0, (0, 0, 0))


@pytest.mark.parametrize("d, n", [(0.75, 0), (1.0, 0), (3.0, 2), (0.5, -1), (1e-3, -9)])
def test_sigma_shell(d, n):
    assert sigma_shell(d) == n


@given(st.floats(min_value=1e-8, max_value=1e8))
def test_sigma_shell_interval(d):
    n = sigma_shell(d)
    assert 2.0 ** (n - 1) < d <= 2.0 ** n


def test_sigma_shell_rejects_nonpositive():
    with pytest.raises(ValueError):
        sigma_shell(0.0)


def test_omega_cells_agree_with_cover_membership(segment):
    rng = np.random.default_rng(5)
    pts = rng.uniform(-2, 2, size=(200, 3)) * [1, 0.5, 0.5]
    level, index = omega_cells(segment, pts, 8)
    for p, n, k in zip(pts, level, index):
        if 0 <= n < 8:
            m = cover_membership(segment, int(n), p)
            assert m.in_shell and m.omega_cell.index == k


def test_load_curve_csv_and_json(tmp_path):
    csv_path = tmp_path / "c.csv"
    csv_path.write_text("x,y,z\n0,0,0\n1,0,0\n1,1,0\n")
    json_path = tmp_path / "c.json"
    json_path.write_text(json.dumps({"vertices": [[0, 0, 0], [1, 0, 0], [1, 1, 0]]}))
    a, b = load_curve(csv_path), load_curve(json_path)
    assert a.total_length == b.total_length == 2.0
    bad = tmp_path / "bad.csv"
    bad.write_text("0,0,0\n1,0,zz\n")
    with pytest.raises(CurveError):
        load_curve(bad)


def test_chord_arc_constant_of_right_angle():
    c = build_curve([[0, 0, 0], [1, 0, 0], [1, 1, 0]])
    assert chord_arc_constant(c) == pytest.approx(np.sqrt(2), rel=1e-9)
