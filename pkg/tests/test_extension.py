import csv

import numpy as np
import pytest

from chordarc.extension import ExtensionError, PseudoharmonicExtension, eval_f0, eval_g, gradient_f0
from chordarc.geometry import build_curve, dyadic_points
from chordarc.modulus import builtin_boundary


@pytest.fixture(scope="module")
def const_ext(segment, sqrt_modulus):
    return PseudoharmonicExtension(segment, builtin_boundary(segment, "constant", value=2.5), sqrt_modulus,
                                   n_max=8, ray_degree=7)


@pytest.fixture(scope="module")
def linear_ext(segment, sqrt_modulus):
    return PseudoharmonicExtension(segment, builtin_boundary(segment, "coordinate"), sqrt_modulus, n_max=8)


def owner_oracle(curve, bd, p, n_max):
    """Direct set evaluation: the first ball of the finest level whose union holds p."""
    lam = curve.total_length
    value = 0.0
    for m in range(n_max + 1):
        pts = dyadic_points(curve, m)
        r = 2 * lam * 2.0 ** -m
        inside = np.flatnonzero(np.linalg.norm(pts - p, axis=1) <= r)
        if len(inside) == 0:
            break
        value = bd(np.array([inside[0] * lam * 2.0 ** -m]))[0]
    return value


def perpendicular(x, d, phi=0.3):
    return np.stack([x, d * np.cos(phi) * np.ones_like(x), d * np.sin(phi) * np.ones_like(x)], -1)


def test_g_matches_ownership_oracle(segment, linear_ext):
    # (0, 1.4, 0) sits in the level-1 shell and the ball around (-1, 0, 0) reaches it first
    assert eval_g(linear_ext, (0.0, 1.4, 0.0)) == -1.0
    rng = np.random.default_rng(0)
    pts = rng.uniform(-3, 3, size=(300, 3))
    got = linear_ext.eval_g(pts)
    want = [owner_oracle(segment, linear_ext.bd, p, 8) for p in pts]
    np.testing.assert_array_equal(got, want)


def test_g_vanishes_outside_the_cover(linear_ext):
    assert linear_ext.eval_g((0.0, 9.0, 0.0)) == 0.0


def test_constant_data_is_reproduced(const_ext):
    rng = np.random.default_rng(1)
    pts = perpendicular(rng.uniform(-1, 1, 50), 2.0 ** -rng.uniform(0, 6, 50))
    for f in (const_ext.eval_g, const_ext.eval_g1, const_ext.eval_g2, const_ext.eval_g0):
        np.testing.assert_allclose(f(pts), 2.5, atol=1e-12)
    np.testing.assert_allclose(const_ext.eval_f0(pts), 2.5, atol=1e-12)
    g, lap = const_ext.gradient_and_laplacian(pts)
    assert np.abs(g).max() <= 1e-8
    assert np.abs(lap * const_ext.distance(pts) ** 2).max() <= 1e-8


def test_compact_support(const_ext, default_ext):
    rng = np.random.default_rng(2)
    for ext in (const_ext, default_ext):
        u = rng.normal(size=(100, 3))
        u /= np.linalg.norm(u, axis=1)[:, None]
        far = ext.curve.centroid + u * ext.R0 * rng.uniform(1.0, 2.0, (100, 1))
        assert np.all(ext.eval_f0(far) == 0.0)
        assert eval_f0(ext, ext.curve.centroid + [ext.R0, 0, 0]) == 0.0


def test_cutoff_profile(const_ext):
    c = const_ext.curve.centroid
    r = np.linspace(0, const_ext.R0, 200)
    cut = const_ext.cutoff(c + np.outer(r, [0, 1.0, 0]))
    assert cut[0] == 1.0 and cut[-1] == 0.0
    assert np.all(np.diff(cut) <= 1e-15)


def test_g1_close_to_g(default_ext, sqrt_modulus):
    rng = np.random.default_rng(3)
    d = 2.0 ** -rng.uniform(0, 7, 1000)
    pts = perpendicular(rng.uniform(-1, 1, 1000), d, 1.1)
    ratio = np.abs(default_ext.eval_g1(pts) - default_ext.eval_g(pts)) / sqrt_modulus(d)
    assert np.isfinite(ratio).all() and ratio.max() < 10


@pytest.mark.parametrize("field", ["g1", "f0"])
def test_boundary_fidelity(default_ext, sqrt_modulus, abs_sqrt, field):
    # |h(M* + d nu) - f(M*)| / omega(d) for d = 2^-j, j = 3..8, one constant for all j
    rng = np.random.default_rng(4)
    s = rng.uniform(0.05, 1.95, 60)
    fn = default_ext.eval_g1 if field == "g1" else default_ext.eval_f0
    sups = []
    for j in range(3, 9):
        d = 2.0 ** -j
        vals = fn(perpendicular(s - 1.0, d))
        sups.append((np.abs(vals - abs_sqrt(s)) / sqrt_modulus(d)).max())
    assert max(sups) / min(sups) <= 4


def test_mirror_symmetry_with_reversed_orientation(segment, abs_sqrt, sqrt_modulus):
    # first-hit ownership favours small k, so the mirror image of f0 is the extension
    # built on the reversed polyline
    rev = build_curve(segment.vertices[::-1])
    fwd = PseudoharmonicExtension(segment, abs_sqrt, sqrt_modulus, n_max=8, ray_degree=7)
    bwd = PseudoharmonicExtension(rev, builtin_boundary(rev, "abs_sqrt"), sqrt_modulus, n_max=8, ray_degree=7)
    rng = np.random.default_rng(7)
    p = perpendicular(rng.uniform(-1, 1, 20), 2.0 ** -rng.uniform(1, 5, 20), 0.4)
    q = p * [-1.0, 1.0, 1.0]
    np.testing.assert_allclose(bwd.eval_f0(q), fwd.eval_f0(p), rtol=1e-10)
    np.testing.assert_allclose(bwd.gradient_f0(q), fwd.gradient_f0(p) * [-1.0, 1.0, 1.0], rtol=1e-7, atol=1e-9)


def test_linear_data_laplacian_scales_like_inverse_distance(linear_ext):
    # Lipschitz data: sup |lap f0| * d is the same size in every shell
    rng = np.random.default_rng(6)
    sups = []
    for n in range(2, 7):
        p = linear_ext.shell_samples(n, 200, rng)
        _, lap = linear_ext.gradient_and_laplacian(p)
        sups.append(np.abs(lap * linear_ext.distance(p)).max())
    assert max(sups) / min(sups) <= 2


def test_transversal_continuity(default_ext):
    # across the x = 0 interfaces of cells, f0 has no jumps: increments shrink with the step
    def worst(step):
        x = np.arange(-0.5, 0.5, step)
        return np.abs(np.diff(default_ext.eval_f0(perpendicular(x, 0.1)))).max()

    assert worst(1e-3) / worst(1e-4) >= 5


def test_errors(segment, abs_sqrt, sqrt_modulus, default_ext):
    with pytest.raises(ExtensionError):
        default_ext.eval_g((0.3, 0.0, 0.0))
    with pytest.raises(ExtensionError):
        default_ext.gradient_f0((0.0, 0.2, 0.0), h_ratio=0.5)
    with pytest.raises(ExtensionError):
        gradient_f0(default_ext, (0.3, 0.0, 0.0))
    with pytest.raises(ExtensionError):
        PseudoharmonicExtension(segment, abs_sqrt, sqrt_modulus, n_max=40)
    with pytest.raises(ExtensionError):
        PseudoharmonicExtension(segment, abs_sqrt, sqrt_modulus, R0=1.5)


def test_floor_returns_boundary_value(default_ext, abs_sqrt):
    p = np.array([[0.44, 0.1 * default_ext.floor, 0.0], [0.44, 0.0, 0.0]])
    np.testing.assert_allclose(default_ext.eval_f0(p), abs_sqrt(np.array([1.44, 1.44])), rtol=1e-12)


def test_sample_field_csv(default_ext, tmp_path):
    pts = perpendicular(np.linspace(-0.5, 0.5, 5), 0.2)
    path = tmp_path / "field.csv"
    rows = default_ext.sample_field(pts, path)
    with open(path) as fh:
        data = list(csv.reader(fh))
    assert data[0] == ["x", "y", "z", "d", "f0", "grad_norm", "laplacian"]
    np.testing.assert_allclose(np.array(data[1:], float), rows, rtol=0, atol=0)
    np.testing.assert_allclose(rows[:, 3], 0.2, rtol=1e-12)


def test_shell_samples_lie_in_their_shell(default_ext):
    rng = np.random.default_rng(5)
    for n in (2, 4):
        pts = default_ext.shell_samples(n, 200, rng)
        lam = default_ext.lam * 2.0 ** -n
        d = default_ext.distance(pts)
        assert d.min() >= 0.5 * lam - 1e-12 and d.max() <= 2 * lam + 1e-12
