import numpy as np
import pytest

from chordarc.smooth_distance import SmoothDistance, d0, d1, d2

# nested Monte Carlo average of d1 at (0, 1.05, 0) on the segment, 4e6 samples
D0_MC, D0_MC_SIGMA = 0.946566, 1.5e-4


@pytest.fixture(scope="module")
def sd(segment):
    return SmoothDistance(segment)


def perpendicular_points(d, rng):
    """Points at exact distance d from the open segment [-1, 1] x {0} x {0}."""
    d = np.asarray(d, dtype=float)
    x = rng.uniform(-1, 1, d.shape)
    phi = rng.uniform(0, 2 * np.pi, d.shape)
    return np.stack([x, d * np.cos(phi), d * np.sin(phi)], -1)


@pytest.mark.parametrize("y, expected", [(0.75, 0.5), (1.0, 0.5), (3.0, 2.0)])
def test_d1_examples(sd, y, expected):
    assert d1(sd, (0.0, y, 0.0)) == expected


def test_d2_equals_d1_deep_inside_a_shell(sd):
    # d = 0.75 with radius 1/16: the ball stays inside 1/2 < d <= 1
    p = (0.0, 0.75, 0.0)
    assert d2(sd, p) == pytest.approx(d1(sd, p), abs=1e-14)
    assert d0(sd, p) == pytest.approx(d1(sd, p), abs=1e-14)


def test_d2_matches_monte_carlo_across_interface(sd):
    rng = np.random.default_rng(0)
    r = 1.0 / 16.0
    u = rng.normal(size=(1_000_000, 3))
    u *= (r * rng.uniform(size=len(u)) ** (1 / 3) / np.linalg.norm(u, axis=1))[:, None]
    q = u + [0.0, 1.05, 0.0]
    dist = np.hypot(q[:, 1], q[:, 2])
    vals = np.where(dist > 1.0, 1.0, 0.5)
    mc, err = vals.mean(), vals.std() / np.sqrt(len(vals))
    got = d2(sd, (0.0, 1.05, 0.0))
    assert 0.5 < got < 1.0
    assert abs(got - mc) <= 4 * err


def test_d0_matches_nested_monte_carlo(sd):
    assert abs(d0(sd, (0.0, 1.05, 0.0)) - D0_MC) <= 3 * D0_MC_SIGMA


def test_lower_bounds_on_random_points(sd):
    rng = np.random.default_rng(1)
    pts = rng.uniform(-3, 3, size=(1000, 3))
    d = sd.distance(pts)
    for f in (sd.d1, sd.d2, sd.d0):
        assert np.all(f(pts) >= 0.5 * d)


def test_on_curve_is_rejected(sd):
    with pytest.raises(ValueError):
        sd.d0((0.0, 0.0, 0.0))


def _shell_points(n, count, rng):
    return perpendicular_points(2.0 ** n * rng.uniform(0.5, 1.0, count) + 1e-15, rng)


def test_commeasurable_and_stable_across_shells(sd):
    rng = np.random.default_rng(2)
    sups = []
    for n in range(-6, 1):
        pts = _shell_points(n, 1000, rng)
        ratio = sd.d0(pts) / sd.distance(pts)
        assert ratio.min() >= 0.5
        sups.append(ratio.max())
    assert max(sups) / min(sups) <= 2


def test_gradient_and_hessian_bounds(sd):
    rng = np.random.default_rng(3)
    e = np.eye(3)
    gsup, hsup = [], []
    for n in range(-6, 1):
        pts = _shell_points(n, 200, rng)
        d = sd.distance(pts)
        h = d / 64
        c = sd.d0(pts)
        plus = np.stack([sd.d0(pts + h[:, None] * e[i]) for i in range(3)], 1)
        minus = np.stack([sd.d0(pts - h[:, None] * e[i]) for i in range(3)], 1)
        grad = (plus - minus) / (2 * h[:, None])
        second = (plus + minus - 2 * c[:, None]) / (h[:, None] ** 2)
        gsup.append(np.linalg.norm(grad, axis=1).max())
        hsup.append((np.abs(second).max(1) * d).max())
    assert max(gsup) / min(gsup) <= 2
    assert max(hsup) / min(hsup) <= 4


def test_continuous_across_interfaces(sd):
    # a jump keeps its size under refinement; a continuous field's increments shrink with the step
    def worst(step):
        y = np.arange(0.3, 2.5, step)
        vals = sd.d0(np.stack([np.zeros_like(y), y, np.zeros_like(y)], 1))
        return np.abs(np.diff(vals)).max()

    coarse, fine = worst(1e-3), worst(1e-4)
    assert coarse < 0.05
    assert coarse / fine >= 5


def test_radius_rules(segment):
    alt = SmoothDistance(segment, radius_rule="d1")
    base = SmoothDistance(segment)
    # d = 1.2: d1 = 1, but 1.2 / sqrt(2) sits in the shell (1/2, 1]
    assert alt.averaging_radius(1.2) == 1.0 / 8.0
    assert base.averaging_radius(1.2) == 1.0 / 16.0
    assert base.averaging_radius(1.5) == alt.averaging_radius(1.5) == 1.0 / 8.0
    p = (0.0, 1.2, 0.0)
    assert alt.d0(p) != base.d0(p)
    with pytest.raises(ValueError):
        SmoothDistance(segment, radius_rule="nope")
