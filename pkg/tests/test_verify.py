import math

import numpy as np
import pytest

from chordarc import verify as V
from chordarc.modulus import PowerLogModulus, PowerModulus


def test_band_ratio():
    assert V.band_ratio([1.0, 2.0, 4.0]) == 4.0
    assert V.band_ratio([]) == 1.0
    assert V.band_ratio([0.0, 1.0]) == math.inf
    assert V.in_band([1.0, 3.9]) and not V.in_band([1.0, 4.1])


def record(n, E, G, harm=1e-8):
    return V.DecayRecord(n=n, delta=2.0 ** -n, E=E, G=G, E_ratio=E, G_ratio=G, harmonicity=harm,
                         alpha=0.1, gamma_max=0.1)


def test_decay_report_pass_rules(tmp_path):
    good = V.DecayReport([record(3, 1.0, 0.5), record(4, 2.0, 0.6)])
    assert good.passed()
    assert not V.DecayReport([record(3, 1.0, 0.1), record(4, 1.0, 0.5)]).passed()
    assert not V.DecayReport([record(3, 1.0, 0.5, harm=1e-2)]).passed()
    # columns below the noise level are not band-checked
    assert V.DecayReport([record(3, 1e-3, 0.5), record(4, 1e-5, 0.5)]).passed()
    assert not V.DecayReport().passed()
    text = good.to_csv(tmp_path / "d.csv")
    lines = text.splitlines()
    assert lines[0] == ",".join(V.DecayReport.CSV_FIELDS) and len(lines) == 3
    assert (tmp_path / "d.csv").read_text() == text


def test_sharpness_matches_closed_form():
    m = PowerModulus(0.5)
    deltas, lams = V.default_sharpness_sequences(6)
    rep = V.sharpness_harness(m, deltas, lams)
    np.testing.assert_allclose(rep.ratios(), V.sharpness_closed_form(0.5, np.sqrt(lams / 2)), rtol=1e-12)
    np.testing.assert_allclose(rep.ratios(), [0.961, 1.143, 1.359, 1.616, 1.922, 2.286], atol=5e-4)
    assert rep.ell_star == 2
    csv_rows = rep.to_csv().splitlines()
    assert csv_rows[-1] == "ell_star,2"
    assert [r.split(",")[-1] for r in csv_rows[1:7]] == ["0", "1", "1", "1", "1", "1"]


def test_sharpness_constant_lambda_extrapolates():
    m = PowerModulus(0.5)
    deltas, lams = V.default_sharpness_sequences(4, constant_lambda=8.0)
    rep = V.sharpness_harness(m, deltas, lams)
    # constant A keeps the ratio flat, so there is no crossing and no upward trend
    assert rep.ell_star is None and rep.extrapolated_ell is None
    assert "extrapolated_ell,none" in rep.to_csv()


def test_sharpness_rejects_bad_sequences():
    m = PowerModulus(0.5)
    with pytest.raises(V.VerifyError):
        V.sharpness_harness(m, [0.1, 0.01], [8.0])
    with pytest.raises(V.VerifyError):
        V.sharpness_harness(m, [0.1], [4.0])
    with pytest.raises(V.VerifyError):
        V.sharpness_harness(m, [0.5], [64.0])


@pytest.mark.parametrize("m", [PowerModulus(0.5), PowerModulus(0.9), PowerLogModulus(0.5)])
def test_log_floor_holds(m):
    assert V.log_floor_check(m, np.linspace(0.01, 1.0, 100)) >= 0.0


def test_tube_samples_respect_band(segment, rng):
    from chordarc.geometry import distances

    dist = lambda p: distances(segment, p)[0]
    pts = V.tube_samples(segment, dist, 0.1, 0.2, 300, rng)
    d = dist(pts)
    assert len(pts) == 300 and d.min() > 0.1 and d.max() <= 0.2


def test_representation_identity_two_targets():
    err = V.representation_check(V.gaussian_field, V.gaussian_laplacian, [[0.0, 0.0, 0.0], [0.5, -0.3, 0.2]],
                                 theta=0.4, half_width=6.0, min_size=12.0 / 2 ** 10)
    assert err <= 1e-3


def test_boundary_samples_on_cover_boundary(default_ext, rng):
    pts = V.boundary_samples(default_ext, 3, 100, rng)
    centers = default_ext.level_points(3)
    R = 2.0 * default_ext.lam / 8
    d = np.sqrt(((pts[:, None] - centers[None]) ** 2).sum(-1))
    np.testing.assert_allclose(d.min(1), R, rtol=1e-12)


def test_extension_bounds_rows(default_ext):
    rows = V.extension_bounds(default_ext, [2, 3], samples=50)
    assert [r["n"] for r in rows] == [2, 3]
    assert all(np.isfinite(r[k]) for r in rows for k in ("g0_minus_g", "gradient", "laplacian"))


def test_increment_bound_dominates_increment(approximants, abs_sqrt, segment):
    # f2 - f1 = (f - v)(M2) - (f - v)(M1) + (v2 - v1), so the bound covers the increment
    family = {0.125: approximants(3)}
    rng = np.random.default_rng(8)
    for _ in range(10):
        s1 = rng.uniform(0, 1.9)
        s2 = s1 + rng.uniform(0.01, 0.06)
        B = V.reconstruct_increment(family, abs_sqrt, s1, s2)
        f1, f2 = abs_sqrt(np.array([s1, s2]))
        assert B >= abs(f2 - f1) * (1 - 1e-6)
    with pytest.raises(V.VerifyError):
        V.reconstruct_increment(family, abs_sqrt, 0.0, 0.5)


def test_holder_recovery_bins(approximants, abs_sqrt, sqrt_modulus):
    family = {0.125: approximants(3)}
    rep = V.holder_recovery(family, abs_sqrt, sqrt_modulus, pairs=100, rng=np.random.default_rng(9))
    assert np.all(rep.bounds >= rep.increments * (1 - 1e-6))
    assert rep.bins and all(b > a for a, b in rep.bins)
    assert np.isfinite(rep.ratio_band)
