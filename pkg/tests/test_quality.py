import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln

from fmplug.quality import concentration_diag, mse, psnr, report, shell_overlap_diag, ssim


def test_psnr_examples():
    a = np.random.default_rng(0).uniform(size=(8, 8))
    assert psnr(a, a) == 99.0
    assert psnr(np.zeros((10, 10)), np.full((10, 10), 0.1)) == pytest.approx(20.0, abs=1e-12)
    assert psnr(np.zeros((4, 4)), np.ones((4, 4))) == 0.0
    with pytest.raises(ValueError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-8, 1.0), st.floats(1e-8, 1.0))
def test_psnr_monotone_in_mse(s1, s2):
    z = np.zeros((4, 4))
    p1, p2 = psnr(z, np.full((4, 4), np.sqrt(s1))), psnr(z, np.full((4, 4), np.sqrt(s2)))
    if s1 < s2:
        assert p1 >= p2


def test_ssim_identity_and_symmetry():
    r = np.random.default_rng(1)
    a, b = r.uniform(size=(16, 16)), r.uniform(size=(16, 16))
    assert ssim(a, a) == 1.0
    assert abs(ssim(a, b) - ssim(b, a)) <= 1e-12
    assert ssim(a, b) < 1.0


def test_ssim_constant_shift():
    a = np.full((16, 16), 0.25)
    b = a + 0.5
    # luminance term only: (2*.25*.75 + C1) / (.25^2 + .75^2 + C1)
    c1 = 0.01**2
    expected = (2 * 0.25 * 0.75 + c1) / (0.25**2 + 0.75**2 + c1)
    assert ssim(a, b) == pytest.approx(expected, abs=1e-12)
    assert ssim(a, b) < 0.9


def test_ssim_bounds_and_errors():
    r = np.random.default_rng(2)
    for _ in range(20):
        a, b = r.uniform(-1, 1, (10, 10)), r.uniform(-1, 1, (10, 10))
        assert -1.0 <= ssim(a, b) <= 1.0
    assert -1.0 <= ssim(a, -a) <= 1.0
    with pytest.raises(ValueError):
        ssim(np.zeros((5, 5)), np.zeros((5, 5)))
    rgb = r.uniform(size=(10, 10, 3))
    assert ssim(rgb, rgb) == 1.0


def test_report_fields():
    a = np.zeros((8, 8))
    rep = report(a, a + 0.1, instance="x")
    assert rep.mse == pytest.approx(0.01) and rep.psnr == pytest.approx(20.0) and rep.instance == "x"
    assert mse(a, a) == 0.0


def test_concentration_high_dim():
    d = 4096
    analytic = np.sqrt(2) * np.exp(gammaln((d + 1) / 2) - gammaln(d / 2))
    diag = concentration_diag(d, 10_000, seed=0)
    assert 63.3 <= diag["mean_norm"] <= 64.6
    assert diag["mean_norm"] == pytest.approx(analytic, abs=0.02)
    tails = [diag["tail"][t] for t in (1.0, 2.0, 3.0)]
    assert tails[0] >= tails[1] >= tails[2]


def test_concentration_one_dim():
    diag = concentration_diag(1, 100_000, seed=1)
    assert diag["mean_norm"] == pytest.approx(np.sqrt(2 / np.pi), rel=0.02)
    assert diag["tail"][3.0] < diag["tail"][1.0]


def test_concentration_pre():
    with pytest.raises(ValueError):
        concentration_diag(10, 50)


def test_shell_overlap():
    d = 1024
    assert shell_overlap_diag(np.zeros(d), 1.0, 5000, seed=0) >= 0.6
    off = np.full(d, 2.0)  # norm 2 sqrt(d)
    assert shell_overlap_diag(off, 1.0, 5000, seed=0) < 1e-3
    on = np.zeros(d)
    on[0] = np.sqrt(d)
    assert shell_overlap_diag(on, 1e-8, 1000, seed=0) == 1.0
    with pytest.raises(ValueError):
        shell_overlap_diag(on, 0.0, 10)
