# Squeezeclock ⏱️ AGPL-3.0 License

import math

import numpy as np
import pytest

from squeezeclock.collective_spin import make_css
from squeezeclock.measurement_models import (
    FluorOutcome,
    PositionFit,
    beatnote_correct,
    beatnote_shift,
    fit_position_efficiency,
    non_normalized_jz,
    normalized_jz,
    position_correction,
    push_and_fluoresce,
    qnd_measure,
    qnd_resolution_var,
    sample_beatnote,
    thermal_inhomogeneity_noise,
)
from squeezeclock.utils import FluorConfig, QndConfig, shot_rng

N = 390000
ALPHA = 65.0
QUIET = FluorConfig(
    background_sigma_photons=0.0,
    position_sigma_mm=0.0,
    unidentified_noise_db=None,
    excess_noise_db=None,
    photon_shot_noise=False,
    intensity_sigma=0.0,
)


@pytest.fixture
def rng():
    """Fixed generator so the statistical checks are reproducible."""
    return shot_rng(20200313, "shot", 0)


def test_resolution_variance():
    """The QND resolution conditions a coherent state to the configured -14 dB."""
    vm = qnd_resolution_var(N, QndConfig())
    v = N / 4
    assert vm == pytest.approx(v / (10**1.4 - 1))
    assert 10 * math.log10(vm / (v + vm)) == pytest.approx(-14.0, abs=1e-9)


def test_thermal_noise():
    """√N·β²/√(1+2β²) ≈ 44.2 at N = 390000, β² = 0.076; zero coupling spread gives no noise."""
    assert thermal_inhomogeneity_noise(N, 0.076) == pytest.approx(44.22, abs=0.01)
    assert thermal_inhomogeneity_noise(N, 0.0) == 0.0
    with pytest.raises(ValueError):
        thermal_inhomogeneity_noise(N, -0.1)


def test_qnd_posterior(rng):
    """One reading leaves -14 dB of Jz variance, 36 dB of anti-squeezing and the post-measurement contrast."""
    outcome, post = qnd_measure(make_css(N), QndConfig(), rng)
    assert math.isfinite(outcome)
    assert 10 * math.log10(post.var_jz / (N / 4)) == pytest.approx(-14.0, abs=0.01)
    assert 10 * math.log10(post.var_jy / (N / 4)) == pytest.approx(36.0, abs=0.01)
    assert post.contrast == pytest.approx(0.91)


def test_repeated_qnd_difference(rng):
    """Two back-to-back readings differ by twice the resolution variance, not by the projection noise."""
    cfg = QndConfig(thermal_beta_sq=0.0)
    css = make_css(N)
    diffs = []
    for _ in range(4000):
        q1, post = qnd_measure(css, cfg, rng)
        q2, _ = qnd_measure(post, cfg, rng)
        diffs.append(q2 - q1)
    ratio = np.var(diffs, ddof=1) / (2 * qnd_resolution_var(N, cfg))
    assert 0.92 <= ratio <= 1.08, f"var(q2 - q1) / 2vm = {ratio:.3f}"


def test_beatnote_shift():
    """A 3 MHz fluctuation at 3.417 GHz shifts the reading by about 171.2; correction undoes it exactly."""
    cfg = QndConfig()
    assert beatnote_shift(N, 3e6, cfg) == pytest.approx(171.2, abs=0.1)
    assert beatnote_shift(N, 0.0, cfg) == 0.0
    assert beatnote_shift(N, -2e6, cfg) == pytest.approx(-beatnote_shift(N, 2e6, cfg))
    raw = 42.0 - beatnote_shift(N, 1.5e6, cfg)
    assert beatnote_correct(raw, N, 1.5e6, cfg) == pytest.approx(42.0)
    with pytest.raises(ValueError):
        beatnote_shift(N, 5e7, cfg)


def test_beatnote_decorrelation(rng):
    """Raw readings track δ; corrected readings do not."""
    cfg = QndConfig()
    jz = rng.normal(0.0, 300.0, 2000)
    delta = np.array([sample_beatnote(cfg, rng) for _ in jz])
    assert np.all(np.abs(delta) <= cfg.beatnote_sigma_hz)
    raw = jz - np.array([beatnote_shift(N, d, cfg) for d in delta])
    corrected = np.array([beatnote_correct(r, N, d, cfg) for r, d in zip(raw, delta)])
    assert abs(np.corrcoef(raw, delta)[0, 1]) > 0.2
    assert abs(np.corrcoef(corrected, delta)[0, 1]) < 0.08


def test_normalized_estimator():
    """Equal counts give zero, a non-positive total gives NaN and arrays are accepted."""
    assert normalized_jz(1000.0, 1000.0, N, ALPHA) == 0.0
    assert math.isnan(normalized_jz(0.0, 0.0, N, ALPHA))
    assert math.isnan(normalized_jz(-50.0, 20.0, N, ALPHA))
    out = normalized_jz(np.array([3.0, 1.0]), np.array([1.0, 3.0]), 4.0, 1.0)
    np.testing.assert_allclose(out, [1.0, -1.0])
    assert non_normalized_jz(130.0, 0.0, ALPHA) == pytest.approx(1.0)
    assert FluorOutcome(0.0, 0.0, 0.0, normalized_jz(0.0, 0.0, N, ALPHA)).failed


def test_normalization_rejects_number_fluctuations(rng):
    """5% shot-to-shot atom-number jitter swamps (N↑-N↓)/2 but not the normalized estimator."""
    n_i = N * (1 + 0.05 * rng.standard_normal(3000))
    jz = 0.2 * n_i + rng.normal(0.0, 1.0, n_i.size) * np.sqrt(0.21 * n_i)
    up, down = ALPHA * (n_i / 2 + jz), ALPHA * (n_i / 2 - jz)
    var_norm = np.var(normalized_jz(up, down, N, ALPHA), ddof=1)
    var_raw = np.var(non_normalized_jz(up, down, ALPHA), ddof=1)
    assert var_norm < 2 * 0.21 * N
    assert var_raw > 10 * var_norm


def test_noiseless_readout_is_exact(rng):
    """With every noise source off, J'z equals the true Jz."""
    for jz in (-1500.0, 0.0, 812.5):
        out = push_and_fluoresce(jz, N, QUIET, rng)
        assert out.normalized_jz == pytest.approx(jz, abs=1e-6)
        assert out.pushed_position_mm == 0.0


def test_readout_rejects_impossible_states(rng):
    """|Jz| beyond N/2 and N < 1 are invalid."""
    with pytest.raises(ValueError):
        push_and_fluoresce(N, N, QUIET, rng)
    with pytest.raises(ValueError):
        push_and_fluoresce(0.0, 0.5, QUIET, rng)


def test_background_variance_identity(rng):
    """Correlated background adds exactly (ΔX/α)² to the J'z variance."""
    cfg = FluorConfig(
        position_sigma_mm=0.0,
        unidentified_noise_db=None,
        excess_noise_db=None,
        photon_shot_noise=False,
        intensity_sigma=0.0,
    )
    err = [push_and_fluoresce(0.0, N, cfg, rng).normalized_jz for _ in range(5000)]
    ratio = np.var(err, ddof=1) / (cfg.background_sigma_photons / ALPHA) ** 2
    assert 0.95 <= ratio <= 1.05, f"background variance ratio {ratio:.3f}"


def test_readout_variance_identity_with_projection_noise(rng):
    """var(J'z) = N/4 + var(x↓)/4 + var(x↑)/4 - cov(x↑, x↓)/2 (in atoms) with Jz drawn at the projection limit."""
    cfg = FluorConfig(
        background_sigma_photons=ALPHA * math.sqrt(N / 4),
        background_correlation=0.5,
        position_sigma_mm=0.0,
        unidentified_noise_db=None,
        excess_noise_db=None,
        photon_shot_noise=False,
        intensity_sigma=0.0,
    )
    rho = cfg.background_correlation
    single = cfg.background_sigma_photons * math.sqrt(2 / (1 - rho)) / ALPHA
    expected = N / 4 + single**2 / 4 + single**2 / 4 - rho * single**2 / 2
    jz = rng.normal(0.0, math.sqrt(N / 4), 10000)
    readout = [push_and_fluoresce(j, N, cfg, rng).normalized_jz for j in jz]
    assert np.var(readout, ddof=1) / expected == pytest.approx(1.0, abs=0.05)
    assert expected == pytest.approx(N / 2)


def test_corrected_readout_is_unbiased(rng):
    """After the position correction the full readout's mean error stays below 0.1·√N/2 over 1e4 shots."""
    cfg = FluorConfig()
    fit = fit_position_efficiency([push_and_fluoresce(rng.normal(0.0, 50.0), N, cfg, rng) for _ in range(1000)])
    errors = []
    for _ in range(10000):
        jz = rng.normal(0.0, 50.0)
        out = position_correction(push_and_fluoresce(jz, N, cfg, rng), fit, N, ALPHA)
        if not out.position_out_of_span:
            errors.append(out.normalized_jz - jz)
    assert len(errors) > 9900
    assert abs(np.mean(errors)) < 0.1 * math.sqrt(N) / 2, f"bias {np.mean(errors):.1f}"


def test_photon_shot_noise(rng):
    """Poisson counting alone gives a J'z spread of √(N/4α) ≈ 38.7."""
    cfg = FluorConfig(
        background_sigma_photons=0.0,
        position_sigma_mm=0.0,
        unidentified_noise_db=None,
        excess_noise_db=None,
        intensity_sigma=0.0,
    )
    err = [push_and_fluoresce(0.0, N, cfg, rng).normalized_jz for _ in range(3000)]
    assert np.std(err, ddof=1) == pytest.approx(math.sqrt(N / (4 * ALPHA)), rel=0.06)


def test_position_fit_and_correction(rng):
    """The fitted efficiency slope recovers the configured 0.2/mm and correcting with it removes the position bias."""
    cfg = FluorConfig()
    calibration = [push_and_fluoresce(rng.normal(0.0, 50.0), N, cfg, rng) for _ in range(300)]
    fit = fit_position_efficiency(calibration)
    assert abs(fit.slope - 0.2) < 5 * fit.slope_stderr + 1e-3, f"slope {fit.slope:.4f} ± {fit.slope_stderr:.4f}"
    assert fit.intercept == pytest.approx(1.0, abs=0.01)

    raw, corrected = [], []
    for _ in range(300):
        jz = rng.normal(0.0, 50.0)
        out = push_and_fluoresce(jz, N, cfg, rng)
        raw.append(out.normalized_jz - jz)
        corrected.append(position_correction(out, fit, N, ALPHA).normalized_jz - jz)
    assert np.std(raw) > 1000
    assert np.std(corrected) < 200


def test_position_fit_needs_shots(rng):
    """Fewer than four usable calibration shots cannot fix a line."""
    shots = [push_and_fluoresce(0.0, N, FluorConfig(), rng) for _ in range(3)]
    with pytest.raises(ValueError):
        fit_position_efficiency(shots)


def test_out_of_span_correction():
    """Positions outside the calibration range are flagged and the efficiency is clamped half a span out."""
    fit = PositionFit(intercept=1.0, slope=0.2, position_min=-0.1, position_max=0.1)
    assert fit.efficiency(0.5) == pytest.approx(1.04)
    assert fit.efficiency(0.05) == pytest.approx(1.01)
    out = FluorOutcome(1.04 * 1000.0, 1000.0, 0.5, 0.0)
    fixed = position_correction(out, fit, 2000.0, 1.0)
    assert fixed.position_out_of_span
    assert fixed.normalized_jz == pytest.approx(0.0, abs=1e-9)
    inside = position_correction(FluorOutcome(1000.0, 1000.0, 0.0, 0.0), fit, 2000.0, 1.0)
    assert not inside.position_out_of_span
