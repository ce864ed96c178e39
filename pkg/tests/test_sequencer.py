# Squeezeclock ⏱️ AGPL-3.0 License

import math

import numpy as np
import pytest

from squeezeclock.analysis import (
    allan_deviation,
    allan_from_series,
    delta_theta_by_theta,
    fit_dynamic_range,
    fit_rabi,
    jz12,
    kept_records,
    metrological_gain_db,
    noise_budget,
    post_select,
    qpn_stability,
    rabi_means,
    squeezing_metrics,
    technical_noise_db,
)
from squeezeclock.measurement_models import beatnote_correct, qnd_resolution_var
from squeezeclock.sequencer import (
    FLAGS,
    ShotRecord,
    calibrate_position,
    run_clock,
    run_dynamic_range,
    run_sequence,
    run_squeeze_characterization,
    stability_floor_series,
)
from squeezeclock.utils import ExperimentConfig

QUIET_FLUOR = {
    "background_sigma_photons": 0.0,
    "position_sigma_mm": 0.0,
    "unidentified_noise_db": None,
    "excess_noise_db": None,
    "photon_shot_noise": False,
    "intensity_sigma": 0.0,
}


def config(**overrides) -> ExperimentConfig:
    """Builds a config the way a JSON file would, so per-sequence defaults apply."""
    return ExperimentConfig.from_dict(overrides)


@pytest.fixture(scope="module")
def squeeze_run():
    """Large squeeze-characterization run shared by the statistical checks."""
    cfg = config(sequence="squeeze_char", shots=10000, seed=7)
    records, report = post_select(run_squeeze_characterization(cfg, workers=4), cfg.qnd.linear_range_jz)
    return cfg, records, report


@pytest.fixture(scope="module")
def clock_run():
    """Squeezed clock run at N = 240000 with the full noise model."""
    cfg = config(sequence="clock_squeezed", shots=6000, seed=11)
    records, _ = post_select(run_clock(cfg, workers=4), cfg.qnd.linear_range_jz, n_atoms=cfg.n_atoms)
    return cfg, records


def test_runs_are_deterministic():
    """Identical seeds give identical records, serial or threaded."""
    cfg = config(sequence="squeeze_char", shots=40, seed=3)
    serial = [r.to_dict() for r in run_squeeze_characterization(cfg, workers=1)]
    threaded = [r.to_dict() for r in run_squeeze_characterization(cfg, workers=3)]
    assert serial == threaded
    other = [r.to_dict() for r in run_squeeze_characterization(cfg.replace(seed=4), workers=1)]
    assert serial != other


def test_record_contents():
    """Squeeze records carry both QND readings, the beatnote and the cycle timestamp."""
    cfg = config(sequence="squeeze_char", shots=20, seed=5, cycle_s=2.0)
    records = run_sequence(cfg)
    assert [r.shot_index for r in records] == list(range(20))
    for r in records:
        assert r.t_s == 2.0 * r.shot_index
        assert r.qnd1_jz is not None and r.qnd2_jz is not None
        assert abs(r.delta_hz) <= cfg.qnd.beatnote_sigma_hz
        assert set(r.flags) <= set(FLAGS)
        assert abs(r.jz_true) <= cfg.n_atoms / 2


def test_with_flags():
    """Flags stay sorted and unique; unknown names are refused."""
    r = run_sequence(config(sequence="squeeze_char", shots=1))[0]
    flagged = r.with_flags("qnd_out_of_range", "clock_outlier", "qnd_out_of_range")
    assert flagged.flags == ("clock_outlier", "qnd_out_of_range")
    with pytest.raises(ValueError):
        r.with_flags("cosmic_ray")


def test_runner_sequence_mismatch():
    """A runner refuses a config written for another sequence."""
    with pytest.raises(ValueError):
        run_clock(config(sequence="squeeze_char", shots=1))


def test_squeezing_characterization(squeeze_run):
    """The default apparatus reaches Ξ² ≈ -6.5 dB, ξ² ≈ -5.8 dB and Δθ ≈ 820 µrad after 10-16% removal."""
    cfg, records, report = squeeze_run
    metrics = squeezing_metrics(records, cfg.n_atoms, cfg.readout_contrast)
    assert -7.3 <= metrics.variance_db <= -5.9, f"Ξ² = {metrics.variance_db:.2f} dB"
    assert -6.5 <= metrics.wineland_db <= -5.1, f"ξ² = {metrics.wineland_db:.2f} dB"
    assert 753e-6 <= metrics.delta_theta <= 875e-6, f"Δθ = {metrics.delta_theta * 1e6:.0f} µrad"
    assert 0.10 <= report["removed_fraction"] <= 0.16, f"removed {report['removed_fraction']:.3f}"
    assert metrics.ci_low < metrics.delta_theta < metrics.ci_high


def test_monte_carlo_matches_noise_budget(squeeze_run):
    """The excess variance over the QND resolution agrees with the analytic budget to 0.3 dB."""
    cfg, records, _ = squeeze_run
    assert technical_noise_db(records, cfg) == pytest.approx(noise_budget(cfg).total_db, abs=0.3)


def test_zero_technical_noise_reaches_qnd_limit():
    """With readout and thermal noise off, Jz⁽¹²⁾ is limited by the QND resolution alone (-13.8 dB)."""
    cfg = config(sequence="squeeze_char", shots=2000, seed=9, fluor=QUIET_FLUOR, qnd={"thermal_beta_sq": 0.0})
    records, _ = post_select(run_squeeze_characterization(cfg, workers=4))
    metrics = squeezing_metrics(records, cfg.n_atoms, cfg.readout_contrast)
    assert metrics.variance_db == pytest.approx(-13.82, abs=0.45)


def test_qnd_readings_track_each_other():
    """Without pre-squeezing the second reading follows the first with slope ≈ 0.94."""
    cfg = config(sequence="squeeze_char", shots=2000, seed=13, presqueeze_db=None)
    records = run_squeeze_characterization(cfg, workers=4)
    q1 = np.array([r.qnd1_jz for r in records])
    q2 = np.array([r.qnd2_jz for r in records])
    slope = np.polyfit(q1, q2, 1)[0]
    assert 0.9 <= slope <= 0.98, f"slope {slope:.3f}"


def test_free_fall_does_not_change_squeezing():
    """Ξ² at 2, 3 and 4 ms of free fall agrees within 0.7 dB."""
    values = []
    for seed, fall in enumerate((2.0, 3.0, 4.0), start=20):
        cfg = config(sequence="squeeze_char", shots=2000, seed=seed, free_fall_ms=fall)
        records, _ = post_select(run_squeeze_characterization(cfg, workers=4))
        values.append(squeezing_metrics(records, cfg.n_atoms, cfg.readout_contrast).variance_db)
    assert max(values) - min(values) <= 0.7, f"Ξ² spread {values}"


def test_beatnote_correction_removes_detuning(squeeze_run):
    """Raw cavity readings carry the detuning offset; the inferred readings are corrected and uncorrelated with it."""
    cfg, records, _ = squeeze_run
    delta = np.array([r.delta_hz for r in records])
    raw = np.array([r.qnd2_raw_jz for r in records])
    inferred = np.array([r.qnd2_jz for r in records])
    assert np.corrcoef(raw, delta)[0, 1] < -0.2
    assert abs(np.corrcoef(inferred, delta)[0, 1]) < 0.05
    for r in records[:50]:
        assert r.qnd1_jz == pytest.approx(beatnote_correct(r.qnd1_raw_jz, cfg.n_atoms, r.delta_hz, cfg.qnd))
        assert r.qnd2_jz == pytest.approx(beatnote_correct(r.qnd2_raw_jz, cfg.n_atoms, r.delta_hz, cfg.qnd))


def test_uncorrected_beatnote_costs_squeezing():
    """Leaving the detuning in the readings adds ≈ 0.1·N/4 and loses more than 1 dB of Ξ²."""
    values = {}
    for corrected in (True, False):
        cfg = config(sequence="squeeze_char", shots=3000, seed=37, qnd={"beatnote_correction": corrected})
        records, _ = post_select(run_squeeze_characterization(cfg, workers=4))
        values[corrected] = squeezing_metrics(records, cfg.n_atoms, cfg.readout_contrast).variance_db
        if not corrected:
            assert all(r.qnd2_jz == r.qnd2_raw_jz for r in records)
            assert technical_noise_db(records, cfg) == pytest.approx(noise_budget(cfg).total_db, abs=0.3)
    assert values[False] - values[True] > 1.0, f"Ξ² {values}"


# Lattice ramp ms, free fall ms, coherence and Wineland parameter dB for each characterization row
CHARACTERIZATION_ROWS = [
    (0.2, 2.0, 0.910, -5.1),
    (0.2, 3.0, 0.906, -6.2),
    (0.2, 4.0, 0.917, -5.8),
    (7.0, 2.0, 0.727, -3.2),
    (7.0, 4.0, 0.735, -3.7),
    (7.0, 6.0, 0.736, -4.5),
    (7.0, 8.0, 0.738, -4.3),
]


def test_characterization_table_analytic():
    """The budget plus the QND resolution predicts every row's ξ² within 0.7 dB using that row's coherence."""
    for ramp, fall, contrast, wineland in CHARACTERIZATION_ROWS:
        cfg = config(sequence="squeeze_char", lattice_ramp_ms=ramp, free_fall_ms=fall)
        assert cfg.readout_contrast == pytest.approx(contrast, abs=0.01)
        n = cfg.n_atoms
        variance = qnd_resolution_var(n, cfg.qnd) / (n / 4) + 10 ** (noise_budget(cfg).total_db / 10)
        predicted = 10 * math.log10(variance) - 20 * math.log10(cfg.readout_contrast)
        assert predicted == pytest.approx(wineland, abs=0.7), f"row {ramp}/{fall} ms: {predicted:.2f} dB"


def test_characterization_table_sweep():
    """Simulated rows land within 0.35 dB of the predicted ξ², and so within 1.05 dB of the measured values."""
    for ramp, fall, contrast, wineland in CHARACTERIZATION_ROWS:
        cfg = config(sequence="squeeze_char", shots=4000, seed=41, lattice_ramp_ms=ramp, free_fall_ms=fall)
        records, _ = post_select(run_squeeze_characterization(cfg, workers=4))
        metrics = squeezing_metrics(records, cfg.n_atoms, cfg.readout_contrast)
        n = cfg.n_atoms
        variance = qnd_resolution_var(n, cfg.qnd) / (n / 4) + 10 ** (noise_budget(cfg).total_db / 10)
        predicted = 10 * math.log10(variance) - 20 * math.log10(contrast)
        assert metrics.wineland_db == pytest.approx(predicted, abs=0.35), f"row {ramp}/{fall} ms"
        assert metrics.wineland_db == pytest.approx(wineland, abs=1.05), f"row {ramp}/{fall} ms"


def test_position_calibration():
    """Calibration recovers the configured pushed-cloud efficiency slope; no position jitter means no correction."""
    cfg = config(sequence="squeeze_char", calibration_shots=400, seed=2)
    fit = calibrate_position(cfg)
    assert fit.slope == pytest.approx(cfg.fluor.position_efficiency_slope, abs=max(5 * fit.slope_stderr, 5e-3))
    quiet = calibrate_position(config(fluor={"position_sigma_mm": 0.0}))
    assert (quiet.intercept, quiet.slope) == (1.0, 0.0)


def test_stability_floor_series():
    """The floor series has a flat Allan deviation at the configured level from 64 to 256 shots."""
    cfg = config(sequence="clock_squeezed", seed=4)
    y = stability_floor_series(cfg, 2**17)
    curve = allan_from_series(y, 1.0, [64.0, 128.0, 256.0])
    for sigma in curve.sigma_y:
        assert sigma == pytest.approx(cfg.stability_floor, rel=0.2), f"σ_y = {sigma:.3e}"
    assert curve.sigma_y[-1] / curve.sigma_y[0] > 0.85
    np.testing.assert_array_equal(y, stability_floor_series(cfg, 2**17))
    assert not stability_floor_series(cfg.replace(stability_floor=0.0), 10).any()
    assert len(stability_floor_series(cfg, 0)) == 0


def test_long_interrogation_reaches_floor():
    """At T = 8 ms the clock's Allan deviation stops averaging down and settles at the 4e-12 floor."""
    cfg = config(sequence="clock_squeezed", shots=16384, seed=31, ramsey_ms=8.0, free_fall_ms=4.0)
    records, _ = post_select(run_clock(cfg, workers=4), cfg.qnd.linear_range_jz)
    taus = [32.0, 64.0, 128.0]
    curve = allan_deviation(records, cfg.ramsey_s, cfg.cycle_s, cfg.n_atoms, cfg.readout_contrast, taus)
    mean = float(np.mean(curve.sigma_y))
    assert 0.75 * cfg.stability_floor <= mean <= 1.25 * cfg.stability_floor, f"σ_y {curve.sigma_y}"
    assert curve.sigma_y[-1] / curve.sigma_y[0] > 0.75
    white = allan_deviation(
        post_select(run_clock(cfg.replace(stability_floor=0.0), workers=4), cfg.qnd.linear_range_jz)[0],
        cfg.ramsey_s,
        cfg.cycle_s,
        cfg.n_atoms,
        cfg.readout_contrast,
        taus,
    )
    assert white.sigma_y[-1] < 0.25 * cfg.stability_floor


def test_css_clock_reaches_projection_limit():
    """With technical noise off the CSS clock runs within 10% of 1/(ω₀T√N), scaled by 1/C."""
    cfg = config(
        sequence="clock_css", shots=2000, seed=17, stability_floor=0.0, mw_phase_noise_db=None, fluor=QUIET_FLUOR
    )
    records, _ = post_select(run_clock(cfg, workers=4), n_atoms=cfg.n_atoms)
    curve = allan_deviation(records, cfg.ramsey_s, cfg.cycle_s, cfg.n_atoms, cfg.readout_contrast, [1.0])
    limit = qpn_stability(cfg.ramsey_s, cfg.cycle_s, cfg.n_atoms, 1.0) / cfg.readout_contrast
    assert curve.sigma_y[0] == pytest.approx(limit, rel=0.1)


def test_squeezed_clock_stability(clock_run):
    """The squeezed clock reaches σ_y(1 s) ≈ 8.5e-12, about 3.8 dB below the projection limit."""
    cfg, records = clock_run
    curve = allan_deviation(records, cfg.ramsey_s, cfg.cycle_s, cfg.n_atoms, cfg.readout_contrast, [1.0, 2.0, 4.0])
    sigma = curve.sigma_y[0]
    assert 7.9e-12 <= sigma <= 8.9e-12, f"σ_y(1 s) = {sigma:.3e}"
    gain = metrological_gain_db(sigma, qpn_stability(cfg.ramsey_s, cfg.cycle_s, cfg.n_atoms, 1.0))
    assert 3.4 <= gain <= 4.2, f"gain {gain:.2f} dB"
    assert curve.sigma_y[2] < curve.sigma_y[0]
    assert not any(r.flags and "clock_outlier" in r.flags for r in records)


def test_dynamic_range():
    """Angle resolution grows with tan θ; the fitted anti-squeezing is 36 dB and the break-even angle ≈ 123 mrad."""
    thetas = [-0.2, -0.15, -0.1, -0.05, 0.0, 0.05, 0.1, 0.15, 0.2]
    cfg = config(sequence="dynamic_range", shots=400, seed=19, theta_list_rad=thetas)
    records = run_dynamic_range(cfg, workers=4)
    assert len(records) == len(thetas) * cfg.shots
    assert records[0].theta_true == -0.2 and records[-1].theta_true == 0.2
    records, _ = post_select(records, n_atoms=cfg.n_atoms)
    rows = delta_theta_by_theta(records, cfg.n_atoms, cfg.readout_contrast)
    by_theta = {row["theta"]: row["delta_theta"] for row in rows}
    assert by_theta[0.2] > 1.5 * by_theta[0.0]
    assert by_theta[-0.2] > 1.5 * by_theta[0.0]

    xi_sq = 10 ** (cfg.qnd.prepared_var_jz_db / 10)
    delta_x0 = math.sqrt(max(by_theta[0.0] ** 2 - xi_sq / cfg.n_atoms, 0.0))
    fit = fit_dynamic_range([(r["theta"], r["delta_theta"]) for r in rows], cfg.n_atoms, xi_sq, delta_x0)
    assert fit.gamma_sq_db == pytest.approx(36.0, abs=1.0)
    assert 0.105 <= fit.crossing_rad() <= 0.145, f"crossing {fit.crossing_rad() * 1e3:.1f} mrad"


@pytest.mark.parametrize("ramp,fall,contrast", [(0.2, 4.0, 0.91), (7.0, 8.0, 0.73)])
def test_rabi_contrast(ramp, fall, contrast):
    """The Rabi amplitude recovers the coherence of each lattice ramp to 0.01, as does the readout contrast."""
    cfg = config(sequence="rabi_scan", shots=20, seed=23, lattice_ramp_ms=ramp, free_fall_ms=fall)
    records, _ = post_select(run_sequence(cfg, workers=4))
    fit = fit_rabi(rabi_means(records, cfg.n_atoms))
    assert fit.contrast == pytest.approx(contrast, abs=0.01)
    assert cfg.readout_contrast == pytest.approx(contrast, abs=0.01)


def test_jz12_reference():
    """Jz⁽¹²⁾ subtracts the last QND reading available."""
    record = run_sequence(config(sequence="squeeze_char", shots=1))[0]
    assert jz12(record) == pytest.approx(record.fluor.normalized_jz - record.qnd2_jz)
    css = run_sequence(config(sequence="clock_css", shots=1))[0]
    assert isinstance(css, ShotRecord) and jz12(css) == css.fluor.normalized_jz
    assert kept_records([css.with_flags("fluor_failed")]) == []


def test_allan_scaling_and_floor():
    """At T = 1.3 ms σ_y falls as τ^-1/2 below the projection limit; the stability floor lifts the long-τ tail."""
    taus = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
    curves = {}
    for floor in (0.0, 4e-12):
        cfg = config(sequence="clock_squeezed", shots=8192, seed=29, ramsey_ms=1.3, stability_floor=floor)
        records, _ = post_select(run_clock(cfg, workers=4), cfg.qnd.linear_range_jz, n_atoms=cfg.n_atoms)
        curves[floor] = allan_deviation(records, cfg.ramsey_s, cfg.cycle_s, cfg.n_atoms, cfg.readout_contrast, taus)
    white = curves[0.0].sigma_y
    slope = np.polyfit(np.log(taus), np.log(white), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.05), f"log-log slope {slope:.3f}"
    for tau, sigma in zip(taus, white):
        assert sigma < qpn_stability(cfg.ramsey_s, cfg.cycle_s, cfg.n_atoms, tau)
    assert curves[4e-12].sigma_y[-1] > white[-1]
