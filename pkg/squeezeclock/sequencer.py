# Squeezeclock ⏱️ AGPL-3.0 License

"""
Full experimental cycles composed from the spin and measurement models.

Every shot draws from its own (seed, "shot", index) generator and the stability floor from one (seed, "floor", j)
stream per correlation octave j, so serial and threaded runs produce identical records.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from squeezeclock.collective_spin import (
    GaussianSpinState,
    Rotation,
    apply_contrast_decay,
    composite_pi_half,
    make_css,
    presqueeze,
    rotate,
)
from squeezeclock.measurement_models import (
    FluorOutcome,
    PositionFit,
    beatnote_correct,
    beatnote_shift,
    fit_position_efficiency,
    position_correction,
    push_and_fluoresce,
    qnd_measure,
    sample_beatnote,
)
from squeezeclock.utils.common_utils import OMEGA_0, db_to_amplitude, shot_rng
from squeezeclock.utils.config_utils import SQUEEZECLOCK_WORKERS, ExperimentConfig

FLAGS = ("clock_outlier", "fluor_failed", "position_out_of_span", "qnd_out_of_range")


@dataclass(frozen=True)
class ShotRecord:
    """Everything recorded for one experimental cycle; optional fields are None when the sequence has no such step."""

    shot_index: int
    t_s: float
    fluor: FluorOutcome
    jz_true: float
    delta_hz: float = 0.0
    qnd1_jz: float | None = None
    qnd2_jz: float | None = None
    qnd1_raw_jz: float | None = None
    qnd2_raw_jz: float | None = None
    theta_true: float | None = None
    pulse_area_rad: float | None = None
    flags: tuple[str, ...] = field(default=())

    def with_flags(self, *flags: str) -> "ShotRecord":
        """Returns a copy with the given flags added (kept sorted and unique)."""
        unknown = set(flags) - set(FLAGS)
        if unknown:
            raise ValueError(f"unknown shot flags {sorted(unknown)}")
        return replace(self, flags=tuple(sorted(set(self.flags) | set(flags))))

    def to_dict(self) -> dict:
        """Field-ordered dict for the record file."""
        d = asdict(self)
        d["flags"] = list(self.flags)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ShotRecord":
        """Rebuilds a record from its decoded dict, restoring NaN for missing J'z."""
        fluor = dict(d["fluor"])
        for key in ("counts_up", "counts_down", "pushed_position_mm", "normalized_jz"):
            fluor[key] = math.nan if fluor.get(key) is None else float(fluor[key])
        fluor["position_out_of_span"] = bool(fluor.get("position_out_of_span", False))

        def opt(key):
            return None if d.get(key) is None else float(d[key])

        return cls(
            shot_index=int(d["shot_index"]),
            t_s=float(d["t_s"]),
            fluor=FluorOutcome(**fluor),
            jz_true=float(d["jz_true"]),
            delta_hz=float(d.get("delta_hz") or 0.0),
            qnd1_jz=opt("qnd1_jz"),
            qnd2_jz=opt("qnd2_jz"),
            qnd1_raw_jz=opt("qnd1_raw_jz"),
            qnd2_raw_jz=opt("qnd2_raw_jz"),
            theta_true=opt("theta_true"),
            pulse_area_rad=opt("pulse_area_rad"),
            flags=tuple(sorted(d.get("flags") or ())),
        )


@dataclass
class _Prepared:
    """Spin state after preparation plus the QND readings taken on the way."""

    state: GaussianSpinState
    delta_hz: float = 0.0
    raw: tuple[float, float] | None = None
    inferred: tuple[float, float] | None = None

    @property
    def fields(self) -> dict:
        """Raw and inferred QND readings and the beatnote as ShotRecord keyword arguments."""
        raw = self.raw or (None, None)
        inferred = self.inferred or (None, None)
        return {
            "delta_hz": self.delta_hz,
            "qnd1_jz": inferred[0],
            "qnd2_jz": inferred[1],
            "qnd1_raw_jz": raw[0],
            "qnd2_raw_jz": raw[1],
        }


def _map_shots(fn, indices, workers: int | None):
    """Applies fn to every shot index, returning results in index order."""
    workers = workers or SQUEEZECLOCK_WORKERS
    if workers <= 1:
        return [fn(i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, indices))


def stability_floor_series(cfg: ExperimentConfig, length: int) -> np.ndarray:
    """
    Per-shot fractional-frequency offsets whose Allan deviation flattens at cfg.stability_floor.

    The series is a bank of first-order autoregressive components with correlation times τ₀·2ʲ shots, one per octave,
    added while τ ≤ 2·length. Each carries variance floor²/2; an octave-spaced bank of such components has an Allan
    variance close to 2·floor²/2 = floor² for averaging times between τ₀ and the longest correlation time (flicker
    frequency noise). Component j draws from the (seed, "floor", j) stream and starts from its stationary distribution.
    """
    if length == 0 or cfg.stability_floor == 0:
        return np.zeros(length)
    sigma = cfg.stability_floor / math.sqrt(2)
    series = np.zeros(length)
    j, tau = 0, cfg.floor_correlation_shots
    while tau <= 2 * length:
        a = math.exp(-1 / tau)
        w = shot_rng(cfg.seed, "floor", j).standard_normal(length) * sigma
        w[1:] *= math.sqrt(1 - a * a)
        series += lfilter([1.0], [1.0, -a], w)
        j, tau = j + 1, tau * 2
    return series


def _equator_css(cfg: ExperimentConfig, rng: np.random.Generator) -> GaussianSpinState:
    """All atoms in |↓⟩ rotated onto the equator by the composite pulse pair (one shared amplitude error)."""
    state = make_css(cfg.n_atoms, polar=-math.pi / 2, contrast=cfg.css_contrast)
    return composite_pi_half(state, rng.normal(0.0, cfg.mw_amplitude_error_sigma))


def _sample_jz(state: GaussianSpinState, rng: np.random.Generator) -> float:
    """Draws the Jz a projective readout would find, clipped to the physical range."""
    half = state.n_atoms / 2
    return float(np.clip(rng.normal(state.mean_jz, math.sqrt(state.lab_var_jz)), -half, half))


def _prepare_squeezed(cfg: ExperimentConfig, rng: np.random.Generator, qnd: bool = True) -> _Prepared:
    """CSS → composite π/2 → pre-squeeze → QND₁ → QND₂ → release, each QND followed by the cavity light's AC-Stark phase."""
    n = cfg.n_atoms
    state = _equator_css(cfg, rng)
    if cfg.presqueeze_db is not None:
        state = presqueeze(state, cfg.presqueeze_db, cfg.presqueeze_align_rad)
    if not qnd:
        return _Prepared(state)

    delta = sample_beatnote(cfg.qnd, rng)
    raw, inferred = [], []
    for _ in range(2):
        outcome, state = qnd_measure(state, cfg.qnd, rng)
        reading = outcome - beatnote_shift(n, delta, cfg.qnd)  # what the cavity reports before correction
        raw.append(reading)
        inferred.append(beatnote_correct(reading, n, delta, cfg.qnd) if cfg.qnd.beatnote_correction else reading)
        state = rotate(state, Rotation(angle=cfg.ac_stark_phase_rad, about_pole=True))
    state = apply_contrast_decay(state, cfg.lattice_decay)
    return _Prepared(state, delta, tuple(raw), tuple(inferred))


def _ramsey_squeezed(state: GaussianSpinState, cfg: ExperimentConfig, rng: np.random.Generator, phase: float):
    """π/2 about the mean spin, free precession by phase, π/2 about the opposite axis; +phase maps to +Jz."""
    a0 = state.mean_azimuth
    eps1, eps2 = rng.normal(0.0, cfg.mw_amplitude_error_sigma, 2)
    state = rotate(state, Rotation(a0, math.pi / 2, eps1))
    state = rotate(state, Rotation(angle=-phase, about_pole=True))
    offset = cfg.second_pulse_phase_offset_rad + _mw_phase(cfg, rng)
    return rotate(state, Rotation(a0 + math.pi + offset, math.pi / 2, eps2))


def _mw_phase(cfg: ExperimentConfig, rng: np.random.Generator) -> float:
    """Per-shot microwave phase error, sized relative to the QPN angle 1/√N."""
    if cfg.mw_phase_noise_db is None:
        return 0.0
    return float(rng.normal(0.0, db_to_amplitude(cfg.mw_phase_noise_db) / math.sqrt(cfg.n_atoms)))


def _read_out(
    index: int, cfg: ExperimentConfig, state: GaussianSpinState, rng: np.random.Generator, fit: PositionFit, **fields
) -> ShotRecord:
    """Samples the true Jz, images both clouds and assembles the record with per-shot flags."""
    n = cfg.n_atoms
    jz_true = _sample_jz(state, rng)
    fluor = push_and_fluoresce(jz_true, n, cfg.fluor, rng, mean_n=n)
    fluor = position_correction(fluor, fit, n, cfg.fluor.photons_per_atom)
    record = ShotRecord(shot_index=index, t_s=index * cfg.cycle_s, fluor=fluor, jz_true=jz_true, **fields)
    flags = []
    if fluor.failed:
        flags.append("fluor_failed")
    if fluor.position_out_of_span:
        flags.append("position_out_of_span")
    if record.qnd1_jz is not None and abs(record.qnd1_jz) > cfg.qnd.linear_range_jz:
        flags.append("qnd_out_of_range")
    return record.with_flags(*flags)


def calibrate_position(cfg: ExperimentConfig, verbose: bool = False) -> PositionFit:
    """Images equator-prepared states and fits the pushed-cloud efficiency ratio against position."""
    if cfg.fluor.position_sigma_mm == 0:
        return PositionFit(intercept=1.0, slope=0.0)
    squeezed = cfg.sequence != "clock_css"
    outcomes = []
    for i in range(cfg.calibration_shots):
        rng = shot_rng(cfg.seed, "calibration", i)
        state = _prepare_squeezed(cfg, rng, qnd=False).state if squeezed else _equator_css(cfg, rng)
        outcomes.append(push_and_fluoresce(_sample_jz(state, rng), cfg.n_atoms, cfg.fluor, rng, mean_n=cfg.n_atoms))
    fit = fit_position_efficiency(outcomes)
    if verbose:
        print(f"Position calibration: ratio = {fit.intercept:.5f} + {fit.slope:.5f}/mm over {len(outcomes)} shots ✅")
    return fit


def _require(cfg: ExperimentConfig, *sequences: str):
    """Rejects a config whose sequence does not match the runner."""
    if cfg.sequence not in sequences:
        raise ValueError(f"sequence must be one of {sequences} for this runner, got {cfg.sequence!r}")


def run_squeeze_characterization(cfg: ExperimentConfig, workers: int | None = None) -> list[ShotRecord]:
    """Two QND readings and a fluorescence readout per shot."""
    _require(cfg, "squeeze_char")
    fit = calibrate_position(cfg)

    def shot(i):
        rng = shot_rng(cfg.seed, "shot", i)
        prep = _prepare_squeezed(cfg, rng)
        return _read_out(i, cfg, prep.state, rng, fit, **prep.fields)

    return _map_shots(shot, range(cfg.shots), workers)


def _clock_shot(cfg, fit, floor, i, theta=0.0, extra_noise_rad=0.0):
    """One Ramsey clock cycle accumulating phase ω₀·T·y + θ."""
    rng = shot_rng(cfg.seed, "shot", i)
    phase = OMEGA_0 * cfg.ramsey_s * floor[i] + theta
    if cfg.sequence == "clock_css":
        eps1, eps2 = rng.normal(0.0, cfg.mw_amplitude_error_sigma, 2)
        state = make_css(cfg.n_atoms, polar=-math.pi / 2, contrast=cfg.css_contrast)
        state = apply_contrast_decay(rotate(state, Rotation(0.0, math.pi / 2, eps1)), cfg.lattice_decay)
        state = rotate(state, Rotation(angle=-phase, about_pole=True))
        offset = cfg.second_pulse_phase_offset_rad + _mw_phase(cfg, rng)
        state = rotate(state, Rotation(-math.pi / 2 + offset, math.pi / 2, eps2))
        return _read_out(i, cfg, state, rng, fit)

    prep = _prepare_squeezed(cfg, rng)
    if cfg.sequence == "dynamic_range":
        gamma_sq = prep.state.var_jy / (cfg.n_atoms / 4)
        curvature = abs(gamma_sq - 1 / gamma_sq) / (math.sqrt(2) * cfg.n_atoms) * abs(math.tan(theta))
        phase += rng.normal(0.0, math.hypot(extra_noise_rad, curvature))
    state = _ramsey_squeezed(prep.state, cfg, rng, phase)
    theta_true = theta if cfg.sequence == "dynamic_range" else None
    return _read_out(i, cfg, state, rng, fit, theta_true=theta_true, **prep.fields)


def run_clock(cfg: ExperimentConfig, workers: int | None = None) -> list[ShotRecord]:
    """Ramsey clock with CSS or squeezed input; the stability floor is a shared, correlated series."""
    _require(cfg, "clock_css", "clock_squeezed")
    fit = calibrate_position(cfg)
    floor = stability_floor_series(cfg, cfg.shots)
    return _map_shots(lambda i: _clock_shot(cfg, fit, floor, i, theta=cfg.theta_offset_rad), range(cfg.shots), workers)


def run_dynamic_range(cfg: ExperimentConfig, theta_list=None, workers: int | None = None) -> list[ShotRecord]:
    """Squeezed clock shots tipped by θ before readout, cfg.shots per angle; curvature noise grows as tan θ."""
    _require(cfg, "dynamic_range")
    thetas = tuple(cfg.theta_list_rad if theta_list is None else theta_list)
    if not thetas or any(abs(t) >= math.pi / 2 for t in thetas):
        raise ValueError("theta_list must be non-empty with every |θ| < π/2")
    fit = calibrate_position(cfg)
    total = len(thetas) * cfg.shots
    floor = stability_floor_series(cfg, total)
    extra = cfg.dynamic_range_extra_noise_rad

    def shot(i):
        theta = thetas[i // cfg.shots] + cfg.theta_offset_rad
        return _clock_shot(cfg, fit, floor, i, theta=theta, extra_noise_rad=extra)

    return _map_shots(shot, range(total), workers)


def run_rabi_scan(cfg: ExperimentConfig, pulse_areas=None, workers: int | None = None) -> list[ShotRecord]:
    """Squeezed equatorial states rotated by each pulse area toward +Jz, cfg.shots per area."""
    _require(cfg, "rabi_scan")
    areas = tuple(cfg.pulse_areas_rad if pulse_areas is None else pulse_areas)
    if not areas:
        raise ValueError("pulse_areas must not be empty")
    fit = calibrate_position(cfg)

    def shot(i):
        area = areas[i // cfg.shots]
        rng = shot_rng(cfg.seed, "shot", i)
        prep = _prepare_squeezed(cfg, rng)
        eps = rng.normal(0.0, cfg.mw_amplitude_error_sigma)
        state = rotate(prep.state, Rotation(prep.state.mean_azimuth - math.pi / 2, area, eps))
        return _read_out(i, cfg, state, rng, fit, pulse_area_rad=area, **prep.fields)

    return _map_shots(shot, range(len(areas) * cfg.shots), workers)


RUNNERS = {
    "squeeze_char": run_squeeze_characterization,
    "clock_css": run_clock,
    "clock_squeezed": run_clock,
    "dynamic_range": run_dynamic_range,
    "rabi_scan": run_rabi_scan,
}


def run_sequence(cfg: ExperimentConfig, workers: int | None = None) -> list[ShotRecord]:
    """Runs the sequence named by cfg.sequence."""
    return RUNNERS[cfg.sequence](cfg, workers=workers)
