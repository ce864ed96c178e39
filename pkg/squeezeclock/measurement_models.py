# Squeezeclock ⏱️ AGPL-3.0 License

"""Cavity QND and push-and-image fluorescence readout models."""

import math
from dataclasses import dataclass, replace

import numpy as np

from squeezeclock.collective_spin import GaussianSpinState, qnd_condition
from squeezeclock.utils.common_utils import db_to_amplitude, db_to_variance, qpn_jz
from squeezeclock.utils.config_utils import FluorConfig, QndConfig

MAX_DETUNING_RATIO = 0.01  # |δ/Δ| above which the beatnote linearization is rejected


@dataclass(frozen=True)
class FluorOutcome:
    """Signed photon counts of both clouds, pushed-cloud position and the normalized J'z estimate."""

    counts_up: float
    counts_down: float
    pushed_position_mm: float
    normalized_jz: float
    position_out_of_span: bool = False

    @property
    def failed(self) -> bool:
        """True when the counts gave no usable estimate (non-positive total signal)."""
        return not math.isfinite(self.normalized_jz)


@dataclass(frozen=True)
class PositionFit:
    """Linear model of the up/down collection-efficiency ratio versus pushed-cloud position (mm)."""

    intercept: float
    slope: float
    slope_stderr: float = 0.0
    position_min: float = -math.inf
    position_max: float = math.inf

    @property
    def span(self) -> float:
        """Width of the calibrated position range."""
        return self.position_max - self.position_min

    def in_span(self, position: float) -> bool:
        """Whether a position lies inside the calibrated range."""
        return self.position_min <= position <= self.position_max

    def efficiency(self, position: float) -> float:
        """Relative pushed-cloud efficiency, extrapolated no further than half a span past either edge."""
        if math.isfinite(self.span):
            position = min(max(position, self.position_min - self.span / 2), self.position_max + self.span / 2)
        return self.intercept + self.slope * position


def qnd_resolution_var(n: float, cfg: QndConfig) -> float:
    """Measurement variance that conditions a coherent state down to cfg.prepared_var_jz_db."""
    return (n / 4) / (db_to_variance(-cfg.prepared_var_jz_db) - 1)


def thermal_inhomogeneity_noise(n: float, beta_sq: float) -> float:
    """Standard deviation of the QND error from thermal spread in atom-cavity coupling, √N·β²/√(1+2β²)."""
    if beta_sq < 0:
        raise ValueError(f"beta_sq must be non-negative, got {beta_sq}")
    return math.sqrt(n) * beta_sq / math.sqrt(1 + 2 * beta_sq)


def qnd_measure(state: GaussianSpinState, cfg: QndConfig, rng: np.random.Generator) -> tuple[float, GaussianSpinState]:
    """
    Samples a cavity Jz reading and returns (outcome, posterior).

    The posterior is conditioned on the resolution-limited reading; thermal-inhomogeneity noise is added to the reported
    outcome only, so it degrades the record without narrowing the state.
    """
    n = state.n_atoms
    var_meas = qnd_resolution_var(n, cfg)
    clean = rng.normal(state.mean_jz, math.sqrt(state.lab_var_jz + var_meas))
    posterior = qnd_condition(
        state,
        clean,
        var_meas,
        antisqueeze_var=n / 4 * db_to_variance(cfg.antisqueeze_var_jy_db),
        contrast=cfg.contrast_after_qnd,
    )
    thermal = thermal_inhomogeneity_noise(n, cfg.thermal_beta_sq)
    outcome = clean + rng.normal(0.0, thermal) if thermal > 0 else clean
    return float(outcome), posterior


def sample_beatnote(cfg: QndConfig, rng: np.random.Generator) -> float:
    """Draws this shot's cavity/cooling-laser beatnote offset δ in Hz."""
    if cfg.beatnote_distribution == "normal":
        return float(rng.normal(0.0, cfg.beatnote_sigma_hz))
    return float(rng.uniform(-cfg.beatnote_sigma_hz, cfg.beatnote_sigma_hz))


def beatnote_shift(n: float, delta_hz: float, cfg: QndConfig) -> float:
    """Apparent Jz offset, Nδ/(2Δ), that a detuning fluctuation δ adds to the cavity reading."""
    ratio = delta_hz / cfg.mean_detuning_hz
    if abs(ratio) > MAX_DETUNING_RATIO:
        raise ValueError(f"|δ/Δ| = {abs(ratio):.3g} exceeds {MAX_DETUNING_RATIO}, beatnote linearization is invalid")
    return 0.5 * n * ratio


def beatnote_correct(measured_jz: float, n: float, delta_hz: float, cfg: QndConfig) -> float:
    """Removes the detuning fluctuation from a cavity reading: Jz = measured + Nδ/(2Δ)."""
    return measured_jz + beatnote_shift(n, delta_hz, cfg)


def normalized_jz(counts_up, counts_down, mean_n: float, alpha: float):
    """J'z = (N̄/2)(N↑-N↓)/(N↑+N↓) with atom numbers N = counts/α; NaN when the total signal is not positive."""
    up, down = np.asarray(counts_up, dtype=float) / alpha, np.asarray(counts_down, dtype=float) / alpha
    total = up + down
    with np.errstate(divide="ignore", invalid="ignore"):
        jz = np.where(total > 0, mean_n / 2 * (up - down) / total, np.nan)
    return float(jz) if jz.ndim == 0 else jz


def non_normalized_jz(counts_up, counts_down, alpha: float):
    """(N↑-N↓)/2, sensitive to total-number fluctuations unlike normalized_jz."""
    jz = (np.asarray(counts_up, dtype=float) - np.asarray(counts_down, dtype=float)) / (2 * alpha)
    return float(jz) if jz.ndim == 0 else jz


def push_and_fluoresce(
    state_jz_true: float, n: float, cfg: FluorConfig, rng: np.random.Generator, mean_n: float | None = None
) -> FluorOutcome:
    """
    Separates the two states with a push beam and images both clouds.

    Draw order per shot: pushed-cloud position, common intensity factor, photon counts, correlated background pair,
    unidentified noise, excess noise; a source that is off takes no draw. Counts are background-subtracted and may be
    negative.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if abs(state_jz_true) > n / 2:
        raise ValueError(f"Jz = {state_jz_true:.1f} lies outside ±N/2 = ±{n / 2:.1f}")
    alpha = cfg.photons_per_atom
    position = rng.normal(0.0, cfg.position_sigma_mm)
    efficiency_up = max(0.0, 1 + cfg.position_efficiency_slope * position)
    intensity = max(0.0, rng.normal(1.0, cfg.intensity_sigma))
    mean_up = alpha * intensity * efficiency_up * (n / 2 + state_jz_true)
    mean_down = alpha * intensity * (n / 2 - state_jz_true)
    if cfg.photon_shot_noise:
        up, down = (float(c) for c in rng.poisson([mean_up, mean_down]))
    else:
        up, down = mean_up, mean_down

    if cfg.background_sigma_photons > 0:
        rho = cfg.background_correlation
        sigma = cfg.background_sigma_photons * math.sqrt(2 / (1 - rho))  # single-cloud σ giving Δ[(x↑-x↓)/2] = ΔX
        x_up, x_down = rng.multivariate_normal([0.0, 0.0], sigma**2 * np.array([[1.0, rho], [rho, 1.0]]))
        up, down = up + x_up, down + x_down

    for noise_db in (cfg.unidentified_noise_db, cfg.excess_noise_db):
        if noise_db is not None:
            u = rng.normal(0.0, qpn_jz(n) * db_to_amplitude(noise_db))
            up, down = up + alpha * u, down - alpha * u

    return FluorOutcome(
        counts_up=float(up),
        counts_down=float(down),
        pushed_position_mm=float(position),
        normalized_jz=normalized_jz(up, down, n if mean_n is None else mean_n, alpha),
    )


def fit_position_efficiency(calibration_outcomes: list[FluorOutcome]) -> PositionFit:
    """Least-squares line through counts_up/counts_down versus pushed-cloud position for equator-prepared shots."""
    usable = [o for o in calibration_outcomes if not o.failed and o.counts_down > 0]
    if len(usable) < 4:
        raise ValueError(f"position calibration needs at least 4 usable shots, got {len(usable)}")
    position = np.array([o.pushed_position_mm for o in usable])
    ratio = np.array([o.counts_up / o.counts_down for o in usable])
    (slope, intercept), cov = np.polyfit(position, ratio, 1, cov=True)
    return PositionFit(
        intercept=float(intercept),
        slope=float(slope),
        slope_stderr=float(math.sqrt(cov[0, 0])),
        position_min=float(position.min()),
        position_max=float(position.max()),
    )


def position_correction(outcome: FluorOutcome, fit: PositionFit, mean_n: float, alpha: float) -> FluorOutcome:
    """Divides the pushed-cloud counts by the fitted efficiency ratio and recomputes J'z."""
    efficiency = fit.efficiency(outcome.pushed_position_mm)
    if efficiency <= 0:
        raise ValueError(f"fitted efficiency {efficiency:.3g} is not positive at {outcome.pushed_position_mm:.3f} mm")
    counts_up = outcome.counts_up / efficiency
    return replace(
        outcome,
        counts_up=counts_up,
        normalized_jz=normalized_jz(counts_up, outcome.counts_down, mean_n, alpha),
        position_out_of_span=outcome.position_out_of_span or not fit.in_span(outcome.pushed_position_mm),
    )
