# Squeezeclock ⏱️ AGPL-3.0 License

"""Estimators and statistics over shot records: selection, squeezing, stability, intervals, fits and noise budgets."""

import math
from dataclasses import dataclass, field, replace

import lmfit
import numpy as np
from scipy.stats import chi2

from squeezeclock.measurement_models import beatnote_shift, qnd_resolution_var, thermal_inhomogeneity_noise
from squeezeclock.sequencer import ShotRecord
from squeezeclock.utils.common_utils import OMEGA_0, amplitude_db, power_sum_db, qpn_jz, variance_db
from squeezeclock.utils.config_utils import ExperimentConfig

SELECTION_FLAGS = ("qnd_out_of_range", "fluor_failed", "position_out_of_span")


@dataclass(frozen=True)
class StabilityCurve:
    """Allan deviation per averaging time with confidence bounds and the number of bin pairs used."""

    taus: tuple[float, ...]
    sigma_y: tuple[float, ...]
    ci_low: tuple[float, ...]
    ci_high: tuple[float, ...]
    n_pairs_used: tuple[int, ...]


@dataclass(frozen=True)
class NoiseBudget:
    """Noise entries in dB relative to QPN and their power-summed total."""

    entries: tuple[tuple[str, float], ...]
    total_db: float = field(init=False)

    def __post_init__(self):
        """Computes the total from the entries."""
        object.__setattr__(self, "total_db", power_sum_db(db for _, db in self.entries))


@dataclass(frozen=True)
class DynamicRangeFit:
    """Angle-resolution model Δθ² = ξ²/N + (Γ²-Γ⁻²)²/(2N²)·tan²θ + ΔX₀² with fitted anti-squeezing Γ²."""

    xi_sq: float
    gamma_sq: float
    delta_x0: float
    residual_norm: float
    n: float

    @property
    def gamma_sq_db(self) -> float:
        """Anti-squeezing in dB."""
        return float(variance_db(self.gamma_sq))

    @property
    def curvature(self) -> float:
        """Coefficient K of tan²θ."""
        return curvature_coefficient(self.gamma_sq, self.n)

    def predict(self, theta):
        """Model angle resolution in radians."""
        return np.sqrt(self.xi_sq / self.n + self.curvature * np.tan(theta) ** 2 + self.delta_x0**2)

    def crossing_rad(self) -> float:
        """|θ| where the model reaches the unsqueezed resolution 1/√N (NaN if it starts above it)."""
        room = 1 / self.n - self.xi_sq / self.n - self.delta_x0**2
        if room <= 0 or self.curvature <= 0:
            return math.nan
        return float(math.atan(math.sqrt(room / self.curvature)))


@dataclass(frozen=True)
class RabiFit:
    """Sinusoid fitted to J'z/(N/2) against pulse area; contrast is its amplitude."""

    contrast: float
    phase: float
    offset: float
    area_scale: float
    residual_norm: float


@dataclass(frozen=True)
class SqueezingMetrics:
    """Variance reduction Ξ², Wineland parameter ξ² (both dB) and angle resolution Δθ in radians."""

    variance_db: float
    wineland_db: float
    delta_theta: float
    std_jz: float
    n_shots: int
    ci_low: float = math.nan
    ci_high: float = math.nan


def jz12(record: ShotRecord) -> float:
    """Fluorescence J'z minus the last QND reading, or the fluorescence value alone when no QND was taken."""
    reference = record.qnd2_jz if record.qnd2_jz is not None else record.qnd1_jz
    return record.fluor.normalized_jz - (reference or 0.0)


def kept_records(records: list[ShotRecord]) -> list[ShotRecord]:
    """Records carrying no flags."""
    return [r for r in records if not r.flags]


def post_select(
    records: list[ShotRecord], linear_range_jz: float = 160.0, n_atoms: float | None = None, outlier_sigma: float = 6.0
) -> tuple[list[ShotRecord], dict]:
    """
    Re-derives every shot flag and returns (flagged records, removal report); nothing is deleted.

    Shots are flagged when QND₁ leaves the cavity's linear range, fluorescence failed or the pushed cloud fell outside
    the calibrated span. With ``n_atoms`` (clock data) shots with |Jz⁽¹²⁾ - mean| > outlier_sigma·√N/2 are also
    flagged, iterating until the set is stable so that re-running removes nothing more. The mean is taken per
    (theta_true, pulse_area_rad) setting, so deliberately tipped shots are only compared with shots of the same tip.
    """
    if not records:
        raise ValueError("post_select requires at least one record")
    base = []
    for r in records:
        flags = set()
        if r.qnd1_jz is not None and abs(r.qnd1_jz) > linear_range_jz:
            flags.add("qnd_out_of_range")
        if r.fluor.failed:
            flags.add("fluor_failed")
        if r.fluor.position_out_of_span:
            flags.add("position_out_of_span")
        base.append(flags)

    outlier = np.zeros(len(records), dtype=bool)
    if n_atoms is not None:
        bound = outlier_sigma * qpn_jz(n_atoms)
        values = np.array([jz12(r) if not f else math.nan for r, f in zip(records, base)])
        settings = [(r.theta_true, r.pulse_area_rad) for r in records]
        for setting in dict.fromkeys(settings):
            group = np.array([s == setting for s in settings])
            while True:
                keep = group & np.isfinite(values) & ~outlier
                if not keep.any():
                    break
                new = keep & (np.abs(values - values[keep].mean()) > bound)
                if not new.any():
                    break
                outlier |= new

    flagged = []
    for r, flags, out in zip(records, base, outlier):
        flags = flags | ({"clock_outlier"} if out else set())
        flagged.append(replace(r, flags=tuple(sorted(flags))))

    removed = sum(bool(r.flags) for r in flagged)
    report = {
        "total": len(flagged),
        "kept": len(flagged) - removed,
        "removed": removed,
        "removed_fraction": removed / len(flagged),
        **{flag: sum(flag in r.flags for r in flagged) for flag in (*SELECTION_FLAGS, "clock_outlier")},
    }
    return flagged, report


def _jz12_values(records: list[ShotRecord]) -> np.ndarray:
    """Jz⁽¹²⁾ of the unflagged records."""
    return np.array([jz12(r) for r in kept_records(records)])


def squeezing_metrics(
    records: list[ShotRecord], n: float, contrast: float, confidence: float = 0.68
) -> SqueezingMetrics:
    """Ξ² = var(Jz⁽¹²⁾)/(N/4), ξ² = Ξ²/C² and Δθ = ΔJz⁽¹²⁾/(C·N/2) over the unflagged records."""
    if not contrast > 0:
        raise ValueError(f"contrast must be positive, got {contrast}")
    values = _jz12_values(records)
    if len(values) < 2:
        raise ValueError(f"squeezing_metrics needs at least 2 kept records, got {len(values)}")
    return _metrics_from_std(float(np.std(values, ddof=1)), len(values), n, contrast, confidence)


def _metrics_from_std(std: float, n_shots: int, n: float, contrast: float, confidence: float) -> SqueezingMetrics:
    """Builds the metric set from a Jz standard deviation."""
    big_xi = float(variance_db(std**2 / (n / 4)))
    low, high = chi2_interval(std, n_shots, confidence)
    scale = contrast * n / 2
    return SqueezingMetrics(
        variance_db=big_xi,
        wineland_db=big_xi - float(amplitude_db(contrast)),
        delta_theta=std / scale,
        std_jz=std,
        n_shots=n_shots,
        ci_low=low / scale,
        ci_high=high / scale,
    )


def pooled_squeezing(record_sets: list[list[ShotRecord]], n: float, contrast: float, confidence: float = 0.68):
    """Combines several data sets through pooled_std, with interval degrees of freedom from the smallest set."""
    stds, counts = [], []
    for records in record_sets:
        values = _jz12_values(records)
        if len(values) < 2:
            raise ValueError("every pooled data set needs at least 2 kept records")
        stds.append(float(np.std(values, ddof=1)))
        counts.append(len(values))
    return _metrics_from_std(pooled_std(stds, counts), min(counts), n, contrast, confidence)


def chi2_interval(std: float, n_samples: int, m: float) -> tuple[float, float]:
    """Confidence interval of a standard deviation from the χ² distribution of the sample variance."""
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    if not 0 < m < 1:
        raise ValueError(f"confidence must be in (0, 1), got {m}")
    if std < 0:
        raise ValueError(f"std must be non-negative, got {std}")
    dof = n_samples - 1
    low = std * math.sqrt(dof / chi2.ppf((1 + m) / 2, dof))
    high = std * math.sqrt(dof / chi2.ppf((1 - m) / 2, dof))
    return float(low), float(high)


def pooled_std(stds: list[float], ns: list[int]) -> float:
    """Σ(nᵢ-1)·sᵢ / Σ(nᵢ-1): standard deviations pooled linearly, weighted by degrees of freedom."""
    if len(stds) != len(ns):
        raise ValueError(f"stds and ns must have equal length, got {len(stds)} and {len(ns)}")
    if not stds:
        raise ValueError("pooled_std requires at least one data set")
    if any(n < 2 for n in ns):
        raise ValueError(f"every data set needs at least 2 samples, got {list(ns)}")
    weights = np.asarray(ns, dtype=float) - 1
    return float(np.sum(weights * np.asarray(stds, dtype=float)) / np.sum(weights))


def qpn_stability(ramsey_s: float, cycle_s: float, n: float, tau: float, omega0: float = OMEGA_0) -> float:
    """Projection-noise stability limit 1/(ω₀T)·√(T_c/(Nτ)) of an unsqueezed full-contrast clock."""
    if min(ramsey_s, cycle_s, n, tau, omega0) <= 0:
        raise ValueError("ramsey_s, cycle_s, n, tau and omega0 must all be positive")
    return 1 / (omega0 * ramsey_s) * math.sqrt(cycle_s / (n * tau))


def fractional_frequency(records: list[ShotRecord], ramsey_s: float, n: float, contrast: float) -> np.ndarray:
    """Per-shot y = Jz⁽¹²⁾/(C·(N/2)·T·ω₀) on a gap-free index grid; flagged or missing shots are NaN."""
    if not records:
        raise ValueError("no records")
    ordered = sorted(records, key=lambda r: r.shot_index)
    start = ordered[0].shot_index
    y = np.full(ordered[-1].shot_index - start + 1, np.nan)
    scale = contrast * n / 2 * ramsey_s * OMEGA_0
    for r in ordered:
        if not r.flags:
            y[r.shot_index - start] = jz12(r) / scale
    return y


def allan_from_series(y: np.ndarray, cycle_s: float, taus, confidence: float = 0.99) -> StabilityCurve:
    """
    Two-sample deviation of a fractional-frequency series sampled every cycle_s, NaN marking skipped shots.

    Bins of τ/T_c shots average their kept values; a bin with none kept is empty and every pair touching it is dropped.
    """
    total_s = len(y) * cycle_s
    sigmas, lows, highs, pairs_used = [], [], [], []
    taus = [float(t) for t in taus]
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise ValueError("taus must be strictly increasing")
    for tau in taus:
        length = tau / cycle_s
        if tau <= 0 or not math.isclose(length, round(length), rel_tol=1e-9):
            raise ValueError(f"tau = {tau} s is not a positive multiple of the cycle time {cycle_s} s")
        if tau > total_s / 2:
            raise ValueError(f"tau = {tau} s exceeds half the record span {total_s} s")
        length = round(length)
        m = len(y) // length
        blocks = y[: m * length].reshape(m, length)
        counts = np.sum(np.isfinite(blocks), axis=1)
        if not counts.any():
            raise ValueError(f"all bins are empty at tau = {tau} s")
        sums = np.nansum(blocks, axis=1)
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
        diffs = np.diff(means)
        diffs = diffs[np.isfinite(diffs)]
        sigma, low, high = math.nan, math.nan, math.nan
        if len(diffs):
            sigma = math.sqrt(np.sum(diffs**2) / (2 * len(diffs)))
            low, high = chi2_interval(sigma, len(diffs) + 1, confidence)
        sigmas.append(sigma)
        lows.append(low)
        highs.append(high)
        pairs_used.append(len(diffs))
    return StabilityCurve(tuple(taus), tuple(sigmas), tuple(lows), tuple(highs), tuple(pairs_used))


def allan_deviation(
    records: list[ShotRecord],
    ramsey_s: float,
    cycle_s: float,
    n: float,
    contrast: float,
    taus,
    confidence: float = 0.99,
) -> StabilityCurve:
    """Gap-aware Allan deviation of a clock run; flagged shots are skipped and bins renormalized."""
    if not contrast > 0:
        raise ValueError(f"contrast must be positive, got {contrast}")
    return allan_from_series(fractional_frequency(records, ramsey_s, n, contrast), cycle_s, taus, confidence)


def metrological_gain_db(sigma_y: float, qpn: float) -> float:
    """Stability improvement over the projection-noise limit, in dB."""
    return float(amplitude_db(qpn / sigma_y))


def _unzip(pairs) -> tuple[np.ndarray, np.ndarray]:
    """Splits (x, y) pairs into two float arrays."""
    pairs = np.asarray(list(pairs), dtype=float).reshape(-1, 2)
    return pairs[:, 0], pairs[:, 1]


def _sine_residual(params, area, data):
    """Sinusoid minus data."""
    p = params.valuesdict()
    return p["amplitude"] * np.sin(p["area_scale"] * area + p["phase"]) + p["offset"] - data


def fit_rabi(scan) -> RabiFit:
    """Least-squares sinusoid through (pulse area, J'z/(N/2)) pairs; the amplitude is the coherence C."""
    area, data = _unzip(scan)
    if len(area) < 5 or np.ptp(area) < 2 * math.pi - 1e-9:
        raise ValueError("a Rabi scan needs at least 5 points covering one full oscillation")
    params = lmfit.Parameters()
    params.add("amplitude", value=max(np.ptp(data) / 2, 1e-3), min=0)
    params.add("phase", value=0.0, min=-math.pi, max=math.pi)
    params.add("offset", value=float(np.mean(data)))
    params.add("area_scale", value=1.0, min=0.5, max=1.5)
    result = lmfit.minimize(_sine_residual, params, args=(area, data))
    if not result.success:
        raise RuntimeError(f"Rabi fit did not converge: {result.message}")
    p = result.params.valuesdict()
    return RabiFit(
        contrast=float(p["amplitude"]),
        phase=float(p["phase"]),
        offset=float(p["offset"]),
        area_scale=float(p["area_scale"]),
        residual_norm=float(np.linalg.norm(result.residual)),
    )


def curvature_coefficient(gamma_sq: float, n: float) -> float:
    """K = (Γ²-Γ⁻²)²/(2N²), the tan²θ weight of the anti-squeezed quadrature."""
    return (gamma_sq - 1 / gamma_sq) ** 2 / (2 * n * n)


def _dynamic_range_residual(params, theta, data, n, xi_sq, delta_x0):
    """Model Δθ minus data."""
    gamma_sq = 10 ** (params["gamma_sq_db"].value / 10)
    model = np.sqrt(xi_sq / n + curvature_coefficient(gamma_sq, n) * np.tan(theta) ** 2 + delta_x0**2)
    return model - data


def fit_dynamic_range(points, n: float, xi_sq: float, delta_x0: float) -> DynamicRangeFit:
    """
    One-parameter fit of Γ² to (θ, Δθ) pairs with ξ² (linear) and ΔX₀ (radians) held fixed.

    A closed-form least-squares estimate of the tan²θ coefficient seeds an lmfit polish in dB.
    """
    theta, data = _unzip(points)
    if len(theta) < 3 or np.max(np.abs(theta)) < 0.01:
        raise ValueError("dynamic-range fit needs at least 3 points reaching |θ| >= 0.01 rad")
    x = np.tan(theta) ** 2
    k = max(float(np.sum(x * (data**2 - xi_sq / n - delta_x0**2)) / np.sum(x * x)), 1e-30)
    a = n * math.sqrt(2 * k)
    gamma_sq = (a + math.sqrt(a * a + 4)) / 2

    params = lmfit.Parameters()
    params.add("gamma_sq_db", value=10 * math.log10(gamma_sq), min=0, max=80)
    result = lmfit.minimize(_dynamic_range_residual, params, args=(theta, data, n, xi_sq, delta_x0))
    if not result.success:
        raise RuntimeError(f"dynamic-range fit did not converge: {result.message}")
    fit = DynamicRangeFit(
        xi_sq=xi_sq,
        gamma_sq=10 ** (result.params["gamma_sq_db"].value / 10),
        delta_x0=delta_x0,
        residual_norm=float(np.linalg.norm(result.residual)),
        n=n,
    )
    if fit.gamma_sq < 1 / xi_sq:
        print(f"WARNING ⚠️ fitted Γ² = {fit.gamma_sq:.3g} is below 1/ξ² = {1 / xi_sq:.3g}")
    return fit


def delta_theta_by_theta(records: list[ShotRecord], n: float, contrast: float, confidence: float = 0.68) -> list[dict]:
    """Angle resolution ΔJz⁽¹²⁾/(C·N/2·cos θ) per dynamic-range angle, with χ² bounds."""
    groups: dict[float, list[float]] = {}
    for r in kept_records(records):
        if r.theta_true is None:
            raise ValueError(f"shot {r.shot_index} has no theta_true; expected dynamic-range records")
        groups.setdefault(round(r.theta_true, 12), []).append(jz12(r))
    rows = []
    for theta in sorted(groups):
        values = np.array(groups[theta])
        if len(values) < 2:
            continue
        scale = contrast * n / 2 * math.cos(theta)
        std = float(np.std(values, ddof=1))
        low, high = chi2_interval(std, len(values), confidence)
        rows.append(
            {
                "theta": theta,
                "delta_theta": std / scale,
                "ci_low": low / scale,
                "ci_high": high / scale,
                "shots": len(values),
            }
        )
    return rows


def rabi_means(records: list[ShotRecord], n: float) -> list[tuple[float, float]]:
    """Mean J'z/(N/2) per pulse area over the unflagged shots."""
    groups: dict[float, list[float]] = {}
    for r in kept_records(records):
        if r.pulse_area_rad is None:
            raise ValueError(f"shot {r.shot_index} has no pulse_area_rad; expected Rabi-scan records")
        groups.setdefault(r.pulse_area_rad, []).append(r.fluor.normalized_jz)
    return [(area, float(np.mean(v)) / (n / 2)) for area, v in sorted(groups.items())]


def noise_budget(cfg: ExperimentConfig) -> NoiseBudget:
    """Technical noise on the angle estimate relative to QPN, from the configured readout and QND models."""
    n = cfg.n_atoms
    fluor = cfg.fluor
    qpn = qpn_jz(n)
    entries = []
    if fluor.unidentified_noise_db is not None:
        entries.append(("unidentified", float(fluor.unidentified_noise_db)))
    if fluor.excess_noise_db is not None:
        entries.append(("excess", float(fluor.excess_noise_db)))
    if fluor.background_sigma_photons > 0:
        background = fluor.background_sigma_photons / fluor.photons_per_atom
        entries.append(("read noise & background", float(amplitude_db(background / qpn))))
    if cfg.qnd.thermal_beta_sq > 0:
        thermal = thermal_inhomogeneity_noise(n, cfg.qnd.thermal_beta_sq)
        entries.append(("thermal inhomogeneity", float(amplitude_db(thermal / qpn))))
    if fluor.photon_shot_noise:
        entries.append(("photon shot noise", float(amplitude_db(1 / math.sqrt(fluor.photons_per_atom)))))
    if not cfg.qnd.beatnote_correction and cfg.sequence != "clock_css" and cfg.qnd.beatnote_sigma_hz > 0:
        spread = cfg.qnd.beatnote_sigma_hz / (math.sqrt(3) if cfg.qnd.beatnote_distribution == "uniform" else 1)
        entries.append(("uncorrected beatnote", float(amplitude_db(beatnote_shift(n, spread, cfg.qnd) / qpn))))
    if cfg.sequence in {"clock_css", "clock_squeezed", "dynamic_range"} and cfg.mw_phase_noise_db is not None:
        entries.append(("microwave phase", float(cfg.mw_phase_noise_db)))
    if not entries:
        raise ValueError("every noise source is disabled; the budget is empty")
    return NoiseBudget(tuple(entries))


def technical_noise_db(records: list[ShotRecord], cfg: ExperimentConfig) -> float:
    """Monte Carlo counterpart of noise_budget for squeeze_char runs: var(Jz⁽¹²⁾) less the QND resolution, dB vs N/4."""
    values = _jz12_values(records)
    if len(values) < 2:
        raise ValueError("technical_noise_db needs at least 2 kept records")
    n = cfg.n_atoms
    excess = float(np.var(values, ddof=1)) - qnd_resolution_var(n, cfg.qnd)
    if excess <= 0:
        raise ValueError("measured variance does not exceed the QND resolution; no technical noise to report")
    return float(variance_db(excess / (n / 4)))
