# Squeezeclock ⏱️ AGPL-3.0 License

"""Analytic oracle checks for the models and estimators; a failing check is a result, never an exception."""

import math
from typing import Callable

import numpy as np
from scipy.special import gammainc

from squeezeclock.analysis import (
    allan_from_series,
    chi2_interval,
    fit_dynamic_range,
    pooled_std,
    qpn_stability,
)
from squeezeclock.collective_spin import Rotation, composite_pi_half, make_css, qnd_condition, rotate
from squeezeclock.measurement_models import beatnote_correct, qnd_resolution_var, thermal_inhomogeneity_noise
from squeezeclock.utils.common_utils import OMEGA_0, amplitude_db, power_sum_db, shot_rng, variance_db
from squeezeclock.utils.config_utils import QndConfig


def _close(value: float, expected: float, rel: float = 0.0, abs_tol: float = 0.0) -> tuple[bool, str]:
    """Comparison result plus a printable detail string."""
    ok = math.isclose(value, expected, rel_tol=rel, abs_tol=abs_tol)
    return ok, f"{value:.6g} (expected {expected:.6g})"


def _allan_direct(y: np.ndarray, length: int) -> float:
    """Textbook two-sample deviation without gap handling."""
    m = len(y) // length
    means = y[: m * length].reshape(m, length).mean(axis=1)
    return math.sqrt(np.sum(np.diff(means) ** 2) / (2 * (m - 1)))


def build_checks(omega0: float = OMEGA_0) -> dict[str, Callable[[], tuple[bool, str]]]:
    """Named zero-argument checks; omega0 lets the stability checks be run against a perturbed constant."""
    qnd = QndConfig()
    white = shot_rng(0, "shot", 0).standard_normal(2**14)

    def composite_exponent():
        # ε³ residual, stricter than the O(ε²) required
        offsets = [abs(composite_pi_half(make_css(1e5, polar=-math.pi / 2), e).polar_offset) for e in (0.02, 0.01)]
        exponent = math.log2(offsets[0] / offsets[1])
        return 2.9 <= exponent <= 3.1, f"exponent {exponent:.3f}"

    def composite_landing():
        axis = composite_pi_half(make_css(1e5, polar=-math.pi / 2), 0.0).axis
        ok = np.allclose(axis, [-math.sqrt(3) / 2, 0.5, 0.0], atol=1e-12)
        return bool(ok), f"axis {np.round(axis, 12).tolist()}"

    def single_pulse_first_order():
        state = rotate(make_css(1e5, polar=-math.pi / 2), Rotation(0.0, math.pi / 2, 0.05))
        return _close(abs(state.polar_offset), math.pi * 0.05 / 2, rel=1e-9)

    def qnd_conditioning():
        css = make_css(390000)
        post = qnd_condition(css, 0.0, qnd_resolution_var(390000, qnd), 1.0, 0.91)
        return _close(float(variance_db(post.var_jz / (390000 / 4))), qnd.prepared_var_jz_db, abs_tol=1e-9)

    def chi2_quantile_inversion():
        low, high = chi2_interval(1.0, 200, 0.68)
        p_low = gammainc(199 / 2, 199 / low**2 / 2)  # CDF at the upper quantile
        p_high = gammainc(199 / 2, 199 / high**2 / 2)
        quantiles_ok = abs(p_low - 0.84) < 1e-6 and abs(p_high - 0.16) < 1e-6
        ok = quantiles_ok and abs(low - 0.953) < 3e-3 and abs(high - 1.052) < 3e-3
        return ok, f"[{low:.4f}, {high:.4f}]"

    def allan_white_law():
        curve = allan_from_series(white, 1.0, [1.0, 16.0])
        ok = abs(curve.sigma_y[0] - 1) < 0.05 and abs(curve.sigma_y[1] * 4 - 1) < 0.15
        return ok, f"σ(1) = {curve.sigma_y[0]:.4f}, 4σ(16) = {4 * curve.sigma_y[1]:.4f}"

    def allan_gap_free_oracle():
        curve = allan_from_series(white, 1.0, [8.0])
        return _close(curve.sigma_y[0], _allan_direct(white, 8), rel=1e-12)

    def dynamic_range_round_trip():
        n, xi_sq, dx0, gamma_sq = 240000, 10**-1.4, 946e-6, 10**3.7
        k = (gamma_sq - 1 / gamma_sq) ** 2 / (2 * n * n)
        theta = np.linspace(-0.2, 0.2, 17)
        data = np.sqrt(xi_sq / n + k * np.tan(theta) ** 2 + dx0**2)
        fit = fit_dynamic_range(list(zip(theta, data)), n, xi_sq, dx0)
        return abs(fit.gamma_sq_db - 37) < 1e-6 and fit.residual_norm < 1e-9, f"Γ² = {fit.gamma_sq_db:.6f} dB"

    def stability(ramsey_s, tau=1):
        return qpn_stability(ramsey_s, 1, 240000, tau, omega0)

    return {
        "noise power sum of four entries": lambda: _close(power_sum_db([-11, -14, -16, -18]), -7.96, abs_tol=0.05),
        "noise power sum single entry": lambda: _close(power_sum_db([-14.0]), -14.0, abs_tol=1e-12),
        "QPN stability T=3.6 ms, N=240000": lambda: _close(stability(3.6e-3), 1.3205e-11, rel=2e-3),
        "QPN stability T=1.3 ms, N=240000": lambda: _close(stability(1.3e-3), 3.66e-11, rel=2e-3),
        "QPN stability τ^-1/2 law": lambda: _close(stability(3.6e-3, 4) / stability(3.6e-3), 0.5, rel=1e-12),
        "composite π/2 lands on the equator": composite_landing,
        "composite π/2 residual exponent": composite_exponent,
        "single π/2 first-order error": single_pulse_first_order,
        "QND conditional variance": qnd_conditioning,
        "beatnote correction at 3 MHz": lambda: _close(beatnote_correct(0, 390000, 3e6, qnd), 171.2, abs_tol=0.05),
        "thermal inhomogeneity noise": lambda: _close(thermal_inhomogeneity_noise(390000, 0.076), 44.2, abs_tol=0.05),
        "photon shot noise at 65 photons/atom": lambda: _close(float(amplitude_db(65**-0.5)), -18.13, abs_tol=0.01),
        "pooled std (1, 101), (3, 101)": lambda: _close(pooled_std([1, 3], [101, 101]), 2.0, rel=1e-12),
        "χ² interval n=200, m=0.68": chi2_quantile_inversion,
        "Allan white-noise τ^-1/2 law": allan_white_law,
        "Allan gap-free equals direct formula": allan_gap_free_oracle,
        "angle resolution at θ=0": lambda: _close(math.hypot((10**-1.4 / 390000) ** 0.5, 740e-6), 806e-6, abs_tol=1e-6),
        "dynamic-range fit round trip": dynamic_range_round_trip,
    }


def selftest(omega0: float = OMEGA_0, verbose: bool = True) -> bool:
    """Runs every check, prints a status line per check and returns True only if all pass."""
    results = []
    for name, check in build_checks(omega0).items():
        try:
            ok, detail = check()
        except Exception as e:  # a crashing oracle is a failed check
            ok, detail = False, f"{type(e).__name__}: {e}"
        results.append(ok)
        if verbose:
            print(f"{'✅' if ok else '❌'} {name}: {detail}")
    if verbose:
        print(f"Selftest: {sum(results)}/{len(results)} checks passed {'✅' if all(results) else '❌'}")
    return all(results)


if __name__ == "__main__":
    raise SystemExit(0 if selftest() else 3)
