# Squeezeclock ⏱️ AGPL-3.0 License

"""
Collective pseudo-spin of N two-level atoms in the Gaussian-moment approximation.

A state is a mean Bloch vector of length contrast·N/2 along a unit ``axis`` plus a 3x3 covariance confined to the
plane tangent to that axis. Variances are reported in the tangent frame: ``var_jz`` along increasing latitude (the lab
Jz direction on the equator) and ``var_jy`` along increasing azimuth.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation as _SciRotation

Z_HAT = np.array([0.0, 0.0, 1.0])


def tangent_frame(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns (e_polar, e_azimuthal) unit vectors tangent to the sphere at ``axis``."""
    e_az = np.cross(Z_HAT, axis)
    norm = np.linalg.norm(e_az)
    e_az = e_az / norm if norm > 1e-12 else np.array([0.0, 1.0, 0.0])  # poles: fix the frame to y
    return np.cross(axis, e_az), e_az


def _frozen(a) -> np.ndarray:
    """Copies an array and marks it read-only."""
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GaussianSpinState:
    """Immutable collective spin: atom number, coherence, mean direction and transverse covariance."""

    n_atoms: float
    contrast: float
    axis: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        """Normalizes the mean direction and checks the type invariants."""
        if self.n_atoms < 1:
            raise ValueError(f"n_atoms must be >= 1, got {self.n_atoms}")
        if not 0 <= self.contrast <= 1:
            raise ValueError(f"contrast must be in [0, 1], got {self.contrast}")
        axis = np.asarray(self.axis, dtype=float)
        object.__setattr__(self, "axis", _frozen(axis / np.linalg.norm(axis)))
        object.__setattr__(self, "cov", _frozen(self.cov))
        if not (self.var_jz > 0 and self.var_jy > 0):
            raise ValueError(f"transverse variances must be positive, got var_jz={self.var_jz}, var_jy={self.var_jy}")

    @property
    def frame(self) -> tuple[np.ndarray, np.ndarray]:
        """Tangent (polar, azimuthal) unit vectors at the mean direction."""
        return tangent_frame(self.axis)

    @property
    def mean_vector(self) -> np.ndarray:
        """Mean (Jx, Jy, Jz) in spin units."""
        return self.contrast * self.n_atoms / 2 * self.axis

    @property
    def mean_jz(self) -> float:
        """Mean population-difference component Jz."""
        return float(self.contrast * self.n_atoms / 2 * self.axis[2])

    @property
    def mean_azimuth(self) -> float:
        """Azimuth of the mean spin in radians."""
        return float(math.atan2(self.axis[1], self.axis[0]))

    @property
    def polar_offset(self) -> float:
        """Latitude of the mean spin above the equator in radians."""
        return float(math.asin(np.clip(self.axis[2], -1.0, 1.0)))

    @property
    def var_jz(self) -> float:
        """Variance along the polar tangent direction."""
        e_pol, _ = self.frame
        return float(e_pol @ self.cov @ e_pol)

    @property
    def var_jy(self) -> float:
        """Variance along the azimuthal tangent direction."""
        _, e_az = self.frame
        return float(e_az @ self.cov @ e_az)

    @property
    def cov_zy(self) -> float:
        """Covariance between the polar and azimuthal tangent components."""
        e_pol, e_az = self.frame
        return float(e_pol @ self.cov @ e_az)

    @property
    def lab_var_jz(self) -> float:
        """Variance of the lab-frame Jz projection, the quantity a population readout samples."""
        return float(self.cov[2, 2])

    @property
    def transverse_det(self) -> float:
        """Determinant of the 2x2 tangent covariance (ellipse area squared up to π²)."""
        return self.var_jz * self.var_jy - self.cov_zy**2

    def satisfies_uncertainty(self, rtol: float = 1e-9) -> bool:
        """Checks ΔJz·ΔJy ≥ |Jx|/2 = contrast·N/4."""
        return math.sqrt(self.var_jz * self.var_jy) >= self.contrast * self.n_atoms / 4 * (1 - rtol)


def _tangent_cov(axis: np.ndarray, var_pol: float, var_az: float, cov_pa: float = 0.0) -> np.ndarray:
    """Builds a 3x3 covariance from tangent-frame moments."""
    e_pol, e_az = tangent_frame(axis)
    return (
        var_pol * np.outer(e_pol, e_pol)
        + var_az * np.outer(e_az, e_az)
        + cov_pa * (np.outer(e_pol, e_az) + np.outer(e_az, e_pol))
    )


def _axis(polar: float, azimuth: float) -> np.ndarray:
    """Unit vector at the given latitude and azimuth."""
    return np.array([math.cos(polar) * math.cos(azimuth), math.cos(polar) * math.sin(azimuth), math.sin(polar)])


def make_css(n_atoms: float, polar: float = 0.0, azimuth: float = 0.0, contrast: float = 1.0) -> GaussianSpinState:
    """Coherent spin state with var = N/4 in both transverse directions; polar=-π/2 is all atoms in |↓⟩."""
    if not n_atoms >= 1:
        raise ValueError(f"n_atoms must be >= 1, got {n_atoms}")
    axis = _axis(polar, azimuth)
    return GaussianSpinState(n_atoms, contrast, axis, _tangent_cov(axis, n_atoms / 4, n_atoms / 4))


@dataclass(frozen=True)
class Rotation:
    """Microwave pulse: rotation by angle·(1+amplitude_error) about an equatorial axis, or about z."""

    axis_azimuth: float = 0.0
    angle: float = 0.0
    amplitude_error: float = 0.0
    about_pole: bool = False

    def __post_init__(self):
        """Checks the pulse parameters."""
        if not math.isfinite(self.angle):
            raise ValueError(f"rotation angle must be finite, got {self.angle}")
        if not self.amplitude_error > -1:
            raise ValueError(f"amplitude_error must be > -1, got {self.amplitude_error}")

    @property
    def matrix(self) -> np.ndarray:
        """3x3 rotation matrix (right-handed about the rotation axis)."""
        n = Z_HAT if self.about_pole else np.array([math.cos(self.axis_azimuth), math.sin(self.axis_azimuth), 0.0])
        return _SciRotation.from_rotvec(self.angle * (1 + self.amplitude_error) * n).as_matrix()


def rotate(state: GaussianSpinState, r: Rotation) -> GaussianSpinState:
    """Rotates the mean spin and its covariance ellipse rigidly."""
    m = r.matrix
    return GaussianSpinState(state.n_atoms, state.contrast, m @ state.axis, m @ state.cov @ m.T)


def composite_pi_half(state: GaussianSpinState, eps: float) -> GaussianSpinState:
    """
    Pole-to-equator composite pulse: π/2 about 0°, then π about 120°, both with fractional amplitude error eps.

    The polar residual scales as ε³, one order beyond the O(ε²) cancellation the preparation requires.
    """
    if abs(state.axis[2]) < 0.99:
        raise ValueError(f"composite π/2 expects a state at a pole, polar offset is {state.polar_offset:.4f} rad")
    state = rotate(state, Rotation(0.0, math.pi / 2, eps))
    return rotate(state, Rotation(2 * math.pi / 3, math.pi, eps))


def oat_shear(state: GaussianSpinState, shear: float) -> GaussianSpinState:
    """Linearized one-axis twisting: the azimuthal component gains shear × the polar component."""
    if not math.isfinite(shear):
        raise ValueError(f"shear must be finite, got {shear}")
    e_pol, e_az = state.frame
    m = np.eye(3) + shear * np.outer(e_az, e_pol)
    return GaussianSpinState(state.n_atoms, state.contrast, state.axis, m @ state.cov @ m.T)


def calibrate_shear(target_db: float, align_angle: float | None = None) -> float:
    """
    Shear that brings a coherent state to target_db (Jz variance vs N/4) after realignment.

    With ``align_angle`` the realignment is a fixed rotation about the mean spin; otherwise the ellipse is rotated
    onto its principal axis.
    """
    t = 10 ** (target_db / 10)
    if not 0 < t < 1:
        raise ValueError(f"target_db must be negative, got {target_db}")
    if align_angle is None:
        return (1 - t) / math.sqrt(t)
    s2, sin2 = math.sin(align_angle) ** 2, math.sin(2 * abs(align_angle))
    disc = sin2**2 - 4 * s2 * (1 - t)
    if disc < 0:
        raise ValueError(
            f"{target_db} dB is unreachable with a {align_angle:.4f} rad realignment "
            f"(limit {10 * math.log10(s2):.2f} dB)"
        )
    return (sin2 - math.sqrt(disc)) / (2 * s2)


def presqueeze(state: GaussianSpinState, target_db: float, align_angle: float | None = None) -> GaussianSpinState:
    """One-axis-twisting pre-squeeze of an equatorial state followed by a realignment about the mean spin."""
    if abs(state.polar_offset) > 0.05:
        raise ValueError(f"pre-squeezing expects a state near the equator, offset {state.polar_offset:.4f} rad")
    shear = calibrate_shear(target_db, align_angle)
    sheared = oat_shear(state, shear)
    if align_angle is None:
        phi = 0.5 * math.atan2(-2 * sheared.cov_zy, sheared.var_jy - sheared.var_jz)
    else:
        phi = -math.copysign(abs(align_angle), shear * state.var_jz)
    return rotate(sheared, Rotation(sheared.mean_azimuth, phi))


def apply_contrast_decay(state: GaussianSpinState, c_factor: float) -> GaussianSpinState:
    """Scales the coherence by c_factor, keeping mean Jz and the covariance unchanged."""
    if not 0 < c_factor <= 1:
        raise ValueError(f"c_factor must be in (0, 1], got {c_factor}")
    if c_factor == 1:
        return state
    z = float(np.clip(state.axis[2] / c_factor, -1.0, 1.0))
    xy = state.axis[:2]
    rho = np.linalg.norm(xy)
    xy = xy * (math.sqrt(1 - z * z) / rho) if rho > 0 else xy
    return GaussianSpinState(state.n_atoms, state.contrast * c_factor, np.array([xy[0], xy[1], z]), state.cov)


def qnd_condition(
    state: GaussianSpinState, outcome: float, var_meas: float, antisqueeze_var: float, contrast: float
) -> GaussianSpinState:
    """
    Gaussian conditional update on a lab-frame Jz reading with resolution variance var_meas.

    The posterior mean moves toward the outcome with gain var/(var + var_meas); the azimuthal variance is raised to
    ``antisqueeze_var`` (measurement back-action) and the coherence is set to ``contrast``.
    """
    if var_meas <= 0:
        raise ValueError(f"var_meas must be positive, got {var_meas}")
    h = state.cov @ Z_HAT
    s = state.lab_var_jz + var_meas
    cov = state.cov - np.outer(h, h) / s
    mean_jz = state.mean_jz + state.lab_var_jz / s * (outcome - state.mean_jz)

    z = float(np.clip(mean_jz / (contrast * state.n_atoms / 2), -1.0, 1.0))
    xy = state.axis[:2] / np.linalg.norm(state.axis[:2])
    axis = np.array([xy[0] * math.sqrt(1 - z * z), xy[1] * math.sqrt(1 - z * z), z])
    _, e_az = tangent_frame(axis)
    v_az = float(e_az @ cov @ e_az)
    if antisqueeze_var > v_az:
        cov = cov + (antisqueeze_var - v_az) * np.outer(e_az, e_az)
    return GaussianSpinState(state.n_atoms, contrast, axis, cov)


def wineland_parameter(var_jz: float, n: float, contrast: float) -> float:
    """Metrological squeezing ξ² = (var_jz/(N/4))/C²."""
    if not contrast > 0:
        raise ValueError(f"contrast must be positive, got {contrast}")
    if not var_jz > 0:
        raise ValueError(f"var_jz must be positive, got {var_jz}")
    return var_jz / (n / 4) / contrast**2
