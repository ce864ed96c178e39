# Squeezeclock ⏱️ AGPL-3.0 License

import dataclasses
import hashlib
import json
import math
import os
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from squeezeclock import __version__

SQUEEZECLOCK_CONFIG = os.getenv("SQUEEZECLOCK_CONFIG")
SQUEEZECLOCK_WORKERS = int(os.getenv("SQUEEZECLOCK_WORKERS", "1"))

SEQUENCES = ("squeeze_char", "clock_css", "clock_squeezed", "dynamic_range", "rabi_scan")

# Apparatus settings that differ per sequence, used only when the config file leaves the key out. The clock runs
# were taken with fewer atoms and their budget carries no excess readout term.
SEQUENCE_DEFAULTS = {
    "squeeze_char": {"n_atoms": 390000},
    "rabi_scan": {"n_atoms": 390000},
    "clock_css": {"n_atoms": 240000, "fluor": {"excess_noise_db": None}},
    "clock_squeezed": {"n_atoms": 240000, "fluor": {"excess_noise_db": None}},
    "dynamic_range": {"n_atoms": 240000, "ramsey_ms": 0.01, "fluor": {"excess_noise_db": None}},
}

# Coherence measured after each free-fall time, per lattice ramp
FALL_CONTRAST = {
    0.2: {2.0: 0.910, 3.0: 0.906, 4.0: 0.917},
    7.0: {2.0: 0.727, 4.0: 0.735, 6.0: 0.736, 8.0: 0.738},
}


def find_by_time(table: dict, key: float):
    """Value keyed by a time in ms, tolerating float formatting differences; None when absent."""
    for k, v in table.items():
        if math.isclose(float(k), key, rel_tol=1e-9, abs_tol=1e-12):
            return v
    return None


def lookup_by_time(table: dict, key: float, name: str):
    """Like find_by_time but raises when the table has no entry for key."""
    value = find_by_time(table, key)
    if value is None:
        raise ValueError(f"{name} has no entry for {key} ms (available: {sorted(float(k) for k in table)})")
    return value


def _check_type(path: str, value, annotation):
    """Validates a scalar config value against its field annotation, widening int to float where declared."""
    allowed = typing.get_args(annotation) if isinstance(annotation, types.UnionType) else (annotation,)
    if value is None and type(None) in allowed:
        return None
    if bool in allowed and isinstance(value, bool):
        return value
    if not isinstance(value, bool):
        if int in allowed and isinstance(value, int):
            return value
        if int in allowed and isinstance(value, float) and value.is_integer():
            return int(value)
        if float in allowed and isinstance(value, (int, float)):
            return float(value)
        if str in allowed and isinstance(value, str):
            return value
    names = " or ".join("null" if t is type(None) else t.__name__ for t in allowed)
    raise ValueError(f"{path} must be {names}, got {type(value).__name__} {value!r}")


def _merge_defaults(data: dict, defaults: dict) -> dict:
    """Fills keys missing from data, descending into nested sections."""
    merged = dict(data)
    for k, v in defaults.items():
        if isinstance(v, dict) and isinstance(merged.get(k) or {}, dict):
            merged[k] = _merge_defaults(merged.get(k) or {}, v)
        else:
            merged.setdefault(k, v)
    return merged


@dataclass(frozen=True)
class QndConfig:
    """Cavity QND measurement settings; spin units are Jz, detunings in Hz."""

    prepared_var_jz_db: float = -14.0
    antisqueeze_var_jy_db: float = 36.0
    linear_range_jz: float = 160.0
    cal_hz_per_jz: float = 6.25
    mean_detuning_hz: float = 3.417e9
    beatnote_sigma_hz: float = 3e6  # half-width for "uniform", standard deviation for "normal"
    beatnote_distribution: str = "uniform"
    thermal_beta_sq: float = 0.076
    contrast_after_qnd: float = 0.91
    beatnote_correction: bool = True

    def __post_init__(self):
        """Validates QND invariants."""
        if self.prepared_var_jz_db >= 0:
            raise ValueError(f"qnd.prepared_var_jz_db must be below 0 dB, got {self.prepared_var_jz_db}")
        if self.linear_range_jz <= 0:
            raise ValueError(f"qnd.linear_range_jz must be positive, got {self.linear_range_jz}")
        if self.cal_hz_per_jz <= 0:
            raise ValueError(f"qnd.cal_hz_per_jz must be positive, got {self.cal_hz_per_jz}")
        if self.beatnote_sigma_hz < 0 or self.mean_detuning_hz < 100 * self.beatnote_sigma_hz:
            raise ValueError("qnd.mean_detuning_hz must be much larger than qnd.beatnote_sigma_hz")
        if self.beatnote_distribution not in {"uniform", "normal"}:
            raise ValueError(f"qnd.beatnote_distribution must be uniform or normal, got {self.beatnote_distribution!r}")
        if not 0 <= self.thermal_beta_sq < 1:
            raise ValueError(f"qnd.thermal_beta_sq must be in [0, 1), got {self.thermal_beta_sq}")
        if not 0 < self.contrast_after_qnd <= 1:
            raise ValueError(f"qnd.contrast_after_qnd must be in (0, 1], got {self.contrast_after_qnd}")

    @property
    def linear_range_hz(self) -> float:
        """Cavity shift at the edge of the linear response range."""
        return self.linear_range_jz * self.cal_hz_per_jz


@dataclass(frozen=True)
class FluorConfig:
    """Push-and-image fluorescence readout settings."""

    photons_per_atom: float = 65.0
    background_sigma_photons: float = 4049.6  # ΔX of X = (x↑ - x↓)/2, gives -14 dB at N = 390000
    background_correlation: float = 0.5
    position_sigma_mm: float = 0.17
    position_efficiency_slope: float = 0.2
    unidentified_noise_db: float | None = -11.0
    excess_noise_db: float | None = -15.9  # beyond the itemized budget, brings the total to the 740 µrad measured
    photon_shot_noise: bool = True
    intensity_sigma: float = 0.02

    def __post_init__(self):
        """Validates readout invariants."""
        if self.photons_per_atom <= 0:
            raise ValueError(f"fluor.photons_per_atom must be positive, got {self.photons_per_atom}")
        for name in ("background_sigma_photons", "position_sigma_mm", "intensity_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"fluor.{name} must be non-negative, got {getattr(self, name)}")
        if not -1 < self.background_correlation < 1:
            raise ValueError(f"fluor.background_correlation must be in (-1, 1), got {self.background_correlation}")


def _default_thetas():
    """Dynamic-range sweep angles, -200 to 200 mrad."""
    return tuple(round(-0.2 + 0.025 * i, 6) for i in range(17))


def _default_pulse_areas():
    """Rabi scan pulse areas covering one full oscillation."""
    return tuple(2 * math.pi * i / 24 for i in range(25))


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one simulated run; defaults reproduce the published apparatus."""

    n_atoms: int = 390000
    lattice_ramp_ms: float = 0.2
    free_fall_ms: float = 4.0
    ramsey_ms: float = 3.6
    cycle_s: float = 1.0
    theta_offset_rad: float = 0.0
    mw_phase_noise_db: float | None = -10.0
    mw_amplitude_error_sigma: float = 1.4e-3
    stability_floor: float = 4e-12
    floor_correlation_shots: float = 8.0  # shortest correlation time in the flicker bank
    shots: int = 1000
    seed: int = 0
    sequence: str = "squeeze_char"
    css_contrast: float = 0.98
    presqueeze_db: float | None = -13.0
    presqueeze_align_rad: float | None = None
    ac_stark_phase_rad: float = 3 * math.pi / 5
    second_pulse_phase_offset_rad: float = 0.0
    push_duration_us: float = 37.0
    calibration_shots: int = 200
    dynamic_range_extra_noise_rad: float = 590e-6
    theta_list_rad: tuple = field(default_factory=_default_thetas)
    pulse_areas_rad: tuple = field(default_factory=_default_pulse_areas)
    qnd: QndConfig = field(default_factory=QndConfig)
    fluor: FluorConfig = field(default_factory=FluorConfig)
    contrast_table: dict = field(default_factory=lambda: {0.2: 0.91, 7.0: 0.73})
    contrast_by_fall: dict = field(default_factory=lambda: {k: dict(v) for k, v in FALL_CONTRAST.items()})
    max_free_fall_ms: dict = field(default_factory=lambda: {0.2: 4.0, 7.0: 8.0})

    def __post_init__(self):
        """Validates run-level invariants, including the camera field-of-view limit on free fall."""
        if self.n_atoms < 1:
            raise ValueError(f"n_atoms must be at least 1, got {self.n_atoms}")
        for name in ("lattice_ramp_ms", "free_fall_ms", "ramsey_ms", "cycle_s", "push_duration_us"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.shots < 0 or self.calibration_shots < 4:
            raise ValueError("shots must be >= 0 and calibration_shots >= 4")
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.sequence not in SEQUENCES:
            raise ValueError(f"sequence must be one of {SEQUENCES}, got {self.sequence!r}")
        if self.mw_amplitude_error_sigma < 0 or self.stability_floor < 0 or self.floor_correlation_shots <= 0:
            raise ValueError("mw_amplitude_error_sigma and stability_floor must be >= 0, floor_correlation_shots > 0")
        if not 0 < self.css_contrast <= 1:
            raise ValueError(f"css_contrast must be in (0, 1], got {self.css_contrast}")
        if self.presqueeze_db is not None and self.presqueeze_db >= 0:
            raise ValueError(f"presqueeze_db must be below 0 dB, got {self.presqueeze_db}")
        for k, c in self.contrast_table.items():
            if not 0 < c <= 1:
                raise ValueError(f"contrast_table.{k} must be in (0, 1], got {c}")
        for ramp, by_fall in self.contrast_by_fall.items():
            for fall, c in by_fall.items():
                if not 0 < c <= 1:
                    raise ValueError(f"contrast_by_fall.{ramp}.{fall} must be in (0, 1], got {c}")
        lookup_by_time(self.contrast_table, self.lattice_ramp_ms, "contrast_table")
        max_fall = lookup_by_time(self.max_free_fall_ms, self.lattice_ramp_ms, "max_free_fall_ms")
        if self.free_fall_ms > max_fall:
            raise ValueError(
                f"free_fall_ms={self.free_fall_ms} exceeds the {max_fall} ms field of view "
                f"available with lattice_ramp_ms={self.lattice_ramp_ms}"
            )
        if self.sequence == "dynamic_range":
            if not math.isclose(self.ramsey_ms, 0.01):
                raise ValueError(f"ramsey_ms must be 0.01 for the dynamic_range sequence, got {self.ramsey_ms}")
            if not self.theta_list_rad or any(abs(t) >= math.pi / 2 for t in self.theta_list_rad):
                raise ValueError("theta_list_rad must be non-empty with every |θ| < π/2")
        if self.sequence == "rabi_scan" and not self.pulse_areas_rad:
            raise ValueError("pulse_areas_rad must not be empty for the rabi_scan sequence")

    @property
    def ramsey_s(self) -> float:
        """Ramsey interrogation time in seconds."""
        return self.ramsey_ms * 1e-3

    @property
    def lattice_contrast(self) -> float:
        """Squeezed-state coherence after release, per free-fall time when tabulated, else per lattice ramp."""
        by_fall = find_by_time(self.contrast_by_fall, self.lattice_ramp_ms)
        contrast = find_by_time(by_fall, self.free_fall_ms) if by_fall else None
        if contrast is not None:
            return contrast
        return lookup_by_time(self.contrast_table, self.lattice_ramp_ms, "contrast_table")

    @property
    def lattice_decay(self) -> float:
        """Contrast factor applied at release, relative to the post-QND coherence."""
        return min(1.0, self.lattice_contrast / self.qnd.contrast_after_qnd)

    @property
    def readout_contrast(self) -> float:
        """Coherence used to convert Jz to angle at readout."""
        if self.sequence == "clock_css":
            return self.css_contrast * self.lattice_decay
        return self.lattice_contrast

    def replace(self, **changes) -> "ExperimentConfig":
        """Returns a validated copy with the given fields changed."""
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        """Serializes to a JSON-compatible dict."""
        d = dataclasses.asdict(self)
        d["theta_list_rad"] = list(self.theta_list_rad)
        d["pulse_areas_rad"] = list(self.pulse_areas_rad)
        d["contrast_table"] = {repr(float(k)): v for k, v in self.contrast_table.items()}
        d["max_free_fall_ms"] = {repr(float(k)): v for k, v in self.max_free_fall_ms.items()}
        d["contrast_by_fall"] = {
            repr(float(ramp)): {repr(float(fall)): c for fall, c in by_fall.items()}
            for ramp, by_fall in self.contrast_by_fall.items()
        }
        return d

    @classmethod
    def from_dict(cls, data: dict, strict: bool = True) -> "ExperimentConfig":
        """
        Builds a config from a (possibly partial) dict, filling apparatus defaults and rejecting unknown keys.

        Every value is type-checked against its field; a mismatch raises ValueError naming the dotted field path.
        """
        sequence = data.get("sequence", cls.sequence)
        if not isinstance(sequence, str):
            raise ValueError(f"sequence must be str, got {type(sequence).__name__} {sequence!r}")
        data = _merge_defaults(data, SEQUENCE_DEFAULTS.get(sequence, {}))
        sub = {"qnd": QndConfig, "fluor": FluorConfig}
        kwargs = {}
        fields = {f.name: f for f in dataclasses.fields(cls)}
        for key, value in data.items():
            if key not in fields:
                if strict:
                    raise ValueError(f"unknown config key '{key}'")
                continue
            if key in sub:
                kwargs[key] = _sub_from_dict(sub[key], value or {}, key, strict)
            elif key in {"contrast_table", "max_free_fall_ms"}:
                kwargs[key] = {_time_key(key, k): _check_type(f"{key}.{k}", v, float) for k, v in _mapping(key, value)}
            elif key == "contrast_by_fall":
                kwargs[key] = {
                    _time_key(key, ramp): {
                        _time_key(f"{key}.{ramp}", fall): _check_type(f"{key}.{ramp}.{fall}", c, float)
                        for fall, c in _mapping(f"{key}.{ramp}", by_fall)
                    }
                    for ramp, by_fall in _mapping(key, value)
                }
            elif key in {"theta_list_rad", "pulse_areas_rad"}:
                if not isinstance(value, (list, tuple)):
                    raise ValueError(f"{key} must be a list of numbers, got {type(value).__name__}")
                kwargs[key] = tuple(_check_type(f"{key}[{i}]", x, float) for i, x in enumerate(value))
            else:
                kwargs[key] = _check_type(key, value, fields[key].type)
        return cls(**kwargs)


def _mapping(path: str, value) -> list:
    """Items of a JSON object, rejecting anything else."""
    if not isinstance(value, dict):
        raise ValueError(f"{path} must be an object, got {type(value).__name__}")
    return list(value.items())


def _time_key(path: str, key) -> float:
    """Parses a table key in ms; JSON object keys arrive as strings."""
    if isinstance(key, str):
        try:
            return float(key)
        except ValueError:
            raise ValueError(f"{path}: key {key!r} is not a number") from None
    return _check_type(f"{path}.{key}", key, float)


def _sub_from_dict(kind, data: dict, path: str, strict: bool):
    """Builds a nested config section, naming unknown keys and mistyped values by dotted path."""
    fields = {f.name: f for f in dataclasses.fields(kind)}
    unknown = sorted(k for k, _ in _mapping(path, data) if k not in fields)
    if unknown and strict:
        raise ValueError(f"unknown config key '{path}.{unknown[0]}'")
    return kind(**{k: _check_type(f"{path}.{k}", v, fields[k].type) for k, v in data.items() if k in fields})


def parse_config(path=None, strict: bool = True) -> ExperimentConfig:
    """Reads a JSON config file (empty or missing path gives all apparatus defaults)."""
    if path is None:
        return ExperimentConfig.from_dict({})
    text = Path(path).read_text(encoding="utf-8").strip()
    if not text:
        return ExperimentConfig.from_dict({})
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ValueError(f"config {path} must contain a JSON object at the top level")
    return ExperimentConfig.from_dict(data, strict=strict)


def dump_config(cfg: ExperimentConfig) -> str:
    """Serializes a config to key-sorted JSON text."""
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the key-sorted config, stable under key reordering."""
    return hashlib.sha256(json.dumps(cfg.to_dict(), sort_keys=True).encode()).hexdigest()


def print_config_info(cfg: ExperimentConfig):
    """Prints the resolved run configuration as an aligned key/value block."""
    info = {
        "sequence": cfg.sequence,
        "seed": cfg.seed,
        "shots": cfg.shots,
        "n_atoms": cfg.n_atoms,
        "lattice_ramp_ms": cfg.lattice_ramp_ms,
        "free_fall_ms": cfg.free_fall_ms,
        "ramsey_ms": cfg.ramsey_ms,
        "readout_contrast": cfg.readout_contrast,
        "qnd.prepared_var_jz_db": cfg.qnd.prepared_var_jz_db,
        "qnd.antisqueeze_var_jy_db": cfg.qnd.antisqueeze_var_jy_db,
        "fluor.photons_per_atom": cfg.fluor.photons_per_atom,
        "fluor.excess_noise_db": cfg.fluor.excess_noise_db,
        "config_hash": config_hash(cfg)[:16],
    }
    max_key_length = max(len(key) for key in info)
    header = f"Squeezeclock {__version__} Run Information " + "-" * 40
    print(header)
    for key, value in info.items():
        print(f"{key:<{max_key_length + 5}}{value}")
    print("-" * len(header))


def squeezeclock_info():
    """Prints the configuration resolved from SQUEEZECLOCK_CONFIG (or apparatus defaults)."""
    print_config_info(parse_config(SQUEEZECLOCK_CONFIG))
