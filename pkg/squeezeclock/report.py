# Squeezeclock ⏱️ AGPL-3.0 License

"""CSV report tables rebuilt from record files and their manifests; records are never modified."""

import math
from dataclasses import dataclass
from pathlib import Path

from squeezeclock.analysis import (
    allan_deviation,
    delta_theta_by_theta,
    fit_dynamic_range,
    fit_rabi,
    metrological_gain_db,
    noise_budget,
    pooled_squeezing,
    qpn_stability,
    rabi_means,
    technical_noise_db,
)
from squeezeclock.sequencer import ShotRecord
from squeezeclock.utils.common_utils import db_to_variance
from squeezeclock.utils.config_utils import ExperimentConfig
from squeezeclock.utils.records_utils import ReportTable, RunManifest, read_records

REPORTS = ("table1", "tableS1", "fig3a", "fig3b", "fig4a", "figS5")
MULTI_FILE_REPORTS = {"table1", "fig3a"}
CLOCKS = ("clock_css", "clock_squeezed")
DEFAULT_CONFIDENCE = {"table1": 0.68, "fig4a": 0.68, "fig3a": 0.99, "fig3b": 0.99}


@dataclass
class RecordSet:
    """One record file with the config and manifest it was produced under."""

    path: Path
    manifest: RunManifest
    cfg: ExperimentConfig
    records: list[ShotRecord]


def load_record_set(path: str | Path) -> RecordSet:
    """Reads a record file and its manifest sidecar."""
    manifest = RunManifest.read(path)
    cfg = ExperimentConfig.from_dict(manifest.config)
    return RecordSet(Path(path), manifest, cfg, read_records(path, ShotRecord.from_dict))


def _require(sets: list[RecordSet], name: str, *sequences: str):
    """Rejects record files whose sequence does not fit the report."""
    for s in sets:
        if s.cfg.sequence not in sequences:
            raise ValueError(f"report {name} needs {' or '.join(sequences)} records, {s.path} holds {s.cfg.sequence}")


def table1(sets: list[RecordSet], confidence: float) -> ReportTable:
    """Coherence and squeezing per (lattice ramp, free fall), pooling files that share both."""
    _require(sets, "table1", "squeeze_char")
    groups: dict[tuple[float, float], list[RecordSet]] = {}
    for s in sets:
        groups.setdefault((s.cfg.lattice_ramp_ms, s.cfg.free_fall_ms), []).append(s)
    columns = {k: [] for k in ("lattice_ramp (ms)", "free_fall (ms)", "contrast", "Xi_sq (dB)", "xi_sq (dB)")}
    columns |= {k: [] for k in ("delta_theta (rad)", "delta_theta_low (rad)", "delta_theta_high (rad)", "data_sets")}
    for (ramp, fall), group in sorted(groups.items()):
        cfg = group[0].cfg
        m = pooled_squeezing([s.records for s in group], cfg.n_atoms, cfg.readout_contrast, confidence)
        values = (ramp, fall, cfg.readout_contrast, m.variance_db, m.wineland_db, m.delta_theta, m.ci_low, m.ci_high)
        for key, value in zip(columns, (*values, len(group))):
            columns[key].append(value)
    return ReportTable("table1", columns, [s.manifest.config_hash for s in sets])


def table_s1(sets: list[RecordSet]) -> ReportTable:
    """Noise budget of the run configuration, plus the Monte Carlo total for squeezing runs."""
    s = sets[0]
    budget = noise_budget(s.cfg)
    sources = [label for label, _ in budget.entries] + ["total"]
    values = [db for _, db in budget.entries] + [budget.total_db]
    if s.cfg.sequence == "squeeze_char":
        sources.append("total (Monte Carlo)")
        values.append(technical_noise_db(s.records, s.cfg))
    return ReportTable("tableS1", {"source": sources, "noise (dB rel. QPN)": values}, [s.manifest.config_hash])


def fig3a(sets: list[RecordSet], confidence: float) -> ReportTable:
    """Single-shot stability (τ = T_c) against interrogation time, with the projection-noise reference."""
    _require(sets, "fig3a", *CLOCKS)
    columns = {k: [] for k in ("ramsey (s)", "sigma_y (frac)", "sigma_y_low (frac)", "sigma_y_high (frac)")}
    columns |= {"qpn sigma_y (frac)": [], "gain (dB)": []}
    for s in sorted(sets, key=lambda s: s.cfg.ramsey_ms):
        cfg = s.cfg
        curve = allan_deviation(
            s.records, cfg.ramsey_s, cfg.cycle_s, cfg.n_atoms, cfg.readout_contrast, [cfg.cycle_s], confidence
        )
        qpn = qpn_stability(cfg.ramsey_s, cfg.cycle_s, cfg.n_atoms, cfg.cycle_s)
        sigma = curve.sigma_y[0]
        for key, value in zip(
            columns, (cfg.ramsey_s, sigma, curve.ci_low[0], curve.ci_high[0], qpn, metrological_gain_db(sigma, qpn))
        ):
            columns[key].append(value)
    return ReportTable("fig3a", columns, [s.manifest.config_hash for s in sets])


def octave_taus(cycle_s: float, span_shots: int) -> list[float]:
    """Averaging times T_c·2^k up to half the record span."""
    taus, length = [], 1
    while length <= span_shots / 2:
        taus.append(length * cycle_s)
        length *= 2
    return taus


def fig3b(sets: list[RecordSet], confidence: float) -> ReportTable:
    """Allan deviation against averaging time with the projection-noise line."""
    _require(sets, "fig3b", *CLOCKS)
    s = sets[0]
    cfg = s.cfg
    span = max(r.shot_index for r in s.records) - min(r.shot_index for r in s.records) + 1
    taus = octave_taus(cfg.cycle_s, span)
    curve = allan_deviation(s.records, cfg.ramsey_s, cfg.cycle_s, cfg.n_atoms, cfg.readout_contrast, taus, confidence)
    columns = {
        "tau (s)": list(curve.taus),
        "sigma_y (frac)": list(curve.sigma_y),
        "sigma_y_low (frac)": list(curve.ci_low),
        "sigma_y_high (frac)": list(curve.ci_high),
        "pairs": list(curve.n_pairs_used),
        "qpn sigma_y (frac)": [qpn_stability(cfg.ramsey_s, cfg.cycle_s, cfg.n_atoms, t) for t in curve.taus],
    }
    return ReportTable("fig3b", columns, [s.manifest.config_hash])


def fig4a(sets: list[RecordSet], confidence: float) -> ReportTable:
    """Angle resolution against tip angle with the anti-squeezing fit and the unsqueezed limit 1/√N."""
    _require(sets, "fig4a", "dynamic_range")
    s = sets[0]
    cfg = s.cfg
    rows = delta_theta_by_theta(s.records, cfg.n_atoms, cfg.readout_contrast, confidence)
    xi_sq = float(db_to_variance(cfg.qnd.prepared_var_jz_db))
    center = min(rows, key=lambda row: abs(row["theta"]))
    delta_x0 = math.sqrt(max(center["delta_theta"] ** 2 - xi_sq / cfg.n_atoms, 0.0))
    fit = fit_dynamic_range([(r["theta"], r["delta_theta"]) for r in rows], cfg.n_atoms, xi_sq, delta_x0)
    print(f"Dynamic range fit: Γ² = {fit.gamma_sq_db:.2f} dB, 1/√N crossing at {fit.crossing_rad() * 1e3:.1f} mrad ✅")
    columns = {
        "theta (rad)": [r["theta"] for r in rows],
        "delta_theta (rad)": [r["delta_theta"] for r in rows],
        "delta_theta_low (rad)": [r["ci_low"] for r in rows],
        "delta_theta_high (rad)": [r["ci_high"] for r in rows],
        "fit (rad)": [float(fit.predict(r["theta"])) for r in rows],
        "unsqueezed (rad)": [1 / math.sqrt(cfg.n_atoms)] * len(rows),
    }
    return ReportTable("fig4a", columns, [s.manifest.config_hash])


def fig_s5(sets: list[RecordSet]) -> ReportTable:
    """Rabi oscillation of J'z/(N/2) against pulse area with the fitted sinusoid."""
    _require(sets, "figS5", "rabi_scan")
    s = sets[0]
    scan = rabi_means(s.records, s.cfg.n_atoms)
    fit = fit_rabi(scan)
    print(f"Rabi fit: C = {fit.contrast:.4f} ✅")
    columns = {
        "pulse_area (rad)": [a for a, _ in scan],
        "jz_over_half_n": [v for _, v in scan],
        "fit": [fit.contrast * math.sin(fit.area_scale * a + fit.phase) + fit.offset for a, _ in scan],
    }
    return ReportTable("figS5", columns, [s.manifest.config_hash])


def report(record_paths, name: str, out_path: str | Path | None = None, confidence: float | None = None) -> ReportTable:
    """Builds the named report from one or more record files and optionally writes it as CSV."""
    if name not in REPORTS:
        raise ValueError(f"unknown report {name!r}, choose from {REPORTS}")
    record_paths = [record_paths] if isinstance(record_paths, (str, Path)) else list(record_paths)
    if not record_paths:
        raise ValueError("at least one record file is required")
    if len(record_paths) > 1 and name not in MULTI_FILE_REPORTS:
        raise ValueError(f"report {name} takes a single record file, got {len(record_paths)}")
    sets = [load_record_set(p) for p in record_paths]
    confidence = DEFAULT_CONFIDENCE.get(name, 0.68) if confidence is None else confidence
    builders = {
        "table1": lambda: table1(sets, confidence),
        "tableS1": lambda: table_s1(sets),
        "fig3a": lambda: fig3a(sets, confidence),
        "fig3b": lambda: fig3b(sets, confidence),
        "fig4a": lambda: fig4a(sets, confidence),
        "figS5": lambda: fig_s5(sets),
    }
    table = builders[name]()
    if out_path is not None:
        table.write(out_path)
        print(f"Wrote report {name} ({len(table.rows)} rows) to {out_path} ✅")
    return table
