# Squeezeclock ⏱️ AGPL-3.0 License

from pathlib import Path

from squeezeclock import __version__
from squeezeclock.analysis import post_select
from squeezeclock.sequencer import run_sequence
from squeezeclock.utils.config_utils import ExperimentConfig, config_hash, print_config_info
from squeezeclock.utils.records_utils import RunManifest, write_records

CLOCK_SEQUENCES = {"clock_css", "clock_squeezed"}
EXPECTED_REMOVAL = 0.15  # upper end of the usual linear-range cut for squeezing runs


def simulate(
    cfg: ExperimentConfig, out_path: str | Path, workers: int | None = None, verbose: bool = True
) -> RunManifest:
    """Runs cfg.sequence, flags shots by post-selection, writes the record file and its manifest sidecar."""
    if verbose:
        print_config_info(cfg)
    manifest = RunManifest(
        config_hash=config_hash(cfg),
        seed=cfg.seed,
        version=__version__,
        sequence=cfg.sequence,
        started_at=RunManifest.now(),
        config=cfg.to_dict(),
    )
    records = run_sequence(cfg, workers=workers)
    if records:
        n_atoms = cfg.n_atoms if cfg.sequence in CLOCK_SEQUENCES else None
        records, selection = post_select(records, cfg.qnd.linear_range_jz, n_atoms=n_atoms)
    else:
        selection = {"total": 0, "kept": 0, "removed": 0, "removed_fraction": 0.0}

    manifest.record_count = write_records(out_path, records)
    manifest.post_selection = selection
    manifest.finished_at = RunManifest.now()
    manifest.write(out_path)

    if verbose:
        print(
            f"Wrote {manifest.record_count} {cfg.sequence} shots to {out_path}, "
            f"post-selection removed {selection['removed']} ({selection['removed_fraction']:.1%}) ✅"
        )
        if cfg.sequence == "squeeze_char" and selection["removed_fraction"] > EXPECTED_REMOVAL:
            print(f"WARNING ⚠️ post-selection removed more than {EXPECTED_REMOVAL:.0%} of shots")
    return manifest
