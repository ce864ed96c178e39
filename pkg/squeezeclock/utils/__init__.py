# Squeezeclock ⏱️ AGPL-3.0 License

from .common_utils import OMEGA_0, STREAMS, power_sum_db, qpn_jz, shot_rng
from .config_utils import (
    SQUEEZECLOCK_WORKERS,
    ExperimentConfig,
    FluorConfig,
    QndConfig,
    config_hash,
    dump_config,
    parse_config,
    squeezeclock_info,
)
from .records_utils import ReportTable, RunManifest, read_records, write_records

__all__ = (
    "OMEGA_0",
    "SQUEEZECLOCK_WORKERS",
    "STREAMS",
    "ExperimentConfig",
    "FluorConfig",
    "QndConfig",
    "ReportTable",
    "RunManifest",
    "config_hash",
    "dump_config",
    "parse_config",
    "power_sum_db",
    "qpn_jz",
    "read_records",
    "shot_rng",
    "squeezeclock_info",
    "write_records",
)
