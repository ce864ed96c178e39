# Squeezeclock ⏱️ AGPL-3.0 License

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable

TRUNCATION_KEY = "truncated"


def encode_value(value) -> str:
    """Encodes one value as JSON text with floats at 17 significant digits and non-finite floats as null."""
    if value is None or isinstance(value, bool):
        return json.dumps(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, ".17g") if math.isfinite(value) else "null"
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {encode_value(v)}" for k, v in value.items()) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(encode_value(v) for v in value) + "]"
    if hasattr(value, "item"):  # numpy scalars
        return encode_value(value.item())
    raise TypeError(f"cannot encode {type(value).__name__} in a record file")


def write_records(path: str | Path, records: Iterable, to_dict: Callable = None) -> int:
    """
    Streams records to a newline-delimited file, one object per line in field order, returning the count written.

    If writing fails with OSError a truncation marker line is attempted before the error propagates.
    """
    to_dict = to_dict or (lambda r: r.to_dict())
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        try:
            for record in records:
                f.write(encode_value(to_dict(record)) + "\n")
                count += 1
            f.flush()
        except OSError:
            try:
                f.write(encode_value({TRUNCATION_KEY: True, "records_written": count}) + "\n")
                f.flush()
            except OSError:
                pass
            raise
    return count


def read_records(path: str | Path, from_dict: Callable) -> list:
    """Reads a record file back, stopping at a truncation marker if one is present."""
    records = []
    with open(path, encoding="utf-8") as f:
        for line_number, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{line_number} is not a valid record: {e}") from e
            if d.get(TRUNCATION_KEY):
                print(f"WARNING ⚠️ {path} was truncated after {d.get('records_written')} records")
                break
            records.append(from_dict(d))
    return records


def manifest_path(record_path: str | Path) -> Path:
    """Sidecar manifest location for a record file."""
    return Path(f"{record_path}.manifest.json")


@dataclass
class RunManifest:
    """Provenance of one record file; reports rebuild everything they need from it."""

    config_hash: str
    seed: int
    version: str
    sequence: str
    started_at: str = ""
    finished_at: str = ""
    record_count: int = 0
    post_selection: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @staticmethod
    def now() -> str:
        """UTC timestamp in ISO 8601."""
        return datetime.now(timezone.utc).isoformat(timespec="seconds")

    def write(self, record_path: str | Path) -> Path:
        """Writes the sidecar next to the record file."""
        path = manifest_path(record_path)
        path.write_text(json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, record_path: str | Path) -> "RunManifest":
        """Loads the sidecar of a record file."""
        path = manifest_path(record_path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ValueError(f"manifest {path} is not valid JSON: {e}") from e
        return cls(**data)


@dataclass
class ReportTable:
    """Named columns (header carries the unit) written as CSV; provenance lists the source config hashes."""

    name: str
    columns: dict[str, list]
    provenance: list[str] = field(default_factory=list)

    def __post_init__(self):
        """Checks that all columns have equal length."""
        lengths = {k: len(v) for k, v in self.columns.items()}
        if len(set(lengths.values())) > 1:
            raise ValueError(f"report {self.name} has columns of unequal length: {lengths}")

    @property
    def rows(self) -> list[list]:
        """Row-major view of the columns."""
        return [list(row) for row in zip(*self.columns.values())]

    def to_csv(self) -> str:
        """CSV text with a header row and LF line endings."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(self.columns.keys())
        for row in self.rows:
            writer.writerow(_format_cell(v) for v in row)
        return buffer.getvalue()

    def write(self, path: str | Path) -> Path:
        """Writes the CSV file."""
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(self.to_csv())
        return path


def _format_cell(value) -> str:
    """Formats a CSV cell; floats keep 10 significant digits, NaN is left empty."""
    if value is None:
        return ""
    if isinstance(value, float) or hasattr(value, "dtype"):
        value = float(value)
        return "" if math.isnan(value) else format(value, ".10g")
    return str(value)
