"""Frame-stream CSV and cohort-manifest I/O plus versioned report writing."""

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import evaluation as ev
from . import temporal as tp

SCHEMA_VERSION = 1

FRAME_COLUMNS = (
    ("frame",)
    + tuple(f"au_{i:02d}" for i in range(1, tp.N_AU + 1))
    + tuple(f"expr_{i:02d}" for i in range(1, tp.N_EXPR + 1))
    + ("arousal", "valence")
)
FRAME_HEADER = ",".join(FRAME_COLUMNS)

# Inclusive bounds for every value column (everything after the frame index).
_VALUE_RANGES = [(0.0, 1.0)] * (tp.N_AU + tp.N_EXPR) + [(-1.0, 1.0), (-1.0, 1.0)]
_EXPR_SUM_TOL = 1e-9


class ParseError(ValueError):
    """Malformed cohort input, located by file, row, and column."""

    def __init__(self, message: str, *, path=None, row=None, column=None):
        self.path = None if path is None else str(path)
        self.row = row
        self.column = column
        where = [p for p in (
            self.path,
            None if row is None else f"row {row}",
            None if column is None else f"column {column!r}",
        ) if p is not None]
        super().__init__((", ".join(where) + ": " if where else "") + message)


def parse_frames(path) -> np.ndarray:
    """Read one participant's frame stream into an M x 22 attribute matrix.

    Enforces the exact header, per-column ranges, and unit expression mass
    so downstream feature extraction never sees out-of-contract values.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as err:
        raise ParseError(str(err), path=path) from None
    if not lines or lines[0] != FRAME_HEADER:
        raise ParseError(f"header must be exactly {FRAME_HEADER!r}", path=path, row=1)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(FRAME_COLUMNS):
            raise ParseError(
                f"expected {len(FRAME_COLUMNS)} cells, got {len(cells)}",
                path=path, row=lineno)
        try:
            int(cells[0])
        except ValueError:
            raise ParseError(f"frame index {cells[0]!r} is not an integer",
                             path=path, row=lineno, column="frame") from None
        values = []
        for cell, name, (lo, hi) in zip(cells[1:], FRAME_COLUMNS[1:], _VALUE_RANGES):
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(f"{cell!r} is not a number",
                                 path=path, row=lineno, column=name) from None
            if not math.isfinite(value):
                raise ParseError(f"{value} is not finite",
                                 path=path, row=lineno, column=name)
            if not lo <= value <= hi:
                raise ParseError(f"{name} must lie in [{lo}, {hi}], got {value}",
                                 path=path, row=lineno, column=name)
            values.append(value)
        expr_sum = math.fsum(values[tp.EXPR_COLS])
        if abs(expr_sum - 1.0) > _EXPR_SUM_TOL:
            raise ParseError(
                f"expression probabilities must sum to 1, got {expr_sum}",
                path=path, row=lineno, column="expr_01..expr_08")
        rows.append(values)
    if not rows:
        raise ParseError("no frame rows", path=path)
    return np.array(rows, dtype=float)


def write_frames(path, matrix) -> None:
    """Write an M x 22 attribute matrix as FrameCsv with round-trip-exact floats."""
    F = np.asarray(matrix, dtype=float)
    if F.ndim != 2 or F.shape[1] != tp.FRAME_DIM:
        raise ValueError(f"expected an M x {tp.FRAME_DIM} matrix, got shape {F.shape}")
    for name, (lo, hi), col in zip(FRAME_COLUMNS[1:], _VALUE_RANGES, F.T):
        if not np.all((col >= lo) & (col <= hi)):
            raise ValueError(f"column {name} has values outside [{lo}, {hi}]")
    lines = [FRAME_HEADER]
    for i, row in enumerate(F):
        lines.append(",".join([str(i)] + [repr(float(v)) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class ManifestEntry:
    participant_id: str
    label: str
    frames: Path


def parse_manifest(path) -> tuple:
    """Read a cohort manifest; entries come back sorted by participant id.

    Frame paths are resolved relative to the manifest's directory.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as err:
        raise ParseError(str(err), path=path) from None
    except json.JSONDecodeError as err:
        raise ParseError(f"invalid JSON: {err}", path=path) from None
    if not isinstance(raw, list):
        raise ParseError("manifest must be a JSON array", path=path)
    entries = []
    seen = set()
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ParseError(f"entry {i} is not an object", path=path, row=i)
        for key in ("id", "label", "frames"):
            if key not in item:
                raise ParseError(f"entry {i} is missing {key!r}", path=path, row=i)
        pid = str(item["id"])
        label = item["label"]
        if label not in ev.DIAGNOSES:
            raise ParseError(f"unknown label {label!r} for id {pid!r}; "
                             f"expected one of {ev.DIAGNOSES}", path=path, row=i)
        if pid in seen:
            raise ParseError(f"duplicate participant id {pid!r}", path=path, row=i)
        seen.add(pid)
        frames = path.parent / item["frames"]
        if not frames.is_file():
            raise ParseError(f"frames file {str(frames)!r} for id {pid!r} not found",
                             path=path, row=i)
        entries.append(ManifestEntry(pid, label, frames))
    return tuple(sorted(entries, key=lambda e: e.participant_id))


def load_cohort(manifest_path, tau: float = tp.DEFAULT_TAU) -> ev.Cohort:
    """Parse a manifest and all referenced frame streams into a feature cohort."""
    records = []
    for entry in parse_manifest(manifest_path):
        F = parse_frames(entry.frames)
        feats = tp.temporal_feature_vector(F, tau=tau)
        records.append(ev.StudyRecord(entry.participant_id, entry.label, feats.vector()))
    return ev.Cohort(tuple(records))


def to_jsonable(obj):
    """Recursively convert dataclasses, numpy scalars/arrays, and paths to JSON types."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def render_report(result: dict, fmt: str = "json") -> str:
    """Serialize a report mapping with a schema_version stamp and stable key order."""
    if not isinstance(result, dict):
        raise ValueError("report result must be a mapping")
    body = to_jsonable(result)
    body["schema_version"] = SCHEMA_VERSION
    if fmt == "json":
        return json.dumps(body, sort_keys=True, indent=2) + "\n"
    if fmt == "text":
        return "\n".join(_text_lines(body)) + "\n"
    raise ValueError(f"unknown report format {fmt!r}; expected 'json' or 'text'")


def write_report(result: dict, path, fmt: str = "json") -> None:
    Path(path).write_text(render_report(result, fmt), encoding="utf-8")


def read_report(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _text_lines(value, indent: int = 0) -> list:
    pad = "  " * indent
    lines = []
    if isinstance(value, dict):
        for key in sorted(value):
            inner = value[key]
            if isinstance(inner, (dict, list)) and inner:
                lines.append(f"{pad}{key}:")
                lines.extend(_text_lines(inner, indent + 1))
            else:
                lines.append(f"{pad}{key}: {_scalar_text(inner)}")
    elif isinstance(value, list):
        for inner in value:
            if isinstance(inner, (dict, list)) and inner:
                lines.append(f"{pad}-")
                lines.extend(_text_lines(inner, indent + 1))
            else:
                lines.append(f"{pad}- {_scalar_text(inner)}")
    else:
        lines.append(f"{pad}{_scalar_text(value)}")
    return lines


def _scalar_text(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, (dict, list)):
        return "(empty)"
    return str(value)
