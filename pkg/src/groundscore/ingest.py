"""Ground-truth and prediction ingestion, plus raw model-output parsing.

Annotations and predictions are line-delimited JSON (one record per line):
streamable, diff-friendly, and natural for per-document work.  Ground-truth
evidence is stored in pixel coordinates with per-record page dimensions and
converted to canonical form at load; predicted boxes are stored in the
model's declared native convention and normalized the same way.

``parse_model_response`` is total: any string (fenced, prefixed with prose,
truncated, or pure refusal text) yields either parsed fields or a parse
failure that downstream scoring treats as abstention on every field.
Evaluation must never crash on model output.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import BBox, CONVENTIONS, PIXELS, to_canonical
from .schema import FormSchema, check_record_fields, load_schema

logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    """Raised when ground truth fails validation; message lists every violation."""


@dataclass(frozen=True)
class AnnotationField:
    field_id: str
    value: str | None
    regions: tuple[BBox, ...]  # canonical coordinates


@dataclass(frozen=True)
class AnnotationRecord:
    doc_id: str
    image_path: str
    page: tuple[int, int]
    fields: tuple[AnnotationField, ...]

    def field(self, field_id: str) -> AnnotationField:
        for f in self.fields:
            if f.field_id == field_id:
                return f
        raise KeyError(field_id)

    @property
    def all_regions(self) -> tuple[BBox, ...]:
        return tuple(r for f in self.fields for r in f.regions)


@dataclass(frozen=True)
class PredictionField:
    field_id: str
    value: str | None
    box: BBox | None  # canonical coordinates


@dataclass(frozen=True)
class PredictionRecord:
    doc_id: str
    model_id: str
    fields: tuple[PredictionField, ...]
    raw_response: str | None = None
    parse_failed: bool = False


@dataclass(frozen=True)
class DatasetManifest:
    schema_path: Path
    annotations_path: Path
    images_dir: Path
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]


@dataclass(frozen=True)
class Dataset:
    schema: FormSchema
    records: tuple[AnnotationRecord, ...]
    manifest: DatasetManifest

    def record(self, doc_id: str) -> AnnotationRecord:
        for r in self.records:
            if r.doc_id == doc_id:
                return r
        raise KeyError(doc_id)

    @property
    def page_dims_by_doc(self) -> dict[str, tuple[int, int]]:
        return {r.doc_id: r.page for r in self.records}


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    base = path.parent

    def resolve(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else base / q

    split = data.get("split", {})
    return DatasetManifest(
        schema_path=resolve(data["schema_path"]),
        annotations_path=resolve(data["annotations_path"]),
        images_dir=resolve(data.get("images_dir", "images")),
        train_ids=tuple(split.get("train_ids", [])),
        test_ids=tuple(split.get("test_ids", [])),
    )


def load_ground_truth(manifest_path: str | Path) -> tuple[FormSchema, list[AnnotationRecord]]:
    """Load and validate the full annotated dataset behind a manifest.

    Every record is checked against the schema, presence logic is enforced
    (null value <=> empty evidence list), and split ids must be disjoint and
    known.  Violations do not abort at the first problem: the raised
    DatasetError lists every offending record.
    """
    manifest = load_manifest(manifest_path)
    schema = load_schema(manifest.schema_path)
    problems: list[str] = []

    overlap = set(manifest.train_ids) & set(manifest.test_ids)
    for doc_id in sorted(overlap):
        problems.append(f"doc {doc_id!r}: present in both train and test splits")

    records: list[AnnotationRecord] = []
    seen_ids: set[str] = set()
    if not manifest.annotations_path.exists():
        raise DatasetError(f"annotations file not found: {manifest.annotations_path}")
    with manifest.annotations_path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                problems.append(f"annotations line {lineno}: invalid JSON ({exc})")
                continue
            rec, rec_problems = _build_annotation(raw, schema, lineno)
            problems.extend(rec_problems)
            if rec is None:
                continue
            if rec.doc_id in seen_ids:
                problems.append(f"doc {rec.doc_id!r}: duplicate doc_id")
                continue
            seen_ids.add(rec.doc_id)
            records.append(rec)

    for doc_id in list(manifest.train_ids) + list(manifest.test_ids):
        if doc_id not in seen_ids:
            problems.append(f"doc {doc_id!r}: named in split but absent from annotations")

    if problems:
        raise DatasetError(
            "ground truth failed validation:\n  " + "\n  ".join(problems)
        )
    return schema, records


def load_dataset(manifest_path: str | Path) -> Dataset:
    manifest = load_manifest(manifest_path)
    schema, records = load_ground_truth(manifest_path)
    return Dataset(schema=schema, records=tuple(records), manifest=manifest)


def _build_annotation(
    raw: dict, schema: FormSchema, lineno: int
) -> tuple[AnnotationRecord | None, list[str]]:
    problems: list[str] = []
    doc_id = str(raw.get("doc_id", f"<line {lineno}>"))
    try:
        page = (int(raw["width"]), int(raw["height"]))
    except (KeyError, TypeError, ValueError):
        problems.append(f"doc {doc_id!r}: missing or invalid page dimensions")
        return None, problems

    entries = raw.get("fields", [])
    field_ids = [str(e.get("field_id", "")) for e in entries]
    for violation in check_record_fields(field_ids, schema):
        problems.append(f"doc {doc_id!r}: {violation}")

    fields: list[AnnotationField] = []
    for entry in entries:
        fid = str(entry.get("field_id", ""))
        value = entry.get("value")
        if value is not None:
            value = str(value)
        regions: list[BBox] = []
        for quad in entry.get("evidence", []):
            try:
                box = to_canonical(tuple(quad), PIXELS, page)
            except (ValueError, TypeError) as exc:
                problems.append(f"doc {doc_id!r} field {fid!r}: bad evidence box ({exc})")
                continue
            if box is None:
                problems.append(f"doc {doc_id!r} field {fid!r}: degenerate evidence box {quad}")
                continue
            regions.append(box)
        if value is None and regions:
            problems.append(
                f"doc {doc_id!r} field {fid!r}: null value must not carry evidence"
            )
        if value is not None and not regions:
            problems.append(
                f"doc {doc_id!r} field {fid!r}: non-null value requires evidence"
            )
        fields.append(AnnotationField(field_id=fid, value=value, regions=tuple(regions)))

    record = AnnotationRecord(
        doc_id=doc_id,
        image_path=str(raw.get("image", "")),
        page=page,
        fields=tuple(fields),
    )
    return record, problems


# --- model-response parsing -------------------------------------------------


@dataclass(frozen=True)
class ParsedField:
    field_id: str
    value: str | None
    box: tuple[float, float, float, float] | None  # native convention, unconverted


@dataclass(frozen=True)
class ParsedResponse:
    fields: tuple[ParsedField, ...]
    parse_failed: bool
    unknown_keys: tuple[str, ...] = ()


def _strip_code_fences(text: str) -> str:
    stripped = text.strip()
    if "```" not in stripped:
        return stripped
    # Keep only fenced content when fences are present; models that fence
    # their JSON put nothing useful outside the fence.
    parts = stripped.split("```")
    inner = []
    for i in range(1, len(parts), 2):
        chunk = parts[i]
        if chunk.startswith(("json", "JSON")):
            chunk = chunk[4:]
        inner.append(chunk)
    return "\n".join(inner).strip() if inner else stripped


def _first_balanced_object(text: str) -> str | None:
    """Extract the first balanced top-level {...} respecting JSON strings."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
            elif ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start : i + 1]
        start = text.find("{", start + 1)
    return None


def _coerce_value(value: object) -> str | None:
    if value is None:
        return None
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


def _coerce_box(value: object) -> tuple[float, float, float, float] | None:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        return None
    try:
        quad = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        return None
    if any(not math.isfinite(v) for v in quad):
        return None
    return quad


def parse_model_response(raw: str, schema: FormSchema) -> ParsedResponse:
    """Parse arbitrary model text into per-field {value, box} entries.

    Code fences are stripped, the first balanced top-level JSON object is
    located, keys are validated against the schema (unknown keys dropped
    with a warning, missing keys become null value and null box).  Anything
    unrecoverable yields ``parse_failed=True`` with all fields null.
    """
    null_fields = tuple(
        ParsedField(field_id=f.field_id, value=None, box=None) for f in schema.fields
    )
    if not raw or not raw.strip():
        return ParsedResponse(fields=null_fields, parse_failed=True)

    candidate = _first_balanced_object(_strip_code_fences(raw))
    if candidate is None:
        candidate = _first_balanced_object(raw)
    if candidate is None:
        return ParsedResponse(fields=null_fields, parse_failed=True)
    try:
        data = json.loads(candidate)
    except json.JSONDecodeError:
        return ParsedResponse(fields=null_fields, parse_failed=True)
    if not isinstance(data, dict):
        return ParsedResponse(fields=null_fields, parse_failed=True)

    unknown = tuple(k for k in data if k not in set(schema.field_ids))
    if unknown:
        logger.warning("dropping unknown keys in model output: %s", ", ".join(unknown))

    fields: list[ParsedField] = []
    for spec in schema.fields:
        payload = data.get(spec.field_id)
        if isinstance(payload, dict):
            value = _coerce_value(payload.get("value"))
            box = _coerce_box(payload.get("box"))
        elif isinstance(payload, (list, tuple)):
            # A bare array where an object was demanded: unusable payload.
            value, box = None, None
        else:
            value, box = _coerce_value(payload), None
        fields.append(ParsedField(field_id=spec.field_id, value=value, box=box))
    return ParsedResponse(fields=tuple(fields), parse_failed=False, unknown_keys=unknown)


# --- prediction files -------------------------------------------------------


@dataclass
class IngestStats:
    """Per-file ingestion accounting surfaced in CLI summaries."""

    lines: int = 0
    records: int = 0
    malformed_lines: int = 0
    degenerate_boxes: int = 0
    parse_failures: int = 0
    warnings: list[str] = field(default_factory=list)


def load_predictions(
    path: str | Path,
    convention: str,
    schema: FormSchema,
    page_dims_by_doc: dict[str, tuple[int, int]],
) -> tuple[list[PredictionRecord], IngestStats]:
    """Load a line-delimited prediction file, normalizing boxes to canonical.

    Boxes are converted with the model's declared convention (never
    auto-detected: silent misinterpretation of coordinates is exactly the
    failure class this toolkit exists to catch).  Degenerate boxes become
    null with a counted warning.  A record naming an unknown doc_id is an
    error; malformed lines are skipped and counted.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown coordinate convention {convention!r}")
    path = Path(path)
    stats = IngestStats()
    records: list[PredictionRecord] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            stats.lines += 1
            try:
                raw = json.loads(line)
                doc_id = str(raw["doc_id"])
                model_id = str(raw["model_id"])
            except (json.JSONDecodeError, KeyError, TypeError):
                stats.malformed_lines += 1
                stats.warnings.append(f"{path.name} line {lineno}: malformed record")
                continue
            if doc_id not in page_dims_by_doc:
                raise DatasetError(f"{path.name} line {lineno}: unknown doc_id {doc_id!r}")
            page = page_dims_by_doc[doc_id]
            parse_failed = bool(raw.get("parse_failed", False))

            entries = {str(e.get("field_id", "")): e for e in raw.get("fields", [])}
            fields: list[PredictionField] = []
            for spec in schema.fields:
                entry = entries.get(spec.field_id)
                if entry is None or parse_failed:
                    fields.append(PredictionField(spec.field_id, None, None))
                    continue
                value = entry.get("value")
                if value is not None:
                    value = str(value)
                box: BBox | None = None
                quad = _coerce_box(entry.get("box"))
                if quad is not None:
                    box = to_canonical(quad, convention, page)
                    if box is None:
                        stats.degenerate_boxes += 1
                        stats.warnings.append(
                            f"{path.name} line {lineno}: degenerate box on "
                            f"{spec.field_id!r} treated as absent"
                        )
                elif entry.get("box") is not None:
                    stats.degenerate_boxes += 1
                    stats.warnings.append(
                        f"{path.name} line {lineno}: unusable box on {spec.field_id!r}"
                    )
                fields.append(PredictionField(spec.field_id, value, box))

            records.append(
                PredictionRecord(
                    doc_id=doc_id,
                    model_id=model_id,
                    fields=tuple(fields),
                    raw_response=raw.get("raw_response"),
                    parse_failed=parse_failed,
                )
            )
            stats.records += 1
            if parse_failed:
                stats.parse_failures += 1
    return records, stats


def serialize_prediction_record(record: PredictionRecord) -> str:
    """One-line JSON form of a loaded record (canonical unit-interval boxes)."""
    payload = {
        "doc_id": record.doc_id,
        "model_id": record.model_id,
        "fields": [
            {
                "field_id": f.field_id,
                "value": f.value,
                "box": list(f.box.as_tuple()) if f.box is not None else None,
            }
            for f in record.fields
        ],
        "parse_failed": record.parse_failed,
    }
    if record.raw_response is not None:
        payload["raw_response"] = record.raw_response
    return json.dumps(payload, ensure_ascii=False, sort_keys=True)


def write_prediction_records(records: list[PredictionRecord], path: str | Path) -> None:
    """Write canonical records line-delimited; reload with unit_interval."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(serialize_prediction_record(rec) + "\n")
