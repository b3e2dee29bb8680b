"""Extraction schema definition, loading, and record validation.

The schema is an explicit versioned file rather than hard-coded constants:
the toolkit is schema-parametric, and field order in the schema defines
field order in prompts, judgements, and reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

VALUE_KINDS = ("text", "boolean", "numeric", "date", "enum")

# Canonical page size for standardised referral scans (width, height in px).
DEFAULT_CANONICAL_PAGE = (1654, 2339)


class SchemaError(ValueError):
    """Raised for a malformed or inconsistent schema file."""


@dataclass(frozen=True)
class FieldSpec:
    field_id: str
    label: str
    value_kind: str
    enum_values: tuple[str, ...] | None = None
    unit_lexicon: tuple[str, ...] | None = None
    nullable: bool = True

    def __post_init__(self) -> None:
        if not self.field_id:
            raise SchemaError("field_id must be non-empty")
        if self.value_kind not in VALUE_KINDS:
            raise SchemaError(
                f"field {self.field_id!r}: unknown value_kind {self.value_kind!r}"
            )
        if self.value_kind == "enum":
            if not self.enum_values:
                raise SchemaError(
                    f"field {self.field_id!r}: enum kind requires non-empty enum_values"
                )
        elif self.enum_values is not None:
            raise SchemaError(
                f"field {self.field_id!r}: enum_values only allowed for enum kind"
            )


@dataclass(frozen=True)
class FormSchema:
    schema_id: str
    version: str
    canonical_page: tuple[int, int]
    fields: tuple[FieldSpec, ...]

    def __post_init__(self) -> None:
        w, h = self.canonical_page
        if w <= 0 or h <= 0:
            raise SchemaError(f"canonical_page must be positive, got {self.canonical_page}")
        if not self.fields:
            raise SchemaError("schema must declare at least one field")
        seen: set[str] = set()
        for f in self.fields:
            if f.field_id in seen:
                raise SchemaError(f"duplicate field_id {f.field_id!r}")
            seen.add(f.field_id)

    @property
    def field_ids(self) -> tuple[str, ...]:
        return tuple(f.field_id for f in self.fields)

    def field(self, field_id: str) -> FieldSpec:
        for f in self.fields:
            if f.field_id == field_id:
                return f
        raise KeyError(field_id)


@dataclass(frozen=True)
class Violation:
    """A record/schema mismatch; data for reports, not an exception."""

    kind: str  # "missing" | "unknown"
    field_id: str

    def __str__(self) -> str:
        return f"{self.kind} field {self.field_id!r}"


def load_schema(path: str | Path) -> FormSchema:
    """Load and validate a schema file (JSON key-value tree).

    Raises SchemaError with field context for malformed documents,
    duplicate field ids, or enum violations; FileNotFoundError if the
    path does not exist.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not a valid schema document: {exc}") from exc
    if not isinstance(data, dict) or "fields" not in data:
        raise SchemaError(f"{path}: schema document must be an object with a 'fields' list")

    page = data.get("canonical_page")
    if page is None:
        canonical_page = DEFAULT_CANONICAL_PAGE
    else:
        try:
            canonical_page = (int(page["width"]), int(page["height"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: canonical_page must carry width and height") from exc

    fields = []
    for entry in data["fields"]:
        try:
            fields.append(
                FieldSpec(
                    field_id=entry["field_id"],
                    label=entry.get("label", entry["field_id"]),
                    value_kind=entry["value_kind"],
                    enum_values=tuple(entry["enum_values"]) if entry.get("enum_values") else None,
                    unit_lexicon=tuple(entry["unit_lexicon"]) if entry.get("unit_lexicon") else None,
                    nullable=bool(entry.get("nullable", True)),
                )
            )
        except KeyError as exc:
            raise SchemaError(f"{path}: field entry missing key {exc}") from exc
    return FormSchema(
        schema_id=str(data.get("schema_id", path.stem)),
        version=str(data.get("version", "1")),
        canonical_page=canonical_page,
        fields=tuple(fields),
    )


def example_schema() -> FormSchema:
    """Bundled 15-field referral-style schema, for fixtures and quick starts.

    Representative, not authoritative: real deployments load their own
    schema file.
    """
    return load_schema(Path(__file__).parent / "data" / "crc-referral-example.json")


def check_record_fields(record_field_ids: list[str], schema: FormSchema) -> list[Violation]:
    """One violation per missing schema field and per unknown extra field.

    Missing fields are reported in schema order, unknown fields in record
    order; an empty list means the id sets match exactly.
    """
    present = set(record_field_ids)
    known = set(schema.field_ids)
    out = [Violation("missing", fid) for fid in schema.field_ids if fid not in present]
    seen: set[str] = set()
    for fid in record_field_ids:
        if fid not in known and fid not in seen:
            out.append(Violation("unknown", fid))
            seen.add(fid)
    return out
