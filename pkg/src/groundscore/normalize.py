"""Domain-aware value canonicalization and the normalized-match predicate.

Raw field values from forms and model outputs vary in case, whitespace,
punctuation, numeric/unit formatting, date formats, and the spelling of
booleans and empty markers.  ``canonicalize`` collapses each raw string to a
typed canonical value so that ``normalized_match`` compares semantic content
rather than surface form.

The synonym inventories below are deliberate choices, versioned with the
package and overridable through a rules file (see ``NormalizationRules``),
so deployment sites can extend them without code changes.
"""

from __future__ import annotations

import datetime
import json
import re
import unicodedata
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path

# Kind tags for CanonicalValue.
NULL = "null"
BOOL = "bool"
NUMBER = "number"
DATE = "date"
TEXT = "text"
UNPARSEABLE = "unparseable"

DEFAULT_EMPTY_SYNONYMS = frozenset(
    {"", "n/a", "na", "none", "nil", "-", "not applicable", "nad"}
)
DEFAULT_TRUE_SYNONYMS = frozenset({"yes", "y", "true", "checked", "x", "✓", "1"})
DEFAULT_FALSE_SYNONYMS = frozenset({"no", "n", "false", "unchecked", "0"})

_ENCLOSING_PUNCT = "\"'`()[]{}.,;:!?"

_MONTHS = {
    "jan": 1, "january": 1, "feb": 2, "february": 2, "mar": 3, "march": 3,
    "apr": 4, "april": 4, "may": 5, "jun": 6, "june": 6, "jul": 7, "july": 7,
    "aug": 8, "august": 8, "sep": 9, "sept": 9, "september": 9,
    "oct": 10, "october": 10, "nov": 11, "november": 11, "dec": 12, "december": 12,
}

# Plain decimal or comma-grouped thousands; no exponents (form values are
# transcriptions, not scientific output).
_NUMBER_RE = re.compile(
    r"^[+-]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?$|^[+-]?\.\d+$"
)
_NUMERIC_SPLIT_RE = re.compile(
    r"^(?P<num>[+-]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|[+-]?\.\d+)\s*(?P<unit>.*)$"
)

_ISO_DATE_RE = re.compile(r"^(\d{4})-(\d{1,2})-(\d{1,2})$")
_DAYFIRST_RE = re.compile(r"^(\d{1,2})[/\-.](\d{1,2})[/\-.](\d{2}|\d{4})$")
_DAY_MONTHNAME_RE = re.compile(r"^(\d{1,2})(?:st|nd|rd|th)?\s+([a-z]+),?\s+(\d{2}|\d{4})$")
_MONTHNAME_DAY_RE = re.compile(r"^([a-z]+)\s+(\d{1,2})(?:st|nd|rd|th)?,?\s+(\d{2}|\d{4})$")


@dataclass(frozen=True)
class NormalizationRules:
    """Synonym and alias tables driving canonicalization."""

    empty_synonyms: frozenset[str] = DEFAULT_EMPTY_SYNONYMS
    true_synonyms: frozenset[str] = DEFAULT_TRUE_SYNONYMS
    false_synonyms: frozenset[str] = DEFAULT_FALSE_SYNONYMS
    unit_aliases: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path) -> "NormalizationRules":
        """Load overrides from a JSON rules file; absent keys keep defaults."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            empty_synonyms=frozenset(
                s.casefold() for s in data.get("empty_synonyms", DEFAULT_EMPTY_SYNONYMS)
            ),
            true_synonyms=frozenset(
                s.casefold() for s in data.get("true_synonyms", DEFAULT_TRUE_SYNONYMS)
            ),
            false_synonyms=frozenset(
                s.casefold() for s in data.get("false_synonyms", DEFAULT_FALSE_SYNONYMS)
            ),
            unit_aliases={
                k.casefold(): v for k, v in data.get("unit_aliases", {}).items()
            },
        )


DEFAULT_RULES = NormalizationRules()


@dataclass(frozen=True)
class CanonicalValue:
    """Kind-tagged canonical value; equality is structural.

    kind/value pairs: null/None, bool/bool, number/Decimal (unit holds the
    canonical unit spelling or None), date/ISO-8601 string, text/canonical
    string, unparseable/trimmed-casefolded raw string.
    """

    kind: str
    value: object = None
    unit: str | None = None

    def is_null(self) -> bool:
        return self.kind == NULL

    def render(self) -> str | None:
        """Surface form that re-canonicalizes to this same value."""
        if self.kind == NULL:
            return None
        if self.kind == BOOL:
            return "yes" if self.value else "no"
        if self.kind == NUMBER:
            num = f"{self.value:f}"
            return f"{num} {self.unit}" if self.unit else num
        return str(self.value)


_NULL_VALUE = CanonicalValue(NULL)


def _fold_text(s: str) -> str:
    s = s.casefold()
    s = " ".join(s.split())
    s = s.strip(_ENCLOSING_PUNCT).strip()
    return s


def _parse_number(s: str) -> Decimal | None:
    if not _NUMBER_RE.match(s):
        return None
    try:
        return Decimal(s.replace(",", "")).normalize()
    except InvalidOperation:  # pragma: no cover - regex should prevent this
        return None


def _expand_year(y: int) -> int:
    if y >= 100:
        return y
    return 2000 + y if y < 50 else 1900 + y


def _parse_date(s: str) -> str | None:
    """Parse ISO, day-first numeric, and month-name forms to ISO-8601."""
    folded = s.casefold().strip()
    m = _ISO_DATE_RE.match(folded)
    if m:
        y, mo, d = int(m.group(1)), int(m.group(2)), int(m.group(3))
    else:
        m = _DAYFIRST_RE.match(folded)
        if m:
            d, mo, y = int(m.group(1)), int(m.group(2)), _expand_year(int(m.group(3)))
        else:
            m = _DAY_MONTHNAME_RE.match(folded)
            if m and m.group(2) in _MONTHS:
                d, mo, y = int(m.group(1)), _MONTHS[m.group(2)], _expand_year(int(m.group(3)))
            else:
                m = _MONTHNAME_DAY_RE.match(folded)
                if m and m.group(1) in _MONTHS:
                    mo, d, y = _MONTHS[m.group(1)], int(m.group(2)), _expand_year(int(m.group(3)))
                else:
                    return None
    try:
        return datetime.date(y, mo, d).isoformat()
    except ValueError:
        return None


def _canonical_unit(
    raw_unit: str,
    unit_lexicon: list[str] | tuple[str, ...] | None,
    rules: NormalizationRules,
) -> str:
    folded = " ".join(raw_unit.split()).casefold().strip(_ENCLOSING_PUNCT).strip()
    folded = rules.unit_aliases.get(folded, folded)
    if unit_lexicon:
        for entry in unit_lexicon:
            if folded == entry.casefold():
                return entry
    return folded


def canonicalize(
    raw: str | None,
    kind: str,
    unit_lexicon: list[str] | tuple[str, ...] | None = None,
    rules: NormalizationRules = DEFAULT_RULES,
) -> CanonicalValue:
    """Collapse a raw value to its canonical form under the field's kind.

    Applied in order: Unicode compatibility (NFKC) normalization, trim,
    empty-synonym check, then kind-specific parsing.  A value that cannot be
    parsed under its kind comes back as an ``unparseable`` CanonicalValue
    carrying the trimmed casefolded raw string; it is data, not an error,
    and scores as a mismatch unless the other side is identically
    unparseable.
    """
    if raw is None:
        return _NULL_VALUE
    s = unicodedata.normalize("NFKC", str(raw)).strip()
    folded = _fold_text(s)
    if s.casefold() in rules.empty_synonyms or folded in rules.empty_synonyms:
        return _NULL_VALUE

    if kind == "boolean":
        if folded in rules.true_synonyms:
            return CanonicalValue(BOOL, True)
        if folded in rules.false_synonyms:
            return CanonicalValue(BOOL, False)
        return CanonicalValue(UNPARSEABLE, _fold_raw(s))

    if kind == "numeric":
        # Parse the trimmed form first so leading-dot decimals survive, then
        # retry with enclosing punctuation stripped ("(12.5)", "12.5.").
        for candidate in (s, s.strip(_ENCLOSING_PUNCT).strip()):
            m = _NUMERIC_SPLIT_RE.match(candidate)
            if not m:
                continue
            num = _parse_number(m.group("num"))
            if num is None:
                continue
            unit_part = m.group("unit").strip()
            if unit_part and not (unit_part[0].isalpha() or unit_part[0] in "%°"):
                # Trailing digits or stray separators are not a unit; treat
                # the whole value as unparseable rather than mis-splitting.
                continue
            unit = _canonical_unit(unit_part, unit_lexicon, rules) if unit_part else None
            return CanonicalValue(NUMBER, num, unit)
        return CanonicalValue(UNPARSEABLE, _fold_raw(s))

    if kind == "date":
        for candidate in (s, s.strip(_ENCLOSING_PUNCT).strip()):
            iso = _parse_date(candidate)
            if iso is not None:
                return CanonicalValue(DATE, iso)
        return CanonicalValue(UNPARSEABLE, _fold_raw(s))

    # text and enum kinds share the plain-text canonical form; enum
    # membership is a schema concern, not a matching concern.
    return CanonicalValue(TEXT, folded)


def _fold_raw(s: str) -> str:
    return s.strip().casefold()


def normalized_match(
    pred_raw: str | None,
    gt_raw: str | None,
    kind: str,
    unit_lexicon: list[str] | tuple[str, ...] | None = None,
    rules: NormalizationRules = DEFAULT_RULES,
) -> bool:
    """True iff both values canonicalize to structurally equal forms."""
    return canonicalize(pred_raw, kind, unit_lexicon, rules) == canonicalize(
        gt_raw, kind, unit_lexicon, rules
    )
