"""Leaderboards, scatter exports, judgement dumps, and human-audit packets.

Markdown output shows percentages to one decimal for reading; CSV carries
raw ratios (and rank columns) so downstream tooling never inherits rounding
loss.  Every report footer records the prompt hash and threshold settings;
results are meaningless without the configuration that produced them.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .geometry import BBox, to_pixels
from .ingest import AnnotationRecord, PredictionRecord
from .metrics import FailureMode, FieldJudgement, ModelScore
from .schema import FormSchema

LEADERBOARD_COLUMNS = (
    ("reading_acc", "Reading Acc."),
    ("evidence_precision", "Evidence Precision"),
    ("bbox_coverage", "Coverage"),
    ("strict_safety", "Strict Safety"),
    ("audit_precision", "Audit Precision"),
)

ZONE_HIGH = "high-performance"
ZONE_LOW_COVERAGE = "low-coverage"
ZONE_LOW_PRECISION = "low-precision"
ZONE_LOW_BOTH = "low-both"

ZONE_THRESHOLD = 0.5


def _sorted_rows(scores: list[ModelScore]) -> list[ModelScore]:
    return sorted(
        scores,
        key=lambda s: (s.regime, -s.strict_safety, -s.reading_acc, s.model_id),
    )


def _rank_map(scores: list[ModelScore], attr: str) -> dict[str, int]:
    """Dense rank per model for one metric column (1 = best)."""
    defined = [s for s in scores if attr != "evidence_precision" or s.ep_defined]
    values = sorted({getattr(s, attr) for s in defined}, reverse=True)
    rank_of = {v: i + 1 for i, v in enumerate(values)}
    return {s.model_id: rank_of[getattr(s, attr)] for s in defined}


def _pct(value: float) -> str:
    return f"{value * 100:.1f}%"


def render_leaderboard(
    scores: list[ModelScore],
    fmt: str = "markdown",
    footer: dict | None = None,
) -> str:
    """Render one leaderboard: grouped by regime, best marked per column.

    Markdown marks the best value per numeric column in bold and the second
    best in italics; CSV keeps raw ratios plus dense rank columns.  Models
    that emitted no boxes show an undefined evidence precision.
    """
    if not scores:
        raise ValueError("cannot render a leaderboard from zero scores")
    rows = _sorted_rows(scores)
    ranks = {attr: _rank_map(scores, attr) for attr, _ in LEADERBOARD_COLUMNS}

    if fmt == "csv":
        header = ["model_id", "regime", "n_fields"]
        header += [attr for attr, _ in LEADERBOARD_COLUMNS]
        header += [f"{attr}_rank" for attr, _ in LEADERBOARD_COLUMNS]
        lines = [",".join(header)]
        for s in rows:
            cells = [s.model_id, s.regime, str(s.n_fields)]
            for attr, _ in LEADERBOARD_COLUMNS:
                if attr == "evidence_precision" and not s.ep_defined:
                    cells.append("")
                else:
                    cells.append(repr(getattr(s, attr)))
            for attr, _ in LEADERBOARD_COLUMNS:
                cells.append(str(ranks[attr].get(s.model_id, "")))
            lines.append(",".join(cells))
        if footer:
            lines.append("")
            lines.append("# " + ", ".join(f"{k}={v}" for k, v in sorted(footer.items())))
        return "\n".join(lines) + "\n"

    if fmt != "markdown":
        raise ValueError(f"unknown leaderboard format {fmt!r}")

    def cell(s: ModelScore, attr: str) -> str:
        if attr == "evidence_precision" and not s.ep_defined:
            return "—"
        text = _pct(getattr(s, attr))
        rank = ranks[attr].get(s.model_id)
        if rank == 1:
            return f"**{text}**"
        if rank == 2:
            return f"*{text}*"
        return text

    header = "| Model | Regime | " + " | ".join(t for _, t in LEADERBOARD_COLUMNS) + " |"
    sep = "|" + "---|" * (2 + len(LEADERBOARD_COLUMNS))
    lines = [header, sep]
    for s in rows:
        cells = [s.model_id, s.regime] + [cell(s, attr) for attr, _ in LEADERBOARD_COLUMNS]
        lines.append("| " + " | ".join(cells) + " |")
    if footer:
        lines.append("")
        lines.append("_" + ", ".join(f"{k}={v}" for k, v in sorted(footer.items())) + "_")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ScatterPoint:
    model_id: str
    regime: str
    evidence_precision: float
    bbox_coverage: float
    zone: str


def classify_zone(evidence_precision: float, bbox_coverage: float) -> str:
    high_ep = evidence_precision >= ZONE_THRESHOLD
    high_cov = bbox_coverage >= ZONE_THRESHOLD
    if high_ep and high_cov:
        return ZONE_HIGH
    if high_ep:
        return ZONE_LOW_COVERAGE
    if high_cov:
        return ZONE_LOW_PRECISION
    return ZONE_LOW_BOTH


def export_scatter(scores: list[ModelScore]) -> list[ScatterPoint]:
    """One precision/coverage point per model with its quadrant label."""
    return [
        ScatterPoint(
            model_id=s.model_id,
            regime=s.regime,
            evidence_precision=s.evidence_precision,
            bbox_coverage=s.bbox_coverage,
            zone=classify_zone(s.evidence_precision, s.bbox_coverage),
        )
        for s in _sorted_rows(scores)
    ]


def scatter_csv(points: list[ScatterPoint]) -> str:
    lines = ["model_id,regime,evidence_precision,bbox_coverage,zone"]
    for p in points:
        lines.append(
            f"{p.model_id},{p.regime},{p.evidence_precision!r},{p.bbox_coverage!r},{p.zone}"
        )
    return "\n".join(lines) + "\n"


# --- audit packets -----------------------------------------------------------


class PacketError(ValueError):
    """Judgements do not line up with the schema fields of the document."""


def build_audit_packet(
    schema: FormSchema,
    annotation: AnnotationRecord,
    prediction: PredictionRecord | None,
    judgements: list[FieldJudgement],
    model_id: str,
    prompt_hash: str,
) -> dict:
    """Bundle one document's extractions for the review UI.

    Boxes are converted back to pixel space for direct overlay on the page
    image; entries follow schema field order; abstained and failed fields
    carry ``needs_review`` so the UI can queue them first.
    """
    by_field = {j.field_id: j for j in judgements}
    missing = [f.field_id for f in schema.fields if f.field_id not in by_field]
    extra = [fid for fid in by_field if fid not in set(schema.field_ids)]
    if missing or extra:
        raise PacketError(
            f"doc {annotation.doc_id!r}: judgements missing {missing}, unexpected {extra}"
        )

    pred_fields = {}
    if prediction is not None:
        pred_fields = {f.field_id: f for f in prediction.fields}

    page = annotation.page
    entries = []
    for spec in schema.fields:
        j = by_field[spec.field_id]
        gt = annotation.field(spec.field_id)
        pred = pred_fields.get(spec.field_id)
        pred_box_px = (
            list(to_pixels(pred.box, page)) if pred is not None and pred.box else None
        )
        entries.append(
            {
                "field_id": spec.field_id,
                "label": spec.label,
                "gt_value": gt.value,
                "pred_value": pred.value if pred is not None else None,
                "value_correct": j.value_correct,
                "gt_regions": [list(to_pixels(r, page)) for r in gt.regions],
                "pred_box": pred_box_px,
                "iou": j.iou,
                "iop": j.iop,
                "failure": j.failure.value,
                "needs_review": j.failure is not FailureMode.NONE,
            }
        )
    return {
        "doc_id": annotation.doc_id,
        "image_path": annotation.image_path,
        "page": {"width": page[0], "height": page[1]},
        "model_id": model_id,
        "prompt_hash": prompt_hash,
        "entries": entries,
    }


def write_audit_packet(packet: dict, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(packet, indent=2, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8",
    )


# --- judgement dumps ---------------------------------------------------------


def write_judgements(judgements: list[FieldJudgement], path: str | Path) -> None:
    """Line-delimited judgement dump for downstream analysis and the UI."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for j in judgements:
            rec = asdict(j)
            rec["failure"] = j.failure.value
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def load_judgements(path: str | Path) -> list[FieldJudgement]:
    out: list[FieldJudgement] = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            rec["failure"] = FailureMode(rec["failure"])
            rec["matched_region"] = rec.get("matched_region")
            out.append(FieldJudgement(**rec))
    return out


# --- reviewer decisions (written by the audit UI) ----------------------------


@dataclass(frozen=True)
class AuditDecision:
    doc_id: str
    field_id: str
    model_id: str
    verdict: str  # "accepted" | "rejected" | "corrected"
    corrected_value: str | None = None
    reviewer_note: str | None = None
    timestamp: str = ""

    def __post_init__(self) -> None:
        if self.verdict == "corrected" and self.corrected_value is None:
            raise ValueError("corrected verdict requires corrected_value")


def load_audit_decisions(path: str | Path) -> tuple[list[AuditDecision], dict | None]:
    """Read a decisions file exported by the review UI.

    Returns the decision records plus the header record (if present), which
    carries session metadata such as the incomplete flag.
    """
    header: dict | None = None
    decisions: list[AuditDecision] = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec.get("type") == "header":
                header = rec
                continue
            decisions.append(
                AuditDecision(
                    doc_id=str(rec["doc_id"]),
                    field_id=str(rec["field_id"]),
                    model_id=str(rec["model_id"]),
                    verdict=str(rec["verdict"]),
                    corrected_value=rec.get("corrected_value"),
                    reviewer_note=rec.get("reviewer_note"),
                    timestamp=str(rec.get("timestamp", "")),
                )
            )
    return decisions, header
