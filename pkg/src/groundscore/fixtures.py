"""Deterministic regression fixture: synthetic dataset + scripted predictions.

Builds a 47-document, 10-fields-per-document annotated dataset and nine
prediction files whose scored leaderboard lands on a reference scorecard of
frontier and open-weight vision-language models.  The interesting part is
that the scorecard's percentages live on a 470-field micro-average grid
(resolution 1/470 ~ 0.213%), so most published-style targets are not exactly
representable: the generator *solves* for the nearest achievable integer
counts first and records both the target and the encoded value, and tests
assert against the encoding at one-decimal precision.

Per-field predictions are laid out by slot plan.  Every document page holds
ten disjoint evidence rows; a prediction box is one of:

* ``exact``: the ground-truth region itself (IoU 1.0: strictly compliant);
* ``inside``: a small box fully inside the region (IoP 1.0, IoU 0.1:
  audit-useful but not strictly compliant);
* ``graze``: a box straddling the region edge (IoP 1/3, IoU ~0.12:
  overlapping evidence but useless for audit);
* ``stray``: a box in empty page margin (overlaps nothing: hallucinated
  pointing);
* or absent.

Counts of each category per model are what the solver derives.
"""

from __future__ import annotations

import argparse
import datetime
import json
import struct
import zlib
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

N_DOCS = 47
FIELDS_PER_DOC = 10
N_FIELDS = N_DOCS * FIELDS_PER_DOC
PAGE = (1654, 2339)

_ROW_TOP = 60
_ROW_STRIDE = 220
_ROW_HEIGHT = 160
_REGION_X = (100.0, 600.0)

SCHEMA_FIELDS = (
    ("patient_name", "Patient name", "text", None, None),
    ("nhs_number", "NHS number", "text", None, None),
    ("date_of_birth", "Date of birth", "date", None, None),
    ("referral_date", "Referral date", "date", None, None),
    ("fit_result", "FIT result", "numeric", None, ("ug/g",)),
    ("fit_positive", "FIT positive", "boolean", None, None),
    ("rectal_bleeding", "Rectal bleeding", "boolean", None, None),
    ("weight_loss", "Unexplained weight loss", "boolean", None, None),
    ("iron_deficiency_anaemia", "Iron-deficiency anaemia", "boolean", None, None),
    ("referral_priority", "Referral priority", "enum", ("urgent", "2ww", "routine"), None),
)

_PRIORITIES = ("urgent", "2ww", "routine")


@dataclass(frozen=True)
class ModelTarget:
    """Score targets for one model row, percentages in [0, 100].

    ``ep_pct``/``coverage_pct`` are optional because not every roster entry
    has a published value for them; ``hits_override`` supplies a synthetic
    hit count when evidence precision is unconstrained, and
    ``audit_count_override`` pins the audit count directly where a
    micro-averaged audit percentage cannot exceed box coverage.
    """

    model_id: str
    regime: str
    reading_pct: float
    strict_pct: float
    audit_pct: float | None
    ep_pct: float | None = None
    coverage_pct: float | None = None
    hits_override: int | None = None
    audit_count_override: int | None = None
    note: str = ""


# Reference roster.  reading/strict/audit are scorecard columns; ep/coverage
# carry the reported evidence-behaviour numbers where they exist.
TARGETS: tuple[ModelTarget, ...] = (
    ModelTarget("gemini-2.5-flash", "zero-shot", 92.6, 1.2, 41.4, ep_pct=73.5),
    ModelTarget(
        "claude-opus-4.6", "zero-shot", 95.2, 0.2, 1.0, ep_pct=41.4, coverage_pct=81.9,
        note="high coverage with near-zero joint success: confident mislocalisation",
    ),
    ModelTarget("qwen3-vl-32b", "zero-shot", 95.3, 8.0, 60.9, ep_pct=80.4),
    ModelTarget("qwen3-vl-8b", "zero-shot", 88.4, 6.2, 37.2, ep_pct=70.1),
    ModelTarget(
        "qwen3-vl-4b", "zero-shot", 87.5, 0.3, None, ep_pct=94.4,
        audit_count_override=6,
        note="fires on a tiny fraction of fields; EP high only because the "
        "denominator is tiny (reported coverage 1.3% is below this grid's "
        "resolution once EP is pinned, so EP wins and coverage lands at "
        "its nearest representable value)",
    ),
    ModelTarget(
        "qwen3-vl-2b", "zero-shot", 62.3, 0.0, None,
        note="no bounding-box output at all",
    ),
    ModelTarget("qwen3-vl-8b-ft", "fine-tuned", 96.1, 60.6, 75.4, ep_pct=88.5),
    ModelTarget(
        "qwen3-vl-4b-ft", "fine-tuned", 90.1, 25.9, 46.4,
        coverage_pct=82.8, hits_override=350,
    ),
    ModelTarget(
        "qwen3-vl-2b-ft", "fine-tuned", 88.3, 21.0, 32.9,
        coverage_pct=87.6, hits_override=380,
    ),
)


@dataclass(frozen=True)
class SlotPlan:
    """Solved integer counts driving one model's prediction file."""

    model_id: str
    regime: str
    reading: int  # fields with a correct value
    strict: int   # ... of which box matches the region (IoU 1.0)
    audit: int    # ... strict plus boxes inside the region (IoP 1.0)
    hits: int     # all boxes overlapping any evidence (strict+inside+graze)
    boxes: int    # all emitted boxes (hits + stray)


def nearest_count(target_pct: float, denom: int = N_FIELDS) -> int:
    """Integer count whose percentage is closest to the target (ties: lower)."""
    return min(range(denom + 1), key=lambda c: (abs(c / denom * 100.0 - target_pct), c))


def _rendered(c: int, denom: int) -> str:
    return f"{c / denom * 100.0:.1f}"


def solve_ep_pair(ep_pct: float, min_hits: int, denom: int = N_FIELDS) -> tuple[int, int]:
    """Smallest (boxes, hits) with hits >= min_hits rendering exactly to ep_pct."""
    want = f"{ep_pct:.1f}"
    for boxes in range(max(min_hits, 1), denom + 1):
        for hits in range(min_hits, boxes + 1):
            if _rendered(hits, boxes) == want:
                return boxes, hits
    raise ValueError(f"no (boxes, hits) pair renders to {want}% with hits >= {min_hits}")


def solve_plan(t: ModelTarget) -> SlotPlan:
    reading = nearest_count(t.reading_pct)
    strict = nearest_count(t.strict_pct)
    if t.audit_count_override is not None:
        audit = t.audit_count_override
    elif t.audit_pct is not None:
        audit = nearest_count(t.audit_pct)
    else:
        audit = 0
    audit = max(audit, strict)

    if t.coverage_pct is not None:
        boxes = nearest_count(t.coverage_pct)
        if t.hits_override is not None:
            hits = t.hits_override
        elif t.ep_pct is not None:
            hits = min(
                range(audit, boxes + 1),
                key=lambda h: (abs(h / boxes * 100.0 - t.ep_pct), h),
            )
        else:
            hits = boxes
    elif t.ep_pct is not None:
        boxes, hits = solve_ep_pair(t.ep_pct, max(audit, 1))
    else:
        boxes = hits = 0

    plan = SlotPlan(
        model_id=t.model_id, regime=t.regime,
        reading=reading, strict=strict, audit=audit, hits=hits, boxes=boxes,
    )
    _check_plan(plan)
    return plan


def _check_plan(p: SlotPlan) -> None:
    if p.boxes == 0:
        ok = p.strict == p.audit == p.hits == 0 and 0 <= p.reading <= N_FIELDS
    else:
        # The slot layout boxes only correct-value slots, so counts must nest.
        ok = (
            0 <= p.strict <= p.audit <= p.hits <= p.boxes <= N_FIELDS
            and p.boxes <= p.reading <= N_FIELDS
        )
    if not ok:
        raise ValueError(f"inconsistent slot plan: {p}")


# --- ground truth ------------------------------------------------------------


def region_px(field_idx: int) -> tuple[float, float, float, float]:
    top = float(_ROW_TOP + _ROW_STRIDE * field_idx)
    return (_REGION_X[0], top, _REGION_X[1], top + _ROW_HEIGHT)


def _inside_px(field_idx: int) -> tuple[float, float, float, float]:
    x0, top, _, _ = region_px(field_idx)
    return (x0 + 50, top + 40, x0 + 150, top + 120)


def _graze_px(field_idx: int) -> tuple[float, float, float, float]:
    _, top, x1, bottom = region_px(field_idx)
    return (x1 - 80, top, x1 + 160, bottom)


def _stray_px(field_idx: int) -> tuple[float, float, float, float]:
    _, top, _, bottom = region_px(field_idx)
    return (1200.0, top, 1400.0, bottom)


def doc_id_of(doc_idx: int) -> str:
    return f"doc_{doc_idx + 1:03d}"


def gt_value(doc_idx: int, field_idx: int) -> str:
    fid = SCHEMA_FIELDS[field_idx][0]
    d = doc_idx
    if fid == "patient_name":
        return f"Patient {d + 1:03d}"
    if fid == "nhs_number":
        return f"4{d % 100:02d} 555 {1000 + d}"
    if fid == "date_of_birth":
        return datetime.date(1950 + d % 40, 1 + d % 12, 1 + d % 28).strftime("%d/%m/%Y")
    if fid == "referral_date":
        return datetime.date(2024, 1 + d % 12, 1 + (d * 3) % 28).strftime("%d/%m/%Y")
    if fid == "fit_result":
        return f"{10 + d % 90}.{d % 10} ug/g"
    if fid == "fit_positive":
        return "Yes" if d % 3 else "No"
    if fid == "rectal_bleeding":
        return "Yes" if (d + 1) % 2 else "No"
    if fid == "weight_loss":
        return "No" if d % 4 else "Yes"
    if fid == "iron_deficiency_anaemia":
        return "Yes" if d % 5 == 2 else "No"
    if fid == "referral_priority":
        return _PRIORITIES[d % 3]
    raise KeyError(fid)


def wrong_value(doc_idx: int, field_idx: int) -> str:
    """A plausible but non-matching value for the same field."""
    kind = SCHEMA_FIELDS[field_idx][2]
    gt = gt_value(doc_idx, field_idx)
    if kind == "boolean":
        return "No" if gt == "Yes" else "Yes"
    if kind == "date":
        day, month, year = (int(p) for p in gt.split("/"))
        flipped = datetime.date(year, month, day) + datetime.timedelta(days=1)
        return flipped.strftime("%d/%m/%Y")
    if kind == "numeric":
        amount = Decimal(gt.split(" ")[0]) + 1
        return f"{amount} ug/g"
    if kind == "enum":
        return _PRIORITIES[(_PRIORITIES.index(gt) + 1) % len(_PRIORITIES)]
    return f"mis {gt}"


def build_annotation(doc_idx: int) -> dict:
    return {
        "doc_id": doc_id_of(doc_idx),
        "image": f"images/{doc_id_of(doc_idx)}.png",
        "width": PAGE[0],
        "height": PAGE[1],
        "fields": [
            {
                "field_id": SCHEMA_FIELDS[f][0],
                "value": gt_value(doc_idx, f),
                "evidence": [list(region_px(f))],
            }
            for f in range(FIELDS_PER_DOC)
        ],
    }


def build_prediction(plan: SlotPlan, doc_idx: int) -> dict:
    fields = []
    for f in range(FIELDS_PER_DOC):
        slot = doc_idx * FIELDS_PER_DOC + f
        value = (
            gt_value(doc_idx, f) if slot < plan.reading else wrong_value(doc_idx, f)
        )
        if slot < plan.strict:
            box = list(region_px(f))
        elif slot < plan.audit:
            box = list(_inside_px(f))
        elif slot < plan.hits:
            box = list(_graze_px(f))
        elif slot < plan.boxes:
            box = list(_stray_px(f))
        else:
            box = None
        fields.append({"field_id": SCHEMA_FIELDS[f][0], "value": value, "box": box})
    return {"doc_id": doc_id_of(doc_idx), "model_id": plan.model_id, "fields": fields}


# --- artifact writing --------------------------------------------------------


def _schema_doc() -> dict:
    fields = []
    for fid, label, kind, enum_values, unit_lexicon in SCHEMA_FIELDS:
        entry: dict = {"field_id": fid, "label": label, "value_kind": kind, "nullable": False}
        if enum_values:
            entry["enum_values"] = list(enum_values)
        if unit_lexicon:
            entry["unit_lexicon"] = list(unit_lexicon)
        fields.append(entry)
    return {
        "schema_id": "crc-referral-mini",
        "version": "1",
        "canonical_page": {"width": PAGE[0], "height": PAGE[1]},
        "fields": fields,
    }


def write_form_png(path: Path, page: tuple[int, int] = PAGE) -> None:
    """Minimal valid RGB PNG of a blank form with shaded evidence rows."""
    width, height = page
    rows = []
    regions = [region_px(f) for f in range(FIELDS_PER_DOC)]
    for y in range(height):
        row = bytearray(b"\xff" * (width * 3))
        for x0, top, x1, bottom in regions:
            if top <= y < bottom:
                row[int(x0) * 3 : int(x1) * 3] = b"\xdc\xdc\xe1" * (int(x1) - int(x0))
        rows.append(b"\x00" + bytes(row))

    def chunk(tag: bytes, body: bytes) -> bytes:
        return (
            struct.pack(">I", len(body))
            + tag
            + body
            + struct.pack(">I", zlib.crc32(tag + body))
        )

    ihdr = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    idat = zlib.compress(b"".join(rows), 9)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(
        b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) + chunk(b"IDAT", idat) + chunk(b"IEND", b"")
    )


def expected_summary(plans: list[SlotPlan]) -> dict:
    by_target = {t.model_id: t for t in TARGETS}
    models = {}
    for p in plans:
        t = by_target[p.model_id]
        encoded = {
            "reading": p.reading / N_FIELDS,
            "strict": p.strict / N_FIELDS,
            "audit": p.audit / N_FIELDS,
            "coverage": p.boxes / N_FIELDS,
            "ep": (p.hits / p.boxes) if p.boxes else None,
        }
        models[p.model_id] = {
            "regime": p.regime,
            "counts": {
                "reading": p.reading, "strict": p.strict, "audit": p.audit,
                "hits": p.hits, "boxes": p.boxes,
            },
            "encoded": encoded,
            "encoded_rendered": {
                k: (f"{v * 100:.1f}" if v is not None else None) for k, v in encoded.items()
            },
            "target": {
                "reading": t.reading_pct, "strict": t.strict_pct, "audit": t.audit_pct,
                "ep": t.ep_pct, "coverage": t.coverage_pct,
            },
            "note": t.note,
        }
    return {"n_docs": N_DOCS, "fields_per_doc": FIELDS_PER_DOC, "n_fields": N_FIELDS,
            "models": models}


def generate(out_dir: str | Path, images: int = 1) -> dict:
    """Write the whole fixture tree; returns the expected-summary dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plans = [solve_plan(t) for t in TARGETS]

    (out / "schema.json").write_text(
        json.dumps(_schema_doc(), indent=2) + "\n", encoding="utf-8"
    )
    with (out / "annotations.jsonl").open("w", encoding="utf-8") as fh:
        for d in range(N_DOCS):
            fh.write(json.dumps(build_annotation(d), ensure_ascii=False) + "\n")
    (out / "manifest.json").write_text(
        json.dumps(
            {
                "schema_path": "schema.json",
                "annotations_path": "annotations.jsonl",
                "images_dir": "images",
                "split": {"train_ids": [], "test_ids": [doc_id_of(d) for d in range(N_DOCS)]},
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    (out / "adapters.json").write_text(
        json.dumps(
            {
                "adapters": [
                    {
                        "model_id": p.model_id,
                        "regime": p.regime,
                        "endpoint_url": "http://localhost:8080/extract",
                        "coord_convention": "pixels",
                    }
                    for p in plans
                ]
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    (out / "config.json").write_text(
        json.dumps(
            {
                "manifest": "manifest.json",
                "adapters": "adapters.json",
                "output_dir": "out",
                "iou_thresh": 0.5,
                "iop_thresh": 0.5,
                "ep_scope": "document",
                "parallel": 4,
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )

    pred_dir = out / "predictions"
    pred_dir.mkdir(exist_ok=True)
    for p in plans:
        with (pred_dir / f"{p.model_id}.jsonl").open("w", encoding="utf-8") as fh:
            for d in range(N_DOCS):
                fh.write(json.dumps(build_prediction(p, d), ensure_ascii=False) + "\n")

    for d in range(min(images, N_DOCS)):
        write_form_png(out / "images" / f"{doc_id_of(d)}.png")

    summary = expected_summary(plans)
    (out / "expected.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return summary


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        description="Generate the scoring regression fixture (dataset + predictions)."
    )
    parser.add_argument("out_dir", help="directory to write the fixture into")
    parser.add_argument(
        "--images", type=int, default=1,
        help="number of placeholder page images to render (default 1)",
    )
    args = parser.parse_args(argv)
    summary = generate(args.out_dir, images=args.images)
    for model_id, info in sorted(summary["models"].items()):
        enc = info["encoded_rendered"]
        print(
            f"{model_id}: reading {enc['reading']} strict {enc['strict']} "
            f"audit {enc['audit']} coverage {enc['coverage']} ep {enc['ep']}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
