"""Per-field joint judgement, failure-mode classification, and aggregation.

A field prediction is judged on two independent axes, value correctness
(normalized match) and whether the evidence box lands where the value
actually appears, then combined into two joint verdicts:

* ``strict_ok``: value correct AND box IoU above threshold against the
  field's own ground-truth region.  Proxy for fully automated verifiability.
* ``audit_ok``: value correct AND box IoP above threshold.  Proxy for
  usefulness to a human reviewer (a tight box inside the right region
  counts, even if it does not match the annotated extent).

Because IoP >= IoU for any box pair, audit_ok dominates strict_ok at equal
thresholds, which makes strict_safety <= audit_precision structural rather
than empirical.  Judgements for fields the model got wrong, pointed wrongly
on, or abstained from are classified into a single failure mode each, so
failure histograms partition the field count exactly.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass

from .geometry import BBox, best_match, iou as box_iou
from .ingest import AnnotationField, AnnotationRecord, PredictionRecord
from .normalize import NormalizationRules, DEFAULT_RULES, canonicalize
from .schema import FieldSpec, FormSchema

EP_SCOPE_DOCUMENT = "document"
EP_SCOPE_FIELD = "field"

DEFAULT_IOU_THRESH = 0.5
DEFAULT_IOP_THRESH = 0.5

# Operationalization of "high coverage, near-zero localisation success".
CONFIDENT_MISLOC_COVERAGE = 0.5
CONFIDENT_MISLOC_STRICT = 0.05


class FailureMode(str, enum.Enum):
    NONE = "none"
    WRONG_VALUE = "wrong_value"
    ABSTAINED_BOX = "abstained_box"
    HALLUCINATED_POINTING = "hallucinated_pointing"
    MISLOCALIZED = "mislocalized"
    HALLUCINATED_VALUE = "hallucinated_value"
    MISSED_NULL = "missed_null"
    PARSE_FAILURE = "parse_failure"


@dataclass(frozen=True)
class FieldJudgement:
    doc_id: str
    field_id: str
    model_id: str
    value_correct: bool
    gt_has_evidence: bool
    box_present: bool
    matched_region: int | None
    iou: float
    iop: float
    evidence_hit: bool
    strict_ok: bool
    audit_ok: bool
    failure: FailureMode


@dataclass(frozen=True)
class ModelScore:
    model_id: str
    regime: str
    n_fields: int
    reading_acc: float
    evidence_precision: float
    ep_defined: bool
    bbox_coverage: float
    strict_safety: float
    audit_precision: float
    failure_histogram: dict[str, int]
    confident_mislocalisation: bool


def judge_field(
    spec: FieldSpec,
    pred_value: str | None,
    pred_box: BBox | None,
    gt_value: str | None,
    gt_regions: tuple[BBox, ...],
    all_doc_regions: tuple[BBox, ...],
    *,
    doc_id: str,
    model_id: str,
    parse_failed: bool = False,
    iou_thresh: float = DEFAULT_IOU_THRESH,
    iop_thresh: float = DEFAULT_IOP_THRESH,
    ep_scope: str = EP_SCOPE_DOCUMENT,
    rules: NormalizationRules = DEFAULT_RULES,
) -> FieldJudgement:
    """Judge one field of one document against its ground truth.

    Null ground truth succeeds vacuously when the model also outputs a null
    value and no box; a value on a null field is a hallucinated value, a box
    on a null field is judged by where it points.  For non-null ground
    truth, overlap comes from the best-IoU match against the field's own
    regions, and ``evidence_hit`` asks the weaker question of whether the
    box overlaps any region in ``all_doc_regions`` (narrowed to the field's
    own regions under field-local ep_scope).
    """
    if not (0.0 < iou_thresh < 1.0 and 0.0 < iop_thresh < 1.0):
        raise ValueError("thresholds must lie strictly between 0 and 1")

    pred_canon = canonicalize(pred_value, spec.value_kind, spec.unit_lexicon, rules)
    gt_canon = canonicalize(gt_value, spec.value_kind, spec.unit_lexicon, rules)
    value_correct = pred_canon == gt_canon
    pred_is_null = pred_canon.is_null()
    gt_is_null = gt_canon.is_null()

    box_present = pred_box is not None
    gt_has_evidence = bool(gt_regions)

    matched_region: int | None = None
    iou_val = 0.0
    iop_val = 0.0
    evidence_hit = False
    if pred_box is not None:
        matched_region, iou_val, iop_val = best_match(pred_box, gt_regions)
        scope_regions = all_doc_regions if ep_scope == EP_SCOPE_DOCUMENT else gt_regions
        evidence_hit = any(box_iou(pred_box, r) > 0.0 for r in scope_regions)

    if gt_is_null:
        strict_ok = audit_ok = value_correct and not box_present
    else:
        strict_ok = value_correct and box_present and iou_val > iou_thresh
        audit_ok = value_correct and box_present and iop_val > iop_thresh

    failure = _classify_failure(
        strict_ok=strict_ok,
        parse_failed=parse_failed,
        gt_is_null=gt_is_null,
        pred_is_null=pred_is_null,
        value_correct=value_correct,
        box_present=box_present,
        evidence_hit=evidence_hit,
    )

    return FieldJudgement(
        doc_id=doc_id,
        field_id=spec.field_id,
        model_id=model_id,
        value_correct=value_correct,
        gt_has_evidence=gt_has_evidence,
        box_present=box_present,
        matched_region=matched_region,
        iou=iou_val,
        iop=iop_val,
        evidence_hit=evidence_hit,
        strict_ok=strict_ok,
        audit_ok=audit_ok,
        failure=failure,
    )


def _classify_failure(
    *,
    strict_ok: bool,
    parse_failed: bool,
    gt_is_null: bool,
    pred_is_null: bool,
    value_correct: bool,
    box_present: bool,
    evidence_hit: bool,
) -> FailureMode:
    # First matching rule wins; "none" is reserved for full strict success
    # (for null ground truth: null prediction with no box).
    if strict_ok:
        return FailureMode.NONE
    if parse_failed:
        return FailureMode.PARSE_FAILURE
    if gt_is_null:
        if not pred_is_null:
            return FailureMode.HALLUCINATED_VALUE
        # Null value but a box was emitted: judge the pointing.
        return FailureMode.MISLOCALIZED if evidence_hit else FailureMode.HALLUCINATED_POINTING
    if not value_correct:
        return FailureMode.MISSED_NULL if pred_is_null else FailureMode.WRONG_VALUE
    if not box_present:
        return FailureMode.ABSTAINED_BOX
    if not evidence_hit:
        return FailureMode.HALLUCINATED_POINTING
    return FailureMode.MISLOCALIZED


def judge_document(
    schema: FormSchema,
    annotation: AnnotationRecord,
    prediction: PredictionRecord | None,
    *,
    iou_thresh: float = DEFAULT_IOU_THRESH,
    iop_thresh: float = DEFAULT_IOP_THRESH,
    ep_scope: str = EP_SCOPE_DOCUMENT,
    rules: NormalizationRules = DEFAULT_RULES,
    model_id: str | None = None,
) -> list[FieldJudgement]:
    """Judge every schema field of one document.

    A missing prediction record is scored as a parse failure: excluding
    documents a model failed on would inflate a fragile model's metrics.
    """
    if prediction is None:
        pred_fields: dict[str, tuple[str | None, BBox | None]] = {}
        parse_failed = True
        mid = model_id or "unknown"
    else:
        pred_fields = {f.field_id: (f.value, f.box) for f in prediction.fields}
        parse_failed = prediction.parse_failed
        mid = prediction.model_id

    all_regions = annotation.all_regions
    gt_by_id: dict[str, AnnotationField] = {f.field_id: f for f in annotation.fields}
    out: list[FieldJudgement] = []
    for spec in schema.fields:
        gt = gt_by_id.get(spec.field_id)
        gt_value = gt.value if gt is not None else None
        gt_regions = gt.regions if gt is not None else ()
        pred_value, pred_box = pred_fields.get(spec.field_id, (None, None))
        out.append(
            judge_field(
                spec,
                pred_value,
                pred_box,
                gt_value,
                gt_regions,
                all_regions,
                doc_id=annotation.doc_id,
                model_id=mid,
                parse_failed=parse_failed,
                iou_thresh=iou_thresh,
                iop_thresh=iop_thresh,
                ep_scope=ep_scope,
                rules=rules,
            )
        )
    return out


def aggregate(
    judgements: list[FieldJudgement],
    model_id: str,
    regime: str,
    *,
    misloc_coverage_thresh: float = CONFIDENT_MISLOC_COVERAGE,
    misloc_strict_thresh: float = CONFIDENT_MISLOC_STRICT,
) -> ModelScore:
    """Micro-average field judgements into one leaderboard row.

    All aggregates are counts over field instances, so the reduction is
    order-independent.  Evidence precision is hits over emitted boxes; with
    no boxes at all it is reported as 0 with ``ep_defined=False`` rather
    than excluded, so the leaderboard can render the distinction.
    """
    if not judgements:
        raise ValueError("cannot aggregate an empty judgement list")
    for j in judgements:
        if j.model_id != model_id:
            raise ValueError(
                f"mixed model ids: expected {model_id!r}, found {j.model_id!r}"
            )

    n = len(judgements)
    n_boxes = sum(1 for j in judgements if j.box_present)
    n_hits = sum(1 for j in judgements if j.evidence_hit)
    reading = sum(1 for j in judgements if j.value_correct) / n
    strict = sum(1 for j in judgements if j.strict_ok) / n
    audit = sum(1 for j in judgements if j.audit_ok) / n
    coverage = n_boxes / n
    ep_defined = n_boxes > 0
    ep = n_hits / n_boxes if ep_defined else 0.0

    histogram = Counter(j.failure.value for j in judgements)
    confident_misloc = coverage >= misloc_coverage_thresh and strict < misloc_strict_thresh

    return ModelScore(
        model_id=model_id,
        regime=regime,
        n_fields=n,
        reading_acc=reading,
        evidence_precision=ep,
        ep_defined=ep_defined,
        bbox_coverage=coverage,
        strict_safety=strict,
        audit_precision=audit,
        failure_histogram=dict(histogram),
        confident_mislocalisation=confident_misloc,
    )


def grounding_gap(score: ModelScore) -> float:
    """Reading accuracy minus strict safety: how much reading outruns grounding."""
    return score.reading_acc - score.strict_safety
