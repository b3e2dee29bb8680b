from __future__ import annotations

import math
import random

import pytest

from groundscore.geometry import BBox
from groundscore.metrics import (
    FailureMode,
    FieldJudgement,
    ModelScore,
    aggregate,
    grounding_gap,
    judge_field,
)
from groundscore.schema import FieldSpec

from oracles import random_box

TEXT_FIELD = FieldSpec("fit_result", "FIT result", "text")

GT_REGION = BBox(0.1, 0.1, 0.3, 0.3)


def judge(pred_value, pred_box, gt_value, regions=(GT_REGION,), all_regions=None, **kw):
    return judge_field(
        TEXT_FIELD,
        pred_value,
        pred_box,
        gt_value,
        tuple(regions),
        tuple(all_regions if all_regions is not None else regions),
        doc_id="d1",
        model_id="m1",
        **kw,
    )


class TestJudgeField:
    def test_exact_box_and_value(self):
        j = judge("12.5", GT_REGION, "12.5")
        assert j.strict_ok and j.audit_ok and j.value_correct
        assert j.failure is FailureMode.NONE
        assert j.iou == 1.0 and j.iop == 1.0

    def test_correct_value_no_box_abstains(self):
        j = judge("12.5", None, "12.5")
        assert j.value_correct and not j.strict_ok and not j.audit_ok
        assert j.failure is FailureMode.ABSTAINED_BOX

    def test_wrong_value_good_box(self):
        j = judge("999", GT_REGION, "12.5")
        assert not j.strict_ok  # joint metric requires the value too
        assert j.iou == 1.0
        assert j.failure is FailureMode.WRONG_VALUE

    def test_mislocalized(self):
        j = judge("12.5", BBox(0.0, 0.0, 0.2, 0.2), "12.5")
        assert math.isclose(j.iou, 1 / 7, abs_tol=1e-9)
        assert math.isclose(j.iop, 0.25, abs_tol=1e-9)
        assert not j.strict_ok and not j.audit_ok
        assert j.evidence_hit
        assert j.failure is FailureMode.MISLOCALIZED

    def test_audit_only_pointing(self):
        inner = BBox(0.15, 0.15, 0.2, 0.2)  # inside the region: IoP 1, IoU small
        j = judge("12.5", inner, "12.5")
        assert j.audit_ok and not j.strict_ok
        assert j.failure is FailureMode.MISLOCALIZED

    def test_hallucinated_pointing(self):
        j = judge("12.5", BBox(0.7, 0.7, 0.9, 0.9), "12.5")
        assert not j.evidence_hit
        assert j.failure is FailureMode.HALLUCINATED_POINTING

    def test_missed_null(self):
        j = judge(None, None, "12.5")
        assert not j.value_correct
        assert j.failure is FailureMode.MISSED_NULL

    def test_empty_synonym_counts_as_null_prediction(self):
        j = judge("N/A", None, "12.5")
        assert j.failure is FailureMode.MISSED_NULL

    def test_null_gt_null_pred_vacuous_success(self):
        j = judge(None, None, None, regions=())
        assert j.value_correct and j.strict_ok and j.audit_ok
        assert j.failure is FailureMode.NONE

    def test_hallucinated_value_on_null_gt(self):
        j = judge("12.5", None, None, regions=())
        assert not j.value_correct
        assert j.failure is FailureMode.HALLUCINATED_VALUE

    def test_box_on_null_gt_breaks_strict(self):
        j = judge(None, BBox(0.4, 0.4, 0.5, 0.5), None, regions=(), all_regions=())
        assert j.value_correct  # null matches null
        assert not j.strict_ok and not j.audit_ok
        assert j.failure is FailureMode.HALLUCINATED_POINTING

    def test_parse_failure_mode(self):
        j = judge(None, None, "12.5", parse_failed=True)
        assert j.failure is FailureMode.PARSE_FAILURE

    def test_parse_failure_on_null_gt_stays_vacuous(self):
        j = judge(None, None, None, regions=(), parse_failed=True)
        assert j.strict_ok
        assert j.failure is FailureMode.NONE

    def test_evidence_hit_from_other_region_document_scope(self):
        other = BBox(0.6, 0.6, 0.8, 0.8)
        j = judge("12.5", BBox(0.65, 0.65, 0.7, 0.7), "12.5", all_regions=(GT_REGION, other))
        assert j.evidence_hit  # overlaps another field's evidence
        assert j.iou == 0.0  # no overlap with its own region
        assert j.failure is FailureMode.MISLOCALIZED

    def test_field_scope_ignores_other_regions(self):
        other = BBox(0.6, 0.6, 0.8, 0.8)
        j = judge(
            "12.5", BBox(0.65, 0.65, 0.7, 0.7), "12.5",
            all_regions=(GT_REGION, other), ep_scope="field",
        )
        assert not j.evidence_hit
        assert j.failure is FailureMode.HALLUCINATED_POINTING

    def test_multi_region_best_match(self):
        second = BBox(0.5, 0.5, 0.7, 0.7)
        j = judge("12.5", second, "12.5", regions=(GT_REGION, second))
        assert j.matched_region == 1
        assert j.strict_ok

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            judge("x", None, "x", iou_thresh=0.0)
        with pytest.raises(ValueError):
            judge("x", None, "x", iop_thresh=1.0)

    def test_strict_implies_audit_fuzz(self):
        rng = random.Random(37)
        for _ in range(2000):
            pred_box = BBox(*random_box(rng)) if rng.random() < 0.8 else None
            regions = (BBox(*random_box(rng)),)
            gt_value = "v" if rng.random() < 0.8 else None
            if gt_value is None:
                regions = ()
            pred_value = rng.choice(["v", "w", None])
            j = judge(pred_value, pred_box, gt_value, regions=regions)
            assert not j.strict_ok or j.audit_ok
            assert j.strict_ok == (j.failure is FailureMode.NONE) or (
                gt_value is None and pred_value is None
            )
            if not j.box_present:
                assert j.iou == 0.0 and j.iop == 0.0 and not j.evidence_hit

    def test_threshold_monotonicity(self):
        rng = random.Random(41)
        cases = []
        for _ in range(300):
            cases.append(
                (rng.choice(["v", "w"]), BBox(*random_box(rng)), (BBox(*random_box(rng)),))
            )
        previous = None
        for thresh in (0.1, 0.3, 0.5, 0.7, 0.9):
            strict_count = sum(
                judge(v, b, "v", regions=r, iou_thresh=thresh).strict_ok
                for v, b, r in cases
            )
            if previous is not None:
                assert strict_count <= previous
            previous = strict_count


def make_judgement(i, value_correct, strict_ok, audit_ok, box_present, evidence_hit):
    if strict_ok:
        failure = FailureMode.NONE
    elif not value_correct:
        failure = FailureMode.WRONG_VALUE
    elif not box_present:
        failure = FailureMode.ABSTAINED_BOX
    elif not evidence_hit:
        failure = FailureMode.HALLUCINATED_POINTING
    else:
        failure = FailureMode.MISLOCALIZED
    return FieldJudgement(
        doc_id=f"d{i}",
        field_id=f"f{i}",
        model_id="m1",
        value_correct=value_correct,
        gt_has_evidence=True,
        box_present=box_present,
        matched_region=0 if box_present else None,
        iou=1.0 if strict_ok else 0.0,
        iop=1.0 if audit_ok else 0.0,
        evidence_hit=evidence_hit,
        strict_ok=strict_ok,
        audit_ok=audit_ok,
        failure=failure,
    )


def recount_oracle(judgements):
    """Naive independent recount of every aggregate."""
    n = reading = strict = audit = boxes = hits = 0
    for j in judgements:
        n += 1
        reading += 1 if j.value_correct else 0
        strict += 1 if j.strict_ok else 0
        audit += 1 if j.audit_ok else 0
        boxes += 1 if j.box_present else 0
        hits += 1 if j.evidence_hit else 0
    return {
        "reading_acc": reading / n,
        "strict_safety": strict / n,
        "audit_precision": audit / n,
        "bbox_coverage": boxes / n,
        "evidence_precision": hits / boxes if boxes else 0.0,
    }


class TestAggregate:
    def test_worked_example(self):
        # 10 judgements: 8 correct values, 6 strict, 7 audit, 9 boxes, 8 hits.
        js = []
        for i in range(10):
            value_correct = i < 8
            strict_ok = i < 6
            audit_ok = i < 7
            box_present = i < 9
            evidence_hit = i < 8 and box_present
            js.append(
                make_judgement(i, value_correct, strict_ok, audit_ok, box_present, evidence_hit)
            )
        score = aggregate(js, "m1", "zero-shot")
        assert score.reading_acc == 0.8
        assert score.strict_safety == 0.6
        assert score.audit_precision == 0.7
        assert score.bbox_coverage == 0.9
        assert score.evidence_precision == 8 / 9
        assert score.n_fields == 10
        assert sum(score.failure_histogram.values()) == 10

    def test_matches_recount_oracle_on_random_sets(self):
        rng = random.Random(43)
        for _ in range(100):
            js = []
            for i in range(rng.randrange(1, 60)):
                value_correct = rng.random() < 0.7
                box_present = rng.random() < 0.6
                evidence_hit = box_present and rng.random() < 0.8
                strict_ok = value_correct and evidence_hit and rng.random() < 0.5
                audit_ok = strict_ok or (value_correct and evidence_hit and rng.random() < 0.5)
                js.append(
                    make_judgement(i, value_correct, strict_ok, audit_ok, box_present, evidence_hit)
                )
            score = aggregate(js, "m1", "zero-shot")
            want = recount_oracle(js)
            for key, value in want.items():
                assert getattr(score, key) == value, key
            assert score.strict_safety <= score.audit_precision <= 1.0
            assert score.strict_safety <= score.reading_acc
            assert sum(score.failure_histogram.values()) == score.n_fields

    def test_no_boxes_flags_ep_undefined(self):
        js = [make_judgement(i, True, False, False, False, False) for i in range(5)]
        score = aggregate(js, "m1", "zero-shot")
        assert not score.ep_defined
        assert score.evidence_precision == 0.0
        assert score.bbox_coverage == 0.0

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            aggregate([], "m1", "zero-shot")

    def test_mixed_model_ids_rejected(self):
        js = [make_judgement(0, True, True, True, True, True)]
        with pytest.raises(ValueError, match="mixed"):
            aggregate(js, "other", "zero-shot")

    def test_confident_mislocalisation_flag(self):
        # 6 of 10 boxes, none strictly compliant.
        js = [make_judgement(i, True, False, False, i < 6, i < 6) for i in range(10)]
        score = aggregate(js, "m1", "zero-shot")
        assert score.confident_mislocalisation
        # same coverage, good compliance: flag off
        js = [make_judgement(i, True, i < 6, i < 6, i < 6, i < 6) for i in range(10)]
        assert not aggregate(js, "m1", "zero-shot").confident_mislocalisation
        # low coverage never flags
        js = [make_judgement(i, True, False, False, i < 2, i < 2) for i in range(10)]
        assert not aggregate(js, "m1", "zero-shot").confident_mislocalisation


class TestGroundingGap:
    def _score(self, reading, strict):
        return ModelScore(
            model_id="m", regime="zero-shot", n_fields=100,
            reading_acc=reading, evidence_precision=0.5, ep_defined=True,
            bbox_coverage=0.5, strict_safety=strict, audit_precision=strict,
            failure_histogram={}, confident_mislocalisation=False,
        )

    def test_large_gap(self):
        assert math.isclose(grounding_gap(self._score(0.926, 0.012)), 0.914)

    def test_zero_gap(self):
        assert grounding_gap(self._score(0.5, 0.5)) == 0.0

    def test_fine_tuned_gap(self):
        assert math.isclose(grounding_gap(self._score(0.961, 0.606)), 0.355)
