from __future__ import annotations

import json
from pathlib import Path

import pytest

from groundscore.geometry import BBox
from groundscore.ingest import (
    AnnotationField,
    AnnotationRecord,
    PredictionField,
    PredictionRecord,
)
from groundscore.metrics import FailureMode, ModelScore, judge_document
from groundscore.report import (
    AuditDecision,
    PacketError,
    build_audit_packet,
    classify_zone,
    export_scatter,
    load_audit_decisions,
    load_judgements,
    render_leaderboard,
    scatter_csv,
    write_judgements,
)
from groundscore.schema import FieldSpec, FormSchema


def score(model_id, regime, reading, strict, audit, ep=0.5, coverage=0.5, ep_defined=True):
    return ModelScore(
        model_id=model_id, regime=regime, n_fields=470,
        reading_acc=reading, evidence_precision=ep, ep_defined=ep_defined,
        bbox_coverage=coverage, strict_safety=strict, audit_precision=audit,
        failure_histogram={"none": 1}, confident_mislocalisation=False,
    )


class TestLeaderboard:
    def test_sorted_by_strict_within_regime(self):
        scores = [
            score("slow", "fine-tuned", 0.90, 0.30, 0.50),
            score("best", "fine-tuned", 0.961, 0.606, 0.754),
            score("reader", "zero-shot", 0.926, 0.012, 0.414),
        ]
        md = render_leaderboard(scores, "markdown")
        rows = [ln for ln in md.splitlines() if ln.startswith("| ") and "Model" not in ln]
        assert [r.split("|")[1].strip() for r in rows] == ["best", "slow", "reader"]
        # best column values bolded on the leader
        assert "**96.1%**" in rows[0] and "**60.6%**" in rows[0]

    def test_tie_broken_by_reading_then_name(self):
        scores = [
            score("bbb", "zero-shot", 0.90, 0.5, 0.6),
            score("aaa", "zero-shot", 0.90, 0.5, 0.6),
            score("high-read", "zero-shot", 0.95, 0.5, 0.6),
        ]
        md = render_leaderboard(scores, "markdown")
        rows = [ln for ln in md.splitlines() if ln.startswith("| ") and "Model" not in ln]
        assert [r.split("|")[1].strip() for r in rows] == ["high-read", "aaa", "bbb"]

    def test_single_model_gets_all_bests(self):
        md = render_leaderboard([score("only", "zero-shot", 0.9, 0.5, 0.7)], "markdown")
        row = [ln for ln in md.splitlines() if "only" in ln][0]
        assert row.count("**") == 10  # five numeric columns, all best

    def test_second_best_italicized(self):
        scores = [
            score("first", "zero-shot", 0.9, 0.6, 0.7, ep=0.9, coverage=0.9),
            score("second", "zero-shot", 0.8, 0.5, 0.6, ep=0.7, coverage=0.7),
        ]
        md = render_leaderboard(scores, "markdown")
        second_row = [ln for ln in md.splitlines() if "| second |" in ln][0]
        assert "*80.0%*" in second_row and "**" not in second_row.replace("| second |", "")

    def test_undefined_ep_rendered_as_dash(self):
        scores = [
            score("boxless", "zero-shot", 0.6, 0.0, 0.0, ep=0.0, coverage=0.0, ep_defined=False),
            score("boxed", "zero-shot", 0.9, 0.5, 0.6),
        ]
        md = render_leaderboard(scores, "markdown")
        assert "—" in [ln for ln in md.splitlines() if "boxless" in ln][0]
        csv = render_leaderboard(scores, "csv")
        boxless = [ln for ln in csv.splitlines() if ln.startswith("boxless")][0]
        fields = boxless.split(",")
        assert fields[4] == ""  # evidence_precision column empty

    def test_csv_raw_ratios_and_ranks(self):
        scores = [
            score("a", "zero-shot", 0.961, 0.606, 0.754),
            score("b", "zero-shot", 0.926, 0.012, 0.414),
        ]
        csv = render_leaderboard(scores, "csv")
        header = csv.splitlines()[0].split(",")
        assert header[3] == "reading_acc" and header[8] == "reading_acc_rank"
        row_a = [ln for ln in csv.splitlines() if ln.startswith("a,")][0].split(",")
        assert row_a[3] == repr(0.961)
        assert row_a[8] == "1"

    def test_footer_carries_config(self):
        md = render_leaderboard(
            [score("a", "zero-shot", 0.9, 0.5, 0.6)], "markdown",
            footer={"iou_thresh": 0.5, "prompt_hash": "abc123"},
        )
        assert "iou_thresh=0.5" in md and "prompt_hash=abc123" in md

    def test_empty_scores_rejected(self):
        with pytest.raises(ValueError):
            render_leaderboard([], "markdown")

    def test_deterministic(self):
        scores = [score("a", "zero-shot", 0.9, 0.5, 0.6)]
        assert render_leaderboard(scores, "markdown") == render_leaderboard(scores, "markdown")


class TestScatter:
    def test_zone_assignment(self):
        assert classify_zone(0.885, 0.95) == "high-performance"
        assert classify_zone(0.944, 0.013) == "low-coverage"
        assert classify_zone(0.3, 0.9) == "low-precision"
        assert classify_zone(0.0, 0.0) == "low-both"

    def test_boundary_inclusive(self):
        assert classify_zone(0.5, 0.5) == "high-performance"

    def test_export_and_csv(self):
        points = export_scatter(
            [
                score("ft", "fine-tuned", 0.96, 0.6, 0.75, ep=0.885, coverage=0.95),
                score("sparse", "zero-shot", 0.87, 0.0, 0.01, ep=0.944, coverage=0.013),
            ]
        )
        by_id = {p.model_id: p for p in points}
        assert by_id["ft"].zone == "high-performance"
        assert by_id["sparse"].zone == "low-coverage"
        text = scatter_csv(points)
        assert text.splitlines()[0] == "model_id,regime,evidence_precision,bbox_coverage,zone"
        assert "sparse,zero-shot,0.944,0.013,low-coverage" in text


@pytest.fixture()
def doc_env():
    fields = tuple(
        FieldSpec(f"f{i}", f"Field {i}", "text", nullable=bool(i == 9)) for i in range(10)
    )
    schema = FormSchema("s", "1", (1654, 2339), fields)
    regions = {
        f"f{i}": BBox(100 / 1654, (60 + 220 * i) / 2339, 600 / 1654, (220 + 220 * i) / 2339)
        for i in range(10)
    }
    annotation = AnnotationRecord(
        doc_id="doc_x",
        image_path="images/doc_x.png",
        page=(1654, 2339),
        fields=tuple(
            AnnotationField(f"f{i}", None if i == 9 else f"value {i}",
                            () if i == 9 else (regions[f"f{i}"],))
            for i in range(10)
        ),
    )
    pred_fields = []
    for i in range(10):
        if i == 9:
            pred_fields.append(PredictionField("f9", None, None))
        elif i == 3:
            pred_fields.append(PredictionField("f3", "value 3", None))  # abstained box
        else:
            pred_fields.append(PredictionField(f"f{i}", f"value {i}", regions[f"f{i}"]))
    prediction = PredictionRecord("doc_x", "m1", tuple(pred_fields))
    judgements = judge_document(schema, annotation, prediction)
    return schema, annotation, prediction, judgements


class TestAuditPacket:
    def test_ten_entries_in_schema_order(self, doc_env):
        schema, annotation, prediction, judgements = doc_env
        packet = build_audit_packet(schema, annotation, prediction, judgements, "m1", "hash")
        assert [e["field_id"] for e in packet["entries"]] == [f"f{i}" for i in range(10)]
        assert len({e["field_id"] for e in packet["entries"]}) == 10

    def test_pixel_space_boxes(self, doc_env):
        schema, annotation, prediction, judgements = doc_env
        half = BBox(0.5, 0.0, 1.0, 1.0)
        prediction = PredictionRecord(
            "doc_x", "m1",
            tuple(
                PredictionField(f.field_id, f.value, half if f.field_id == "f0" else f.box)
                for f in prediction.fields
            ),
        )
        judgements = judge_document(schema, annotation, prediction)
        packet = build_audit_packet(schema, annotation, prediction, judgements, "m1", "hash")
        assert packet["entries"][0]["pred_box"] == [827.0, 0.0, 1654.0, 2339.0]
        page = packet["page"]
        for entry in packet["entries"]:
            for box in ([entry["pred_box"]] if entry["pred_box"] else []) + entry["gt_regions"]:
                assert 0 <= box[0] <= box[2] <= page["width"]
                assert 0 <= box[1] <= box[3] <= page["height"]

    def test_needs_review_flags(self, doc_env):
        schema, annotation, prediction, judgements = doc_env
        packet = build_audit_packet(schema, annotation, prediction, judgements, "m1", "hash")
        by_id = {e["field_id"]: e for e in packet["entries"]}
        assert by_id["f3"]["failure"] == "abstained_box"
        assert by_id["f3"]["needs_review"] is True
        assert by_id["f0"]["needs_review"] is False
        assert by_id["f9"]["needs_review"] is False  # vacuous null success

    def test_judgement_field_mismatch_rejected(self, doc_env):
        schema, annotation, prediction, judgements = doc_env
        with pytest.raises(PacketError):
            build_audit_packet(schema, annotation, prediction, judgements[:-1], "m1", "h")


class TestJudgementDump:
    def test_round_trip(self, doc_env, tmp_path):
        _, _, _, judgements = doc_env
        path = tmp_path / "j.jsonl"
        write_judgements(judgements, path)
        assert load_judgements(path) == judgements

    def test_failure_serialized_as_string(self, doc_env, tmp_path):
        _, _, _, judgements = doc_env
        path = tmp_path / "j.jsonl"
        write_judgements(judgements, path)
        first = json.loads(path.read_text().splitlines()[0])
        assert isinstance(first["failure"], str)
        assert first["failure"] in {m.value for m in FailureMode}


class TestAuditDecisions:
    def test_load_with_header(self, tmp_path):
        path = tmp_path / "decisions.jsonl"
        lines = [
            {"type": "header", "doc_id": "d1", "complete": False, "decided": 2, "total": 10},
            {"doc_id": "d1", "field_id": "f0", "model_id": "m", "verdict": "accepted",
             "timestamp": "2026-01-01T00:00:00Z"},
            {"doc_id": "d1", "field_id": "f1", "model_id": "m", "verdict": "corrected",
             "corrected_value": "14.2", "timestamp": "2026-01-01T00:00:01Z"},
        ]
        path.write_text("\n".join(json.dumps(l) for l in lines) + "\n", encoding="utf-8")
        decisions, header = load_audit_decisions(path)
        assert header["complete"] is False
        assert len(decisions) == 2
        assert decisions[1].corrected_value == "14.2"

    def test_corrected_requires_value(self):
        with pytest.raises(ValueError):
            AuditDecision("d", "f", "m", "corrected")


class TestUiDecisionContract:
    def test_reads_file_exported_by_review_ui(self):
        """The frontend's exported decisions load through this module unchanged."""
        sample = Path(__file__).parent.parent / "frontend" / "fixtures" / "decisions-sample.jsonl"
        decisions, header = load_audit_decisions(sample)
        assert header is not None and header["total"] == 10
        assert len(decisions) == 10
        assert {d.verdict for d in decisions} == {"accepted", "rejected", "corrected"}
        corrected = [d for d in decisions if d.verdict == "corrected"]
        assert all(d.corrected_value for d in corrected)
