from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"
TABLE_FIXTURE = FIXTURES / "table2"


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return TABLE_FIXTURE


@pytest.fixture(scope="session")
def fixture_expected() -> dict:
    return json.loads((TABLE_FIXTURE / "expected.json").read_text(encoding="utf-8"))


def write_jsonl(path: Path, records: list[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return path


def make_mini_dataset(
    root: Path,
    n_docs: int = 5,
    *,
    train_ids: list[str] | None = None,
    test_ids: list[str] | None = None,
    mutate_annotations=None,
) -> Path:
    """Small two-field dataset for ingest/CLI tests; returns the manifest path."""
    schema = {
        "schema_id": "mini",
        "version": "1",
        "canonical_page": {"width": 1000, "height": 1000},
        "fields": [
            {"field_id": "name", "label": "Name", "value_kind": "text"},
            {"field_id": "flagged", "label": "Flagged", "value_kind": "boolean"},
        ],
    }
    docs = [f"m{i:02d}" for i in range(n_docs)]
    annotations = []
    for i, doc in enumerate(docs):
        annotations.append(
            {
                "doc_id": doc,
                "image": f"images/{doc}.png",
                "width": 1000,
                "height": 1000,
                "fields": [
                    {"field_id": "name", "value": f"person {i}",
                     "evidence": [[100, 100, 400, 160]]},
                    {"field_id": "flagged", "value": "yes" if i % 2 else "no",
                     "evidence": [[100, 300, 200, 360]]},
                ],
            }
        )
    if mutate_annotations is not None:
        mutate_annotations(annotations)
    root.mkdir(parents=True, exist_ok=True)
    (root / "schema.json").write_text(json.dumps(schema), encoding="utf-8")
    write_jsonl(root / "annotations.jsonl", annotations)
    manifest = {
        "schema_path": "schema.json",
        "annotations_path": "annotations.jsonl",
        "images_dir": "images",
        "split": {
            "train_ids": train_ids if train_ids is not None else [],
            "test_ids": test_ids if test_ids is not None else docs,
        },
    }
    (root / "manifest.json").write_text(json.dumps(manifest), encoding="utf-8")
    return root / "manifest.json"
