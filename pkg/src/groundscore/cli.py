"""Command-line orchestration.

Scoring and model-running are separate commands with the prediction file as
the interface between them: canned outputs can be scored offline, and new
thresholds never require re-querying a model.

Exit codes are a stable contract: 0 success, 1 completed with failures,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from . import adapter as adapter_mod
from . import ingest, metrics, report
from .metrics import EP_SCOPE_DOCUMENT, EP_SCOPE_FIELD

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_USAGE = 2

MALFORMED_LINE_TOLERANCE = 0.01


@dataclass(frozen=True)
class RunConfig:
    manifest_path: Path
    adapters_path: Path
    output_dir: Path
    iou_thresh: float = 0.5
    iop_thresh: float = 0.5
    ep_scope: str = EP_SCOPE_DOCUMENT
    parallel: int = 4

    def __post_init__(self) -> None:
        for name, value in (("iou_thresh", self.iou_thresh), ("iop_thresh", self.iop_thresh)):
            if not (0.0 < value < 1.0):
                raise ValueError(f"{name} must lie strictly between 0 and 1, got {value}")
        if self.ep_scope not in (EP_SCOPE_DOCUMENT, EP_SCOPE_FIELD):
            raise ValueError(f"ep_scope must be document or field, got {self.ep_scope!r}")


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    base = path.parent

    def resolve(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else base / q

    return RunConfig(
        manifest_path=resolve(data["manifest"]),
        adapters_path=resolve(data["adapters"]),
        output_dir=resolve(data.get("output_dir", "out")),
        iou_thresh=float(data.get("iou_thresh", 0.5)),
        iop_thresh=float(data.get("iop_thresh", 0.5)),
        ep_scope=str(data.get("ep_scope", EP_SCOPE_DOCUMENT)),
        parallel=int(data.get("parallel", 4)),
    )


def cmd_validate_dataset(args: argparse.Namespace) -> int:
    try:
        schema, records = ingest.load_ground_truth(args.manifest)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ingest.DatasetError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAILURES
    print(
        f"ok: {len(records)} documents, {len(schema.fields)} fields per document "
        f"(schema {schema.schema_id} v{schema.version})"
    )
    return EXIT_OK


def _load_environment(config_path: str) -> tuple[RunConfig, ingest.Dataset, dict]:
    cfg = load_run_config(config_path)
    dataset = ingest.load_dataset(cfg.manifest_path)
    adapters = adapter_mod.load_adapter_configs(cfg.adapters_path)
    return cfg, dataset, adapters


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg, dataset, adapters = _load_environment(args.config)
    except (FileNotFoundError, ValueError, ingest.DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.model not in adapters:
        print(
            f"error: unknown model {args.model!r}; configured: "
            + ", ".join(sorted(adapters)),
            file=sys.stderr,
        )
        return EXIT_USAGE
    acfg = adapters[args.model]
    split = dataset.manifest.test_ids or tuple(r.doc_id for r in dataset.records)
    out_path = cfg.output_dir / "predictions" / f"{acfg.model_id}.jsonl"
    summary = adapter_mod.run_model_over_split(acfg, dataset, split, out_path)
    print(
        f"{summary.model_id}: queried {summary.queried}, skipped {summary.skipped}, "
        f"failed {len(summary.failed_doc_ids)} -> {summary.out_path}"
    )
    if summary.failed_doc_ids:
        print("failed documents: " + ", ".join(summary.failed_doc_ids), file=sys.stderr)
        return EXIT_FAILURES
    return EXIT_OK


def _peek_model_id(path: Path) -> str | None:
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                return str(json.loads(line)["model_id"])
            except (json.JSONDecodeError, KeyError):
                continue
    return None


def _score_one_model(
    pred_path: Path,
    cfg: RunConfig,
    dataset: ingest.Dataset,
    adapters: dict,
    out_dir: Path,
) -> tuple[metrics.ModelScore, ingest.IngestStats]:
    model_id = _peek_model_id(pred_path)
    if model_id is None:
        raise ValueError(f"{pred_path}: no readable prediction records")
    if model_id not in adapters:
        raise ValueError(
            f"{pred_path}: model {model_id!r} has no adapter config; configured: "
            + ", ".join(sorted(adapters))
        )
    acfg = adapters[model_id]
    records, stats = ingest.load_predictions(
        pred_path, acfg.coord_convention, dataset.schema, dataset.page_dims_by_doc
    )
    by_doc = {r.doc_id: r for r in records}
    split = dataset.manifest.test_ids or tuple(r.doc_id for r in dataset.records)

    judgements: list[metrics.FieldJudgement] = []
    for doc_id in split:
        annotation = dataset.record(doc_id)
        judgements.extend(
            metrics.judge_document(
                dataset.schema,
                annotation,
                by_doc.get(doc_id),
                iou_thresh=cfg.iou_thresh,
                iop_thresh=cfg.iop_thresh,
                ep_scope=cfg.ep_scope,
                model_id=model_id,
            )
        )
    score = metrics.aggregate(judgements, model_id, acfg.regime)

    report.write_judgements(judgements, out_dir / "judgements" / f"{model_id}.jsonl")
    phash = adapter_mod.prompt_hash(
        adapter_mod.build_prompt(dataset.schema, acfg.coord_convention)
    )
    for doc_id in split:
        annotation = dataset.record(doc_id)
        doc_j = [j for j in judgements if j.doc_id == doc_id]
        packet = report.build_audit_packet(
            dataset.schema, annotation, by_doc.get(doc_id), doc_j, model_id, phash
        )
        report.write_audit_packet(packet, out_dir / "audit" / model_id / f"{doc_id}.json")
    return score, stats


def cmd_score(args: argparse.Namespace) -> int:
    try:
        cfg, dataset, adapters = _load_environment(args.config)
    except (FileNotFoundError, ValueError, ingest.DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    overrides = {}
    if args.iou_thresh is not None:
        overrides["iou_thresh"] = args.iou_thresh
    if args.iop_thresh is not None:
        overrides["iop_thresh"] = args.iop_thresh
    if args.ep_scope is not None:
        overrides["ep_scope"] = args.ep_scope
    if overrides:
        cfg = RunConfig(**{**asdict(cfg), **overrides})
    out_dir = Path(args.out) if args.out else cfg.output_dir

    scores: list[metrics.ModelScore] = []
    total_lines = 0
    total_malformed = 0
    for pred in args.pred:
        pred_path = Path(pred)
        if not pred_path.exists():
            print(f"error: prediction file not found: {pred_path}", file=sys.stderr)
            return EXIT_USAGE
        try:
            score, stats = _score_one_model(pred_path, cfg, dataset, adapters, out_dir)
        except (ValueError, ingest.DatasetError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        for warning in stats.warnings:
            logger.warning("%s", warning)
        total_lines += stats.lines
        total_malformed += stats.malformed_lines
        scores.append(score)

    footer = {
        "iou_thresh": cfg.iou_thresh,
        "iop_thresh": cfg.iop_thresh,
        "ep_scope": cfg.ep_scope,
        "prompt_hash": adapter_mod.prompt_hash(
            adapter_mod.build_prompt(dataset.schema)
        ),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "leaderboard.md").write_text(
        report.render_leaderboard(scores, "markdown", footer), encoding="utf-8"
    )
    (out_dir / "leaderboard.csv").write_text(
        report.render_leaderboard(scores, "csv", footer), encoding="utf-8"
    )
    (out_dir / "scatter.csv").write_text(
        report.scatter_csv(report.export_scatter(scores)), encoding="utf-8"
    )
    score_dump = [
        {**asdict(s), "grounding_gap": metrics.grounding_gap(s)} for s in scores
    ]
    (out_dir / "scores.json").write_text(
        json.dumps(score_dump, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(report.render_leaderboard(scores, "markdown", footer))

    if total_lines and total_malformed / total_lines > MALFORMED_LINE_TOLERANCE:
        print(
            f"warning: {total_malformed}/{total_lines} prediction lines were malformed",
            file=sys.stderr,
        )
        return EXIT_FAILURES
    return EXIT_OK


def cmd_audit_export(args: argparse.Namespace) -> int:
    try:
        cfg, dataset, adapters = _load_environment(args.config)
    except (FileNotFoundError, ValueError, ingest.DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.model not in adapters:
        print(
            f"error: unknown model {args.model!r}; configured: "
            + ", ".join(sorted(adapters)),
            file=sys.stderr,
        )
        return EXIT_USAGE
    out_dir = Path(args.out) if args.out else cfg.output_dir
    try:
        _score_one_model(Path(args.pred), cfg, dataset, adapters, out_dir)
    except (ValueError, ingest.DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"audit packets written under {out_dir / 'audit' / args.model}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groundscore",
        description="Joint value/evidence scoring for grounded form extraction.",
    )
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-dataset", help="check a dataset manifest and annotations")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_validate_dataset)

    p = sub.add_parser("run", help="query one model over the test split")
    p.add_argument("--config", required=True)
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("score", help="judge prediction files and render reports")
    p.add_argument("--config", required=True)
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--iou-thresh", type=float, default=None, dest="iou_thresh")
    p.add_argument("--iop-thresh", type=float, default=None, dest="iop_thresh")
    p.add_argument(
        "--ep-scope", choices=(EP_SCOPE_DOCUMENT, EP_SCOPE_FIELD), default=None,
        dest="ep_scope",
    )
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("audit-export", help="write audit packets for one model")
    p.add_argument("--config", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_audit_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
