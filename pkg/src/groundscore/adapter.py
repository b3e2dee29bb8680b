"""Prompt construction and the model-endpoint client.

Models are reached only through a plain HTTP boundary (POST a JSON body
``{"image": <base64>, "prompt": <string>}``, read back ``{"text": ...}``),
which keeps the harness free of inference frameworks and makes local
fine-tuned checkpoints and commercial APIs interchangeable behind small
per-vendor shims.

The prompt is deterministic for a given schema so cross-model differences
reflect models, not prompt engineering; its hash travels with every report.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .geometry import CONVENTIONS, THOUSANDTHS
from .ingest import Dataset, parse_model_response
from .schema import FormSchema

logger = logging.getLogger(__name__)

Transport = Callable[[str, dict, float, dict], str]


class TransportError(RuntimeError):
    """Endpoint unreachable or persistently failing; carries the doc id."""

    def __init__(self, message: str, doc_id: str | None = None):
        super().__init__(message)
        self.doc_id = doc_id


@dataclass(frozen=True)
class AdapterConfig:
    model_id: str
    regime: str  # "zero-shot" | "fine-tuned"
    endpoint_url: str
    coord_convention: str = THOUSANDTHS
    max_retries: int = 2
    backoff_base: float = 0.5
    max_parallel: int = 4
    timeout: float = 60.0
    auth_token_env: str | None = None

    def __post_init__(self) -> None:
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.coord_convention not in CONVENTIONS:
            raise ValueError(f"unknown coordinate convention {self.coord_convention!r}")


def load_adapter_configs(path: str | Path) -> dict[str, AdapterConfig]:
    """Load one AdapterConfig per model from a JSON config file."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    blocks = data["adapters"] if isinstance(data, dict) else data
    out: dict[str, AdapterConfig] = {}
    for block in blocks:
        cfg = AdapterConfig(**block)
        if cfg.model_id in out:
            raise ValueError(f"duplicate adapter for model {cfg.model_id!r}")
        out[cfg.model_id] = cfg
    return out


_CONVENTION_PHRASES = {
    "pixels": "absolute pixel coordinates on the page image",
    "unit_interval": "coordinates normalised to the range 0..1",
    "thousandths": "coordinates scaled to the range 0..1000",
}


def build_prompt(schema: FormSchema, coord_convention: str = THOUSANDTHS) -> str:
    """Deterministic extraction instructions for a schema.

    Enumerates every field with its kind and null rule, demands a single
    JSON object with a {value, box} pair per field (one box each), and
    states the coordinate convention expected back.  Byte-identical across
    calls for the same schema and convention.
    """
    if coord_convention not in _CONVENTION_PHRASES:
        raise ValueError(f"unknown coordinate convention {coord_convention!r}")
    lines = [
        "You are reading a scanned clinical referral form.",
        "Extract the fields listed below and return a single JSON object, "
        "with one key per field_id and nothing else around it.",
        'Each key maps to an object {"value": ..., "box": [x0, y0, x1, y1]}.',
        "Report exactly one evidence bounding box per field, covering where "
        "the value appears on the page, as "
        + _CONVENTION_PHRASES[coord_convention]
        + " with origin at the top-left corner.",
        'If a field is not filled in on the form, use {"value": null, "box": null}.',
        "",
        f"Schema {schema.schema_id} v{schema.version} fields:",
    ]
    for f in schema.fields:
        parts = [f"- {f.field_id}: {f.label} ({f.value_kind}"]
        if f.enum_values:
            parts.append("; one of " + ", ".join(f.enum_values))
        if f.unit_lexicon:
            parts.append("; unit " + " or ".join(f.unit_lexicon))
        parts.append("; may be null)" if f.nullable else "; always present)")
        lines.append("".join(parts))
    return "\n".join(lines)


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:12]


def _http_transport(url: str, payload: dict, timeout: float, headers: dict) -> str:
    body = json.dumps(payload).encode("utf-8")
    req = urllib.request.Request(
        url, data=body, headers={"Content-Type": "application/json", **headers}
    )
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            data = json.loads(resp.read().decode("utf-8"))
    except (urllib.error.URLError, OSError, json.JSONDecodeError) as exc:
        raise TransportError(str(exc)) from exc
    if not isinstance(data, dict) or "text" not in data:
        raise TransportError(f"endpoint response missing 'text' key: {data!r}")
    return str(data["text"])


@dataclass
class QueryMeta:
    latency_s: float
    retries: int


def query_model(
    cfg: AdapterConfig,
    image_bytes: bytes,
    prompt: str,
    transport: Transport | None = None,
) -> tuple[str, QueryMeta]:
    """Send one image+prompt request, retrying transient transport failures.

    Model-content problems (bad JSON, refusals) are not errors here; the
    response text is returned verbatim for ingest to deal with.  Exhausted
    retries raise TransportError.
    """
    send = transport or _http_transport
    headers: dict[str, str] = {}
    if cfg.auth_token_env:
        token = os.environ.get(cfg.auth_token_env)
        if not token:
            raise TransportError(
                f"auth token environment variable {cfg.auth_token_env!r} is not set"
            )
        headers["Authorization"] = f"Bearer {token}"
    payload = {
        "image": base64.b64encode(image_bytes).decode("ascii"),
        "prompt": prompt,
    }

    start = time.monotonic()
    attempts = cfg.max_retries + 1
    last_error: TransportError | None = None
    for attempt in range(attempts):
        try:
            text = send(cfg.endpoint_url, payload, cfg.timeout, headers)
            return text, QueryMeta(latency_s=time.monotonic() - start, retries=attempt)
        except TransportError as exc:
            last_error = exc
            if attempt + 1 < attempts:
                time.sleep(cfg.backoff_base * (2**attempt))
    raise TransportError(
        f"{cfg.model_id}: transport failed after {attempts} attempts: {last_error}"
    )


@dataclass
class RunSummary:
    model_id: str
    queried: int
    skipped: int
    failed_doc_ids: list[str]
    out_path: Path


def _existing_doc_ids(path: Path) -> set[str]:
    if not path.exists():
        return set()
    found: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                found.add(str(json.loads(line)["doc_id"]))
            except (json.JSONDecodeError, KeyError):
                continue
    return found


def run_model_over_split(
    cfg: AdapterConfig,
    dataset: Dataset,
    split_ids: tuple[str, ...] | list[str],
    out_path: str | Path,
    transport: Transport | None = None,
) -> RunSummary:
    """Query a model over every document in a split, writing predictions.

    Documents already present in the output file are skipped, so an
    interrupted run resumes where it left off.  Per-document transport
    failures are collected, not fatal.  The output is rewritten atomically
    in doc-id order; timing metadata goes to a sidecar so reruns with a
    deterministic endpoint are byte-identical.
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    prompt = build_prompt(dataset.schema, cfg.coord_convention)

    existing = _existing_doc_ids(out_path)
    todo = [d for d in split_ids if d not in existing]
    kept_lines: list[str] = []
    if out_path.exists():
        kept_lines = [
            ln for ln in out_path.read_text(encoding="utf-8").splitlines() if ln.strip()
        ]

    results: dict[str, dict] = {}
    meta: dict[str, dict] = {}
    failed: list[str] = []
    lock = threading.Lock()

    def fetch(doc_id: str) -> None:
        record = dataset.record(doc_id)
        image_file = Path(record.image_path)
        if not image_file.is_absolute():
            image_file = dataset.manifest.images_dir / image_file.name
        try:
            image_bytes = image_file.read_bytes()
        except OSError as exc:
            raise TransportError(f"cannot read image for {doc_id}: {exc}", doc_id) from exc
        text, qmeta = query_model(cfg, image_bytes, prompt, transport)
        parsed = parse_model_response(text, dataset.schema)
        line = {
            "doc_id": doc_id,
            "model_id": cfg.model_id,
            "fields": [
                {"field_id": f.field_id, "value": f.value,
                 "box": list(f.box) if f.box is not None else None}
                for f in parsed.fields
            ],
            "parse_failed": parsed.parse_failed,
            "raw_response": text,
        }
        with lock:
            results[doc_id] = line
            meta[doc_id] = {"latency_s": round(qmeta.latency_s, 6), "retries": qmeta.retries}

    with ThreadPoolExecutor(max_workers=cfg.max_parallel) as pool:
        futures = {pool.submit(fetch, d): d for d in todo}
        for fut in as_completed(futures):
            doc_id = futures[fut]
            try:
                fut.result()
            except TransportError as exc:
                logger.warning("document %s failed: %s", doc_id, exc)
                failed.append(doc_id)

    all_lines = kept_lines + [
        json.dumps(results[d], ensure_ascii=False) for d in sorted(results)
    ]
    # Order by doc_id for stable output regardless of completion order.
    decoded = sorted(
        (json.loads(ln) for ln in all_lines), key=lambda r: str(r.get("doc_id", ""))
    )
    tmp = out_path.with_suffix(out_path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for rec in decoded:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    os.replace(tmp, out_path)

    if meta:
        meta_path = out_path.with_suffix(out_path.suffix + ".meta.json")
        previous = {}
        if meta_path.exists():
            try:
                previous = json.loads(meta_path.read_text(encoding="utf-8"))
            except json.JSONDecodeError:
                previous = {}
        previous.update(meta)
        meta_path.write_text(
            json.dumps(previous, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    return RunSummary(
        model_id=cfg.model_id,
        queried=len(results),
        skipped=len(split_ids) - len(todo),
        failed_doc_ids=sorted(failed),
        out_path=out_path,
    )
