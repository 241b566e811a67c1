"""Batch export: TSV of (doc_id, title) to the embedding text format.

Output format (consumed downstream by the overlay simulator): a `dim=<D>`
header line, then `<doc_id>\\t<f1> <f2> ... <fD>` per row with floats at 9
significant digits. Row order follows input order regardless of internal
batching, and identical titles always serialize to byte-identical vectors
(unique titles are encoded once and reused).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoders import make_encoder

log = logging.getLogger("embed_export")


@dataclass(frozen=True)
class ExportJob:
    input_path: str
    output_path: str
    model: str
    revision: str | None = None
    pooling: str = "mean"
    batch_size: int = 64

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class ExportSummary:
    rows_written: int
    dim: int
    skipped: list[tuple[int, str]] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.skipped


def _read_rows(path: str) -> tuple[list[tuple[str, str]], list[tuple[int, str]]]:
    """Returns accepted (doc_id, title) rows in input order plus skip reports."""
    rows: list[tuple[str, str]] = []
    skipped: list[tuple[int, str]] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 2 or not parts[0] or not parts[1]:
                skipped.append((lineno, "malformed row (need <doc_id>\\t<title>)"))
                log.warning("%s:%d: skipping malformed row", path, lineno)
                continue
            doc_id, title = parts[0], parts[1]
            if doc_id in seen:
                skipped.append((lineno, f"duplicate doc_id {doc_id!r}"))
                log.warning("%s:%d: rejecting duplicate doc_id %r", path, lineno, doc_id)
                continue
            seen.add(doc_id)
            rows.append((doc_id, title))
    return rows, skipped


def export_embeddings(job: ExportJob) -> ExportSummary:
    """Encode every accepted row and write the embedding file plus a sidecar
    manifest recording the encoder identity."""
    encoder = make_encoder(job.model, revision=job.revision, pooling=job.pooling)
    rows, skipped = _read_rows(job.input_path)

    # encode each unique title once: duplicates reuse the same vector, so
    # equal titles are byte-equal in the output no matter how batches fall
    unique_titles: list[str] = []
    seen_titles: set[str] = set()
    for _, title in rows:
        if title not in seen_titles:
            seen_titles.add(title)
            unique_titles.append(title)
    vectors: dict[str, np.ndarray] = {}
    for start in range(0, len(unique_titles), job.batch_size):
        chunk = unique_titles[start : start + job.batch_size]
        encoded = encoder.encode_batch(chunk)
        for title, vec in zip(chunk, encoded):
            vectors[title] = vec

    out_path = Path(job.output_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        if rows:
            fh.write(f"dim={encoder.dim}\n")
        for doc_id, title in rows:
            floats = " ".join(f"{x:.9g}" for x in vectors[title])
            fh.write(f"{doc_id}\t{floats}\n")

    manifest = {
        "model": job.model,
        "revision": job.revision,
        "pooling": job.pooling,
        "dim": encoder.dim,
        "batch_size": job.batch_size,
        "rows_written": len(rows),
        "skipped": [[lineno, reason] for lineno, reason in skipped],
    }
    Path(str(out_path) + ".manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2), encoding="utf-8"
    )
    return ExportSummary(rows_written=len(rows), dim=encoder.dim, skipped=skipped)
