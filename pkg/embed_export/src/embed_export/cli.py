"""CLI wrapper: embed-export --in titles.tsv --out embs.txt --model <name>."""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .encoders import EncoderUnavailableError
from .export import ExportJob, export_embeddings


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="embed-export", description=__doc__)
    parser.add_argument("--in", dest="input_path", required=True, help="TSV of doc_id<TAB>title")
    parser.add_argument("--out", dest="output_path", required=True, help="embedding file to write")
    parser.add_argument(
        "--model",
        required=True,
        help="transformer checkpoint name/path, or hash:dim=<D> for the offline backend",
    )
    parser.add_argument("--revision", default=None, help="checkpoint revision to pin")
    parser.add_argument("--pooling", choices=["mean", "cls"], default="mean")
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--version", action="version", version=__version__)
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    job = ExportJob(
        input_path=args.input_path,
        output_path=args.output_path,
        model=args.model,
        revision=args.revision,
        pooling=args.pooling,
        batch_size=args.batch,
    )
    try:
        summary = export_embeddings(job)
    except EncoderUnavailableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    print(
        f"wrote {summary.rows_written} rows (dim={summary.dim}) to {args.output_path}; "
        f"{len(summary.skipped)} skipped",
        file=sys.stderr,
    )
    return 0 if summary.clean else 1


if __name__ == "__main__":
    sys.exit(main())
