"""Console entry points: export-embeddings and export-scores.

Both print a JSON summary to stdout on success. Failures print a JSON
error object to stderr and exit 2 (usage), 3 (bad data or missing file),
or 4 (backend could not load or run), mirroring the screening pipeline's
exit-code convention.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import DataError, ExporterError, ModelError, UsageError
from .export import export_chunked_scores, export_embeddings


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad flags through the usual error channel."""

    def error(self, message):
        raise UsageError(message)


def _run(parse, handle, argv) -> int:
    try:
        args = parse(argv)
        print(json.dumps(handle(args), indent=2))
        return 0
    except ExporterError as e:
        for klass, code in ((UsageError, 2), (DataError, 3), (ModelError, 4)):
            if isinstance(e, klass):
                break
        else:  # pragma: no cover - ScorerError is always handled per document
            code = 4
        print(
            json.dumps(
                {"error": {"type": type(e).__name__, "message": str(e), "exit_code": code}}
            ),
            file=sys.stderr,
        )
        return code
    except FileNotFoundError as e:
        print(
            json.dumps(
                {"error": {"type": "FileNotFound", "message": str(e), "exit_code": 3}}
            ),
            file=sys.stderr,
        )
        return 3


def main_embeddings(argv=None) -> int:
    parser = _Parser(
        prog="export-embeddings",
        description="Embed each corpus document into one row of an FMX1 block.",
    )
    parser.add_argument("--corpus", required=True, help="corpus JSONL, one record per line")
    parser.add_argument("--model", required=True,
                        help="sentence-embedding model id, or hash:<dim> for the "
                             "offline token-hashing embedder")
    parser.add_argument("--out", required=True, help="output .fmx path")
    parser.add_argument("--batch-size", type=int, default=32)

    def handle(args):
        return export_embeddings(args.corpus, args.model, args.out, args.batch_size)

    return _run(parser.parse_args, handle, argv)


def main_scores(argv=None) -> int:
    parser = _Parser(
        prog="export-scores",
        description="Score each corpus document via sliding windows and "
                    "top-k mean pooling into a one-column FMX1 block.",
    )
    parser.add_argument("--corpus", required=True, help="corpus JSONL, one record per line")
    parser.add_argument("--scorer", required=True,
                        help="sequence-classifier id, or a built-in "
                             "(const:<p>, firsttoken, hash)")
    parser.add_argument("--window", type=int, default=512, help="chunk length in tokens")
    parser.add_argument("--overlap", type=int, default=128,
                        help="tokens shared by consecutive chunks")
    parser.add_argument("--topk", type=int, default=3,
                        help="average the k highest chunk scores")
    parser.add_argument("--out", required=True, help="output .fmx path")

    def handle(args):
        return export_chunked_scores(
            args.corpus, args.scorer, args.window, args.overlap, args.topk, args.out
        )

    return _run(parser.parse_args, handle, argv)
