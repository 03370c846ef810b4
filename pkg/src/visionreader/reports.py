"""Machine-first breakdown tables: per-field and per-bucket EM/F1, CSV output."""

from __future__ import annotations

import csv
import io
from typing import Sequence

from .data import tokenize
from .forge import LENGTH_BUCKETS, length_bucket
from .metrics import COVERAGE_BUCKETS, EvalPair, evaluate, ocr_coverage_bucket

FIELD_ORDER = ("title", "author", "publisher", "translator")
BUCKETERS = ("answer_len", "question_len", "ocr_coverage")


class MissingMetadataError(KeyError):
    def __str__(self) -> str:
        return str(self.args[0])


def report_by_field(pairs: Sequence[EvalPair], genre_mode: bool = False) -> list[dict]:
    """Rows of ``{field, em, f1, n}`` in the fixed order title, author, publisher, translator.

    In genre mode only the genre row is produced. Fields without pairs are skipped.
    """
    fields = ("genre",) if genre_mode else FIELD_ORDER
    rows = []
    for f in fields:
        subset = [p for p in pairs if p.category == f]
        if subset:
            r = evaluate(subset)
            rows.append({"field": f, "em": r.em, "f1": r.f1, "n": r.n})
    return rows


def bucket_of(pair: EvalPair, bucketer: str):
    if bucketer == "answer_len":
        return length_bucket(len(tokenize(pair.ground_truth)))
    if bucketer == "question_len":
        if "question" not in pair.metadata:
            raise MissingMetadataError("bucketer 'question_len' needs pair metadata 'question'")
        return length_bucket(len(tokenize(pair.metadata["question"])))
    if bucketer == "ocr_coverage":
        if "ocr_coverage" in pair.metadata:
            return pair.metadata["ocr_coverage"]
        if "ocr_texts" not in pair.metadata:
            raise MissingMetadataError("bucketer 'ocr_coverage' needs pair metadata 'ocr_texts'")
        return ocr_coverage_bucket(pair.ground_truth, pair.metadata["ocr_texts"])
    raise ValueError(f"unknown bucketer {bucketer!r}; expected one of {BUCKETERS}")


def report_by_bucket(pairs: Sequence[EvalPair], bucketer: str) -> list[dict]:
    """Per-bucket ``{bucket, em, f1, n}`` rows; buckets with no pairs are omitted."""
    groups: dict = {}
    for p in pairs:
        groups.setdefault(bucket_of(p, bucketer), []).append(p)
    order = COVERAGE_BUCKETS if bucketer == "ocr_coverage" else LENGTH_BUCKETS
    rows = []
    for b in order:
        if b in groups:
            r = evaluate(groups[b])
            rows.append({"bucket": b, "em": r.em, "f1": r.f1, "n": r.n})
    return rows


def rows_to_csv(rows: Sequence[dict], percent: bool = False) -> str:
    """CSV text; with ``percent`` the em/f1 columns are scaled and rounded to 2 places."""
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        if percent:
            row = {k: (round(100 * v, 2) if k in ("em", "f1") else v) for k, v in row.items()}
        writer.writerow(row)
    return buf.getvalue()


def format_table(rows: Sequence[dict]) -> str:
    """Fixed-width text rendering (percentages) for terminals."""
    if not rows:
        return "(no rows)"
    key = "field" if "field" in rows[0] else "bucket"
    lines = [f"{key:<12}{'EM (%)':>10}{'F1 (%)':>10}{'n':>8}"]
    for r in rows:
        lines.append(f"{str(r[key]):<12}{100 * r['em']:>10.2f}{100 * r['f1']:>10.2f}{r['n']:>8}")
    return "\n".join(lines)
