"""Semi-automatic corpus construction: metadata cleaning, template-based QA
synthesis, splits and corpus statistics."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import random
import re
import unicodedata
from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence

from .data import (
    CATEGORIES,
    BookMetadata,
    DatasetError,
    QARecord,
    _read_jsonl,
    assign_splits,
    tokenize,
)

TEMPLATES_PER_CATEGORY_TARGET = 30  # per-annotator minimum in the original collection
TEMPLATE_BANK_TARGET = 300

LENGTH_BUCKETS = ("short", "medium", "long", "very_long")


@dataclass(frozen=True)
class QuestionTemplate:
    category: str
    text: str
    template_id: int

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise DatasetError(f"unknown template category {self.category!r}")
        if not self.text.strip():
            raise DatasetError("empty template text")


def load_templates(path=None) -> list[QuestionTemplate]:
    """Load a template bank (JSONL of ``{category, text}``); default is the bundled bank."""
    if path is None:
        path = resources.files("visionreader") / "resources" / "templates.jsonl"
    bank = []
    for lineno, obj in _read_jsonl(path):
        try:
            bank.append(QuestionTemplate(obj["category"], obj["text"], template_id=len(bank)))
        except KeyError as exc:
            raise DatasetError(f"missing field {exc.args[0]}", line=lineno) from None
        except DatasetError as exc:
            raise DatasetError(str(exc), line=lineno) from None
    return bank


def check_template_bank(bank: Sequence[QuestionTemplate], min_per_category: int) -> dict[str, int]:
    counts = {c: 0 for c in CATEGORIES}
    for t in bank:
        counts[t.category] += 1
    short = {c: n for c, n in counts.items() if n < min_per_category}
    if short:
        raise DatasetError(f"template bank below {min_per_category} per category: {short}")
    return counts


# --------------------------------------------------------------------------
# cleaning


def load_extraneous_patterns(path=None) -> list[str]:
    if path is None:
        path = resources.files("visionreader") / "resources" / "extraneous.txt"
        text = path.read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


_DEFAULT_PATTERNS: list[re.Pattern] | None = None


def _default_patterns() -> list[re.Pattern]:
    global _DEFAULT_PATTERNS
    if _DEFAULT_PATTERNS is None:
        _DEFAULT_PATTERNS = [re.compile(p, re.IGNORECASE) for p in load_extraneous_patterns()]
    return _DEFAULT_PATTERNS


def strip_punctuation(text: str) -> str:
    return "".join(ch for ch in text if not unicodedata.category(ch).startswith("P"))


def clean_text(text: str | None, patterns: Sequence[re.Pattern] | None = None) -> str | None:
    """Remove extraneous phrases and punctuation; None if nothing is left.

    Repeats until stable, so a phrase only exposed by punctuation removal
    (e.g. ``"tái-bản"``) is still dropped and cleaning stays idempotent.
    """
    if text is None:
        return None
    if patterns is None:
        patterns = _default_patterns()
    text = unicodedata.normalize("NFC", text)
    while True:
        out = text
        for pat in patterns:
            out = pat.sub(" ", out)
        # dropping punctuation can bring a base letter next to a combining mark
        out = unicodedata.normalize("NFC", " ".join(strip_punctuation(out).split()))
        if out == text:
            break
        text = out
    return text or None


def clean_metadata(raw: BookMetadata, patterns: Sequence[str | re.Pattern] | None = None) -> BookMetadata:
    compiled = None
    if patterns is not None:
        compiled = [p if isinstance(p, re.Pattern) else re.compile(p, re.IGNORECASE) for p in patterns]
    return BookMetadata(
        image_id=raw.image_id,
        **{c: clean_text(raw.field(c), compiled) for c in ("title", "author", "publisher", "translator", "genre")},
    )


# --------------------------------------------------------------------------
# QA synthesis


def record_seed(rng_seed: int, image_id: str) -> int:
    digest = hashlib.sha256(f"{rng_seed}:{image_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def generate_qa(
    meta: BookMetadata,
    bank: Sequence[QuestionTemplate],
    rng_seed: int,
    categories: Sequence[str] = CATEGORIES,
    split: str = "train",
) -> list[QARecord]:
    """One QA pair per present field; the answer is the cleaned field value."""
    by_cat = defaultdict(list)
    for t in bank:
        by_cat[t.category].append(t)
    rng = random.Random(record_seed(rng_seed, meta.image_id))
    cleaned = clean_metadata(meta)
    out = []
    for cat in categories:
        value = cleaned.field(cat)
        if value is None:
            continue
        if not by_cat[cat]:
            raise DatasetError(f"template bank has no {cat!r} questions")
        template = rng.choice(by_cat[cat])
        out.append(QARecord(meta.image_id, template.text, value, cat, split))
    return out


def build_corpus(
    metas: Sequence[BookMetadata],
    bank: Sequence[QuestionTemplate],
    seed: int = 0,
    ratios=(0.70, 0.15, 0.15),
) -> list[QARecord]:
    """Split images, then synthesize QA pairs for each book (in input order)."""
    ids = [m.image_id for m in metas]
    if len(set(ids)) != len(ids):
        raise DatasetError("duplicate image_id in metadata")
    splits = assign_splits(ids, ratios, seed)
    records = []
    for m in metas:
        records.extend(generate_qa(m, bank, seed, split=splits[m.image_id]))
    return records


# --------------------------------------------------------------------------
# statistics


@dataclass
class CorpusStats:
    images: int = 0
    questions: int = 0
    answers: int = 0
    per_category_counts: dict = field(default_factory=dict)
    per_split_images: dict = field(default_factory=dict)
    per_split_questions: dict = field(default_factory=dict)
    unique_authors: int = 0
    unique_titles: int = 0
    unique_publishers: int = 0
    unique_translators: int = 0
    unique_genres: int = 0
    avg_question_len: float = 0.0
    avg_answer_len: float = 0.0
    avg_questions_per_image: float = 0.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2, sort_keys=True)


_UNIQUE_FIELDS = {
    "author": "unique_authors",
    "title": "unique_titles",
    "publisher": "unique_publishers",
    "translator": "unique_translators",
    "genre": "unique_genres",
}


def compute_stats(records: Sequence[QARecord], meta: Sequence[BookMetadata] | None = None) -> CorpusStats:
    """Corpus counts and averages.

    Unique field values come from the cleaned metadata when given, otherwise
    from the answers of each category.
    """
    stats = CorpusStats(
        per_category_counts={c: 0 for c in CATEGORIES},
        per_split_images={s: 0 for s in ("train", "dev", "test")},
        per_split_questions={s: 0 for s in ("train", "dev", "test")},
    )
    if not records and not meta:
        return stats
    images = {}
    q_len = a_len = 0
    for r in records:
        images.setdefault(r.image_id, r.split)
        stats.per_category_counts[r.category] += 1
        stats.per_split_questions[r.split] += 1
        q_len += len(tokenize(r.question))
        a_len += len(tokenize(r.answer))
    for split in images.values():
        stats.per_split_images[split] += 1
    stats.images = len(images)
    stats.questions = stats.answers = len(records)
    if records:
        stats.avg_question_len = q_len / len(records)
        stats.avg_answer_len = a_len / len(records)
    if images:
        stats.avg_questions_per_image = len(records) / len(images)

    values = defaultdict(set)
    if meta is not None:
        for m in meta:
            cleaned = clean_metadata(m)
            for cat in CATEGORIES:
                if cleaned.field(cat) is not None:
                    values[cat].add(cleaned.field(cat))
    else:
        for r in records:
            values[r.category].add(r.answer)
    for cat, attr in _UNIQUE_FIELDS.items():
        setattr(stats, attr, len(values[cat]))
    return stats


def length_bucket(n_tokens: int) -> str:
    if n_tokens <= 5:
        return "short"
    if n_tokens <= 10:
        return "medium"
    if n_tokens <= 15:
        return "long"
    return "very_long"


def bucket_by_length(records: Iterable[QARecord], which: str = "answer") -> dict[str, list[QARecord]]:
    """Group records by whitespace-token length of the answer or question."""
    if which not in ("question", "answer"):
        raise ValueError(f"which must be 'question' or 'answer', got {which!r}")
    out = {b: [] for b in LENGTH_BUCKETS}
    for r in records:
        out[length_bucket(len(tokenize(getattr(r, which))))].append(r)
    return out
