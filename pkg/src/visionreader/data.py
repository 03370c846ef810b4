"""Domain types, dataset/feature file IO, splitting and vocabulary."""

from __future__ import annotations

import json
import math
import random
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

CATEGORIES = ("author", "title", "publisher", "translator", "genre")
SPLITS = ("train", "dev", "test")
RECORD_KEYS = ("image_id", "question", "answer", "category", "split")

PAD, BOS, EOS, UNK, SEP = "<pad>", "<s>", "</s>", "<unk>", "<sep>"
SPECIAL_TOKENS = (PAD, BOS, EOS, UNK, SEP)


class DatasetError(ValueError):
    """Raised for malformed dataset or feature files."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(ValueError):
    """Raised for invalid configuration values."""


def tokenize(text: str) -> list[str]:
    """Split on runs of whitespace. No case folding."""
    return text.split()


def normalize_answer(text: str, lowercase: bool = True) -> str:
    """Collapse whitespace and (by default) lowercase. Diacritics are kept."""
    text = " ".join(text.split())
    return text.lower() if lowercase else text


@dataclass(frozen=True)
class QARecord:
    image_id: str
    question: str
    answer: str
    category: str
    split: str = "train"

    def __post_init__(self):
        if not isinstance(self.image_id, str) or not self.image_id:
            raise DatasetError("image_id must be a non-empty string")
        if not tokenize(self.question):
            raise DatasetError("question is empty")
        if not tokenize(self.answer):
            raise DatasetError("answer is empty")
        if self.category not in CATEGORIES:
            raise DatasetError(f"unknown category {self.category!r}")
        if self.split not in SPLITS:
            raise DatasetError(f"unknown split {self.split!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BookMetadata:
    image_id: str
    title: str | None
    author: str | None = None
    publisher: str | None = None
    translator: str | None = None
    genre: str | None = None

    def field(self, category: str) -> str | None:
        return getattr(self, category)

    @classmethod
    def from_dict(cls, obj: Mapping) -> "BookMetadata":
        return cls(
            image_id=str(obj["image_id"]),
            title=obj.get("title"),
            author=obj.get("author"),
            publisher=obj.get("publisher"),
            translator=obj.get("translator"),
            genre=obj.get("genre"),
        )


def _check_bbox(bbox) -> tuple[float, float, float, float]:
    if len(bbox) != 4:
        raise DatasetError(f"bbox must have 4 components, got {len(bbox)}")
    x0, y0, x1, y1 = (float(v) for v in bbox)
    for name, v in zip(("x_min", "y_min", "x_max", "y_max"), (x0, y0, x1, y1)):
        if not 0.0 <= v <= 1.0:
            raise DatasetError(f"bbox {name}={v} outside [0, 1]")
    if x0 > x1 or y0 > y1:
        raise DatasetError(f"degenerate bbox {bbox!r}")
    return (x0, y0, x1, y1)


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DatasetError(f"{name} must be a vector")
    if not np.all(np.isfinite(arr)):
        raise DatasetError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class OCRToken:
    text: str
    bbox: tuple[float, float, float, float]
    det_feature: np.ndarray
    rec_feature: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bbox", _check_bbox(self.bbox))
        object.__setattr__(self, "det_feature", _as_vector(self.det_feature, "det_feature"))
        object.__setattr__(self, "rec_feature", _as_vector(self.rec_feature, "rec_feature"))


@dataclass(frozen=True, eq=False)
class ObjectRegion:
    feature: np.ndarray
    bbox: tuple[float, float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "bbox", _check_bbox(self.bbox))
        object.__setattr__(self, "feature", _as_vector(self.feature, "feature"))


def reading_order(tokens: Sequence[OCRToken], band: float = 0.05) -> list[OCRToken]:
    """Sort OCR tokens top-left to bottom-right: by y_min band, then x_min."""
    # the epsilon keeps e.g. 0.15 / 0.05 from flooring to band 2
    return sorted(tokens, key=lambda t: (math.floor(t.bbox[1] / band + 1e-9), t.bbox[0]))


@dataclass(frozen=True, eq=False)
class ImageFeatureBundle:
    image_id: str
    objects: tuple[ObjectRegion, ...]
    ocr_tokens: tuple[OCRToken, ...]
    grid: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "ocr_tokens", tuple(reading_order(self.ocr_tokens)))
        grid = np.asarray(self.grid, dtype=np.float64)
        if grid.ndim != 2 or grid.shape[0] < 1:
            raise DatasetError(f"grid for {self.image_id!r} must be a non-empty matrix")
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)

    @property
    def ocr_texts(self) -> list[str]:
        return [t.text for t in self.ocr_tokens]

    def check_dims(self, f_obj: int, f_det: int, f_rec: int, f_grid: int) -> None:
        for o in self.objects:
            if o.feature.shape[0] != f_obj:
                raise DatasetError(f"{self.image_id}: object feature dim {o.feature.shape[0]} != {f_obj}")
        for t in self.ocr_tokens:
            if t.det_feature.shape[0] != f_det:
                raise DatasetError(f"{self.image_id}: det feature dim {t.det_feature.shape[0]} != {f_det}")
            if t.rec_feature.shape[0] != f_rec:
                raise DatasetError(f"{self.image_id}: rec feature dim {t.rec_feature.shape[0]} != {f_rec}")
        if self.grid.shape[1] != f_grid:
            raise DatasetError(f"{self.image_id}: grid dim {self.grid.shape[1]} != {f_grid}")

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "objects": [{"feature": o.feature.tolist(), "bbox": list(o.bbox)} for o in self.objects],
            "ocr": [
                {"text": t.text, "bbox": list(t.bbox), "det": t.det_feature.tolist(), "rec": t.rec_feature.tolist()}
                for t in self.ocr_tokens
            ],
            "grid": self.grid.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "ImageFeatureBundle":
        return cls(
            image_id=str(obj["image_id"]),
            objects=[ObjectRegion(o["feature"], o["bbox"]) for o in obj.get("objects", [])],
            ocr_tokens=[OCRToken(t["text"], t["bbox"], t["det"], t["rec"]) for t in obj.get("ocr", [])],
            grid=obj["grid"],
        )


# --------------------------------------------------------------------------
# file IO


def _read_jsonl(path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON ({exc.msg})", line=lineno) from None
            if not isinstance(obj, dict):
                raise DatasetError("expected a JSON object", line=lineno)
            yield lineno, obj


def write_jsonl(path, rows: Iterable[Mapping]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def load_dataset(path) -> list[QARecord]:
    """Read a QA JSONL file. Errors carry the offending line number."""
    records = []
    for lineno, obj in _read_jsonl(path):
        missing = [k for k in RECORD_KEYS if k not in obj]
        if missing:
            raise DatasetError(f"missing field(s) {', '.join(missing)}", line=lineno)
        extra = sorted(set(obj) - set(RECORD_KEYS))
        if extra:
            raise DatasetError(f"unexpected field(s) {', '.join(extra)}", line=lineno)
        try:
            records.append(QARecord(**{k: obj[k] for k in RECORD_KEYS}))
        except DatasetError as exc:
            raise DatasetError(str(exc), line=lineno) from None
    return records


def save_dataset(path, records: Iterable[QARecord]) -> None:
    write_jsonl(path, (r.to_dict() for r in records))


def load_metadata(path) -> list[BookMetadata]:
    out = []
    for lineno, obj in _read_jsonl(path):
        if "image_id" not in obj:
            raise DatasetError("missing field image_id", line=lineno)
        out.append(BookMetadata.from_dict(obj))
    return out


def load_feature_bundles(path) -> dict[str, ImageFeatureBundle]:
    bundles = {}
    for lineno, obj in _read_jsonl(path):
        try:
            bundle = ImageFeatureBundle.from_dict(obj)
        except (KeyError, TypeError, DatasetError) as exc:
            raise DatasetError(f"bad feature bundle: {exc}", line=lineno) from None
        bundles[bundle.image_id] = bundle
    return bundles


def save_feature_bundles(path, bundles: Iterable[ImageFeatureBundle]) -> None:
    write_jsonl(path, (b.to_dict() for b in bundles))


# --------------------------------------------------------------------------
# splits


def assign_splits(image_ids: Sequence[str], ratios=(0.70, 0.15, 0.15), seed: int = 0) -> dict[str, str]:
    """Assign each image to train/dev/test uniformly at random.

    Dev and test sizes are ``round(ratio * n)``; train takes the remainder.
    The result depends only on the sorted ids, the ratios and the seed.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ConfigError(f"ratios must be three non-negative fractions, got {ratios!r}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must sum to 1, got {sum(ratios)!r}")
    ids = sorted(image_ids)
    if not ids:
        raise ConfigError("no image ids to split")
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate image ids")
    n = len(ids)
    n_dev = round(ratios[1] * n)
    n_test = round(ratios[2] * n)
    if n_dev + n_test > n:
        n_test = n - n_dev
    random.Random(seed).shuffle(ids)
    out = {}
    for i, image_id in enumerate(ids):
        out[image_id] = "dev" if i < n_dev else "test" if i < n_dev + n_test else "train"
    return out


def split_records(records: Iterable[QARecord], split: str) -> list[QARecord]:
    return [r for r in records if r.split == split]


# --------------------------------------------------------------------------
# vocabulary


@dataclass(frozen=True)
class Vocabulary:
    """Word-level vocabulary; ids 0..4 are PAD, BOS, EOS, UNK, SEP."""

    tokens: tuple[str, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tokens = tuple(self.tokens)
        if tokens[: len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            tokens = SPECIAL_TOKENS + tuple(t for t in tokens if t not in SPECIAL_TOKENS)
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(tokens)})

    pad_id = 0
    bos_id = 1
    eos_id = 2
    unk_id = 3
    sep_id = 4

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def id(self, token: str) -> int:
        return self._index.get(token, self.unk_id)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]


def build_vocabulary(records: Sequence[QARecord], min_count: int = 1) -> Vocabulary:
    """Collect question and answer tokens of the train split.

    Ordering is by descending count, ties broken lexicographically.
    """
    if not records:
        raise DatasetError("no records to build a vocabulary from")
    train = [r for r in records if r.split == "train"]
    if not train:
        raise DatasetError("train split is empty")
    counts = Counter()
    for r in train:
        counts.update(tokenize(r.question))
        counts.update(tokenize(r.answer))
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(SPECIAL_TOKENS + tuple(t for t in kept if t not in SPECIAL_TOKENS))
