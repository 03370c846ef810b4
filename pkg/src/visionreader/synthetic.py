"""Deterministic stand-ins for the object detector, scene-text spotter and
grid backbone, plus a tiny synthetic book corpus to train against."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import BookMetadata, ImageFeatureBundle, OCRToken, ObjectRegion, tokenize

# vertical placement of each field on a synthetic cover
FIELD_ROWS = {"title": 0.10, "author": 0.35, "translator": 0.55, "publisher": 0.85}


def _seed_of(*parts) -> int:
    digest = hashlib.sha256(":".join(map(str, parts)).encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class SyntheticFeatureProvider:
    """Produces an ``ImageFeatureBundle`` from ``(image_id, seed)``.

    Recognition features depend only on the word (as a real recognizer's
    would); detection features, objects and grid depend on the image.
    """

    f_obj: int = 32
    f_det: int = 16
    f_rec: int = 16
    f_grid: int = 16
    grid_size: int = 4
    max_objects: int = 3
    seed: int = 0
    miss_rate: float = 0.0

    @classmethod
    def for_config(cls, fusion_config, **kwargs) -> "SyntheticFeatureProvider":
        return cls(
            f_obj=fusion_config.f_obj,
            f_det=fusion_config.f_det,
            f_rec=fusion_config.f_rec,
            f_grid=fusion_config.f_grid,
            **kwargs,
        )

    def word_vector(self, word: str) -> np.ndarray:
        rng = np.random.default_rng(_seed_of("rec", self.seed, word))
        return rng.standard_normal(self.f_rec)

    def __call__(self, image_id: str, lines: Sequence[str] | dict | None = None) -> ImageFeatureBundle:
        """``lines`` is the cover text: a list of lines or a field -> text map."""
        rng = np.random.default_rng(_seed_of("img", self.seed, image_id))
        if isinstance(lines, dict):
            placed = [(FIELD_ROWS.get(k, 0.7), v) for k, v in lines.items() if v]
        else:
            lines = list(lines or [])
            placed = [((i + 0.5) / max(len(lines), 1) * 0.9, v) for i, v in enumerate(lines)]

        ocr = []
        for y, text in placed:
            words = tokenize(text)
            width = 0.9 / max(len(words), 1)
            for j, word in enumerate(words):
                if self.miss_rate and rng.random() < self.miss_rate:
                    continue
                x0 = 0.05 + j * width
                box = (x0, y, min(x0 + width * 0.9, 1.0), min(y + 0.04, 1.0))
                det = rng.standard_normal(self.f_det) * 0.1
                det[: min(4, self.f_det)] += np.array(box)[: min(4, self.f_det)]
                ocr.append(OCRToken(word, box, det, self.word_vector(word)))

        objects = []
        for _ in range(int(rng.integers(0, self.max_objects + 1))):
            x0, y0 = rng.uniform(0, 0.6, size=2)
            w, h = rng.uniform(0.1, 0.4, size=2)
            objects.append(ObjectRegion(rng.standard_normal(self.f_obj), (x0, y0, x0 + w, y0 + h)))
        grid = rng.standard_normal((self.grid_size, self.f_grid))
        return ImageFeatureBundle(image_id, objects, ocr, grid)

    def for_metadata(self, meta: BookMetadata) -> ImageFeatureBundle:
        """Cover text is every printed field (genre is not printed on covers)."""
        return self(meta.image_id, {k: meta.field(k) for k in FIELD_ROWS})


# word pools for synthetic covers; short so dev answers stay in-vocabulary
_GIVEN = ["an", "bình", "chi", "dũng", "giang", "hải", "khoa", "lan", "minh", "ngọc", "phúc", "quân"]
_FAMILY = ["nguyễn", "trần", "lê", "phạm", "hoàng", "võ"]
_TITLE = ["mùa", "gió", "biển", "núi", "trăng", "đêm", "sông", "hoa", "lửa", "mây", "đường", "nhà"]
_PUBLISHERS = ["kim đồng", "trẻ", "văn học", "hội nhà văn", "phụ nữ", "lao động"]
_GENRES = ["tiểu thuyết", "thiếu nhi", "kỹ năng sống", "lịch sử"]


def synthetic_books(n: int, seed: int = 0, translator_rate: float = 0.5) -> list[BookMetadata]:
    rng = np.random.default_rng(_seed_of("books", seed))

    def person():
        return f"{rng.choice(_FAMILY)} {rng.choice(_GIVEN)}"

    books = []
    for i in range(n):
        title = " ".join(rng.choice(_TITLE, size=int(rng.integers(1, 4)), replace=False))
        books.append(
            BookMetadata(
                image_id=f"syn{seed}_{i:05d}",
                title=title,
                author=person(),
                publisher=str(rng.choice(_PUBLISHERS)),
                translator=person() if rng.random() < translator_rate else None,
                genre=str(rng.choice(_GENRES)),
            )
        )
    return books
