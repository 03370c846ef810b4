"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

from typing import NamedTuple, Sequence

from .data import CATEGORIES, ImageFeatureBundle, tokenize


class QAInput(NamedTuple):
    """One estimator sample: an image's features and a question about it."""

    bundle: ImageFeatureBundle
    question: str
    category: str = "title"


def check_qa_inputs(X, y=None) -> tuple[list[QAInput], list[str] | None]:
    """Coerce ``X`` to a list of ``QAInput`` and ``y`` to a list of strings.

    Accepts ``QAInput`` objects or ``(bundle, question[, category])`` tuples.
    """
    if X is None:
        raise ValueError("X is None")
    samples = []
    for i, item in enumerate(X):
        if isinstance(item, QAInput):
            s = item
        elif isinstance(item, (tuple, list)) and 2 <= len(item) <= 3:
            s = QAInput(*item)
        else:
            raise TypeError(f"sample {i}: expected (bundle, question[, category]), got {type(item).__name__}")
        if not isinstance(s.bundle, ImageFeatureBundle):
            raise TypeError(f"sample {i}: bundle must be an ImageFeatureBundle")
        if not isinstance(s.question, str) or not tokenize(s.question):
            raise ValueError(f"sample {i}: question is empty")
        if s.category not in CATEGORIES:
            raise ValueError(f"sample {i}: unknown category {s.category!r}")
        samples.append(s)
    if not samples:
        raise ValueError("X contains no samples")
    if y is None:
        return samples, None
    answers = [str(a) for a in y]
    if len(answers) != len(samples):
        raise ValueError(f"X has {len(samples)} samples but y has {len(answers)}")
    for i, a in enumerate(answers):
        if not tokenize(a):
            raise ValueError(f"y[{i}] is empty")
    return samples, answers


def infer_feature_dims(bundles: Sequence[ImageFeatureBundle]) -> dict[str, int | None]:
    """Feature widths seen across bundles; ``None`` where a modality never occurs."""
    dims: dict[str, int | None] = {"f_obj": None, "f_det": None, "f_rec": None, "f_grid": None}

    def put(key, value, image_id):
        if dims[key] is None:
            dims[key] = value
        elif dims[key] != value:
            raise ValueError(f"{image_id}: {key}={value} disagrees with earlier width {dims[key]}")

    for b in bundles:
        put("f_grid", b.grid.shape[1], b.image_id)
        for o in b.objects:
            put("f_obj", o.feature.shape[0], b.image_id)
        for t in b.ocr_tokens:
            put("f_det", t.det_feature.shape[0], b.image_id)
            put("f_rec", t.rec_feature.shape[0], b.image_id)
    return dims


def check_fraction_list(text_or_list) -> list[float]:
    if isinstance(text_or_list, str):
        values = [float(v) for v in text_or_list.split(",") if v.strip()]
    else:
        values = [float(v) for v in text_or_list]
    if not values:
        raise ValueError("no fractions given")
    for v in values:
        if not 0.0 < v <= 1.0:
            raise ValueError(f"fraction {v} outside (0, 1]")
    return values
