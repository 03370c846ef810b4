"""Exact Match and token-level precision/recall/F1 for OCR-VQA answers."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .data import CATEGORIES, normalize_answer, tokenize

COVERAGE_BUCKETS = (25, 50, 75, 100)


def _prep(text: str, normalize: bool) -> str:
    return normalize_answer(text) if normalize else text


def exact_match(ga: str, pa: str, normalize: bool = True) -> int:
    return int(_prep(ga, normalize) == _prep(pa, normalize))


def token_f1(ga: str, pa: str, normalize: bool = True, literal_eq9: bool = False) -> tuple[float, float, float]:
    """Token precision, recall and F1 with multiset overlap.

    ``literal_eq9`` drops the factor 2 from the harmonic mean (``P*R/(P+R)``).
    """
    gt = tokenize(_prep(ga, normalize))
    pt = tokenize(_prep(pa, normalize))
    if not pt or not gt:
        return 0.0, 0.0, 0.0
    common = sum((Counter(gt) & Counter(pt)).values())
    if common == 0:
        return 0.0, 0.0, 0.0
    p = common / len(pt)
    r = common / len(gt)
    f1 = p * r / (p + r)
    if not literal_eq9:
        f1 *= 2
    return p, r, f1


@dataclass(frozen=True)
class EvalPair:
    ground_truth: str
    prediction: str
    category: str = "title"
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if not tokenize(self.ground_truth):
            raise ValueError("ground truth answer is empty")


@dataclass
class EvalReport:
    em: float
    f1: float
    n: int
    per_category: dict = field(default_factory=dict)
    per_bucket: dict | None = None

    def to_dict(self, percent: bool = False) -> dict:
        def fmt(x):
            return round(100 * x, 2) if percent else x

        out = {"em": fmt(self.em), "f1": fmt(self.f1), "n": self.n}
        out["per_category"] = {
            c: {"em": fmt(v["em"]), "f1": fmt(v["f1"]), "n": v["n"]} for c, v in self.per_category.items()
        }
        if self.per_bucket is not None:
            out["per_bucket"] = {
                key: {b: {"em": fmt(v["em"]), "f1": fmt(v["f1"]), "n": v["n"]} for b, v in rows.items()}
                for key, rows in self.per_bucket.items()
            }
        return out


def _summary(scores: Sequence[tuple[int, float]]) -> dict:
    n = len(scores)
    return {
        "em": sum(s[0] for s in scores) / n,
        "f1": sum(s[1] for s in scores) / n,
        "n": n,
    }


def evaluate(
    pairs: Sequence[EvalPair],
    normalize: bool = True,
    literal_eq9: bool = False,
    bucket_keys: Sequence[str] = (),
) -> EvalReport:
    """Mean EM and mean per-pair F1 (macro over pairs), overall and per category.

    ``bucket_keys`` names metadata entries to break the scores down by.
    """
    if not pairs:
        raise ValueError("cannot evaluate an empty list of pairs")
    scored = []
    for p in pairs:
        em = exact_match(p.ground_truth, p.prediction, normalize)
        f1 = token_f1(p.ground_truth, p.prediction, normalize, literal_eq9)[2]
        scored.append((em, f1))
    overall = _summary(scored)

    by_cat: dict[str, list] = {}
    for p, s in zip(pairs, scored):
        by_cat.setdefault(p.category, []).append(s)
    per_category = {c: _summary(by_cat[c]) for c in CATEGORIES if c in by_cat}

    per_bucket = None
    if bucket_keys:
        per_bucket = {}
        for key in bucket_keys:
            groups: dict = {}
            for p, s in zip(pairs, scored):
                if key not in p.metadata:
                    raise KeyError(f"pair is missing metadata {key!r}")
                groups.setdefault(p.metadata[key], []).append(s)
            per_bucket[key] = {b: _summary(groups[b]) for b in sorted(groups, key=str)}
    return EvalReport(overall["em"], overall["f1"], overall["n"], per_category, per_bucket)


def ocr_coverage(ga: str, ocr_texts: Sequence[str], normalize: bool = True) -> float:
    """Fraction of answer tokens found (as a multiset) among the OCR tokens."""
    gt = tokenize(_prep(ga, normalize))
    if not gt:
        raise ValueError("ground truth answer is empty")
    pool = Counter(tok for text in ocr_texts for tok in tokenize(_prep(text, normalize)))
    found = sum((Counter(gt) & pool).values())
    return found / len(gt)


def ocr_coverage_bucket(ga: str, ocr_texts: Sequence[str], normalize: bool = True) -> int:
    """Smallest of 25/50/75/100 that is >= the coverage percentage."""
    pct = 100 * ocr_coverage(ga, ocr_texts, normalize)
    for b in COVERAGE_BUCKETS:
        if pct <= b + 1e-9:
            return b
    return 100


# --------------------------------------------------------------------------
# human agreement


@dataclass
class AgreementReport:
    per_field: dict
    average: dict
    annotators: int

    def to_rows(self, percent: bool = True) -> list[dict]:
        scale = 100 if percent else 1
        rows = [
            {"field": c, "em": round(scale * v["em"], 2), "f1": round(scale * v["f1"], 2)}
            for c, v in self.per_field.items()
        ]
        rows.append({"field": "average", "em": round(scale * self.average["em"], 2),
                     "f1": round(scale * self.average["f1"], 2)})
        return rows


def macro_average(per_field: Mapping[str, Mapping[str, float]]) -> dict:
    n = len(per_field)
    return {
        "em": sum(v["em"] for v in per_field.values()) / n,
        "f1": sum(v["f1"] for v in per_field.values()) / n,
    }


def agreement_study(
    gold: Sequence[str],
    categories: Sequence[str],
    human_answers: Sequence[Sequence[str]],
    normalize: bool = True,
) -> AgreementReport:
    """Score annotators against the automatic labels, per field.

    Each field's EM/F1 is averaged over annotators; the ``average`` row is
    the unweighted mean of the field rows.
    """
    if len(gold) != len(categories):
        raise ValueError("gold and categories differ in length")
    if not human_answers:
        raise ValueError("need at least one annotator")
    for i, answers in enumerate(human_answers):
        if len(answers) != len(gold):
            raise ValueError(f"annotator {i} has {len(answers)} answers, expected {len(gold)}")
    per_annotator = [
        evaluate([EvalPair(g, a, c) for g, a, c in zip(gold, answers, categories)], normalize).per_category
        for answers in human_answers
    ]
    per_field = {}
    for c in CATEGORIES:
        if c in per_annotator[0]:
            per_field[c] = {
                "em": sum(r[c]["em"] for r in per_annotator) / len(per_annotator),
                "f1": sum(r[c]["f1"] for r in per_annotator) / len(per_annotator),
                "n": per_annotator[0][c]["n"],
            }
    return AgreementReport(per_field, macro_average(per_field), len(human_answers))
