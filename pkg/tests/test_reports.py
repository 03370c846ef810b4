import pytest

from visionreader.metrics import EvalPair
from visionreader.reports import MissingMetadataError, format_table, report_by_bucket, report_by_field, rows_to_csv


def P(ga, pa, cat="title", **meta):
    return EvalPair(ga, pa, cat, meta)


def test_single_field_single_row():
    rows = report_by_field([P("a", "a", "author"), P("b", "c", "author")])
    assert rows == [{"field": "author", "em": 0.5, "f1": 0.5, "n": 2}]


def test_field_order_and_genre_mode():
    pairs = [P("x", "x", c) for c in ("translator", "genre", "publisher", "author", "title")]
    assert [r["field"] for r in report_by_field(pairs)] == ["title", "author", "publisher", "translator"]
    assert [r["field"] for r in report_by_field(pairs, genre_mode=True)] == ["genre"]


def test_bucket_values_hand_computed():
    pairs = [
        P("a b", "a b"),  # short, EM 1, F1 1
        P("a b c d", "a b"),  # short, EM 0, F1 2/3
        P("w " * 6, "w " * 6),  # medium, EM 1
        P("w " * 12, "x"),  # long, EM 0, F1 0
        P("w " * 16, "w " * 8),  # very_long, P=1 R=1/2 F1=2/3
    ]
    rows = report_by_bucket(pairs, "answer_len")
    assert [r["bucket"] for r in rows] == ["short", "medium", "long", "very_long"]
    assert [r["n"] for r in rows] == [2, 1, 1, 1]
    assert rows[0]["em"] == 0.5 and rows[0]["f1"] == pytest.approx((1 + 2 / 3) / 2)
    assert rows[3]["f1"] == pytest.approx(2 / 3)


def test_short_answers_give_single_bucket():
    rows = report_by_bucket([P("a", "a"), P("a b c d e", "a")], "answer_len")
    assert [r["bucket"] for r in rows] == ["short"]


def test_question_and_coverage_buckets():
    pairs = [
        P("a b", "a b", question="q " * 3, ocr_texts=["a", "b"]),
        P("a b", "a", question="q " * 7, ocr_texts=["a"]),
        P("a b c d", "a", question="q", ocr_texts=[]),
    ]
    assert [r["bucket"] for r in report_by_bucket(pairs, "question_len")] == ["short", "medium"]
    cov = report_by_bucket(pairs, "ocr_coverage")
    assert [(r["bucket"], r["n"]) for r in cov] == [(25, 1), (50, 1), (100, 1)]


def test_missing_metadata_names_bucketer():
    with pytest.raises(MissingMetadataError, match="question_len"):
        report_by_bucket([P("a", "a")], "question_len")
    with pytest.raises(MissingMetadataError, match="ocr_coverage"):
        report_by_bucket([P("a", "a")], "ocr_coverage")
    with pytest.raises(ValueError, match="unknown bucketer"):
        report_by_bucket([P("a", "a")], "colour")


def test_csv_and_table():
    rows = [{"field": "title", "em": 0.12345, "f1": 0.5, "n": 3}]
    assert rows_to_csv(rows, percent=True) == "field,em,f1,n\ntitle,12.35,50.0,3\n"
    assert rows_to_csv([]) == ""
    assert "12.35" in format_table(rows)
    assert format_table([]) == "(no rows)"
