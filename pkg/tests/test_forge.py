import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import FIXTURES
from visionreader.data import CATEGORIES, BookMetadata, DatasetError, QARecord, load_metadata
from visionreader.estimator import MetadataCleaner
from visionreader.forge import (
    LENGTH_BUCKETS,
    bucket_by_length,
    build_corpus,
    check_template_bank,
    clean_metadata,
    clean_text,
    compute_stats,
    generate_qa,
    length_bucket,
    load_templates,
)


@pytest.mark.parametrize(
    "raw, clean",
    [
        ("Nhà Giả Kim (tái bản 2024)", "Nhà Giả Kim"),
        ("Dế Mèn Phiêu Lưu Ký!!", "Dế Mèn Phiêu Lưu Ký"),
        ("Đắc Nhân Tâm [Tái bản lần thứ 3]", "Đắc Nhân Tâm"),
        ("Tuổi Thơ Dữ Dội - Bìa Cứng", "Tuổi Thơ Dữ Dội"),
        ("Harry Potter - Tặng kèm bookmark", "Harry Potter"),
        ("Sách Mới: Tôi Thấy Hoa Vàng", "Tôi Thấy Hoa Vàng"),
        ("!!!", None),
        (None, None),
    ],
)
def test_clean_text_examples(raw, clean):
    assert clean_text(raw) == clean


def test_clean_text_nfc():
    decomposed = "Nguyễn"
    assert clean_text(decomposed) == "Nguyễn"


@given(st.text(alphabet=st.sampled_from("abc ()[]!-tái bản 2024 Tặng kèm ế́"), max_size=40))
def test_clean_text_idempotent(s):
    once = clean_text(s)
    assert clean_text(once) == once


def test_fixture_cleaning_idempotent():
    cleaner = MetadataCleaner()
    metas = load_metadata(FIXTURES / "books50.jsonl")
    once = cleaner.fit_transform(metas)
    assert cleaner.transform(once) == once
    by_id = {m.image_id: m for m in once}
    assert by_id["bk007"].title == "Nhà Giả Kim"
    assert by_id["bk049"].publisher is None


def test_custom_patterns():
    m = BookMetadata("x", title="Sách Hay - Khuyến Mãi")
    assert clean_metadata(m, [r"khuyến\s+mãi"]).title == "Sách Hay"


def test_template_bank():
    bank = load_templates()
    counts = check_template_bank(bank, 5)
    assert set(counts) == set(CATEGORIES)
    assert all(n >= 5 for n in counts.values())
    with pytest.raises(DatasetError, match="below"):
        check_template_bank(bank, 1000)


def test_template_file_errors(tmp_path):
    p = tmp_path / "t.jsonl"
    p.write_text('{"category": "title", "text": "?"}\n{"category": "price", "text": "?"}\n', encoding="utf-8")
    with pytest.raises(DatasetError, match="line 2"):
        load_templates(p)


def test_generate_qa_one_per_present_field():
    bank = load_templates()
    m = BookMetadata("b1", title="Mắt Biếc", author="Nguyễn Nhật Ánh", publisher="!!!", genre="Tiểu thuyết")
    recs = generate_qa(m, bank, 3)
    assert [r.category for r in recs] == ["author", "title", "genre"]
    assert recs == generate_qa(m, bank, 3)
    texts = {t.text for t in bank}
    assert all(r.question in texts for r in recs)
    assert all(r.answer == clean_metadata(m).field(r.category) for r in recs)


def test_generate_qa_seed_varies_templates():
    bank = load_templates()
    m = BookMetadata("b1", title="Mắt Biếc", author="A", publisher="B", translator="C", genre="D")
    questions = {tuple(r.question for r in generate_qa(m, bank, s)) for s in range(20)}
    assert len(questions) > 1


def test_build_corpus_deterministic_and_grouped():
    metas = load_metadata(FIXTURES / "books50.jsonl")
    bank = load_templates()
    a = build_corpus(metas, bank, 2024)
    assert a == build_corpus(metas, bank, 2024)
    splits = {}
    for r in a:
        assert splits.setdefault(r.image_id, r.split) == r.split
    with pytest.raises(DatasetError, match="duplicate"):
        build_corpus(metas + metas[:1], bank, 0)


def test_stats_small_case():
    recs = [
        QARecord("a", "ai viết", "Tô Hoài", "author", "train"),
        QARecord("a", "tên sách", "Dế Mèn", "title", "train"),
        QARecord("b", "ai viết", "Tô Hoài", "author", "dev"),
    ]
    s = compute_stats(recs)
    assert (s.images, s.questions, s.unique_authors, s.unique_titles) == (2, 3, 1, 1)
    assert s.per_split_images == {"train": 1, "dev": 1, "test": 0}
    assert s.avg_question_len == pytest.approx(2.0)
    assert s.avg_questions_per_image == 1.5
    assert compute_stats([]).images == 0


def test_length_buckets():
    assert [length_bucket(n) for n in range(1, 18)] == ["short"] * 5 + ["medium"] * 5 + ["long"] * 5 + ["very_long"] * 2
    recs = [QARecord("a", "q", " ".join(["w"] * n), "title") for n in (1, 5, 6, 16)]
    groups = bucket_by_length(recs, "answer")
    assert list(groups) == list(LENGTH_BUCKETS)
    assert [len(groups[b]) for b in LENGTH_BUCKETS] == [2, 1, 0, 1]
    with pytest.raises(ValueError):
        bucket_by_length(recs, "image")
