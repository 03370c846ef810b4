import json
import math

import pytest
import torch

from conftest import synthetic_corpus
from visionreader.checkpoint import CHECKPOINT_FORMAT, load_checkpoint, save_checkpoint
from visionreader.data import ConfigError, DatasetError, QARecord
from visionreader.fusion import FusionConfig
from visionreader.model import ModelConfig
from visionreader.training import (
    REFERENCE_BATCH_SIZE,
    REFERENCE_DROPOUT,
    REFERENCE_LEARNING_RATE,
    REFERENCE_PATIENCE,
    EarlyStopping,
    TrainSchedule,
    evaluate_examples,
    make_examples,
    run_data_fraction_sweep,
    run_epochs,
    subsample_by_image,
    train,
)
from visionreader.validation import check_fraction_list

MC = ModelConfig(d_model=16, n_heads=2, n_encoder_layers=1, n_decoder_layers=1, ffn_hidden=32, dropout=0.1, max_decode_len=8)
FC = FusionConfig(d_model=16, f_obj=32, f_det=16, f_rec=16, f_grid=16, max_text_len=32)


@pytest.fixture(scope="module")
def corpus():
    _, train_recs, bundles = synthetic_corpus(8, seed=1)
    _, dev_recs, dev_bundles = synthetic_corpus(3, seed=2, split="dev")
    bundles.update(dev_bundles)
    return train_recs + dev_recs, bundles


def test_reference_defaults():
    s = TrainSchedule()
    assert (s.lr, s.batch_size, s.patience) == (REFERENCE_LEARNING_RATE, REFERENCE_BATCH_SIZE, REFERENCE_PATIENCE) == (3e-5, 32, 5)
    assert REFERENCE_DROPOUT == 0.2
    with pytest.raises(ConfigError):
        TrainSchedule(lr=0)
    with pytest.raises(ConfigError):
        TrainSchedule(patience=0)


@pytest.mark.parametrize("last_improvement", [1, 3, 8])
def test_stub_halts_five_epochs_after_last_improvement(last_improvement):
    ems = iter([0.1 * e for e in range(1, last_improvement + 1)] + [0.0] * 50)
    history, stopper = run_epochs(lambda e: 0.0, lambda: (next(ems), 0.0), TrainSchedule(max_epochs=100))
    assert len(history) == last_improvement + 5
    assert stopper.best_epoch == last_improvement


def test_ties_are_not_improvements():
    s = EarlyStopping(2)
    assert s.update(0.5, 1)
    assert not s.update(0.5, 2)
    assert not s.update(0.5, 3)
    assert s.should_stop and s.best_epoch == 1


def test_patience_none_runs_to_max_epochs():
    history, _ = run_epochs(lambda e: 0.0, lambda: (0.0, 0.0), TrainSchedule(max_epochs=7, patience=None))
    assert len(history) == 7


def test_train_deterministic_and_logs(corpus, tmp_path):
    records, bundles = corpus
    sched = TrainSchedule(lr=3e-3, max_epochs=3, patience=None, seed=5)
    a = train(records, bundles, MC, FC, sched, log_path=tmp_path / "log.jsonl")
    b = train(records, bundles, MC, FC, sched)
    for (n, pa), (_, pb) in zip(a.model.named_parameters(), b.model.named_parameters()):
        assert torch.equal(pa, pb), n
    lines = [json.loads(l) for l in (tmp_path / "log.jsonl").read_text().splitlines()]
    assert [l["epoch"] for l in lines] == [1, 2, 3]
    assert set(lines[0]) == {"epoch", "train_loss", "dev_em", "dev_f1", "steps"}
    n_train = sum(r.split == "train" for r in records)
    assert lines[-1]["steps"] == 3 * math.ceil(n_train / 32)
    assert not a.model.training


def test_initial_loss_near_log_vocab(corpus):
    records, bundles = corpus
    result = train(records, bundles, MC, FC, TrainSchedule(lr=1e-9, max_epochs=1, seed=0))
    v = len(result.vocab)
    assert abs(result.history[0].train_loss - math.log(v)) < 0.1 * math.log(v)


def test_train_returns_best_dev_checkpoint(corpus):
    records, bundles = corpus
    result = train(records, bundles, MC, FC, TrainSchedule(lr=3e-3, max_epochs=6, patience=None))
    dev = [r for r in records if r.split == "dev"]
    report, _ = evaluate_examples(result.model, make_examples(dev, bundles, result.vocab, FC), result.vocab)
    assert report.em == pytest.approx(max(h.dev_em for h in result.history))
    assert result.state.best_dev_em == pytest.approx(report.em)


def test_eval_is_deterministic_with_dropout(corpus):
    records, bundles = corpus
    result = train(records, bundles, MC, FC, TrainSchedule(lr=3e-3, max_epochs=1))
    ex = make_examples(records[:6], bundles, result.vocab, FC)
    result.model.train()
    a, _ = evaluate_examples(result.model, ex, result.vocab)
    b, _ = evaluate_examples(result.model, ex, result.vocab)
    assert a.to_dict() == b.to_dict()


def test_train_errors(corpus):
    records, bundles = corpus
    with pytest.raises(DatasetError, match="train split"):
        train([r for r in records if r.split == "dev"], bundles, MC, FC)
    with pytest.raises(DatasetError, match="dev split"):
        train([r for r in records if r.split == "train"], bundles, MC, FC)
    with pytest.raises(DatasetError, match="no feature bundle"):
        train(records + [QARecord("ghost", "q", "a", "title")], bundles, MC, FC)


def test_subsample_nested(corpus):
    records, _ = corpus
    prev = set()
    for f in (0.25, 0.5, 0.75, 1.0):
        keep = subsample_by_image(records, f, seed=3)
        ids = {r.image_id for r in keep if r.split == "train"}
        assert prev <= ids
        assert len(ids) == round(f * 8)
        assert [r for r in keep if r.split == "dev"] == [r for r in records if r.split == "dev"]
        prev = ids
    with pytest.raises(ConfigError):
        subsample_by_image(records, 0.0)
    with pytest.raises(ConfigError, match="keeps no image"):
        subsample_by_image(records, 0.01)


def test_fraction_list_validation():
    assert check_fraction_list("0.25,0.5, 1") == [0.25, 0.5, 1.0]
    for bad in ("", "0", "1.5", "-0.1"):
        with pytest.raises(ValueError):
            check_fraction_list(bad)


def test_sweep(corpus):
    records, bundles = corpus
    out = run_data_fraction_sweep(records, bundles, [0.5, 1.0], MC, FC, TrainSchedule(lr=3e-3, max_epochs=1), seed=0)
    assert list(out) == [0.5, 1.0]
    assert out[0.5].train_images == 4 and out[1.0].train_images == 8
    assert out[0.5].to_dict()["history"][0]["epoch"] == 1


def test_checkpoint_round_trip(corpus, tmp_path):
    records, bundles = corpus
    result = train(records, bundles, MC, FC, TrainSchedule(lr=3e-3, max_epochs=1))
    path = tmp_path / "ck.pt"
    save_checkpoint(path, result.model, result.vocab, extra={"note": "x"})
    model, vocab, payload = load_checkpoint(path)
    assert payload["format"] == CHECKPOINT_FORMAT and payload["extra"] == {"note": "x"}
    assert vocab == result.vocab
    for (n, pa), (_, pb) in zip(model.state_dict().items(), result.model.state_dict().items()):
        assert torch.equal(pa, pb), n
    ex = make_examples(records[:5], bundles, vocab, FC)
    assert evaluate_examples(model, ex, vocab)[1] == evaluate_examples(result.model, ex, vocab)[1]

    torch.save({"format": "other"}, tmp_path / "bad.pt")
    with pytest.raises(DatasetError, match="not a"):
        load_checkpoint(tmp_path / "bad.pt")
