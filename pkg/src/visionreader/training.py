"""Teacher-forced training with dev-EM early stopping, evaluation helpers and
the data-fraction sweep."""

from __future__ import annotations

import copy
import json
import logging
import random
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import torch

from .data import ConfigError, DatasetError, ImageFeatureBundle, QARecord, Vocabulary, build_vocabulary, tokenize
from .fusion import FusionConfig, PreparedExample, prepare_example
from .metrics import EvalPair, EvalReport, evaluate
from .model import ModelConfig, VisionReaderNet, greedy_decode_batch, target_tensors

log = logging.getLogger(__name__)

REFERENCE_LEARNING_RATE = 3e-5
REFERENCE_DROPOUT = 0.2
REFERENCE_BATCH_SIZE = 32
REFERENCE_PATIENCE = 5


@dataclass(frozen=True)
class TrainSchedule:
    lr: float = REFERENCE_LEARNING_RATE
    batch_size: int = REFERENCE_BATCH_SIZE
    max_epochs: int = 50
    patience: int | None = REFERENCE_PATIENCE
    max_steps: int | None = None
    stop_at_em: float | None = None
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    min_count: int = 1
    eval_batch_size: int = 64

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be >= 1")
        if self.patience is not None and self.patience < 1:
            raise ConfigError("patience must be >= 1 or None")
        object.__setattr__(self, "betas", tuple(self.betas))

    def to_dict(self) -> dict:
        return asdict(self)


class EarlyStopping:
    """Stop after ``patience`` consecutive epochs without a strictly better score.

    Ties count as no improvement, so the earlier checkpoint is kept.
    """

    def __init__(self, patience: int | None):
        self.patience = patience
        self.best: float | None = None
        self.best_epoch = 0
        self.epochs_since_improvement = 0

    def update(self, score: float, epoch: int) -> bool:
        if self.best is None or score > self.best:
            self.best = score
            self.best_epoch = epoch
            self.epochs_since_improvement = 0
            return True
        self.epochs_since_improvement += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.patience is not None and self.epochs_since_improvement >= self.patience


@dataclass
class TrainState:
    step: int = 0
    epoch: int = 0
    best_dev_em: float | None = None
    best_epoch: int = 0
    epochs_since_improvement: int = 0
    optimizer_state: dict = field(default_factory=dict, repr=False)
    rng_state: dict = field(default_factory=dict, repr=False)


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    dev_em: float
    dev_f1: float
    seconds: float
    steps: int = 0

    def to_dict(self) -> dict:
        """Serializable form; wall-clock time is left out so re-runs give identical files."""
        out = asdict(self)
        del out["seconds"]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def run_epochs(
    train_epoch: Callable[[int], float],
    evaluate_dev: Callable[[], tuple[float, float]],
    schedule: TrainSchedule,
    on_improve: Callable[[int], None] | None = None,
    should_halt: Callable[[], bool] | None = None,
) -> tuple[list[EpochLog], EarlyStopping]:
    """Generic epoch driver: train, evaluate dev, early-stop on dev EM.

    ``train_epoch(epoch)`` returns the mean training loss; ``evaluate_dev``
    returns ``(em, f1)``. ``should_halt`` lets the caller end training early
    (step budget, target EM) after an epoch is logged.
    """
    stopper = EarlyStopping(schedule.patience)
    history = []
    for epoch in range(1, schedule.max_epochs + 1):
        t0 = time.perf_counter()
        loss = train_epoch(epoch)
        em, f1 = evaluate_dev()
        history.append(EpochLog(epoch, float(loss), float(em), float(f1), time.perf_counter() - t0))
        if stopper.update(em, epoch) and on_improve is not None:
            on_improve(epoch)
        log.info("epoch %d loss %.4f dev_em %.4f dev_f1 %.4f", epoch, loss, em, f1)
        if stopper.should_stop:
            log.info("no dev EM gain for %d epochs; stopping at epoch %d", stopper.patience, epoch)
            break
        if should_halt is not None and should_halt():
            break
    return history, stopper


# --------------------------------------------------------------------------


@dataclass
class Example:
    record: QARecord
    prepared: PreparedExample
    answer_ids: list[int]


def make_examples(
    records: Sequence[QARecord],
    bundles: Mapping[str, ImageFeatureBundle],
    vocab: Vocabulary,
    fusion_config: FusionConfig,
) -> list[Example]:
    out = []
    for r in records:
        if r.image_id not in bundles:
            raise DatasetError(f"no feature bundle for image {r.image_id!r}")
        out.append(
            Example(r, prepare_example(bundles[r.image_id], r.question, vocab, fusion_config), vocab.encode(tokenize(r.answer)))
        )
    return out


def predict_examples(model: VisionReaderNet, examples: Sequence[Example], vocab: Vocabulary, batch_size: int = 64) -> list[str]:
    preds = []
    for i in range(0, len(examples), batch_size):
        chunk = examples[i : i + batch_size]
        preds.extend(greedy_decode_batch(model, [e.prepared for e in chunk], vocab))
    return preds


def evaluate_examples(model, examples: Sequence[Example], vocab: Vocabulary, batch_size: int = 64) -> tuple[EvalReport, list[str]]:
    preds = predict_examples(model, examples, vocab, batch_size)
    pairs = [EvalPair(e.record.answer, p, e.record.category) for e, p in zip(examples, preds)]
    return evaluate(pairs), preds


@dataclass
class TrainResult:
    model: VisionReaderNet
    vocab: Vocabulary
    history: list[EpochLog]
    state: TrainState
    model_config: ModelConfig
    fusion_config: FusionConfig
    schedule: TrainSchedule


def train(
    records: Sequence[QARecord],
    bundles: Mapping[str, ImageFeatureBundle],
    model_config: ModelConfig,
    fusion_config: FusionConfig,
    schedule: TrainSchedule = TrainSchedule(),
    vocab: Vocabulary | None = None,
    dev_records: Sequence[QARecord] | None = None,
    log_path=None,
    dtype: torch.dtype = torch.float32,
) -> TrainResult:
    """Train on the train split, early-stopping on dev EM; returns the best-dev model.

    ``dev_records`` overrides the dev split taken from ``records`` (passing
    the train records turns this into a memorization run).
    """
    train_records = [r for r in records if r.split == "train"]
    dev = list(dev_records) if dev_records is not None else [r for r in records if r.split == "dev"]
    if not train_records:
        raise DatasetError("train split is empty")
    if not dev:
        raise DatasetError("dev split is empty")
    if vocab is None:
        vocab = build_vocabulary(train_records, schedule.min_count)

    train_ex = make_examples(train_records, bundles, vocab, fusion_config)
    dev_ex = make_examples(dev, bundles, vocab, fusion_config)
    model = VisionReaderNet(model_config, fusion_config, len(vocab)).to(dtype)
    opt = torch.optim.Adam(model.parameters(), lr=schedule.lr, betas=schedule.betas, eps=schedule.eps)
    state = TrainState()
    order_rng = random.Random(schedule.seed)
    best = {"params": copy.deepcopy(model.state_dict())}
    steps_at_epoch = {}

    def train_epoch(epoch: int) -> float:
        model.train()
        idx = list(range(len(train_ex)))
        order_rng.shuffle(idx)
        total, batches = 0.0, 0
        for start in range(0, len(idx), schedule.batch_size):
            if schedule.max_steps is not None and state.step >= schedule.max_steps:
                break
            batch = [train_ex[i] for i in idx[start : start + schedule.batch_size]]
            tgt_in, tgt_out = target_tensors([e.answer_ids for e in batch], vocab, model_config.max_decode_len)
            loss = model.loss([e.prepared for e in batch], tgt_in, tgt_out)
            opt.zero_grad()
            loss.backward()
            opt.step()
            state.step += 1
            total += loss.item()
            batches += 1
        state.epoch = epoch
        steps_at_epoch[epoch] = state.step
        return total / max(batches, 1)

    last_em = {"em": 0.0}

    def evaluate_dev() -> tuple[float, float]:
        report, _ = evaluate_examples(model, dev_ex, vocab, schedule.eval_batch_size)
        last_em["em"] = report.em
        return report.em, report.f1

    def on_improve(epoch: int) -> None:
        best["params"] = copy.deepcopy(model.state_dict())

    def should_halt() -> bool:
        if schedule.max_steps is not None and state.step >= schedule.max_steps:
            return True
        return schedule.stop_at_em is not None and last_em["em"] >= schedule.stop_at_em

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(schedule.seed)
        history, stopper = run_epochs(train_epoch, evaluate_dev, schedule, on_improve, should_halt)
        state.rng_state = {"torch": torch.get_rng_state(), "order": order_rng.getstate()}

    for h in history:
        h.steps = steps_at_epoch[h.epoch]
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            for h in history:
                fh.write(h.to_json() + "\n")

    model.load_state_dict(best["params"])
    model.eval()
    state.best_dev_em = stopper.best
    state.best_epoch = stopper.best_epoch
    state.epochs_since_improvement = stopper.epochs_since_improvement
    state.optimizer_state = opt.state_dict()
    return TrainResult(model, vocab, history, state, model_config, fusion_config, schedule)


def subsample_by_image(records: Sequence[QARecord], fraction: float, seed: int = 0) -> list[QARecord]:
    """Keep the train records of the first ``round(fraction * n)`` shuffled images.

    One shuffle per seed, so smaller fractions are subsets of larger ones.
    Non-train records pass through untouched.
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must be in (0, 1], got {fraction}")
    images = sorted({r.image_id for r in records if r.split == "train"})
    random.Random(seed).shuffle(images)
    n = round(fraction * len(images))
    if n < 1:
        raise ConfigError(f"fraction {fraction} of {len(images)} train images keeps no image")
    keep = set(images[:n])
    return [r for r in records if r.split != "train" or r.image_id in keep]


@dataclass
class SweepPoint:
    fraction: float
    train_images: int
    train_records: int
    dev_em: float
    dev_f1: float
    history: list[EpochLog]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["history"] = [h.to_dict() for h in self.history]
        return out


def run_data_fraction_sweep(
    records: Sequence[QARecord],
    bundles: Mapping[str, ImageFeatureBundle],
    fractions: Sequence[float],
    model_config: ModelConfig,
    fusion_config: FusionConfig,
    schedule: TrainSchedule = TrainSchedule(),
    seed: int = 0,
) -> dict[float, SweepPoint]:
    """Train one model per fraction of the train images; score each on dev."""
    subsets = {f: subsample_by_image(records, f, seed) for f in fractions}
    out = {}
    for f in fractions:
        subset = subsets[f]
        result = train(subset, bundles, model_config, fusion_config, schedule)
        dev = [r for r in subset if r.split == "dev"]
        report, _ = evaluate_examples(
            result.model, make_examples(dev, bundles, result.vocab, fusion_config), result.vocab
        )
        train_recs = [r for r in subset if r.split == "train"]
        out[f] = SweepPoint(
            f, len({r.image_id for r in train_recs}), len(train_recs), report.em, report.f1, result.history
        )
    return out
