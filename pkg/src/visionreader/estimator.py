"""scikit-learn style wrappers: the QA model and the metadata cleaner."""

from __future__ import annotations

import hashlib

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data import QARecord
from .forge import clean_metadata
from .fusion import FusionConfig
from .metrics import EvalPair, evaluate
from .model import ModelConfig
from .training import TrainSchedule, make_examples, predict_examples, train
from .validation import check_qa_inputs, infer_feature_dims


def _image_key(bundle) -> str:
    return bundle.image_id or hashlib.sha1(repr(bundle).encode()).hexdigest()


class VisionReaderQA(BaseEstimator):
    """Answer questions about images from fused object, OCR, grid and text features.

    ``fit(X, y)`` takes ``X`` as ``(bundle, question[, category])`` samples
    and ``y`` as answer strings. Without ``X_dev``, early stopping watches EM
    on the training samples themselves.

    Defaults follow the published configuration (lr 3e-5, dropout 0.2,
    batch 32, patience 5); small corpora need a larger ``lr``.
    """

    def __init__(
        self,
        d_model=64,
        n_heads=4,
        n_encoder_layers=2,
        n_decoder_layers=2,
        ffn_hidden=128,
        dropout=0.2,
        max_decode_len=24,
        max_text_len=64,
        lr=3e-5,
        batch_size=32,
        max_epochs=50,
        patience=5,
        max_steps=None,
        stop_at_em=None,
        min_count=1,
        no_object=False,
        no_ocr=False,
        shared_box_projection=True,
        tie_output=True,
        random_state=0,
        dtype="float32",
    ):
        self.d_model = d_model
        self.n_heads = n_heads
        self.n_encoder_layers = n_encoder_layers
        self.n_decoder_layers = n_decoder_layers
        self.ffn_hidden = ffn_hidden
        self.dropout = dropout
        self.max_decode_len = max_decode_len
        self.max_text_len = max_text_len
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.max_steps = max_steps
        self.stop_at_em = stop_at_em
        self.min_count = min_count
        self.no_object = no_object
        self.no_ocr = no_ocr
        self.shared_box_projection = shared_box_projection
        self.tie_output = tie_output
        self.random_state = random_state
        self.dtype = dtype

    def _configs(self, dims):
        seed = 0 if self.random_state is None else int(self.random_state)
        mc = ModelConfig(
            d_model=self.d_model,
            n_heads=self.n_heads,
            n_encoder_layers=self.n_encoder_layers,
            n_decoder_layers=self.n_decoder_layers,
            ffn_hidden=self.ffn_hidden,
            dropout=self.dropout,
            max_decode_len=self.max_decode_len,
            seed=seed,
            tie_output=self.tie_output,
        )
        fc = FusionConfig(
            d_model=self.d_model,
            f_obj=dims["f_obj"] or 1,
            f_det=dims["f_det"] or 1,
            f_rec=dims["f_rec"] or 1,
            f_grid=dims["f_grid"],
            max_text_len=self.max_text_len,
            seed=seed,
            shared_box_projection=self.shared_box_projection,
            no_object=self.no_object,
            no_ocr=self.no_ocr,
        )
        sched = TrainSchedule(
            lr=self.lr,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            max_steps=self.max_steps,
            stop_at_em=self.stop_at_em,
            seed=seed,
            min_count=self.min_count,
        )
        return mc, fc, sched

    @staticmethod
    def _records(samples, answers, split):
        records, bundles = [], {}
        for s, a in zip(samples, answers):
            key = _image_key(s.bundle)
            bundles[key] = s.bundle
            records.append(QARecord(key, s.question, a, s.category, split))
        return records, bundles

    def fit(self, X, y, X_dev=None, y_dev=None):
        samples, answers = check_qa_inputs(X, y)
        if X_dev is None:
            dev_samples, dev_answers = samples, answers
        else:
            dev_samples, dev_answers = check_qa_inputs(X_dev, y_dev)
        dims = infer_feature_dims([s.bundle for s in samples + dev_samples])
        mc, fc, sched = self._configs(dims)
        train_recs, bundles = self._records(samples, answers, "train")
        dev_recs, dev_bundles = self._records(dev_samples, dev_answers, "dev")
        bundles.update(dev_bundles)
        result = train(
            train_recs, bundles, mc, fc, sched, dev_records=dev_recs, dtype=getattr(torch, self.dtype)
        )
        self.model_ = result.model
        self.vocab_ = result.vocab
        self.history_ = result.history
        self.train_state_ = result.state
        self.feature_dims_ = dims
        self.n_epochs_ = len(result.history)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        samples, _ = check_qa_inputs(X)
        recs, bundles = [], {}
        for s in samples:
            key = _image_key(s.bundle)
            bundles[key] = s.bundle
            recs.append(QARecord(key, s.question, "?", s.category, "test"))
        examples = make_examples(recs, bundles, self.vocab_, self.model_.fusion_config)
        return np.asarray(predict_examples(self.model_, examples, self.vocab_), dtype=object)

    def score(self, X, y) -> float:
        """Mean exact match."""
        samples, answers = check_qa_inputs(X, y)
        preds = self.predict(samples)
        return evaluate([EvalPair(a, p, s.category) for s, a, p in zip(samples, answers, preds)]).em


class MetadataCleaner(TransformerMixin, BaseEstimator):
    """Stateless transformer applying ``clean_metadata`` to each book record."""

    def __init__(self, patterns=None):
        self.patterns = patterns

    def fit(self, X, y=None):
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        return [clean_metadata(m, self.patterns) for m in X]
