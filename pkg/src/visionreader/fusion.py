"""Multimodal input embedding: object, OCR, text and grid features projected
to the model width and concatenated into one encoder input sequence."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import torch
from torch import Tensor, nn

from .data import SEP, ConfigError, ImageFeatureBundle, OCRToken, ObjectRegion, Vocabulary, reading_order, tokenize

SEGMENTS = ("text", "grid", "objects", "ocr")


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class FusionConfig:
    d_model: int = 64
    f_obj: int = 2048
    f_det: int = 256
    f_rec: int = 256
    f_grid: int = 768
    max_text_len: int = 64
    seed: int = 0
    shared_box_projection: bool = True
    no_object: bool = False
    no_ocr: bool = False

    def __post_init__(self):
        for name in ("d_model", "f_obj", "f_det", "f_rec", "f_grid", "max_text_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def normalize_bbox(x_min: float, y_min: float, x_max: float, y_max: float, w: float, h: float) -> list[float]:
    """Pixel box to ``[x_min/w, y_min/h, x_max/w, y_max/h]``."""
    if not w > 0:
        raise FusionError(f"image width must be positive, got w={w}")
    if not h > 0:
        raise FusionError(f"image height must be positive, got h={h}")
    if not 0 <= x_min <= x_max:
        raise FusionError(f"x_min={x_min} must satisfy 0 <= x_min <= x_max={x_max}")
    if x_max > w:
        raise FusionError(f"x_max={x_max} exceeds image width {w}")
    if not 0 <= y_min <= y_max:
        raise FusionError(f"y_min={y_min} must satisfy 0 <= y_min <= y_max={y_max}")
    if y_max > h:
        raise FusionError(f"y_max={y_max} exceeds image height {h}")
    return [x_min / w, y_min / h, x_max / w, y_max / h]


@dataclass
class FusedInput:
    """Encoder input rows plus the ``[start, end)`` offsets of each segment."""

    matrix: Tensor
    segment_spans: dict

    def __len__(self) -> int:
        return self.matrix.shape[0]


@dataclass
class PreparedExample:
    """Tensors for one (image, question) pair, ready for embedding.

    Built once per example so training steps only pay for the projections.
    """

    text_ids: Tensor  # question [+ SEP + OCR text], truncated
    n_question: int
    obj_feat: Tensor
    obj_box: Tensor
    det: Tensor
    rec: Tensor
    ocr_box: Tensor
    grid: Tensor


def _uniform_(weight: Tensor, bound: float, gen: torch.Generator) -> None:
    with torch.no_grad():
        weight.copy_(torch.rand(weight.shape, generator=gen, dtype=weight.dtype) * 2 * bound - bound)


def text_token_sequence(
    question_tokens: Sequence[str], ocr_text_tokens: Sequence[str] | None, max_len: int
) -> list[str]:
    """Question, then SEP and OCR text; OCR tail is cut first when over ``max_len``.

    ``ocr_text_tokens=None`` means OCR is ablated: question tokens only, no SEP.
    """
    if not question_tokens:
        raise FusionError("question is empty")
    if ocr_text_tokens is None:
        return list(question_tokens[:max_len])
    q = list(question_tokens[: max(max_len - 1, 1)])
    seq = q + [SEP] + list(ocr_text_tokens)
    return seq[:max_len]


class FusionEmbedding(nn.Module):
    """Bias-free projections of every input modality to ``d_model``."""

    def __init__(self, config: FusionConfig, vocab_size: int):
        super().__init__()
        self.config = config
        d = config.d_model
        # default layer init draws from the global RNG; weights are reset below anyway
        with torch.random.fork_rng(devices=[]):
            self.token_embedding = nn.Embedding(vocab_size, d)
            self.obj_proj = nn.Linear(config.f_obj, d, bias=False)
            self.box_proj = nn.Linear(4, d, bias=False)
            self.ocr_box_proj = self.box_proj if config.shared_box_projection else nn.Linear(4, d, bias=False)
            self.det_proj = nn.Linear(config.f_det, d, bias=False)
            self.rec_proj = nn.Linear(config.f_rec, d, bias=False)
            self.grid_proj = nn.Linear(config.f_grid, d, bias=False)
        self.reset_parameters()

    def reset_parameters(self) -> None:
        gen = torch.Generator().manual_seed(self.config.seed)
        bound = 1.0 / math.sqrt(self.config.d_model)
        for p in self.parameters():
            _uniform_(p, bound, gen)

    # nn.Linear keeps (out, in) weights; these expose the (in, d) matrices
    @property
    def W_obj(self) -> Tensor:
        return self.obj_proj.weight.T

    @property
    def W_box(self) -> Tensor:
        return self.box_proj.weight.T

    @property
    def W_det(self) -> Tensor:
        return self.det_proj.weight.T

    @property
    def W_rec(self) -> Tensor:
        return self.rec_proj.weight.T

    @property
    def W_grid(self) -> Tensor:
        return self.grid_proj.weight.T

    def _dtype(self) -> torch.dtype:
        return self.token_embedding.weight.dtype

    def embed_objects(self, features: Tensor, boxes: Tensor) -> Tensor:
        if features.shape[0] == 0:
            return features.new_zeros((0, self.config.d_model), dtype=self._dtype())
        if features.shape[-1] != self.config.f_obj:
            raise FusionError(f"object feature dim {features.shape[-1]} != {self.config.f_obj}")
        return self.obj_proj(features.to(self._dtype())) + self.box_proj(boxes.to(self._dtype()))

    def embed_ocr(self, det: Tensor, rec: Tensor, boxes: Tensor) -> Tensor:
        if det.shape[0] == 0:
            return det.new_zeros((0, self.config.d_model), dtype=self._dtype())
        if det.shape[-1] != self.config.f_det:
            raise FusionError(f"OCR detection feature dim {det.shape[-1]} != {self.config.f_det}")
        if rec.shape[-1] != self.config.f_rec:
            raise FusionError(f"OCR recognition feature dim {rec.shape[-1]} != {self.config.f_rec}")
        box = self.ocr_box_proj(boxes.to(self._dtype()))
        return torch.cat([self.det_proj(det.to(self._dtype())) + box, self.rec_proj(rec.to(self._dtype())) + box])

    def embed_text(self, ids: Tensor) -> Tensor:
        return self.token_embedding(ids)

    def embed_grid(self, grid: Tensor) -> Tensor:
        if grid.shape[-1] != self.config.f_grid:
            raise FusionError(f"grid feature dim {grid.shape[-1]} != {self.config.f_grid}")
        # grid features are frozen inputs; only the projection learns
        return self.grid_proj(grid.detach().to(self._dtype()))

    def prepare(self, bundle: ImageFeatureBundle, question: str, vocab: Vocabulary) -> PreparedExample:
        return prepare_example(bundle, question, vocab, self.config)

    def forward(self, ex: PreparedExample) -> FusedInput:
        cfg = self.config
        T = self.embed_text(ex.text_ids)
        V = self.embed_grid(ex.grid)
        V_obj = self.embed_objects(ex.obj_feat, ex.obj_box)
        S_ocr = self.embed_ocr(ex.det, ex.rec, ex.ocr_box)
        return fuse(T, V, V_obj, S_ocr, no_object=cfg.no_object, no_ocr=cfg.no_ocr)


def _stack(rows: list, width: int) -> Tensor:
    if not rows:
        return torch.zeros((0, width), dtype=torch.float64)
    return torch.tensor(np.stack(rows), dtype=torch.float64)


def prepare_example(
    bundle: ImageFeatureBundle, question: str, vocab: Vocabulary, config: FusionConfig
) -> PreparedExample:
    bundle.check_dims(config.f_obj, config.f_det, config.f_rec, config.f_grid)
    ocr = reading_order(bundle.ocr_tokens)
    q_tokens = tokenize(question)
    ocr_words = None if config.no_ocr else [w for t in ocr for w in tokenize(t.text)]
    seq = text_token_sequence(q_tokens, ocr_words, config.max_text_len)
    return PreparedExample(
        text_ids=torch.tensor(vocab.encode(seq), dtype=torch.long),
        n_question=min(len(q_tokens), len(seq)),
        obj_feat=_stack([o.feature for o in bundle.objects], config.f_obj),
        obj_box=_stack([np.asarray(o.bbox) for o in bundle.objects], 4),
        det=_stack([t.det_feature for t in ocr], config.f_det),
        rec=_stack([t.rec_feature for t in ocr], config.f_rec),
        ocr_box=_stack([np.asarray(t.bbox) for t in ocr], 4),
        grid=torch.tensor(np.array(bundle.grid), dtype=torch.float64),
    )


# functional forms of the embedding steps ---------------------------------


def embed_objects(objects: Sequence[ObjectRegion], params: FusionEmbedding) -> Tensor:
    feats = _stack([o.feature for o in objects], params.config.f_obj)
    boxes = _stack([np.asarray(o.bbox) for o in objects], 4)
    if feats.shape[0] and feats.shape[1] != params.config.f_obj:
        raise FusionError(f"object feature dim {feats.shape[1]} != {params.config.f_obj}")
    return params.embed_objects(feats, boxes)


def embed_ocr(tokens: Sequence[OCRToken], params: FusionEmbedding) -> Tensor:
    ordered = reading_order(tokens)
    return params.embed_ocr(
        _stack([t.det_feature for t in ordered], params.config.f_det),
        _stack([t.rec_feature for t in ordered], params.config.f_rec),
        _stack([np.asarray(t.bbox) for t in ordered], 4),
    )


def embed_text(
    question_tokens: Sequence[str],
    ocr_text_tokens: Sequence[str] | None,
    vocab: Vocabulary,
    params: FusionEmbedding,
) -> Tensor:
    seq = text_token_sequence(question_tokens, ocr_text_tokens, params.config.max_text_len)
    return params.embed_text(torch.tensor(vocab.encode(seq), dtype=torch.long))


def embed_grid(grid, params: FusionEmbedding) -> Tensor:
    return params.embed_grid(torch.tensor(np.array(grid), dtype=torch.float64))


def fuse(T: Tensor, V: Tensor, V_obj: Tensor, S_ocr: Tensor, no_object: bool = False, no_ocr: bool = False) -> FusedInput:
    """Row-wise concatenation in the order text, grid, objects, OCR.

    The ablation flags swap the object or OCR segment for an empty one.
    Dropping OCR text from ``T`` is the caller's job (see ``text_token_sequence``).
    """
    widths = {t.shape[-1] for t in (T, V, V_obj, S_ocr)}
    if len(widths) > 1:
        raise FusionError(f"segment widths differ: {sorted(widths)}")
    if no_object:
        V_obj = V_obj[:0]
    if no_ocr:
        S_ocr = S_ocr[:0]
    spans = {}
    start = 0
    for name, seg in zip(SEGMENTS, (T, V, V_obj, S_ocr)):
        spans[name] = (start, start + seg.shape[0])
        start += seg.shape[0]
    dtype = T.dtype
    return FusedInput(torch.cat([s.to(dtype) for s in (T, V, V_obj, S_ocr)], dim=0), spans)


def pad_batch(inputs: Sequence[FusedInput]) -> tuple[Tensor, Tensor]:
    """Stack fused inputs into ``(B, L, d)`` with a ``(B, L)`` validity mask."""
    lengths = [len(x) for x in inputs]
    L = max(lengths)
    d = inputs[0].matrix.shape[1]
    out = inputs[0].matrix.new_zeros((len(inputs), L, d))
    mask = torch.zeros((len(inputs), L), dtype=torch.bool)
    for i, x in enumerate(inputs):
        out[i, : lengths[i]] = x.matrix
        mask[i, : lengths[i]] = True
    return out, mask
