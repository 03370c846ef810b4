"""Post-norm transformer encoder-decoder over fused multimodal inputs."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .data import ConfigError, Vocabulary
from .fusion import FusionConfig, FusionEmbedding, PreparedExample, pad_batch


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    n_heads: int = 4
    n_encoder_layers: int = 2
    n_decoder_layers: int = 2
    ffn_hidden: int = 128
    dropout: float = 0.2
    max_decode_len: int = 24
    seed: int = 0
    tie_output: bool = True
    max_target_positions: int = 128

    def __post_init__(self):
        if self.d_model < 1 or self.n_heads < 1:
            raise ConfigError("d_model and n_heads must be positive")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.max_decode_len < 1:
            raise ConfigError("max_decode_len must be >= 1")
        if self.n_encoder_layers < 0 or self.n_decoder_layers < 0:
            raise ConfigError("layer counts must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


def _init_uniform(t: Tensor, fan_in: int) -> None:
    bound = 1.0 / math.sqrt(fan_in)
    nn.init.uniform_(t, -bound, bound)


class MultiHeadAttention(nn.Module):
    """Scaled dot-product attention with per-head Q/K/V maps and an output map.

    ``mask`` is boolean, True where a query may attend to a key, broadcastable
    to ``(batch, q_len, k_len)``. A query with no admissible key yields a zero
    row instead of NaN.
    """

    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.w_q = nn.Parameter(torch.empty(n_heads, d_model, self.d_head))
        self.w_k = nn.Parameter(torch.empty(n_heads, d_model, self.d_head))
        self.w_v = nn.Parameter(torch.empty(n_heads, d_model, self.d_head))
        self.w_o = nn.Parameter(torch.empty(d_model, d_model))
        for p in self.parameters():
            _init_uniform(p, d_model)

    def forward(self, Q: Tensor, K: Tensor, V: Tensor, mask: Tensor | None = None, return_weights: bool = False):
        squeeze = Q.ndim == 2
        if squeeze:
            Q, K, V = Q.unsqueeze(0), K.unsqueeze(0), V.unsqueeze(0)
            if mask is not None and mask.ndim == 2:
                mask = mask.unsqueeze(0)
        if Q.shape[-1] != self.d_model or K.shape[-1] != self.d_model or V.shape[-1] != self.d_model:
            raise ValueError(f"attention inputs must have width {self.d_model}")
        if K.shape[-2] != V.shape[-2]:
            raise ValueError(f"keys ({K.shape[-2]}) and values ({V.shape[-2]}) differ in length")

        q = torch.einsum("bld,hde->bhle", Q, self.w_q)
        k = torch.einsum("bld,hde->bhle", K, self.w_k)
        v = torch.einsum("bld,hde->bhle", V, self.w_v)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.d_head)
        if mask is not None:
            keep = mask.unsqueeze(1).expand_as(scores)
            any_key = keep.any(-1, keepdim=True)
            # rows with no admissible key get finite scores so softmax stays NaN-free
            scores = scores.masked_fill(~keep & any_key, float("-inf")).masked_fill(~any_key, 0.0)
            weights = torch.softmax(scores, dim=-1) * any_key
        else:
            weights = torch.softmax(scores, dim=-1)
        heads = weights @ v  # (b, h, l, e)
        b, h, l, e = heads.shape
        out = heads.transpose(1, 2).reshape(b, l, h * e) @ self.w_o
        if squeeze:
            out, weights = out[0], weights[0]
        return (out, weights) if return_weights else out


def multi_head_attention(Q: Tensor, K: Tensor, V: Tensor, params: MultiHeadAttention, mask: Tensor | None = None) -> Tensor:
    return params(Q, K, V, mask)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, hidden: int, dropout: float):
        super().__init__()
        self.fc1 = nn.Linear(d_model, hidden)
        self.fc2 = nn.Linear(hidden, d_model)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(self.drop(F.gelu(self.fc1(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_hidden, cfg.dropout)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x: Tensor, mask: Tensor | None) -> Tensor:
        x = self.norm1(self.drop(self.attn(x, x, x, mask)) + x)
        return self.norm2(self.drop(self.ffn(x)) + x)


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_hidden, cfg.dropout)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.norm3 = nn.LayerNorm(cfg.d_model)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, y: Tensor, enc: Tensor, self_mask: Tensor, cross_mask: Tensor | None) -> Tensor:
        y = self.norm1(self.drop(self.self_attn(y, y, y, self_mask)) + y)
        y = self.norm2(self.drop(self.cross_attn(y, enc, enc, cross_mask)) + y)
        return self.norm3(self.drop(self.ffn(y)) + y)


def sinusoidal_positions(n: int, d: int) -> Tensor:
    pos = torch.arange(n, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(torch.arange(0, d, 2, dtype=torch.float64) * (-math.log(10000.0) / d))
    pe = torch.zeros(n, d, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div)[:, : d // 2]
    return pe


class VisionReaderNet(nn.Module):
    """Fusion embedding, encoder stack, decoder stack and vocabulary head."""

    def __init__(self, model_config: ModelConfig, fusion_config: FusionConfig, vocab_size: int):
        super().__init__()
        if model_config.d_model != fusion_config.d_model:
            raise ConfigError(
                f"model d_model={model_config.d_model} != fusion d_model={fusion_config.d_model}"
            )
        self.config = model_config
        self.vocab_size = vocab_size
        # layer constructors draw from the global RNG; keep that side effect local
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(model_config.seed)
            self.encoder = nn.ModuleList(EncoderLayer(model_config) for _ in range(model_config.n_encoder_layers))
            self.decoder = nn.ModuleList(DecoderLayer(model_config) for _ in range(model_config.n_decoder_layers))
            self.out_proj = None
            if not model_config.tie_output:
                self.out_proj = nn.Linear(model_config.d_model, vocab_size, bias=False)
                _init_uniform(self.out_proj.weight, model_config.d_model)
        self.fusion = FusionEmbedding(fusion_config, vocab_size)
        self.register_buffer(
            "positions", sinusoidal_positions(model_config.max_target_positions, model_config.d_model), persistent=False
        )

    @property
    def fusion_config(self) -> FusionConfig:
        return self.fusion.config

    @property
    def output_matrix(self) -> Tensor:
        """``(d_model, vocab)`` matrix mapping decoder states to logits."""
        w = self.fusion.token_embedding.weight if self.out_proj is None else self.out_proj.weight
        return w.T

    # -- encoder -----------------------------------------------------------

    def fuse_batch(self, examples: Sequence[PreparedExample]) -> tuple[Tensor, Tensor]:
        return pad_batch([self.fusion(ex) for ex in examples])

    def encode(self, X: Tensor, mask: Tensor | None = None) -> Tensor:
        """Run the encoder stack; ``mask`` is ``(B, L)`` True for real rows."""
        if X.shape[-1] != self.config.d_model:
            raise ValueError(f"encoder input width {X.shape[-1]} != d_model {self.config.d_model}")
        attn_mask = None if mask is None else mask.unsqueeze(-2)
        for layer in self.encoder:
            X = layer(X, attn_mask)
        return X

    # -- decoder -----------------------------------------------------------

    def embed_target(self, ids: Tensor) -> Tensor:
        n = ids.shape[-1]
        if n > self.positions.shape[0]:
            raise ValueError(f"target length {n} exceeds max_target_positions")
        return self.fusion.token_embedding(ids) + self.positions[:n].to(self.fusion.token_embedding.weight.dtype)

    def decode(self, Y: Tensor, enc: Tensor, enc_mask: Tensor | None = None, tgt_mask: Tensor | None = None) -> Tensor:
        """Logits for every position of an embedded target ``Y`` of shape ``(B, T, d)``."""
        if Y.shape[-1] != self.config.d_model or enc.shape[-1] != self.config.d_model:
            raise ValueError("decoder inputs must have width d_model")
        T = Y.shape[-2]
        causal = torch.ones(T, T, dtype=torch.bool).tril()
        self_mask = causal.unsqueeze(0)
        if tgt_mask is not None:
            self_mask = self_mask & tgt_mask.unsqueeze(-2)
        cross_mask = None if enc_mask is None else enc_mask.unsqueeze(-2)
        for layer in self.decoder:
            Y = layer(Y, enc, self_mask, cross_mask)
        return Y @ self.output_matrix

    def decode_step(self, Y_prefix: Tensor, enc: Tensor, enc_mask: Tensor | None = None) -> Tensor:
        """Next-token logits for the last position of an embedded prefix."""
        if Y_prefix.shape[-2] < 1:
            raise ValueError("decoder prefix is empty")
        return self.decode(Y_prefix, enc, enc_mask)[..., -1, :]

    # -- training ----------------------------------------------------------

    def forward(self, examples: Sequence[PreparedExample], tgt_in: Tensor) -> Tensor:
        X, mask = self.fuse_batch(examples)
        enc = self.encode(X, mask)
        return self.decode(self.embed_target(tgt_in), enc, mask)

    def loss(self, examples: Sequence[PreparedExample], tgt_in: Tensor, tgt_out: Tensor) -> Tensor:
        """Mean token cross-entropy; PAD targets (id 0) are ignored."""
        logits = self(examples, tgt_in)
        return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), tgt_out.reshape(-1), ignore_index=0)


def target_tensors(answers: Sequence[Sequence[int]], vocab: Vocabulary, max_len: int) -> tuple[Tensor, Tensor]:
    """Teacher-forcing pairs: ``BOS + answer`` in, ``answer + EOS`` out, PAD-filled."""
    rows = [list(a[: max_len - 1]) for a in answers]
    T = max(len(r) for r in rows) + 1
    tgt_in = torch.full((len(rows), T), vocab.pad_id, dtype=torch.long)
    tgt_out = torch.full((len(rows), T), vocab.pad_id, dtype=torch.long)
    for i, r in enumerate(rows):
        tgt_in[i, : len(r) + 1] = torch.tensor([vocab.bos_id] + r)
        tgt_out[i, : len(r) + 1] = torch.tensor(r + [vocab.eos_id])
    return tgt_in, tgt_out


@torch.no_grad()
def greedy_decode_batch(
    model: VisionReaderNet, examples: Sequence[PreparedExample], vocab: Vocabulary, max_len: int | None = None
) -> list[str]:
    """Argmax decoding until EOS or ``max_len`` tokens; runs the encoder once."""
    max_len = model.config.max_decode_len if max_len is None else max_len
    was_training = model.training
    model.eval()
    try:
        X, mask = model.fuse_batch(examples)
        enc = model.encode(X, mask)
        B = len(examples)
        ids = torch.full((B, 1), vocab.bos_id, dtype=torch.long)
        done = torch.zeros(B, dtype=torch.bool)
        out: list[list[int]] = [[] for _ in range(B)]
        for _ in range(max_len):
            logits = model.decode_step(model.embed_target(ids), enc, mask)
            # special tokens other than EOS are never emitted
            logits[:, [vocab.pad_id, vocab.bos_id, vocab.sep_id]] = float("-inf")
            nxt = logits.argmax(-1)
            for i in range(B):
                if not done[i]:
                    if nxt[i] == vocab.eos_id:
                        done[i] = True
                    else:
                        out[i].append(int(nxt[i]))
            if bool(done.all()):
                break
            ids = torch.cat([ids, nxt.unsqueeze(1)], dim=1)
    finally:
        model.train(was_training)
    return [" ".join(vocab.decode(seq)) for seq in out]


def greedy_decode(model: VisionReaderNet, bundle, question: str, vocab: Vocabulary, max_len: int | None = None) -> str:
    return greedy_decode_batch(model, [model.fusion.prepare(bundle, question, vocab)], vocab, max_len)[0]
