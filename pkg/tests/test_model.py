import numpy as np
import pytest
import torch

import numpy_transformer as ref
from visionreader.data import ConfigError, Vocabulary
from visionreader.fusion import FusionConfig
from visionreader.model import (
    ModelConfig,
    MultiHeadAttention,
    VisionReaderNet,
    greedy_decode,
    greedy_decode_batch,
    multi_head_attention,
    sinusoidal_positions,
    target_tensors,
)
from visionreader.synthetic import SyntheticFeatureProvider

FC = FusionConfig(d_model=8, f_obj=4, f_det=3, f_rec=3, f_grid=5, max_text_len=16, seed=2)
VOCAB = Vocabulary(tuple(f"w{i}" for i in range(10)))


def make_model(**kw):
    mc = ModelConfig(**{"d_model": 8, "n_heads": 2, "n_encoder_layers": 2, "n_decoder_layers": 2, "ffn_hidden": 12, "dropout": 0.0, "seed": 4, **kw})
    return VisionReaderNet(mc, FC, len(VOCAB)).double().eval()


def params_np(model):
    return {k: v.detach().numpy() for k, v in model.state_dict().items()}


def _bundle(image_id="img", lines=("w0 w1", "w2")):
    p = SyntheticFeatureProvider(f_obj=4, f_det=3, f_rec=3, f_grid=5, grid_size=3, max_objects=2, seed=0)
    return p(image_id, list(lines))


def test_config_validation():
    with pytest.raises(ConfigError, match="divisible"):
        ModelConfig(d_model=10, n_heads=3)
    with pytest.raises(ConfigError):
        ModelConfig(dropout=1.0)
    with pytest.raises(ConfigError, match="d_model"):
        VisionReaderNet(ModelConfig(d_model=16), FC, 10)


def test_attention_matches_loop_oracle():
    torch.manual_seed(0)
    att = MultiHeadAttention(8, 2).double()
    Q, K = torch.randn(5, 8, dtype=torch.float64), torch.randn(7, 8, dtype=torch.float64)
    mask = torch.rand(5, 7) > 0.3
    mask[0] = False  # one fully masked query
    out, weights = att(Q, K, K, mask, return_weights=True)
    p = {k: v.detach().numpy() for k, v in att.state_dict().items()}
    want = ref.attention(Q.numpy(), K.numpy(), K.numpy(), p["w_q"], p["w_k"], p["w_v"], p["w_o"], mask.numpy())
    np.testing.assert_allclose(out.detach().numpy(), want, atol=1e-10)
    assert torch.all(out[0] == 0)
    assert torch.all(weights[:, ~mask] == 0)
    assert torch.allclose(weights[:, 1:].sum(-1), torch.ones(2, 4, dtype=torch.float64))
    assert torch.equal(multi_head_attention(Q, K, K, att, mask), out)


def test_attention_shape_errors():
    att = MultiHeadAttention(8, 2)
    with pytest.raises(ValueError, match="width"):
        att(torch.randn(2, 6), torch.randn(2, 8), torch.randn(2, 8))
    with pytest.raises(ValueError, match="differ"):
        att(torch.randn(2, 8), torch.randn(3, 8), torch.randn(2, 8))


def test_encoder_matches_numpy_and_is_normalized():
    model = make_model()
    X = torch.randn(1, 6, 8, dtype=torch.float64)
    mask = torch.tensor([[True] * 4 + [False] * 2])
    out = model.encode(X, mask)
    want = ref.encode(params_np(model), X[0].numpy(), 2, mask[0].numpy())
    np.testing.assert_allclose(out[0].detach().numpy(), want, atol=1e-10)
    # post-norm with default affine params: every row has zero mean, unit variance
    mu = out.mean(-1)
    var = out.var(-1, unbiased=False)
    assert torch.allclose(mu, torch.zeros_like(mu), atol=1e-10)
    assert torch.allclose(var, torch.ones_like(var), atol=1e-3)


def test_zero_layer_encoder_is_identity():
    model = make_model(n_encoder_layers=0)
    X = torch.randn(2, 5, 8, dtype=torch.float64)
    assert torch.equal(model.encode(X), X)


def test_padding_rows_do_not_affect_real_rows():
    model = make_model()
    X = torch.randn(1, 4, 8, dtype=torch.float64)
    padded = torch.cat([X, torch.randn(1, 3, 8, dtype=torch.float64)], dim=1)
    mask = torch.tensor([[True] * 4 + [False] * 3])
    assert torch.allclose(model.encode(padded, mask)[:, :4], model.encode(X), atol=1e-12)


def test_padding_keys_get_zero_attention_weight():
    model = make_model()
    layer = model.encoder[0]
    X = torch.randn(1, 5, 8, dtype=torch.float64)
    mask = torch.tensor([[True, True, True, False, False]])
    _, w = layer.attn(X, X, X, mask.unsqueeze(-2), return_weights=True)
    assert torch.all(w[..., 3:] == 0)


def test_decoder_matches_numpy_and_decode_step():
    model = make_model()
    enc = torch.randn(1, 6, 8, dtype=torch.float64)
    enc_mask = torch.tensor([[True] * 5 + [False]])
    ids = torch.tensor([[1, 7, 9, 6]])
    Y = model.embed_target(ids)
    p = params_np(model)
    E = p["fusion.token_embedding.weight"]
    Y_ref = E[ids[0].numpy()] + ref.sinusoid(4, 8)
    np.testing.assert_allclose(Y[0].detach().numpy(), Y_ref, atol=1e-12)
    logits = model.decode(Y, enc, enc_mask)
    want = ref.decode(p, Y_ref, enc[0].numpy(), 2, E.T, enc_mask[0].numpy())
    np.testing.assert_allclose(logits[0].detach().numpy(), want, atol=1e-9)
    step = model.decode_step(Y, enc, enc_mask)
    assert np.max(np.abs(step[0].detach().numpy() - want[-1])) < 1e-6


def test_decoder_is_causal():
    model = make_model()
    enc = torch.randn(1, 4, 8, dtype=torch.float64)
    a = model.decode(model.embed_target(torch.tensor([[1, 5, 6, 7]])), enc)
    b = model.decode(model.embed_target(torch.tensor([[1, 5, 9, 9]])), enc)
    assert torch.allclose(a[:, :2], b[:, :2], atol=1e-12)
    assert not torch.allclose(a[:, 2:], b[:, 2:])


def test_sinusoid_matches_reference():
    np.testing.assert_allclose(sinusoidal_positions(7, 8).numpy(), ref.sinusoid(7, 8), atol=1e-12)
    np.testing.assert_allclose(sinusoidal_positions(3, 5).numpy(), ref.sinusoid(3, 5), atol=1e-12)


def test_tied_and_untied_output():
    tied = make_model()
    assert tied.output_matrix.data_ptr() == tied.fusion.token_embedding.weight.data_ptr()
    untied = make_model(tie_output=False)
    assert untied.output_matrix.shape == (8, len(VOCAB))
    assert untied.out_proj is not None


def test_construction_is_seeded_and_isolated():
    torch.manual_seed(123)
    before = torch.rand(1)
    torch.manual_seed(123)
    a = make_model()
    after = torch.rand(1)
    assert torch.equal(before, after)
    b = make_model()
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert torch.equal(pa, pb), na


def test_target_tensors():
    tgt_in, tgt_out = target_tensors([[5, 6], [7]], VOCAB, 8)
    assert tgt_in.tolist() == [[1, 5, 6], [1, 7, 0]]
    assert tgt_out.tolist() == [[5, 6, 2], [7, 2, 0]]
    tgt_in, _ = target_tensors([[5, 6, 7, 8]], VOCAB, 3)
    assert tgt_in.shape == (1, 3)


def test_loss_near_log_vocab_at_init():
    model = make_model()
    b = _bundle()
    ex = [model.fusion.prepare(b, "w3 w4", VOCAB)]
    tgt_in, tgt_out = target_tensors([[5, 6, 7]], VOCAB, 8)
    loss = model.loss(ex, tgt_in, tgt_out).item()
    assert abs(loss - np.log(len(VOCAB))) < 0.1 * np.log(len(VOCAB))


def test_greedy_decoding():
    model = make_model()
    b = _bundle()
    a = greedy_decode(model, b, "w3 w4", VOCAB)
    assert a == greedy_decode(model, b, "w3 w4", VOCAB)
    assert all(t not in ("<pad>", "<s>", "<sep>") for t in a.split())
    assert len(greedy_decode(model, b, "w3 w4", VOCAB, max_len=1).split()) <= 1
    assert greedy_decode(model, b, "w3 w4", VOCAB, max_len=3) == " ".join(a.split()[:3])
    exs = [model.fusion.prepare(b, q, VOCAB) for q in ("w3 w4", "w5")]
    batch = greedy_decode_batch(model, exs, VOCAB)
    assert batch[0] == a
    assert batch[1] == greedy_decode(model, b, "w5", VOCAB)


def test_greedy_restores_training_mode():
    model = make_model().train()
    greedy_decode(model, _bundle(), "w3", VOCAB)
    assert model.training
