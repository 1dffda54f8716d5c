import math

import numpy as np
import pytest

from conftest import tiny_config
from oracles import attention_loops, lstm_step_direct
from slrbench import models
from slrbench.errors import DimensionError, FormatError, ParameterError
from slrbench.models import (ModelConfig, glorot_bound, init_params, load_checkpoint,
                             lstm_cell, multi_head_attention, param_count, param_shapes,
                             positional_encoding, save_checkpoint)
from slrbench.numerics import Rng
from slrbench.training import param_gradient_errors


def test_lstm_cell_zero_weights():
    d, h = 5, 4
    x = np.random.default_rng(0).normal(size=(1, d))
    h1, c1 = lstm_cell(x, np.zeros((1, h)), np.zeros((1, h)), np.zeros((d, 4 * h)), np.zeros((h, 4 * h)), np.zeros(4 * h))
    assert np.array_equal(c1, np.zeros((1, h))) and np.array_equal(h1, np.zeros((1, h)))


def test_lstm_cell_memory_carry():
    d, h = 3, 4
    r = np.random.default_rng(1)
    b = np.zeros(4 * h)
    b[:h] = -60.0       # input gate closed
    b[h:2 * h] = 60.0   # forget gate open
    c = r.normal(size=(1, h))
    _, c1 = lstm_cell(r.normal(size=(1, d)) * 0.01, r.normal(size=(1, h)) * 0.01, c,
                      np.zeros((d, 4 * h)), np.zeros((h, 4 * h)), b)
    np.testing.assert_allclose(c1, c, atol=1e-15)


def test_lstm_cell_matches_direct_equations():
    r = np.random.default_rng(2)
    d, h = 6, 5
    args = (r.normal(size=(3, d)), r.normal(size=(3, h)), r.normal(size=(3, h)),
            r.normal(size=(d, 4 * h)) * 0.5, r.normal(size=(h, 4 * h)) * 0.5, r.normal(size=4 * h))
    got, want = lstm_cell(*args), lstm_step_direct(*args)
    np.testing.assert_allclose(got[0], want[0], atol=1e-6)
    np.testing.assert_allclose(got[1], want[1], atol=1e-6)


def _attn_params(d, seed):
    r = np.random.default_rng(seed)
    return {k: r.normal(size=(d, d)) / math.sqrt(d) if k.startswith("W") else r.normal(size=d)
            for k in ("Wq", "bq", "Wk", "bk", "Wv", "bv", "Wo", "bo")}


def test_attention_single_frame():
    p = _attn_params(16, 3)
    x = np.random.default_rng(4).normal(size=(1, 1, 16))
    out, cache = multi_head_attention(x, x, x, p, 4)
    assert np.all(cache["weights"] == 1.0)
    np.testing.assert_allclose(out[0, 0], (x[0, 0] @ p["Wv"] + p["bv"]) @ p["Wo"] + p["bo"], rtol=1e-12)


def test_attention_rows_sum_to_one_and_match_loops():
    p = _attn_params(16, 5)
    x = np.random.default_rng(6).normal(size=(2, 3, 16))
    out, cache = multi_head_attention(x, x, x, p, 4)
    np.testing.assert_allclose(cache["weights"].sum(axis=-1), 1.0, atol=1e-6)
    for b in range(2):
        np.testing.assert_allclose(out[b], attention_loops(x[b], p, 4), atol=1e-6)


def test_positional_encoding_values():
    pe = positional_encoding(64, 512)
    assert np.array_equal(pe[0, 0::2], np.zeros(256)) and np.array_equal(pe[0, 1::2], np.ones(256))
    assert abs(pe[1, 0] - 0.841471) < 1e-6
    assert np.all(np.abs(pe) <= 1.0)
    with pytest.raises(ParameterError):
        positional_encoding(4, 7)


def test_init_is_deterministic_and_matches_manifest():
    for kind in ("convlstm", "transformer"):
        cfg = tiny_config(kind)
        a, b = init_params(cfg, Rng(42, "init")), init_params(cfg, Rng(42, "init"))
        assert list(a) == list(param_shapes(cfg))
        assert all(a[k].shape == s for k, s in param_shapes(cfg).items())
        assert all(a[k].tobytes() == b[k].tobytes() for k in a)


def test_init_conventions():
    cfg = ModelConfig(kind="transformer", num_classes=10, layers=1)
    p = init_params(cfg, Rng(0, "init"))
    bound = glorot_bound((63, 512))
    assert abs(bound - 0.1021) < 1e-4
    assert np.all(np.abs(p["embed.W"]) <= bound)
    assert np.all(p["layer0.ln1.gain"] == 1) and np.all(p["layer0.attn.bq"] == 0)
    lcfg = tiny_config("convlstm")
    lp = init_params(lcfg, Rng(0, "init"))
    h = lcfg.lstm_units
    assert np.all(lp["lstm.b"][h:2 * h] == 1.0)
    assert np.all(np.delete(lp["lstm.b"], np.s_[h:2 * h]) == 0.0)


def test_full_sized_shapes():
    lstm = ModelConfig(kind="convlstm", num_classes=100)
    shapes = param_shapes(lstm)
    assert shapes["conv.kernel"] == (3, 3, 1, 128)
    assert shapes["lstm.W"] == (63 * 128, 4 * 256)
    tf = ModelConfig(kind="transformer", num_classes=100)
    assert sum(1 for k in param_shapes(tf) if k.endswith("attn.Wq")) == 6
    assert param_shapes(tf)["embed.W"] == (63, 512)
    assert param_count(lstm) > 0 and param_count(tf) > param_count(lstm)


def test_config_validation():
    from slrbench.errors import ConfigError
    with pytest.raises(ConfigError):
        ModelConfig(model_dim=30, heads=8)
    with pytest.raises(ConfigError):
        ModelConfig(kind="gru")


@pytest.mark.parametrize("kind", ["convlstm", "transformer"])
@pytest.mark.parametrize("batch", [1, 3])
def test_forward_shape_contract(kind, batch):
    cfg = tiny_config(kind)
    p = init_params(cfg, Rng(1, "init"))
    x = np.random.default_rng(0).normal(size=(batch, 64, 63)).astype(np.float32)
    logits = models.predict(p, cfg, x)
    assert logits.shape == (batch, 5) and np.all(np.isfinite(logits))
    with pytest.raises(DimensionError):
        models.predict(p, cfg, x[..., :60])


def test_convlstm_zero_input_gives_equal_logits():
    cfg = tiny_config("convlstm")
    logits = models.predict(init_params(cfg, Rng(2, "init")), cfg, np.zeros((2, 64, 63), np.float32))
    assert np.all(logits == logits[0, 0])


def test_inference_is_bitwise_deterministic():
    for kind in ("convlstm", "transformer"):
        cfg = tiny_config(kind)
        p = init_params(cfg, Rng(3, "init"))
        x = np.random.default_rng(1).normal(size=(4, 64, 63)).astype(np.float32)
        assert models.predict(p, cfg, x).tobytes() == models.predict(p, cfg, x).tobytes()


def test_training_mode_dropout_depends_on_stream():
    cfg = tiny_config("transformer")
    p = init_params(cfg, Rng(3, "init"))
    x = np.random.default_rng(1).normal(size=(2, 16, 63)).astype(np.float32)
    a = models.forward(p, cfg, x, True, Rng(1, "d"))[0]
    b = models.forward(p, cfg, x, True, Rng(1, "d"))[0]
    c = models.forward(p, cfg, x, True, Rng(2, "d"))[0]
    assert a.tobytes() == b.tobytes() and not np.array_equal(a, c)


def test_transformer_without_positions_is_permutation_invariant():
    cfg = tiny_config("transformer", positional_encoding=False, layers=2)
    p = init_params(cfg, Rng(4, "init"))
    x = np.random.default_rng(2).normal(size=(2, 64, 63)).astype(np.float32)
    base = models.predict(p, cfg, x)
    r = np.random.default_rng(3)
    for _ in range(10):
        perm = r.permutation(64)
        assert np.max(np.abs(models.predict(p, cfg, x[:, perm]) - base)) <= 1e-5


def test_transformer_with_positions_sees_order():
    cfg = tiny_config("transformer")
    p = init_params(cfg, Rng(5, "init"))
    x = np.random.default_rng(4).normal(size=(2, 64, 63)).astype(np.float32)
    shifted = np.roll(x, 7, axis=1)
    assert np.max(np.abs(models.predict(p, cfg, shifted) - models.predict(p, cfg, x))) > 1e-6


def test_convlstm_sees_order():
    cfg = tiny_config("convlstm")
    for seed in range(5):
        p = init_params(cfg, Rng(seed, "init"))
        x = np.random.default_rng(seed).normal(size=(1, 64, 63)).astype(np.float32)
        assert np.max(np.abs(models.predict(p, cfg, x[:, ::-1]) - models.predict(p, cfg, x))) > 1e-6


@pytest.mark.parametrize("kind", ["convlstm", "transformer"])
def test_gradients_spot_check(kind):
    cfg = tiny_config(kind)
    p = init_params(cfg, Rng(6, "init"), np.float64)
    r = np.random.default_rng(5)
    errors = param_gradient_errors(cfg, p, r.normal(size=(2, 4, 63)), np.array([0, 3]), max_coords=15)
    assert max(errors.values()) <= 1e-5


def test_checkpoint_round_trip(tmp_path):
    cfg = tiny_config("convlstm")
    p = init_params(cfg, Rng(7, "init"))
    path = tmp_path / "m.slrc"
    save_checkpoint(path, cfg, p, {"best_epoch": 3})
    cfg2, p2, meta = load_checkpoint(path)
    assert cfg2 == cfg and meta == {"best_epoch": 3}
    assert all(p[k].tobytes() == p2[k].tobytes() for k in p)


def test_checkpoint_rejects_corruption(tmp_path):
    cfg = tiny_config("transformer")
    path = tmp_path / "m.slrc"
    save_checkpoint(path, cfg, init_params(cfg, Rng(8, "init")))
    data = bytearray(path.read_bytes())
    data[-5] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="checksum"):
        load_checkpoint(path)


def test_checkpoint_rejects_shape_mismatch(tmp_path):
    cfg = tiny_config("convlstm")
    p = init_params(cfg, Rng(9, "init"))
    p["head.W"] = p["head.W"][:, :3]
    with pytest.raises(FormatError):
        save_checkpoint(tmp_path / "m.slrc", cfg, p)
