import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chanpred.models import (
    FAMILIES,
    PUBLISHED_PARAM_COUNTS,
    GruParams,
    LstmParams,
    MarModel,
    UnsupportedLength,
    build_model,
    gru_cell,
    lstm_cell,
    mar_fit,
    pairing,
    parameter_audit,
    seq2seq_attend,
    tiny_overrides,
)
from chanpred.models import checkpoint as ckpt
from chanpred.nn import ContractError, Linear, Tensor
from chanpred.nn import tensor as T

TRAINABLE = [f for f in FAMILIES if f != "mar"]


def _sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def _tiny(family, seed=0):
    return build_model(family, seed=seed, **tiny_overrides(family)).to_dtype(np.float64)


# -- recurrent cells -----------------------------------------------------------
def test_gru_cell_scalar_oracle():
    p = GruParams(1, 1, np.random.default_rng(0)).to_dtype(np.float64)
    for name, val in [("W_z", [[0.3, -0.2]]), ("W_r", [[0.5, 0.4]]), ("W_u", [[-0.7, 0.9]]),
                      ("b_z", [0.1]), ("b_z_rec", [0.05]), ("b_r", [-0.2]), ("b_r_rec", [0.0]),
                      ("b_u", [0.3]), ("b_u_rec", [-0.1])]:
        getattr(p, name).data = np.array(val, dtype=np.float64)
    x, u = 0.8, -0.4
    z = _sig(0.3 * x - 0.2 * u + 0.15)
    r = _sig(0.5 * x + 0.4 * u - 0.2)
    cand = math.tanh(-0.7 * x + 0.9 * r * u + 0.2)
    want = (1 - z) * cand + z * u
    got = gru_cell(Tensor(np.array([[x]])), Tensor(np.array([[u]])), p).data
    assert got[0, 0] == pytest.approx(want, rel=1e-14)


def test_gru_update_gate_extremes():
    rng = np.random.default_rng(1)
    p = GruParams(3, 4, rng).to_dtype(np.float64)
    x, u = Tensor(rng.standard_normal((2, 3))), Tensor(rng.standard_normal((2, 4)))
    p.b_z.data[:] = 60.0  # z -> 1: keep the old state
    np.testing.assert_allclose(gru_cell(x, u, p).data, u.data, atol=1e-12)
    p.b_z.data[:] = -60.0  # z -> 0: take the candidate
    gates = {}
    out = gru_cell(x, u, p, gates).data
    cand = np.tanh(np.concatenate([x.data, gates["r"] * u.data], axis=1) @ p.W_u.data.T)
    np.testing.assert_allclose(out, cand, atol=1e-12)


def test_lstm_cell_scalar_oracle():
    p = LstmParams(1, 1, np.random.default_rng(0)).to_dtype(np.float64)
    w = {"W_i": [[0.2, 0.1]], "W_f": [[-0.3, 0.5]], "W_o": [[0.6, -0.4]], "W_c": [[1.1, 0.7]]}
    for name, val in w.items():
        getattr(p, name).data = np.array(val, dtype=np.float64)
    for name in ("b_i", "b_f", "b_o", "b_c"):
        getattr(p, name).data = np.array([0.05])
        getattr(p, name + "_rec").data = np.array([0.05])
    x, u, c = 0.5, -1.0, 0.3
    i = _sig(0.2 * x + 0.1 * u + 0.1)
    f = _sig(-0.3 * x + 0.5 * u + 0.1)
    o = _sig(0.6 * x - 0.4 * u + 0.1)
    c_new = f * c + i * math.tanh(1.1 * x + 0.7 * u + 0.1)
    h, cc = lstm_cell(Tensor(np.array([[x]])), Tensor(np.array([[u]])), Tensor(np.array([[c]])), p)
    assert cc.data[0, 0] == pytest.approx(c_new, rel=1e-14)
    assert h.data[0, 0] == pytest.approx(o * math.tanh(c_new), rel=1e-14)


def test_lstm_forget_gate_closed_resets_cell():
    rng = np.random.default_rng(2)
    p = LstmParams(2, 3, rng).to_dtype(np.float64)
    p.b_f.data[:] = -60.0
    p.b_i.data[:] = -60.0
    _, c = lstm_cell(Tensor(rng.standard_normal((1, 2))), Tensor(np.zeros((1, 3))), Tensor(np.ones((1, 3))), p)
    np.testing.assert_allclose(c.data, 0.0, atol=1e-12)


def test_cells_reject_wrong_widths():
    p = GruParams(3, 4, np.random.default_rng(0))
    with pytest.raises(ContractError):
        gru_cell(Tensor(np.ones((1, 2))), Tensor(np.ones((1, 4))), p)


# -- seq2seq attention ordering ----------------------------------------------
def test_pairing_orders():
    assert pairing(3, 5, "reversed") == [(0, 2), (1, 1), (2, 0)]
    assert pairing(3, 5, "forward") == [(0, 0), (1, 1), (2, 2)]
    assert pairing(3, 5, "last") == [(2, 0), (3, 1), (4, 2)]
    with pytest.raises(ContractError):
        pairing(6, 5, "reversed")


def _attn_layer(d_in, max_len, seed=0):
    return Linear(d_in, max_len, np.random.default_rng(seed)).to_dtype(np.float64)


def test_attention_mass_on_index_zero_selects_most_recent():
    rng = np.random.default_rng(3)
    attn = _attn_layer(5, 6)
    attn.weight.data[:] = 0.0
    attn.bias.data[:] = -1e3
    attn.bias.data[0] = 0.0
    enc = Tensor(rng.standard_normal((2, 4, 3)))
    ctx = seq2seq_attend(Tensor(rng.standard_normal((2, 2))), Tensor(rng.standard_normal((2, 3))), enc, attn, 6)
    np.testing.assert_allclose(ctx.data, enc.data[:, -1], atol=1e-12)
    fwd = seq2seq_attend(Tensor(rng.standard_normal((2, 2))), Tensor(rng.standard_normal((2, 3))), enc, attn, 6,
                         order="forward")
    np.testing.assert_allclose(fwd.data, enc.data[:, 0], atol=1e-12)


@pytest.mark.parametrize("length", [1, 3, 6])
def test_last_order_equals_reversed_with_flipped_rows(length):
    """With l = max_len, flipping attn_linear's output rows maps one order onto the other."""
    rng = np.random.default_rng(length)
    attn = _attn_layer(5, length)
    flipped = _attn_layer(5, length)
    flipped.weight.data = attn.weight.data[::-1].copy()
    flipped.bias.data = rng.standard_normal(length)
    attn.bias.data = flipped.bias.data[::-1].copy()
    x, u = Tensor(rng.standard_normal((2, 2))), Tensor(rng.standard_normal((2, 3)))
    enc = Tensor(rng.standard_normal((2, length, 3)))
    a = seq2seq_attend(x, u, enc, attn, length, order="reversed").data
    b = seq2seq_attend(x, u, enc, flipped, length, order="last").data
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_seq2seq_rejects_too_long_history():
    m = _tiny("seq2seq-attn-r")
    assert not m.supports(7, 1)
    with pytest.raises(UnsupportedLength):
        m.predict(np.zeros((1, 7, 4)), 1)


# -- transformer decoder --------------------------------------------------------
@pytest.mark.parametrize("family", ["transformer-rpe", "transformer"])
@pytest.mark.parametrize("delta", range(1, 7))
def test_decoder_position_ignores_later_inputs(family, delta):
    rng = np.random.default_rng(delta)
    m = _tiny(family, seed=delta)
    memory = m.encode(Tensor(rng.standard_normal((2, 5, 4))))
    dec_in = rng.standard_normal((2, delta, 4))
    base = m.decode(memory, dec_in).data
    for k in range(delta):
        changed = dec_in.copy()
        changed[:, k + 1:] = rng.standard_normal(changed[:, k + 1:].shape) * 5
        out = m.decode(memory, changed).data
        np.testing.assert_array_equal(out[:, : k + 1], base[:, : k + 1])


@pytest.mark.parametrize("family", ["transformer-rpe", "transformer", "seq2seq-attn-r"])
def test_teacher_forcing_on_own_outputs_reproduces_sequential_decode(family):
    rng = np.random.default_rng(0)
    m = build_model(family, seed=1).to_dtype(np.float64)
    known = rng.standard_normal((3, 16, 64))
    seq = m.predict(known, 6)
    tf = m.train_forward(Tensor(known), Tensor(seq)).data
    np.testing.assert_allclose(tf, seq, atol=1e-6, rtol=0)


def test_rpe_bias_of_kth_most_recent_is_length_free():
    rpe, pe = build_model("transformer-rpe"), build_model("transformer")
    ref_r, ref_p = rpe.encoder_position_bias(16), pe.encoder_position_bias(16)
    for length in (8, 14, 16):
        bias_r, bias_p = rpe.encoder_position_bias(length), pe.encoder_position_bias(length)
        for k in range(length):
            assert np.array_equal(bias_r[length - 1 - k], ref_r[15 - k])
        if length != 16:
            assert not np.array_equal(bias_p[length - 1], ref_p[15])


def test_parallel_needs_prefix_and_predicts_all_slots():
    m = _tiny("transformer-parallel")
    assert not m.supports(1, 2) and m.supports(2, 2)
    out = m.predict(np.random.default_rng(0).standard_normal((2, 5, 4)), 3)
    assert out.shape == (2, 3, 4)


# -- LSTM / MLP heads ----------------------------------------------------------
def test_lstm_short_horizon_truncates_and_long_horizon_rolls():
    m = _tiny("lstm")  # delta 2
    known = np.random.default_rng(0).standard_normal((2, 5, 4))
    two = m.predict(known, 2)
    np.testing.assert_array_equal(m.predict(known, 1), two[:, :1])
    five = m.predict(known, 5)
    np.testing.assert_array_equal(five[:, :2], two)
    np.testing.assert_allclose(five[:, 2:4], m.predict(np.concatenate([known, two], axis=1), 2), atol=1e-12)


def test_lstm_rejects_other_training_horizon():
    m = _tiny("lstm")
    with pytest.raises(ContractError):
        m.train_forward(Tensor(np.zeros((1, 5, 4))), Tensor(np.zeros((1, 3, 4))))


def test_mlp_supports_only_trained_length():
    m = _tiny("mlp")  # length 4, delta 2
    assert m.supports(4, 2) and m.supports(4, 1)
    assert not m.supports(5, 2) and not m.supports(4, 3)
    with pytest.raises(UnsupportedLength):
        m.predict(np.zeros((1, 5, 4)), 2)


def test_predict_accepts_unbatched_input_and_zero_horizon():
    m = _tiny("transformer-rpe")
    x = np.random.default_rng(0).standard_normal((5, 4))
    assert m.predict(x, 2).shape == (2, 4)
    assert m.predict(x, 0).shape == (0, 4)


# -- parameter counts ------------------------------------------------------------
def test_lstm_count_matches_published_total():
    assert build_model("lstm").num_parameters() == PUBLISHED_PARAM_COUNTS["lstm"] == 264_448


def test_mlp_count_closed_form():
    assert build_model("mlp").num_parameters() == 1024 * 512 + 512 + 512 * 256 + 256 == 656_128


@pytest.mark.parametrize("family", ["transformer-rpe", "seq2seq-attn-r"])
def test_published_totals_within_one_percent(family):
    n = build_model(family).num_parameters()
    assert abs(n - PUBLISHED_PARAM_COUNTS[family]) / PUBLISHED_PARAM_COUNTS[family] < 0.01


def test_transformer_audit_closed_form():
    audit = parameter_audit(build_model("transformer-rpe"))
    ln, mha = 2 * 64, 4 * 64 * 64
    mlp = 64 * 128 + 128 + 128 * 64 + 64
    assert audit["encoder.0"] == 2 * ln + mha + mlp
    assert audit["decoder.1"] == 3 * ln + 2 * mha + mlp
    assert audit["enc_in"] == audit["head"] == 64 * 64 + 64


def test_seq2seq_audit_closed_form():
    audit = parameter_audit(build_model("seq2seq-attn-r"))
    gru = lambda i, h: 3 * (h * (i + h) + 2 * h)  # noqa: E731
    assert audit["encoder.layers.0"] == gru(64, 128)
    assert audit["encoder.layers.1"] == gru(128, 128)
    assert audit["attn_linear"] == 192 * 20 + 20


# -- MAR -----------------------------------------------------------------------
def test_mar_recovers_scalar_ar1():
    rng = np.random.default_rng(0)
    n, length = 400, 20
    x = np.zeros((n, length))
    x[:, 0] = rng.standard_normal(n)
    for t in range(1, length):
        x[:, t] = 0.9 * x[:, t - 1] + 0.3 * rng.standard_normal(n)
    m = mar_fit(x, 1)
    # standard error ~ 0.3 / sqrt(sum x^2) ~ 2e-3 here
    assert m.coefs[0, 0, 0] == pytest.approx(0.9, abs=0.01)
    assert abs(m.intercept[0]) < 0.02


def test_mar_exact_on_noiseless_var2():
    rng = np.random.default_rng(1)
    d = 3
    a1, a2 = 0.4 * rng.standard_normal((d, d)), 0.2 * rng.standard_normal((d, d))
    c = rng.standard_normal(d)
    x = np.zeros((60, 12, d))
    x[:, :2] = rng.standard_normal((60, 2, d))
    for t in range(2, 12):
        x[:, t] = c + x[:, t - 1] @ a1.T + x[:, t - 2] @ a2.T
    m = mar_fit(x, 2)
    np.testing.assert_allclose(m.coefs[0], a1, atol=1e-8)
    np.testing.assert_allclose(m.coefs[1], a2, atol=1e-8)
    np.testing.assert_allclose(m.intercept, c, atol=1e-8)
    pred = m.predict(x[:, :8], 4)
    np.testing.assert_allclose(pred, x[:, 8:], atol=1e-6)


def test_mar_rank_deficient_design_falls_back_to_ridge():
    x = np.ones((5, 6, 2))  # constant sequences: regressors are collinear with the intercept
    m = mar_fit(x, 2)
    assert m.meta["ridge"]
    np.testing.assert_allclose(m.predict(x[:, :3], 2), 1.0, atol=1e-4)


def test_mar_needs_enough_history():
    m = MarModel(np.zeros((4, 2, 2)), np.zeros(2))
    assert not m.supports(3, 1)
    with pytest.raises(UnsupportedLength):
        m.predict(np.zeros((1, 3, 2)), 1)


# -- checkpoints -----------------------------------------------------------------
@pytest.mark.parametrize("family", TRAINABLE)
def test_checkpoint_round_trip(family, tmp_path):
    m = build_model(family, seed=4, **tiny_overrides(family))
    path = ckpt.save(m, tmp_path / "m.ckpt", extra={"snr_db": 10.0})
    back, extra = ckpt.load(path)
    assert back.family == m.family and extra == {"snr_db": 10.0}
    for (ka, a), (kb, b) in zip(m.named_parameters(), back.named_parameters()):
        assert ka == kb and np.array_equal(a.data, b.data)
    assert ckpt.dumps(back, extra) == path.read_bytes()


def test_mar_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = mar_fit(rng.standard_normal((30, 8, 2)), 3)
    back, _ = ckpt.load(ckpt.save(m, tmp_path / "mar.ckpt"))
    assert back.order == 3
    np.testing.assert_allclose(back.coefs, m.coefs, rtol=1e-6, atol=1e-7)


def test_checkpoint_rejects_garbage():
    with pytest.raises(ckpt.CheckpointError):
        ckpt.loads(b"NOTACKPT" + b"\0" * 8)
    raw = ckpt.dumps(build_model("mlp", **tiny_overrides("mlp")))
    with pytest.raises(ckpt.CheckpointError):
        ckpt.loads(raw[:-3])


@settings(max_examples=10, deadline=None)
@given(st.sampled_from(TRAINABLE), st.integers(0, 2 ** 16))
def test_same_seed_same_weights(family, seed):
    a = build_model(family, seed=seed, **tiny_overrides(family))
    b = build_model(family, seed=seed, **tiny_overrides(family))
    assert all(np.array_equal(p.data, q.data) for p, q in zip(a.parameters(), b.parameters()))
