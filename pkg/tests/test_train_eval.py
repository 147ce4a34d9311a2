import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from chanpred.channel import ScenarioConfig, generate_dataset
from chanpred.models import build_model, tiny_overrides
from chanpred.nn import Tensor, TrainingError, backward
from chanpred.train_eval import (
    CSV_HEADER,
    CsvAppender,
    ExperimentRecord,
    FirewallError,
    LastValueHold,
    TrainConfig,
    clean_firewall,
    evaluate,
    fit_mar,
    last_value_hold,
    nmse,
    nmse_loss,
    prepare,
    read_records,
    sweep,
    train,
)

TRAINABLE = ["transformer-rpe", "transformer", "transformer-parallel", "seq2seq-attn-r", "seq2seq-attn",
             "lstm", "mlp"]


@pytest.fixture(scope="module")
def ds():
    return generate_dataset(ScenarioConfig(n_frames=80, seed=3))


@pytest.fixture(scope="module")
def data(ds):
    return prepare(ds, 20.0, noise_seed=0)


def _small_model(family):
    over = dict(tiny_overrides(family), input_dim=64)
    if family in ("lstm", "mlp"):
        over["delta"] = 4
    if family == "mlp":
        over["length"] = 16
    if family.startswith("seq2seq"):
        over["max_len"] = 20
    return build_model(family, seed=0, **over)


# -- metric ----------------------------------------------------------------------
def test_nmse_edge_values():
    h = np.array([[1.0, 2.0], [3.0, -1.0]])
    assert nmse(h, h) == 0.0
    assert nmse(h, np.zeros_like(h)) == 1.0
    assert nmse(h, -h) == 4.0


def test_nmse_hand_example():
    # ||H||^2 = 4, ||H - H_hat||^2 = 2
    assert nmse(np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([[0.0, 1.0], [1.0, 0.0]])) == 0.5


def test_nmse_is_mean_of_per_sample_ratios():
    h = np.stack([np.ones((1, 2)), 2 * np.ones((1, 2))])
    hh = np.stack([np.zeros((1, 2)), np.ones((1, 2))])
    assert nmse(h, hh) == pytest.approx((1.0 + 0.25) / 2)


def test_nmse_skips_zero_reference(caplog):
    h = np.stack([np.zeros((1, 2)), np.ones((1, 2))])
    assert nmse(h, np.zeros_like(h)) == 1.0
    assert "zero-norm" in caplog.text
    with pytest.raises(ValueError):
        nmse(np.zeros((2, 1, 2)), np.zeros((2, 1, 2)))


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, (3, 2, 4), elements=st.floats(-10, 10).filter(lambda v: abs(v) > 1e-3)),
       st.floats(0.1, 10))
def test_nmse_is_scale_invariant(h, c):
    noise = np.roll(h, 1)
    assert nmse(c * h, c * (h + noise)) == pytest.approx(nmse(h, h + noise), rel=1e-9)


def test_nmse_loss_matches_metric_and_differentiates():
    rng = np.random.default_rng(0)
    target = rng.standard_normal((5, 4, 6))
    pred = Tensor(rng.standard_normal((5, 4, 6)), requires_grad=True)
    loss = nmse_loss(pred, target)
    assert loss.item() == pytest.approx(nmse(target, pred.data), rel=1e-12)
    g = backward(loss, [pred])[pred]
    den = np.sum(target ** 2, axis=(1, 2), keepdims=True)
    np.testing.assert_allclose(g, 2 * (pred.data - target) / (den * 5), rtol=1e-12)


# -- data preparation and the firewall -----------------------------------------------
def test_prepare_shapes_and_noise_level(ds, data):
    assert data.train.shape == (64, 20, 64) and data.test.shape == (8, 20, 64)
    with pytest.raises(FirewallError), clean_firewall():
        data.clean_test
    clean = data.clean_test
    noise = data.test - clean
    # per real coordinate the noise variance is sigma^2 / 2
    assert np.var(noise) == pytest.approx(data.sigma2 / 2, rel=0.05)


def test_prepare_noise_is_reproducible(ds):
    a, b = prepare(ds, 10.0, noise_seed=4), prepare(ds, 10.0, noise_seed=4)
    np.testing.assert_array_equal(a.train, b.train)
    assert not np.array_equal(a.train, prepare(ds, 10.0, noise_seed=5).train)


def test_training_never_reads_clean_test(ds):
    data = prepare(ds, 20.0)
    train(_small_model("transformer-rpe"), data, TrainConfig(epochs=2, batch_size=32))
    assert data.clean_reads == 0


def test_fresh_noise_needs_retained_clean_train(data):
    with pytest.raises(FirewallError):
        train(_small_model("mlp"), data, TrainConfig(epochs=1, fresh_noise=True))


# -- training ------------------------------------------------------------------
def test_one_batch_is_deterministic(data):
    runs = [train(_small_model("transformer-rpe"), data, TrainConfig(epochs=1, batch_size=16), max_batches=1)
            for _ in range(2)]
    assert len(runs[0].history) == 1
    assert runs[0].history[0]["train_loss"] == runs[1].history[0]["train_loss"]


def test_best_checkpoint_is_argmin_of_validation(data):
    res = train(_small_model("mlp"), data, TrainConfig(epochs=6, batch_size=16))
    vals = [h["val_nmse"] for h in res.history]
    assert res.best_epoch == int(np.argmin(vals))
    assert res.best_val_nmse <= vals[-1]


def test_loaded_weights_reproduce_best_validation(data):
    model = _small_model("mlp")
    res = train(model, data, TrainConfig(epochs=5, batch_size=16))
    known = data.validation[:, :16]
    assert nmse(data.validation[:, 16:20], model.predict(known, 4)) == pytest.approx(res.best_val_nmse, rel=1e-6)


@pytest.mark.parametrize("family", TRAINABLE)
def test_training_reduces_loss(family, data):
    res = train(_small_model(family), data, TrainConfig(epochs=12, batch_size=16, lr=3e-3))
    assert res.history[-1]["train_loss"] < res.history[0]["train_loss"]


def test_nan_loss_aborts_with_location(data):
    model = _small_model("mlp")
    model.fc1.weight.data[:] = np.nan
    with pytest.raises(TrainingError, match=r"epoch 0, batch 0"):
        train(model, data, TrainConfig(epochs=1, batch_size=16))


def test_train_rejects_too_long_windows(data):
    with pytest.raises(ValueError):
        train(_small_model("mlp"), data, TrainConfig(length=18, delta=4))


# -- evaluation and baselines -----------------------------------------------------
def test_last_value_hold_repeats():
    x = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(last_value_hold(x, 2), [[4.0, 5.0], [4.0, 5.0]])


def test_evaluate_marks_unsupported_lengths(data):
    rec = evaluate(_small_model("mlp"), data, 8, 2)
    assert rec.nmse == "unsupported" and not rec.supported
    assert evaluate(LastValueHold(), data, 8, 2).supported


def test_evaluate_length_mismatch_runs_for_sequence_models(data):
    rec = evaluate(_small_model("transformer-rpe"), data, 8, 2)
    assert isinstance(rec.nmse, float) and math.isfinite(rec.nmse)


def test_mar_fit_never_reads_clean_test(ds):
    data = prepare(ds, 20.0)
    fit_mar(data, 4)
    assert data.clean_reads == 0


# -- CSV ------------------------------------------------------------------------
def test_csv_header_and_round_trip(tmp_path):
    path = tmp_path / "r.csv"
    app = CsvAppender(path)
    recs = [ExperimentRecord("mar", 20.0, 16, 4, 0.125, 0, 1.5, ""),
            ExperimentRecord("mlp", -5.0, 8, 2, "unsupported", 1, 0.0, "x.ckpt")]
    for r in recs:
        app.append(r)
    CsvAppender(path)  # reopening must not duplicate the header
    lines = path.read_text().splitlines()
    assert lines[0] == "model,snr_db,l,delta,nmse,seed,runtime_s,checkpoint"
    assert tuple(next(csv.reader([lines[0]]))) == CSV_HEADER
    assert len(lines) == 3
    back = read_records(path)
    assert back[0].nmse == 0.125 and back[1].nmse == "unsupported" and back[1].checkpoint == "x.ckpt"


def test_sweep_rows_cover_grid(ds, tmp_path):
    cfg = TrainConfig(epochs=1, batch_size=32)
    recs = sweep(["mar", "last-value-hold", "mlp"], [0.0, 20.0], [(16, 4), (8, 2)], ds, cfg,
                 csv_path=tmp_path / "s.csv", model_overrides={"mlp": {"hidden": 8}})
    assert len(recs) == 3 * 2 * 2
    assert len(read_records(tmp_path / "s.csv")) == 12
    by = {(r.model, r.snr_db, r.l): r.nmse for r in recs}
    assert by[("mlp", 0.0, 8)] == "unsupported"
    assert isinstance(by[("mar", 20.0, 8)], float)


def test_sweep_records_failures_and_continues(ds, tmp_path):
    cfg = TrainConfig(epochs=1, batch_size=32)
    recs = sweep(["mlp", "last-value-hold"], [20.0], [(16, 4)], ds, cfg,
                 model_overrides={"mlp": {"no_such_key": 1}})
    assert [r.nmse for r in recs if r.model == "mlp"] == ["failed"]
    assert isinstance([r for r in recs if r.model == "last-value-hold"][0].nmse, float)


def _constant_velocity(kmh, n=100, seed=6):
    return generate_dataset(ScenarioConfig(n_frames=n, seed=seed), velocities=np.full(n, kmh / 3.6))


def test_last_value_hold_on_static_channel_sees_only_noise():
    data = prepare(_constant_velocity(0.0, n=200), 10.0)
    # error is the noise on the last known snapshot; per snapshot E||n||^2 / ||h||^2 = sigma^2 M / M
    rec = evaluate(LastValueHold(), data, 16, 4)
    assert rec.nmse == pytest.approx(data.sigma2, rel=0.15)


def test_last_value_hold_degrades_with_speed():
    slow = evaluate(LastValueHold(), prepare(_constant_velocity(3.0), 20.0), 16, 4).nmse
    fast = evaluate(LastValueHold(), prepare(_constant_velocity(120.0), 20.0), 16, 4).nmse
    assert fast > 5 * slow


def test_sweep_rerun_is_identical_apart_from_runtime(ds, tmp_path):
    cfg = TrainConfig(epochs=2, batch_size=32)
    runs = []
    for name in ("a.csv", "b.csv"):
        sweep(["mar", "mlp"], [10.0], [(16, 4), (8, 2)], ds, cfg, csv_path=tmp_path / name,
              model_overrides={"mlp": {"hidden": 8}})
        runs.append([r.row()[:6] for r in read_records(tmp_path / name)])
    assert runs[0] == runs[1]


def test_sweep_cardinality_small_grid(ds):
    recs = sweep(["mar", "last-value-hold"], [20.0], [(16, 4)], ds, TrainConfig(epochs=1))
    assert len(recs) == 2
