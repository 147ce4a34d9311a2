"""Acceptance suite: one PASS/FAIL line per criterion.

Criteria 5-7 need desk-scale training (2,000 frames, 60 epochs, three
seeds). Finished cells are cached under ``.cache/acceptance`` (override with
``CHANPRED_CACHE_DIR``), so only the first run pays for training. Warm the
cache ahead of time with ``python3 -m chanpred.experiments``.
"""
import math
import time

import numpy as np
import pytest

from chanpred import channel as ch
from chanpred.diagnostics import GRADCHECK_TOL, TRAINABLE, gradcheck_family, param_report
from chanpred.experiments import run_cell
from chanpred.models import build_model, tiny_overrides
from chanpred.nn import Tensor
from chanpred.train_eval import nmse

SEEDS = (0, 1, 2)
ATTENTION = ("transformer-rpe", "transformer", "transformer-parallel", "seq2seq-attn-r", "seq2seq-attn")


@pytest.fixture
def verdict(capsys):
    def report(number, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return report


def test_criterion_1_parameter_counts(verdict):
    lstm = param_report("lstm")
    rel = {f: abs(param_report(f).delta) / param_report(f).target for f in ("transformer-rpe", "seq2seq-attn-r")}
    audits_explain = all(any(line.startswith("note:") for line in param_report(f).lines()) for f in rel)
    ok = lstm.total == 264_448 and lstm.delta == 0 and all(r < 0.01 for r in rel.values()) and audits_explain
    verdict(1, ok, f"lstm={lstm.total:,}; transformer-rpe off by {rel['transformer-rpe']:.3%}, "
                   f"seq2seq-attn-r off by {rel['seq2seq-attn-r']:.3%}; residuals annotated={audits_explain}")


def test_criterion_2_gradients(verdict):
    start = time.perf_counter()
    errors = {f: gradcheck_family(f) for f in TRAINABLE}
    elapsed = time.perf_counter() - start
    worst = max(errors, key=errors.get)
    ok = all(e < GRADCHECK_TOL for e in errors.values()) and elapsed < 60
    verdict(2, ok, f"worst {worst} rel err {errors[worst]:.2e} (< {GRADCHECK_TOL:g}) over "
                   f"{len(errors)} families in {elapsed:.1f}s")


def test_criterion_3_position_bias(verdict):
    rpe, pe = build_model("transformer-rpe"), build_model("transformer")
    ref_r, ref_p = rpe.encoder_position_bias(16), pe.encoder_position_bias(16)
    rpe_same = all(np.array_equal(rpe.encoder_position_bias(n)[n - 1 - k], ref_r[15 - k])
                   for n in (8, 14, 16) for k in range(n))
    pe_differs = all(not np.array_equal(pe.encoder_position_bias(n)[n - 1 - k], ref_p[15 - k])
                     for n in (8, 14) for k in range(n))
    verdict(3, rpe_same and pe_differs,
            f"RPE bias of k-th most recent identical across l in (8,14,16): {rpe_same}; "
            f"standard PE differs for l != 16: {pe_differs}")


def test_criterion_4_causality_and_teacher_forcing(verdict):
    rng = np.random.default_rng(0)
    causal = True
    for family in ("transformer-rpe", "transformer"):
        for delta in range(1, 7):
            m = build_model(family, seed=delta, **tiny_overrides(family)).to_dtype(np.float64)
            memory = m.encode(Tensor(rng.standard_normal((2, 5, 4))))
            dec_in = rng.standard_normal((2, delta, 4))
            base = m.decode(memory, dec_in).data
            for k in range(delta):
                changed = dec_in.copy()
                changed[:, k + 1:] += rng.standard_normal(changed[:, k + 1:].shape) * 5
                causal &= np.array_equal(m.decode(memory, changed).data[:, : k + 1], base[:, : k + 1])
    gap = 0.0
    for family in ("transformer-rpe", "transformer", "seq2seq-attn-r"):
        m = build_model(family, seed=1).to_dtype(np.float64)
        known = rng.standard_normal((3, 16, 64))
        seq = m.predict(known, 6)
        gap = max(gap, float(np.max(np.abs(m.train_forward(Tensor(known), Tensor(seq)).data - seq))))
    verdict(4, causal and gap <= 1e-6,
            f"decoder causal for delta 1..6: {causal}; teacher-forced vs sequential max gap {gap:.1e} (<= 1e-6)")


def _score(family, snr, seed, lengths="16:4"):
    return run_cell(family, snr, seed)[lengths]


@pytest.mark.slow
def test_criterion_5_length_generalisation(verdict):
    parts, ok = [], True
    for better, worse in (("transformer-rpe", "transformer"), ("seq2seq-attn-r", "seq2seq-attn")):
        wins = sum(all(_score(better, 20.0, s, p) < _score(worse, 20.0, s, p) for p in ("8:2", "14:6"))
                   for s in SEEDS)
        means = {p: (np.mean([_score(better, 20.0, s, p) for s in SEEDS]),
                     np.mean([_score(worse, 20.0, s, p) for s in SEEDS])) for p in ("8:2", "14:6")}
        ok &= wins >= 2
        parts.append(f"{better} beats {worse} at (8,2) and (14,6) in {wins}/3 seeds "
                     f"(means {means['8:2'][0]:.3f}/{means['8:2'][1]:.3f}, {means['14:6'][0]:.3f}/{means['14:6'][1]:.3f})")
    verdict(5, ok, "; ".join(parts))


@pytest.mark.slow
def test_criterion_6_snr_monotonicity(verdict):
    failing = []
    for family in TRAINABLE:
        good = sum(_score(family, 0.0, s) >= _score(family, 10.0, s) >= _score(family, 20.0, s) for s in SEEDS)
        if good < 2:
            failing.append(f"{family} ({good}/3)")
    verdict(6, not failing, f"NMSE non-increasing over 0/10/20 dB at (16,4) for a seed majority in "
                            f"{len(TRAINABLE) - len(failing)}/{len(TRAINABLE)} trained families"
                            + (f"; failing: {', '.join(failing)}" if failing else ""))


@pytest.mark.slow
def test_criterion_7_baselines(verdict):
    mean = {f: float(np.mean([_score(f, 20.0, s) for s in SEEDS])) for f in ATTENTION + ("mar", "last-value-hold")}
    bar = min(mean["mar"], mean["last-value-hold"])
    losers = [f for f in ATTENTION if not mean[f] < bar]
    table = ", ".join(f"{f}={mean[f]:.4f}" for f in mean)
    verdict(7, not losers, f"20 dB (16,4) mean NMSE over 3 seeds: {table}"
                           + (f"; not beating the best baseline: {', '.join(losers)}" if losers else ""))


def test_criterion_8_unit_oracles(verdict):
    h = np.random.default_rng(0).standard_normal((4, 3, 8))
    edges = nmse(h, h) == 0.0 and nmse(h, np.zeros_like(h)) == 1.0

    ds = ch.generate_dataset(ch.ScenarioConfig(n_frames=200, seed=11))
    snr_err = 0.0
    for target in (-5.0, 0.0, 10.0, 20.0):
        noisy = ch.add_noise(ds.frames.astype(np.complex128), ch.snr_to_sigma(ds, target), np.random.default_rng(1))
        snr_err = max(snr_err, abs(ch.measured_snr_db(ds.frames, noisy) - target))

    gamma, n = 8.0, 40_000
    v = ch.sample_velocity(gamma, np.random.default_rng(0), size=n)
    z = abs(v.mean() - gamma * math.sqrt(math.pi / 2)) / (gamma * math.sqrt((4 - math.pi) / 2) / math.sqrt(n))

    c = np.random.default_rng(2).standard_normal((5, 32)) + 1j * np.random.default_rng(3).standard_normal((5, 32))
    iso = math.isclose(np.linalg.norm(ch.to_real(c)), np.linalg.norm(c), rel_tol=1e-12)

    ok = edges and snr_err < 0.1 and z < 3 and iso
    verdict(8, ok, f"nmse edges exact: {edges}; worst SNR calibration error {snr_err:.3f} dB (< 0.1); "
                   f"Rayleigh mean {z:.2f} SE off (< 3); to_real isometry: {iso}")
