"""Training on noisy targets, clean-target evaluation, and SNR x length sweeps."""
from __future__ import annotations

import contextlib
import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .channel import SPLIT_NAMES, TEST, TRAIN, VALIDATION, Dataset, complex_noise, to_real
from .models import build_model, mar_fit
from .models import checkpoint as ckpt
from .models.base import Predictor
from .models.mar import MarModel
from .nn import tensor as T
from .nn.optim import Adam, TrainingError

log = logging.getLogger(__name__)

CSV_HEADER = ("model", "snr_db", "l", "delta", "nmse", "seed", "runtime_s", "checkpoint")
SNR_GRID = (-5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
LENGTH_GRID = ((16, 4), (8, 2), (14, 6))


# -- metric -------------------------------------------------------------
def nmse(clean, predicted) -> float:
    """Mean over samples of ||H - H_hat||_F^2 / ||H||_F^2.

    Inputs are ``(delta, D)`` for one sample or ``(N, delta, D)``. Samples
    whose clean block is all zero are skipped with a warning.
    """
    h = np.asarray(clean, dtype=np.float64)
    hh = np.asarray(predicted, dtype=np.float64)
    if h.shape != hh.shape:
        raise ValueError(f"shape mismatch {h.shape} vs {hh.shape}")
    if h.ndim == 2:
        h, hh = h[None], hh[None]
    axes = tuple(range(1, h.ndim))
    den = np.sum(h * h, axis=axes)
    num = np.sum((h - hh) ** 2, axis=axes)
    ok = den > 0
    if not np.all(ok):
        log.warning("nmse: skipping %d zero-norm samples", int(np.sum(~ok)))
        if not np.any(ok):
            raise ValueError("nmse: every reference sample has zero norm")
    return float(np.mean(num[ok] / den[ok]))


def nmse_loss(pred: T.Tensor, target: np.ndarray) -> T.Tensor:
    """Differentiable batch NMSE against (noisy) targets."""
    target = np.asarray(target, dtype=pred.dtype)
    den = np.sum(target * target, axis=tuple(range(1, target.ndim)))
    w = (1.0 / (den * target.shape[0])).reshape(-1, *([1] * (target.ndim - 1))).astype(pred.dtype)
    return T.tsum(T.square(pred - target) * w)


# -- noisy data and the clean-data firewall ------------------------------
class FirewallError(RuntimeError):
    """Clean CSI was requested while training or validating."""


_firewall_depth = 0


@contextlib.contextmanager
def clean_firewall():
    """Inside this block any read of clean CSI raises :class:`FirewallError`."""
    global _firewall_depth
    _firewall_depth += 1
    try:
        yield
    finally:
        _firewall_depth -= 1


def _noise_stream(seed: int, snr_db: float, index: int) -> np.random.Generator:
    snr_key = int(round((snr_db + 1000.0) * 1000))
    return np.random.default_rng(np.random.SeedSequence([int(seed), snr_key, int(index), 0x0153]))


@dataclass
class PreparedData:
    """Realified noisy splits at one SNR. Clean test CSI sits behind a guard."""

    snr_db: float
    sigma2: float
    noise_seed: int
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    test_velocity: np.ndarray
    _clean_test: np.ndarray = field(repr=False)
    _clean_train: np.ndarray | None = field(default=None, repr=False)
    clean_reads: int = 0

    @property
    def clean_test(self) -> np.ndarray:
        if _firewall_depth:
            raise FirewallError("clean CSI requested inside training/validation")
        self.clean_reads += 1
        return self._clean_test

    def clean_train_for_augmentation(self) -> np.ndarray:
        if self._clean_train is None:
            raise FirewallError("clean training CSI was not retained")
        return self._clean_train


def prepare(dataset: Dataset, snr_db: float, noise_seed: int = 0, keep_clean_train: bool = False,
            max_train: int | None = None) -> PreparedData:
    """Noisify every frame once (fixed per-dataset noise) and realify.

    Each frame's noise comes from a stream keyed by (seed, SNR, frame index),
    so it does not depend on split membership or generation order.
    """
    sigma2 = dataset.sigma2(snr_db)
    noisy = np.empty_like(dataset.frames)
    for idx in range(len(dataset)):
        h = dataset.frames[idx]
        noisy[idx] = h + complex_noise(h.shape, sigma2, _noise_stream(noise_seed, snr_db, idx))
    real = to_real(noisy).astype(np.float32)
    tr = dataset.indices(TRAIN)
    if max_train is not None:
        tr = tr[:max_train]
    va, te = dataset.indices(VALIDATION), dataset.indices(TEST)
    return PreparedData(
        snr_db=snr_db, sigma2=sigma2, noise_seed=noise_seed,
        train=real[tr], validation=real[va], test=real[te],
        test_velocity=dataset.velocity[te],
        _clean_test=to_real(dataset.frames[te]).astype(np.float32),
        _clean_train=to_real(dataset.frames[tr]).astype(np.float32) if keep_clean_train else None,
    )


# -- training -----------------------------------------------------------
@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 100
    lr: float = 1e-3
    length: int = 16
    delta: int = 4
    snr_db: float = 20.0
    seed: int = 0
    validation_mode: str = "sequential"
    fresh_noise: bool = False
    n_frames: int = 2000

    def __post_init__(self):
        if self.validation_mode not in ("sequential", "teacher_forced"):
            raise ValueError("validation_mode must be 'sequential' or 'teacher_forced'")

    @classmethod
    def full_scale(cls, **kw) -> "TrainConfig":
        """The full protocol: 500 epochs, batch 200, 150,000 frames."""
        return cls(**{"epochs": 500, "batch_size": 200, "n_frames": 150_000, **kw})


@dataclass
class TrainResult:
    model: Predictor
    history: list[dict]
    best_epoch: int
    best_val_nmse: float
    runtime_s: float


def _validation_nmse(model: Predictor, seqs: np.ndarray, cfg: TrainConfig) -> float:
    known = seqs[:, : cfg.length]
    target = seqs[:, cfg.length: cfg.length + cfg.delta]
    if cfg.validation_mode == "teacher_forced":
        with T.no_grad():
            pred = model.train_forward(T.as_tensor(known), T.as_tensor(target)).data
    else:
        pred = model.predict(known, cfg.delta)
    return nmse(target, pred)


def train(model: Predictor, data: PreparedData, cfg: TrainConfig, max_batches: int | None = None) -> TrainResult:
    """Mini-batch Adam on noisy targets; returns the best-validation weights.

    ``max_batches`` caps batches per epoch (smoke tests only).
    """
    if cfg.length + cfg.delta > data.train.shape[1]:
        raise ValueError("length + delta exceeds the frame length")
    start = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7A1]))
    opt = Adam(model.parameters(), lr=cfg.lr)
    history: list[dict] = []
    best = (math.inf, -1, None)
    lo, hi = cfg.length, cfg.length + cfg.delta
    n = data.train.shape[0]

    with clean_firewall():
        for epoch in range(cfg.epochs):
            if cfg.fresh_noise:
                base = data.clean_train_for_augmentation()
                noise = rng.standard_normal(base.shape).astype(np.float32) * np.float32(math.sqrt(data.sigma2 / 2))
                seqs = base + noise
            else:
                seqs = data.train
            order = rng.permutation(n)
            losses = []
            for b, s in enumerate(range(0, n, cfg.batch_size)):
                if max_batches is not None and b >= max_batches:
                    break
                batch = seqs[order[s: s + cfg.batch_size]]
                pred = model.train_forward(T.as_tensor(batch[:, :lo]), T.as_tensor(batch[:, lo:hi]))
                loss = nmse_loss(pred, batch[:, lo:hi])
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingError(f"{model.family}: non-finite loss at epoch {epoch}, batch {b}")
                grads = T.backward(loss, opt.params)
                try:
                    opt.step(grads)
                except TrainingError as exc:
                    raise TrainingError(f"{model.family}: {exc} at epoch {epoch}, batch {b}") from exc
                losses.append(value)
            val = _validation_nmse(model, data.validation, cfg)
            history.append({"epoch": epoch, "train_loss": float(np.mean(losses)), "val_nmse": val})
            if val < best[0]:
                best = (val, epoch, model.state_dict())
            log.debug("%s epoch %d loss %.5f val %.5f", model.family, epoch, history[-1]["train_loss"], val)

    if best[2] is not None:
        model.load_state_dict(best[2])
    return TrainResult(model, history, best[1], best[0], time.perf_counter() - start)


def fit_mar(data: PreparedData, order: int) -> MarModel:
    """Least-squares MAR on the noisy training frames (all windows)."""
    with clean_firewall():
        return mar_fit(data.train.astype(np.float64), order)


# -- evaluation ---------------------------------------------------------
def last_value_hold(known, delta: int) -> np.ndarray:
    """Repeat the last known snapshot ``delta`` times."""
    x = np.asarray(known)
    if x.shape[-2] < 1:
        raise ValueError("need at least one known snapshot")
    last = x[..., -1:, :]
    return np.repeat(last, delta, axis=-2)


class LastValueHold:
    family = "last-value-hold"
    trainable = False

    def supports(self, length: int, delta: int) -> bool:
        return length >= 1

    def predict(self, known, delta: int) -> np.ndarray:
        return last_value_hold(known, delta)


@dataclass
class ExperimentRecord:
    model: str
    snr_db: float
    l: int  # noqa: E741 - column name in the CSV schema
    delta: int
    nmse: float | str
    seed: int
    runtime_s: float = 0.0
    checkpoint: str = ""

    @property
    def supported(self) -> bool:
        return not isinstance(self.nmse, str)

    def row(self) -> list:
        val = self.nmse if isinstance(self.nmse, str) else repr(float(self.nmse))
        return [self.model, repr(float(self.snr_db)), self.l, self.delta, val, self.seed,
                f"{self.runtime_s:.3f}", self.checkpoint]


def evaluate(model, data: PreparedData, length: int, delta: int, seed: int = 0,
             model_id: str | None = None, checkpoint: str = "") -> ExperimentRecord:
    """Predict from ``length`` noisy slots, score against the clean next ``delta``."""
    name = model_id or model.family
    start = time.perf_counter()
    if length + delta > data.test.shape[1] or not model.supports(length, delta):
        return ExperimentRecord(name, data.snr_db, length, delta, "unsupported", seed, 0.0, checkpoint)
    pred = model.predict(data.test[:, :length], delta)
    score = nmse(data.clean_test[:, length: length + delta], pred)
    return ExperimentRecord(name, data.snr_db, length, delta, score, seed, time.perf_counter() - start, checkpoint)


# -- CSV ----------------------------------------------------------------
class CsvAppender:
    """Serialises record writes to one CSV file, writing the header once."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not self.path.exists() or self.path.stat().st_size == 0:
            with self.path.open("w", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(CSV_HEADER)

    def append(self, rec: ExperimentRecord) -> None:
        with self.path.open("a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(rec.row())


def read_records(path) -> list[ExperimentRecord]:
    out = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        for r in reader:
            try:
                val: float | str = float(r["nmse"])
            except ValueError:
                val = r["nmse"]
            out.append(ExperimentRecord(r["model"], float(r["snr_db"]), int(r["l"]), int(r["delta"]), val,
                                        int(r["seed"]), float(r["runtime_s"]), r["checkpoint"]))
    return out


# -- sweeps -------------------------------------------------------------
def train_family(family: str, data: PreparedData, cfg: TrainConfig, model_overrides: dict | None = None):
    """Build and train one model (or fit MAR at ``cfg.length``)."""
    if family == "mar":
        return fit_mar(data, cfg.length), None
    if family == "last-value-hold":
        return LastValueHold(), None
    overrides = dict(model_overrides or {})
    overrides.setdefault("input_dim", data.train.shape[-1])
    if family in ("lstm",):
        overrides.setdefault("delta", cfg.delta)
    if family == "mlp":
        overrides.setdefault("delta", cfg.delta)
        overrides.setdefault("length", cfg.length)
    model = build_model(family, seed=cfg.seed, **overrides)
    result = train(model, data, cfg)
    return result.model, result


def sweep(families: Sequence[str], snr_grid: Iterable[float], length_grid: Iterable[tuple[int, int]],
          dataset: Dataset, cfg: TrainConfig, csv_path=None, checkpoint_dir=None,
          model_overrides: dict | None = None) -> list[ExperimentRecord]:
    """Train each family per SNR at ``(cfg.length, cfg.delta)`` and evaluate
    on every ``(l, delta)`` pair. MAR is refitted with order ``l`` per pair.
    Failures become records with ``nmse="failed"``; the sweep continues."""
    records: list[ExperimentRecord] = []
    appender = CsvAppender(csv_path) if csv_path else None
    lengths = list(length_grid)

    def emit(rec: ExperimentRecord):
        records.append(rec)
        if appender:
            appender.append(rec)

    for snr in snr_grid:
        data = prepare(dataset, snr, noise_seed=cfg.seed, keep_clean_train=cfg.fresh_noise)
        cell_cfg = TrainConfig(**{**asdict(cfg), "snr_db": snr})
        for family in families:
            start = time.perf_counter()
            try:
                if family == "mar":
                    for length, delta in lengths:
                        t0 = time.perf_counter()
                        model = fit_mar(data, length)
                        rec = evaluate(model, data, length, delta, cfg.seed)
                        rec.runtime_s = time.perf_counter() - t0
                        emit(rec)
                    continue
                model, _ = train_family(family, data, cell_cfg, (model_overrides or {}).get(family))
                path = ""
                if checkpoint_dir and family != "last-value-hold":
                    path = str(ckpt.save(model, Path(checkpoint_dir) / f"{family}_snr{snr:g}_seed{cfg.seed}.ckpt",
                                         extra={"snr_db": snr, "train": asdict(cell_cfg)}))
                train_time = time.perf_counter() - start
                for length, delta in lengths:
                    rec = evaluate(model, data, length, delta, cfg.seed, checkpoint=path)
                    rec.runtime_s += train_time
                    emit(rec)
            except Exception as exc:  # noqa: BLE001 - a failed cell must not stop the sweep
                log.error("sweep cell %s @ %s dB failed: %s", family, snr, exc)
                for length, delta in lengths:
                    emit(ExperimentRecord(family, snr, length, delta, "failed", cfg.seed,
                                          time.perf_counter() - start, ""))
    return records


__all__ = [
    "CSV_HEADER", "CsvAppender", "ExperimentRecord", "FirewallError", "LastValueHold", "LENGTH_GRID",
    "SNR_GRID", "PreparedData", "SPLIT_NAMES", "TrainConfig", "TrainResult", "clean_firewall",
    "evaluate", "fit_mar", "last_value_hold", "nmse", "nmse_loss", "prepare", "read_records", "sweep",
    "train", "train_family",
]
