"""Desk-scale experiment protocol with an on-disk result cache.

One *cell* is (family, SNR, seed): generate the dataset for ``seed``,
noisify at the SNR, train at (16, 4) and score every length pair. Cells
are cached as JSON keyed by a hash of everything that determines them,
so repeated test runs reuse finished training.
"""
from __future__ import annotations

import functools
import hashlib
import json
import logging
import os
import time
from dataclasses import asdict
from pathlib import Path

from .channel import GENERATOR_VERSION, ScenarioConfig, generate_dataset
from .train_eval import LENGTH_GRID, TrainConfig, evaluate, fit_mar, prepare, train_family

log = logging.getLogger(__name__)

CACHE_ENV = "CHANPRED_CACHE_DIR"
REFRESH_ENV = "CHANPRED_REFRESH_CACHE"
# bump when model or training code changes in a way that alters results
PROTOCOL_VERSION = 1


def cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.cwd() / ".cache" / "acceptance"))


@functools.lru_cache(maxsize=4)
def desk_dataset(seed: int, n_frames: int = 2000):
    return generate_dataset(ScenarioConfig(n_frames=n_frames, seed=seed))


@functools.lru_cache(maxsize=8)
def desk_data(seed: int, snr_db: float, n_frames: int = 2000):
    return prepare(desk_dataset(seed, n_frames), snr_db, noise_seed=seed)


def _key(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def run_cell(family: str, snr_db: float, seed: int, cfg: TrainConfig | None = None,
             lengths=LENGTH_GRID) -> dict:
    """Return ``{"l:delta": nmse or "unsupported", ...}`` plus timing for one cell."""
    cfg = cfg or TrainConfig(snr_db=snr_db, seed=seed)
    cfg = TrainConfig(**{**asdict(cfg), "snr_db": float(snr_db), "seed": int(seed)})
    ident = {"family": family, "train": asdict(cfg), "lengths": [list(p) for p in lengths],
             "generator": GENERATOR_VERSION, "protocol": PROTOCOL_VERSION}
    path = cache_dir() / f"{family}_snr{snr_db:g}_seed{seed}_{_key(ident)}.json"
    if path.exists() and not os.environ.get(REFRESH_ENV):
        return json.loads(path.read_text())["result"]

    start = time.perf_counter()
    data = desk_data(seed, float(snr_db), cfg.n_frames)
    result: dict = {}
    if family == "mar":
        for length, delta in lengths:
            rec = evaluate(fit_mar(data, length), data, length, delta, seed)
            result[f"{length}:{delta}"] = rec.nmse
    else:
        model, tr = train_family(family, data, cfg)
        for length, delta in lengths:
            result[f"{length}:{delta}"] = evaluate(model, data, length, delta, seed).nmse
        if tr is not None:
            result["best_epoch"] = tr.best_epoch
            result["first_loss"] = tr.history[0]["train_loss"]
            result["last_loss"] = tr.history[-1]["train_loss"]
    result["runtime_s"] = time.perf_counter() - start
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"ident": ident, "result": result}, indent=1, sort_keys=True) + "\n")
    log.info("%s snr=%g seed=%d done in %.1fs", family, snr_db, seed, result["runtime_s"])
    return result


def main(argv=None) -> int:
    """Warm the cache: ``python3 -m chanpred.experiments fam[,fam] snr[,snr] seed[,seed]``."""
    import argparse

    p = argparse.ArgumentParser(prog="chanpred.experiments")
    p.add_argument("families")
    p.add_argument("snrs")
    p.add_argument("seeds")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    for seed in (int(s) for s in args.seeds.split(",")):
        for snr in (float(s) for s in args.snrs.split(",")):
            for fam in args.families.split(","):
                res = run_cell(fam, snr, seed)
                print(fam, snr, seed, {k: v for k, v in res.items() if ":" in k}, flush=True)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
