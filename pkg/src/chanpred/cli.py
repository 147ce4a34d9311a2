"""``chanpred`` command line: generate, train, evaluate, sweep, paramcount, gradcheck.

Every subcommand accepts ``--config FILE`` (JSON with optional ``scenario``,
``train`` and ``model`` sections) and flag overrides on top of it. The
resolved configuration is written next to the outputs. Outputs default to
``$CHANPRED_OUTPUT_DIR`` (``./runs`` when unset).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

from . import dataset_io
from .channel import ScenarioConfig, generate_dataset
from .diagnostics import GRADCHECK_TOL, TRAINABLE, gradcheck_family, param_report
from .models import FAMILIES, checkpoint as ckpt
from .train_eval import (
    LENGTH_GRID,
    SNR_GRID,
    CsvAppender,
    LastValueHold,
    TrainConfig,
    evaluate,
    fit_mar,
    prepare,
    sweep,
    train_family,
)

log = logging.getLogger("chanpred")

OUTPUT_ENV = "CHANPRED_OUTPUT_DIR"
CONFIG_SECTIONS = ("scenario", "train", "model")


class CliError(Exception):
    """A user-facing failure; reported without a traceback."""


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


# -- configuration ------------------------------------------------------
def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise CliError("config root must be an object")
    unknown = set(cfg) - set(CONFIG_SECTIONS)
    if unknown:
        raise CliError(f"unknown config sections {sorted(unknown)}; allowed {CONFIG_SECTIONS}")
    return cfg


def _build(cls, section: dict, overrides: dict, what: str):
    names = {f.name for f in fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise CliError(f"unknown {what} keys {sorted(unknown)}")
    merged = {**section, **{k: v for k, v in overrides.items() if v is not None}}
    try:
        return cls(**merged)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad {what} config: {exc}") from exc


def scenario_from(cfg: dict, args) -> ScenarioConfig:
    return _build(ScenarioConfig, cfg.get("scenario", {}),
                  {"n_frames": getattr(args, "frames", None), "seed": getattr(args, "seed", None)}, "scenario")


def train_from(cfg: dict, args) -> TrainConfig:
    over = {k: getattr(args, k, None) for k in ("epochs", "batch_size", "lr", "length", "delta", "snr_db", "seed")}
    if getattr(args, "fresh_noise", False):
        over["fresh_noise"] = True
    return _build(TrainConfig, cfg.get("train", {}), over, "train")


def write_resolved(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _guard(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise CliError(f"{path} exists; pass --force to overwrite")


def _dataset(args, cfg: dict):
    if args.dataset:
        try:
            return dataset_io.load(args.dataset)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot load dataset {args.dataset}: {exc}") from exc
    scen = scenario_from(cfg, args)
    log.info("no --dataset given; generating %d frames in memory (seed %d)", scen.n_frames, scen.seed)
    return generate_dataset(scen)


def _length_pairs(text: str | None) -> tuple[tuple[int, int], ...]:
    if not text:
        return LENGTH_GRID
    try:
        return tuple(tuple(int(v) for v in part.split(":")) for part in text.split(","))
    except ValueError as exc:
        raise CliError(f"--lengths expects 'l:delta,l:delta', got {text!r}") from exc


# -- subcommands --------------------------------------------------------
def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    scen = scenario_from(cfg, args)
    out = Path(args.out) if args.out else default_output_dir() / f"dataset_seed{scen.seed}.bin"
    _guard(out, args.force)
    ds = generate_dataset(scen)
    dataset_io.save(ds, out, overwrite=True)
    write_resolved(out.with_name(out.name + ".config.json"), {"subcommand": "generate", "scenario": asdict(scen)})
    print(f"wrote {out} ({len(ds)} frames, split {ds.split_counts()})")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    tcfg = train_from(cfg, args)
    out_dir = Path(args.out) if args.out else default_output_dir()
    stem = f"{args.family}_snr{tcfg.snr_db:g}_seed{tcfg.seed}"
    ck_path = out_dir / f"{stem}.ckpt"
    _guard(ck_path, args.force)
    ds = _dataset(args, cfg)
    data = prepare(ds, tcfg.snr_db, noise_seed=tcfg.seed, keep_clean_train=tcfg.fresh_noise)
    try:
        model, result = train_family(args.family, data, tcfg, cfg.get("model"))
    except (KeyError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    extra = {"snr_db": tcfg.snr_db, "train": asdict(tcfg)}
    if result is not None:
        extra.update(best_epoch=result.best_epoch, best_val_nmse=result.best_val_nmse)
    ckpt.save(model, ck_path, extra=extra)
    if result is not None:
        hist = out_dir / f"{stem}.history.dat"
        with hist.open("w") as fh:
            fh.write("# epoch train_loss val_nmse\n")
            for h in result.history:
                fh.write(f"{h['epoch']} {h['train_loss']:.8g} {h['val_nmse']:.8g}\n")
    write_resolved(out_dir / f"{stem}.config.json",
                   {"subcommand": "train", "family": args.family, "dataset": args.dataset,
                    "scenario": asdict(ds.scenario), "train": asdict(tcfg), "model": cfg.get("model", {})})
    msg = f"wrote {ck_path}"
    if result is not None:
        msg += f" (best epoch {result.best_epoch}, val NMSE {result.best_val_nmse:.5g})"
    print(msg)
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    model = None
    if args.checkpoint:
        try:
            model, extra = ckpt.load(args.checkpoint)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot load checkpoint {args.checkpoint}: {exc}") from exc
        if args.snr_db is None and "snr_db" in extra:
            args.snr_db = extra["snr_db"]  # score at the SNR the model was trained for
    tcfg = train_from(cfg, args)
    ds = _dataset(args, cfg)
    data = prepare(ds, tcfg.snr_db, noise_seed=tcfg.seed)
    if model is None:
        if args.baseline == "mar":
            model = fit_mar(data, tcfg.length)
        elif args.baseline == "last-value-hold":
            model = LastValueHold()
        else:
            raise CliError("evaluate needs --checkpoint or --baseline")
    rec = evaluate(model, data, tcfg.length, tcfg.delta, tcfg.seed, checkpoint=args.checkpoint or "")
    csv_path = Path(args.csv) if args.csv else default_output_dir() / "results.csv"
    CsvAppender(csv_path).append(rec)
    write_resolved(csv_path.with_name(csv_path.stem + ".evaluate.config.json"),
                   {"subcommand": "evaluate", "checkpoint": args.checkpoint, "baseline": args.baseline,
                    "dataset": args.dataset, "train": asdict(tcfg)})
    print(",".join(str(v) for v in rec.row()))
    return 0 if rec.nmse != "failed" else 1


def write_gnuplot(records, path: Path, families, snrs, lengths) -> None:
    """One block per (l, delta) pair, rows = SNR, columns = families; blocks
    are separated by two blank lines so gnuplot's ``index`` selects them."""
    table = {(r.model, r.snr_db, r.l, r.delta): r.nmse for r in records}
    with path.open("w") as fh:
        for b, (length, delta) in enumerate(lengths):
            if b:
                fh.write("\n\n")
            fh.write(f"# l={length} delta={delta}\n# snr_db {' '.join(families)}\n")
            for snr in snrs:
                vals = []
                for fam in families:
                    v = table.get((fam, float(snr), length, delta), "NaN")
                    vals.append(f"{v:.8g}" if isinstance(v, float) else "NaN")
                fh.write(f"{snr:g} {' '.join(vals)}\n")


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    tcfg = train_from(cfg, args)
    families = tuple(args.families.split(",")) if args.families else FAMILIES + ("last-value-hold",)
    bad = [f for f in families if f not in FAMILIES + ("last-value-hold",)]
    if bad:
        raise CliError(f"unknown families {bad}")
    snrs = tuple(float(s) for s in args.snrs.split(",")) if args.snrs else SNR_GRID
    lengths = _length_pairs(args.lengths)
    out_dir = Path(args.out) if args.out else default_output_dir()
    csv_path = out_dir / f"sweep_seed{tcfg.seed}.csv"
    _guard(csv_path, args.force)
    if csv_path.exists():
        csv_path.unlink()
    ds = _dataset(args, cfg)
    write_resolved(out_dir / f"sweep_seed{tcfg.seed}.config.json",
                   {"subcommand": "sweep", "families": families, "snrs": snrs, "lengths": lengths,
                    "dataset": args.dataset, "scenario": asdict(ds.scenario), "train": asdict(tcfg),
                    "model": cfg.get("model", {})})
    records = sweep(families, snrs, lengths, ds, tcfg, csv_path=csv_path,
                    checkpoint_dir=out_dir / "checkpoints", model_overrides=cfg.get("model"))
    write_gnuplot(records, out_dir / f"sweep_seed{tcfg.seed}.dat", families, snrs, lengths)
    failed = [r for r in records if r.nmse == "failed"]
    print(f"wrote {csv_path} ({len(records)} rows, {len(failed)} failed)")
    return 1 if failed else 0


def cmd_paramcount(args) -> int:
    families = TRAINABLE if args.family == "all" else (args.family,)
    for fam in families:
        if fam not in TRAINABLE:
            raise CliError(f"paramcount: {fam!r} is not a trainable family")
        print(f"== {fam}")
        for line in param_report(fam).lines():
            print(line)
    return 0


def cmd_gradcheck(args) -> int:
    families = TRAINABLE if args.family == "all" else (args.family,)
    ok = True
    for fam in families:
        if fam not in TRAINABLE:
            raise CliError(f"gradcheck: {fam!r} is not a trainable family")
        err = gradcheck_family(fam, seed=args.seed or 0, probes=args.probes)
        passed = err < args.tol
        ok &= passed
        print(f"{fam:<22s} max_rel_err={err:.3e} {'PASS' if passed else 'FAIL'}")
    return 0 if ok else 1


# -- parser -------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chanpred", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, train_flags=True):
        sp.add_argument("--config", help="JSON config with scenario/train/model sections")
        sp.add_argument("--seed", type=int)
        if train_flags:
            sp.add_argument("--dataset", help="dataset file from `generate` (default: generate in memory)")
            sp.add_argument("--frames", type=int, help="frames to generate when --dataset is absent")
            sp.add_argument("--snr", dest="snr_db", type=float)
            sp.add_argument("--length", type=int)
            sp.add_argument("--delta", type=int)
            sp.add_argument("--epochs", type=int)
            sp.add_argument("--batch-size", type=int)
            sp.add_argument("--lr", type=float)
            sp.add_argument("--fresh-noise", action="store_true", help="redraw training noise every epoch")

    g = sub.add_parser("generate", help="simulate a dataset")
    common(g, train_flags=False)
    g.add_argument("--frames", type=int)
    g.add_argument("--out")
    g.add_argument("--force", action="store_true")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train one family at one SNR")
    t.add_argument("family", choices=FAMILIES)
    common(t)
    t.add_argument("--out", help="output directory")
    t.add_argument("--force", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a checkpoint or baseline, append one CSV row")
    common(e)
    e.add_argument("--checkpoint")
    e.add_argument("--baseline", choices=("mar", "last-value-hold"))
    e.add_argument("--csv")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", help="train per SNR and evaluate every length pair")
    common(s)
    s.add_argument("--families", help="comma-separated (default: all)")
    s.add_argument("--snrs", help="comma-separated dB values (default: -5..20 step 5)")
    s.add_argument("--lengths", help="l:delta pairs, e.g. 16:4,8:2,14:6")
    s.add_argument("--out", help="output directory")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("paramcount", help="per-block parameter audit vs published totals")
    c.add_argument("family", choices=TRAINABLE + ("all",))
    c.set_defaults(func=cmd_paramcount)

    k = sub.add_parser("gradcheck", help="finite-difference gradient check on a tiny float64 model")
    k.add_argument("family", choices=TRAINABLE + ("all",))
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--probes", type=int, default=60)
    k.add_argument("--tol", type=float, default=GRADCHECK_TOL)
    k.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"chanpred {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any hard failure must give a nonzero exit
        log.exception("chanpred %s failed", args.command)
        print(f"chanpred {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
