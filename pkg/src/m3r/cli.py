"""Command-line entry point: ``m3r <command> ...``.

Exit status is 0 on success, otherwise the ``exit_code`` of the raised
:class:`~m3r.errors.M3RError` category (2 config, 3 format, 4 grid,
5 insufficient data, 6 alignment, 7 invalid value, 9 failed audit).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .aligner import HALF_WINDOW, audit_container, build_dataset, read_container, write_container
from .config import HYPER_KEYS, MODEL_KEYS, SETTINGS, RunConfig, read_kv_file
from .errors import ConfigError, M3RError
from .evalkit import compute_metrics, metrics_csv, persistence_baseline, run_ablation
from .gridproc import read_frames, write_frames
from .stationproc import VARIABLES, process_station, read_station_csv, write_station_csv

log = logging.getLogger("m3r")

AUDIT_FAILED = 9
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = os.environ.get("M3R_LOG", "warn").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _need_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"input file not found: {p}")
    return p


def _need_dir(path) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise ConfigError(f"input directory not found: {p}")
    return p


def _out_path(path) -> Path:
    p = Path(path)
    if not p.parent.exists():
        raise ConfigError(f"output directory does not exist: {p.parent}")
    return p


def _settings(args) -> RunConfig:
    overrides = {k: getattr(args, k, None) for k in SETTINGS}
    return RunConfig.build(args.config, overrides)


def _model_config(cfg: RunConfig, frames_shape):
    from .m3rnet import ModelConfig

    kw = cfg.subset(MODEL_KEYS)
    kw["pe_per_token"] = bool(kw["pe_per_token"])
    H, W = frames_shape
    return ModelConfig(T_in=HALF_WINDOW, H=H, W=W, horizon=HALF_WINDOW, D=len(VARIABLES), **kw)


def _hyper(cfg: RunConfig):
    from .m3rnet.train import Hyper

    return Hyper(**cfg.subset(HYPER_KEYS))


# --- commands ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    from .synth import SynthSpec, write_corpus

    values = read_kv_file(_need_file(args.spec))
    if args.seed is not None:
        values["seed"] = str(args.seed)
    spec = SynthSpec.from_dict(values)
    info = write_corpus(spec, args.out)
    print(f"wrote {info['volumes']} volumes and {info['pws_rows']} station rows to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    from .pipeline import ingest_files

    cfg = _settings(args)
    src = _need_dir(args.gvol_dir)
    out = _out_path(args.out)
    paths = sorted(src.glob("*.gvol"))
    if not paths:
        raise ConfigError(f"no .gvol files in {src}")
    if cfg["target_lat"] is None or cfg["target_lon"] is None:
        raise ConfigError("target_lat and target_lon are required (flag or config file)")
    series = ingest_files(paths, cfg["target_lat"], cfg["target_lon"], cfg["roi_size"], cfg["step_seconds"], cfg["jobs"])
    write_frames(out, series)
    print(f"wrote {len(series)} regular frames to {out}")
    return 0


def cmd_fill(args) -> int:
    cfg = _settings(args)
    src = _need_file(args.pws_csv)
    out = _out_path(args.out)
    series = read_station_csv(src)
    filled, report = process_station(series, cfg["window_hours"])
    write_station_csv(out, filled)
    Path(str(out) + ".violations.txt").write_text(report.to_text(), encoding="utf-8")
    print(f"filled {len(filled)} rows; {len(report)} constraint violations repaired")
    return 0


def cmd_align(args) -> int:
    cfg = _settings(args)
    frames = read_frames(_need_file(args.frames))
    pws = read_station_csv(_need_file(args.pws))
    out = _out_path(args.out)
    split = build_dataset(frames, pws, cfg["threshold"], cfg["train_frac"])
    write_container(out, split)
    Path(str(out) + ".report.txt").write_text(split.report_text(), encoding="utf-8")
    print(f"wrote {len(split.sequences)} sequences ({len(split.train)} train) to {out}; dropped {split.n_dropped}")
    return 0


def cmd_train(args) -> int:
    from .m3rnet.checkpoint import save_checkpoint
    from .m3rnet.train import train

    cfg = _settings(args)
    data = read_container(_need_file(args.dataset))
    out = _out_path(args.out)
    loss_out = _out_path(args.loss_out or str(out) + ".loss.csv")
    model_cfg = _model_config(cfg, data.sequences[0].frames.shape[1:])
    result = train(data, model_cfg, _hyper(cfg))
    save_checkpoint(out, result.params, result.stats)
    lines = ["epoch,loss"] + [f"{k + 1},{v:.6f}" for k, v in enumerate(result.history)]
    loss_out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"trained {result.params.count()} parameters; final loss {result.history[-1]:.4f}")
    return 0


def cmd_eval(args) -> int:
    from .m3rnet.checkpoint import load_checkpoint
    from .m3rnet.train import make_batch, predict

    data = read_container(_need_file(args.dataset))
    params, stats = load_checkpoint(_need_file(args.checkpoint))
    out = _out_path(args.out)
    if not data.test:
        raise ConfigError(f"{args.dataset}: test split is empty")
    pred = predict(params, data.test, stats)
    batch = make_batch(data.test, stats, params.config.T_in)
    rows = [
        (params.config.variant, compute_metrics(pred, batch.target)),
        ("persistence", compute_metrics(persistence_baseline(batch, stats), batch.target)),
    ]
    out.write_text(metrics_csv(rows), encoding="utf-8")
    if args.series_out:
        lines = ["index,actual,predicted"]
        for k, (a, p) in enumerate(zip(batch.target.ravel(), pred.ravel())):
            lines.append(f"{k},{a:.6f},{p:.6f}")
        _out_path(args.series_out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(out.read_text(encoding="utf-8"), end="")
    return 0


def cmd_ablate(args) -> int:
    cfg = _settings(args)
    data = read_container(_need_file(args.dataset))
    out = _out_path(args.out)
    model_cfg = _model_config(cfg, data.sequences[0].frames.shape[1:])
    _, text = run_ablation(data, model_cfg, _hyper(cfg))
    out.write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_plot(args) -> int:
    from .plot import plot_csv

    plot_csv(_need_file(args.csv), _out_path(args.out), args.title)
    print(f"wrote {args.out}")
    return 0


def cmd_audit(args) -> int:
    paths = [_need_file(p) for p in args.containers]
    failed = 0
    for p in paths:
        result = audit_container(p)
        status = "OK" if result.ok else "FAIL"
        print(f"{status} {p}: {result.n_seq} sequences")
        for problem in result.problems:
            print(f"  {problem}")
        failed += not result.ok
    return AUDIT_FAILED if failed else 0


# --- parser ---------------------------------------------------------------------------

def _add_settings(parser, keys) -> None:
    for key in keys:
        kind, default, text = SETTINGS[key]
        parser.add_argument(
            f"--{key.replace('_', '-')}", dest=key, type=kind, default=None,
            help=f"{text} (default: {default})",
        )  # fmt: skip


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value settings file; command-line flags take precedence")
    common.add_argument("--seed", type=int, default=None, help="random seed (default: 0)")
    common.add_argument("--jobs", type=int, default=None, help="worker threads for parallel file work (default: 1)")

    parser = argparse.ArgumentParser(prog="m3r", description="Multimodal radar + station rainfall nowcasting.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic GVOL + PWS corpus")
    p.add_argument("spec", help="key=value synthetic corpus settings file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="GVOL volumes -> regular composite frame store")
    p.add_argument("gvol_dir", help="directory of .gvol files")
    p.add_argument("--out", required=True, help="output frame store (.m3rf)")
    _add_settings(p, ("target_lat", "target_lon", "roi_size", "step_seconds"))
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fill", parents=[common], help="gap-fill and validate a PWS CSV")
    p.add_argument("pws_csv", help="station CSV")
    p.add_argument("--out", required=True, help="filled CSV; violation report goes to <out>.violations.txt")
    _add_settings(p, ("window_hours",))
    p.set_defaults(func=cmd_fill)

    p = sub.add_parser("align", parents=[common], help="select events and write an M3RD dataset")
    p.add_argument("frames", help="frame store from 'ingest'")
    p.add_argument("pws", help="filled station CSV from 'fill'")
    p.add_argument("--out", required=True, help="output container (.m3rd); drop report goes to <out>.report.txt")
    _add_settings(p, ("threshold", "train_frac"))
    p.set_defaults(func=cmd_align)

    model_keys = [k for k in MODEL_KEYS] + [k for k in HYPER_KEYS if k != "seed"]

    p = sub.add_parser("train", parents=[common], help="train on the train split, write an M3RC checkpoint")
    p.add_argument("dataset", help="M3RD container")
    p.add_argument("--out", required=True, help="output checkpoint (.m3rc)")
    p.add_argument("--loss-out", help="per-epoch loss CSV (default: <out>.loss.csv)")
    _add_settings(p, model_keys)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score a checkpoint on the test split")
    p.add_argument("dataset", help="M3RD container")
    p.add_argument("checkpoint", help="M3RC checkpoint")
    p.add_argument("--out", required=True, help="metrics CSV")
    p.add_argument("--series-out", help="optional CSV of actual vs. predicted values")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common], help="train and score ts_only, no_decoder and full")
    p.add_argument("dataset", help="M3RD container")
    p.add_argument("--out", required=True, help="metrics CSV")
    _add_settings(p, [k for k in model_keys if k != "variant"])
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("plot", parents=[common], help="render a CSV as an SVG chart")
    p.add_argument("csv", help="loss, series or metrics CSV")
    p.add_argument("--out", required=True, help="output .svg")
    p.add_argument("--title", help="chart title (default: the CSV path)")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("audit", parents=[common], help="check stored datasets for alignment and code validity")
    p.add_argument("containers", nargs="+", help="M3RD containers")
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    np.seterr(over="ignore", under="ignore")
    try:
        return args.func(args)
    except M3RError as exc:
        print(f"m3r {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"m3r {args.command}: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
