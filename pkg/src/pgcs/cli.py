"""Command-line front end: ``pgcs train | eval | export-constellation | selftest``.

Every command writes ``manifest.json`` next to its outputs.  Exit codes:
0 success, 1 self-test failure, 2 usage or config error, 3 numerical failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, bundled_config, load_config
from .evalsuite import DEFAULT_LINEWIDTHS_HZ, DEFAULT_SNR_DB, SweepSpec, export_constellation_sweep, run_sweep, write_table
from .shaping import MODES, QAM_DEMAPPER_ONLY, ROBUST
from .trainer import NonFiniteLossError, TrainState, train

log = logging.getLogger("pgcs")

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3, 4
OUTPUT_ENV = "PGCS_OUTPUT_DIR"
METRICS_HEADER = "epoch batch_size temperature bce_bits bmi_bits"
BASELINE_MODES = {"qam": QAM_DEMAPPER_ONLY, "robust": ROBUST}


class UsageError(Exception):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _out_dir(arg) -> Path:
    out = Path(arg) if arg else Path(os.environ.get(OUTPUT_ENV, "pgcs-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, argv, started, digest, seed, outputs, extra=None) -> Path:
    manifest = {
        "command": ["pgcs", *argv],
        "config_digest": digest,
        "seed": seed,
        "version": __version__,
        "started": started,
        "finished": _now(),
        "outputs": sorted(str(p) for p in outputs),
    }
    manifest.update(extra or {})
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _resolve_config(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    if name in ("paper", "desk", "paper.toml", "desk.toml"):
        return bundled_config(name.removesuffix(".toml"))
    raise UsageError(f"config file not found: {name}")


def format_metrics_row(m) -> str:
    return f"{m.epoch} {m.batch_size} {m.temperature:.6g} {m.bce_bits:.6f} {m.bmi_bits:.6f}"


def cmd_train(args, argv) -> int:
    started = _now()
    overrides = {
        "epochs": args.epochs,
        "m": args.m,
        "seed": args.seed,
        "mode": args.mode,
        "batches_per_epoch": args.batches_per_epoch,
        "batch_start": args.batch_start,
        "batch_end": args.batch_end,
        "learning_rate": args.learning_rate,
    }
    config, digest = load_config(_resolve_config(args.config), overrides)
    out = _out_dir(args.out)
    metrics_path = out / "metrics.txt"
    state = None
    if args.resume:
        state = load_checkpoint(args.resume)
        if state.config != config:
            raise UsageError("--resume checkpoint was trained with a different configuration")
    elif metrics_path.exists():
        metrics_path.unlink()
    if not metrics_path.exists():
        metrics_path.write_text(METRICS_HEADER + "\n", encoding="utf-8")

    ckpt = out / "checkpoint.pgcs"
    with open(metrics_path, "a", encoding="utf-8", newline="\n") as fh:

        def on_epoch(st: TrainState, metrics) -> None:
            fh.write(format_metrics_row(metrics) + "\n")
            fh.flush()
            if args.checkpoint_every and st.epoch % args.checkpoint_every == 0:
                save_checkpoint(st, ckpt)

        state, _ = train(config, state, on_epoch=on_epoch)
    save_checkpoint(state, ckpt)
    _write_manifest(out, argv, started, digest, config.seed, [ckpt, metrics_path], {"mode": config.mode})
    print(f"wrote {ckpt} ({state.epoch} epochs, mode={config.mode})")
    return EXIT_OK


def _load_for_eval(args):
    state = load_checkpoint(args.checkpoint)
    if args.m is not None and state.model.m != args.m:
        raise UsageError(f"checkpoint has m={state.model.m}, but --m {args.m} was requested")
    if getattr(args, "baseline", None):
        wanted = BASELINE_MODES[args.baseline]
        if state.model.mode != wanted:
            raise UsageError(f"--baseline {args.baseline} needs a {wanted} checkpoint, got {state.model.mode}")
    return state


def cmd_eval(args, argv) -> int:
    started = _now()
    state = _load_for_eval(args)
    config = state.config
    if not args.snr or not args.linewidth:
        raise UsageError("--snr and --linewidth need at least one value")
    spec = SweepSpec(
        snr_db=args.snr,
        linewidth_hz=args.linewidth,
        symbols_per_point=args.symbols,
        seed=args.seed,
        misestimation_offset_db=args.offset_db,
        symbol_rate=config.symbol_rate,
        bps=config.bps,
        frame_length=args.frame_length or config.batch_end,
    )
    result = run_sweep(state.model, spec, jobs=args.jobs)
    out = _out_dir(args.out)
    table = out / (args.name or "results.txt")
    write_table(result, table)
    sys.stdout.write(table.read_text(encoding="utf-8"))
    _write_manifest(
        out, argv, started, _sha256_file(args.checkpoint), args.seed, [table], {"sweep": result.metadata}
    )
    return EXIT_OK


def cmd_export(args, argv) -> int:
    started = _now()
    state = _load_for_eval(args)
    if not args.snr or not args.linewidth:
        raise UsageError("--snr and --linewidth need at least one value")
    out = _out_dir(args.out)
    paths = export_constellation_sweep(state.model, args.snr, args.linewidth, out, state.config.symbol_rate)
    _write_manifest(out, argv, started, _sha256_file(args.checkpoint), state.config.seed, paths)
    print(f"wrote {len(paths)} constellation files to {out}")
    return EXIT_OK


def cmd_selftest(args, argv) -> int:
    from .selftest import run_selftest

    results = run_selftest(args.inject_fault)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failed checks: " + ", ".join(failed))
        return EXIT_FAILED
    print("all checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pgcs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pgcs {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--config", default="desk", help="TOML file, or 'paper' / 'desk' for the bundled ones")
    p.add_argument("--epochs", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--batches-per-epoch", type=int)
    p.add_argument("--batch-start", type=int)
    p.add_argument("--batch-end", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--resume", metavar="CHECKPOINT", help="continue from a checkpoint")
    p.add_argument("--checkpoint-every", type=int, default=0, metavar="EPOCHS")
    p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV} or ./pgcs-out)")
    p.set_defaults(func=cmd_train)

    def add_model_args(p):
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--m", type=int, help="expected bits per symbol")
        p.add_argument("--out")

    p = sub.add_parser("eval", help="BMI over an SNR x linewidth grid with the hard BPS")
    add_model_args(p)
    p.add_argument("--snr", type=float, nargs="*", default=list(DEFAULT_SNR_DB), metavar="DB")
    p.add_argument("--linewidth", type=float, nargs="*", default=list(DEFAULT_LINEWIDTHS_HZ), metavar="HZ")
    p.add_argument("--symbols", type=int, default=1 << 17, help="symbols per grid point")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--offset-db", type=float, default=0.0, help="assumed minus true SNR")
    p.add_argument("--baseline", choices=sorted(BASELINE_MODES), help="require a baseline checkpoint")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--frame-length", type=int, help="symbols per frame (default: the training batch_end)")
    p.add_argument("--name", help="result file name (default results.txt)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-constellation", help="write Tx constellations for a parameter grid")
    add_model_args(p)
    p.add_argument("--snr", type=float, nargs="*", default=[18.0], metavar="DB")
    p.add_argument("--linewidth", type=float, nargs="*", default=list(DEFAULT_LINEWIDTHS_HZ), metavar="HZ")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("selftest", help="oracle and gradient checks")
    p.add_argument("--inject-fault", choices=["soft-bps-grad"], help="test hook: corrupt a component")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args, argv)
    except (UsageError, ConfigError) as exc:
        print(f"pgcs: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteLossError as exc:
        print(f"pgcs: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CheckpointError, OSError) as exc:
        print(f"pgcs: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"pgcs: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
