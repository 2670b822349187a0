"""Command-line front end: dataset generation, training runs, and the ablation table.

Commands
--------
gen-data   write a phantom dataset file
train      run one training configuration, write checkpoint + metric CSVs
ablation   run the five standard configurations plus a full-label reference
           row and emit one CSV + markdown table

``SSRL_PRECISION`` (f32 | f64) selects scalar precision, ``SSRL_BACKEND``
(auto | cython | numpy) the convolution backend. Exit codes: 0 success,
1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from . import kernels
from .errors import DataFormatError
from .metrics import CSV_HEADER, MetricsReport, csv_row, evaluate, markdown_table
from .phantom import PhantomConfig, generate, load_dataset, save_dataset, split
from .seeding import derive_seed
from .trainer import (TrainConfig, checkpoint_from_result, config_to_dict,
                      save_checkpoint, train)

_PRECISIONS = ("f32", "f64")


def _env_precision(parser: argparse.ArgumentParser) -> str:
    value = os.environ.get("SSRL_PRECISION", "f32")
    if value not in _PRECISIONS:
        parser.error(f"SSRL_PRECISION must be one of {_PRECISIONS}, got {value!r}")
    return value


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _artifact_digest(hashes: dict) -> str:
    lines = "".join(f"{name}:{digest}\n" for name, digest in sorted(hashes.items()))
    return hashlib.sha256(lines.encode("ascii")).hexdigest()


def write_manifest(out_dir: Path, config: dict, dataset_path, outputs,
                   duration_s: float, extra: dict | None = None) -> Path:
    """Record config, input digest, and per-output digests for rerun checks."""
    out_hashes = {Path(p).name: _sha256(Path(p)) for p in outputs}
    manifest = {
        "config": config,
        "dataset": {"path": str(dataset_path), "sha256": _sha256(Path(dataset_path))},
        "outputs": out_hashes,
        "artifact_digest": _artifact_digest(out_hashes),
        "duration_s": duration_s,
        "backend": kernels.backend_name(),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def verify_manifest(out_dir: Path) -> bool:
    """Recompute output digests and compare against the recorded manifest."""
    manifest = json.loads((out_dir / "manifest.json").read_text())
    for name, digest in manifest["outputs"].items():
        if _sha256(out_dir / name) != digest:
            return False
    return manifest["artifact_digest"] == _artifact_digest(manifest["outputs"])


# --------------------------------------------------------------------------
# gen-data
# --------------------------------------------------------------------------

def cmd_gen_data(args, parser) -> int:
    if args.n < 1:
        parser.error("--n must be >= 1")
    if args.size % 4 or args.size < 8:
        parser.error("--size must be >= 8 and divisible by 4")
    cfg = PhantomConfig(size=args.size, intensity_noise=args.noise,
                        geometry_jitter=args.jitter, seed=args.seed)
    samples = generate(cfg, args.n)
    try:
        save_dataset(samples, args.out)
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.n} phantoms (size {args.size}x{args.size}, "
          f"seed {args.seed}) to {args.out}")
    return 0


# --------------------------------------------------------------------------
# train
# --------------------------------------------------------------------------

def _load_test_set(args, train_size: int):
    if args.test_data:
        return load_dataset(args.test_data)
    cfg = PhantomConfig(size=train_size, seed=derive_seed(args.seed, "test"))
    return generate(cfg, args.test_n)


def _dice_line(report: MetricsReport) -> str:
    from .phantom import CLASS_NAMES
    parts = [f"{name}={d:.3f}" for name, d in zip(CLASS_NAMES, report.dice)]
    parts.append(f"mean={report.mean_dice:.3f}")
    parts.append(f"fg={report.mean_foreground_dice:.3f}")
    parts.append(f"acc={report.pixel_accuracy:.3f}")
    return "dice: " + " ".join(parts)


def _write_logs(out_dir: Path, result) -> list:
    from .phantom import CLASS_NAMES
    train_log = out_dir / "train_log.csv"
    with open(train_log, "w") as fh:
        fh.write("step,loss_x,loss_u,loss\n")
        for rec in result.steps:
            lu = "" if rec.loss_u is None else repr(rec.loss_u)
            fh.write(f"{rec.step},{rec.loss_x!r},{lu},{rec.loss!r}\n")
    eval_log = out_dir / "eval_log.csv"
    with open(eval_log, "w") as fh:
        fh.write("step," + ",".join(CLASS_NAMES) + ",mean,foreground,pixel_accuracy\n")
        for step, report in result.evals:
            cells = [f"{d:.6f}" for d in report.dice]
            cells += [f"{report.mean_dice:.6f}", f"{report.mean_foreground_dice:.6f}",
                      f"{report.pixel_accuracy:.6f}"]
            fh.write(f"{step}," + ",".join(cells) + "\n")
    return [train_log, eval_log]


def _train_config_from_args(args, precision: str, mode: str | None = None) -> TrainConfig:
    return TrainConfig(
        mode=mode or args.mode, steps=args.steps, lr=args.lr,
        batch_labeled=args.batch_labeled, batch_unlabeled=args.batch_unlabeled,
        tau=args.tau, beta=args.beta, seed=args.seed,
        eval_every=args.eval_every, precision=precision,
    )


def cmd_train(args, parser) -> int:
    precision = _env_precision(parser)
    if not 0.0 < args.labeled_fraction <= 1.0:
        parser.error("--labeled-fraction must be in (0, 1]")
    t0 = time.perf_counter()
    samples = load_dataset(args.data)
    labeled, unlabeled = split(samples, args.labeled_fraction, args.seed)
    if args.mode in ("semi_threshold", "semi_bce") and len(unlabeled) == 0:
        print("warning: no unlabeled data at labeled-fraction "
              f"{args.labeled_fraction}; running supervised weak_aug instead",
              file=sys.stderr)
    test_set = _load_test_set(args, samples[0].image.shape[0])

    cfg = _train_config_from_args(args, precision)
    result = train(cfg, labeled, unlabeled, test_set=test_set)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "checkpoint.ssck"
    save_checkpoint(ckpt_path, checkpoint_from_result(result))
    metrics_path = out_dir / "metrics.csv"
    metrics_path.write_text(CSV_HEADER + "\n"
                            + csv_row(args.mode, result.final_report) + "\n")
    outputs = [ckpt_path, metrics_path] + _write_logs(out_dir, result)
    write_manifest(out_dir, config_to_dict(cfg), args.data, outputs,
                   time.perf_counter() - t0,
                   extra={"labeled_fraction": args.labeled_fraction,
                          "guard_trips": result.guard_trips,
                          "fell_back_to_supervised": result.fell_back_to_supervised,
                          "precision": precision})
    print(_dice_line(result.final_report))
    return 0


# --------------------------------------------------------------------------
# ablation
# --------------------------------------------------------------------------

ABLATION_ROWS = ("baseline", "weak_aug", "strong_aug",
                 "semi_threshold", "semi_bce", "baseline_full")


def cmd_ablation(args, parser) -> int:
    precision = _env_precision(parser)
    if not 0.0 < args.labeled_fraction <= 1.0:
        parser.error("--labeled-fraction must be in (0, 1]")
    t0 = time.perf_counter()
    samples = load_dataset(args.data)
    labeled, unlabeled = split(samples, args.labeled_fraction, args.seed)
    test_set = _load_test_set(args, samples[0].image.shape[0])
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows: list = []
    guard_trips = 0
    for name in ABLATION_ROWS:
        mode = "baseline" if name == "baseline_full" else name
        cfg = _train_config_from_args(args, precision, mode=mode)
        row_labeled = samples if name == "baseline_full" else labeled
        row_unlabeled = unlabeled if mode.startswith("semi") else None
        try:
            result = train(cfg, row_labeled, row_unlabeled, test_set=test_set)
        except Exception as exc:
            partial = out_dir / "ablation_partial.csv"
            _write_table(partial, rows)
            print(f"error: row {name!r} failed ({exc}); "
                  f"partial results in {partial}", file=sys.stderr)
            return 1
        guard_trips += result.guard_trips
        rows.append((name, result.final_report))
        print(f"{name}: {_dice_line(result.final_report)}")

    csv_path = out_dir / "ablation.csv"
    _write_table(csv_path, rows)
    md_path = out_dir / "ablation.md"
    md_path.write_text(markdown_table(rows))
    write_manifest(out_dir, {"steps": args.steps, "seed": args.seed,
                             "labeled_fraction": args.labeled_fraction,
                             "tau": args.tau, "beta": args.beta},
                   args.data, [csv_path, md_path],
                   time.perf_counter() - t0,
                   extra={"guard_trips": guard_trips, "precision": precision})
    return 0


def _write_table(path: Path, rows) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for name, report in rows:
            fh.write(csv_row(name, report) + "\n")


# --------------------------------------------------------------------------

def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--tau", type=float, default=0.95)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--labeled-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-labeled", type=int, default=8)
    p.add_argument("--batch-unlabeled", type=int, default=8)
    p.add_argument("--eval-every", type=int, default=500)
    p.add_argument("--test-data", default=None,
                   help="dataset file for evaluation (default: generated hold-out)")
    p.add_argument("--test-n", type=int, default=50,
                   help="hold-out size when --test-data is not given")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssrl", description="semi-supervised phantom segmentation trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a phantom dataset file")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--noise", type=float, default=0.03)
    g.add_argument("--jitter", type=float, default=0.08)

    t = sub.add_parser("train", help="run one training configuration")
    t.add_argument("--data", required=True)
    t.add_argument("--mode", required=True,
                   choices=("baseline", "weak_aug", "strong_aug",
                            "semi_threshold", "semi_bce"))
    t.add_argument("--out", required=True)
    _add_train_flags(t)

    a = sub.add_parser("ablation", help="run the six-row ablation table")
    a.add_argument("--data", required=True)
    a.add_argument("--out-dir", required=True)
    _add_train_flags(a)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"gen-data": cmd_gen_data, "train": cmd_train,
                "ablation": cmd_ablation}
    try:
        return handlers[args.command](args, parser)
    except (DataFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
