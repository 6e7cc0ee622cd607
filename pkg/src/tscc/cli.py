"""Command-line entry point: ``tscc <command> --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .baseline.chain import ber_point_bpsk, ber_point_qam, measure_threshold
from .baseline.ldpc import ldpc_build
from .baseline.qam import qam_constellation
from .harness.config import ExperimentConfig, load_config, write_resolved
from .harness.plotting import write_plot_script
from .harness.records import emit_csv
from .harness.sweeps import (MissingCheckpoint, Workbench, evaluate_digital, evaluate_neural, format_summary,
                             load_codecs, load_dataset, run_ratio_sweep, run_snr_sweep, train_methods)

log = logging.getLogger("tscc")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(seed=args.seed, threads=args.threads)


def cmd_gen_data(cfg: ExperimentConfig, out: Path, args) -> int:
    data = load_dataset(cfg)
    path = out / "dataset.npz"
    data.save(path)
    print(f"wrote {len(data)} scenes to {path}")
    return 0


def cmd_train(cfg: ExperimentConfig, out: Path, args) -> int:
    for path in train_methods(cfg, out):
        print(f"wrote {path}")
    return 0


def cmd_sweep_snr(cfg: ExperimentConfig, out: Path, args) -> int:
    records = run_snr_sweep(cfg, out)
    write_plot_script(out)
    print(f"wrote {len(records)} records to {out / 'snr_sweep.csv'}")
    return 0


def cmd_sweep_ratio(cfg: ExperimentConfig, out: Path, args) -> int:
    records, summaries = run_ratio_sweep(cfg, out)
    (out / "bandwidth_saving.csv").write_text(format_summary(summaries))
    write_plot_script(out)
    print(f"wrote {len(records)} records to {out / 'ratio_sweep.csv'}")
    sys.stdout.write(format_summary(summaries))
    return 0


def cmd_eval(cfg: ExperimentConfig, out: Path, args) -> int:
    bench = Workbench.from_config(cfg)
    if args.method == "digital":
        records = [evaluate_digital(bench, args.snr, s) for s in cfg.experiment.seeds]
    else:
        sub = replace(cfg, experiment=replace(cfg.experiment, methods=(args.method,)))
        codecs = load_codecs(sub, out, bench)
        records = [evaluate_neural(bench, codecs[args.method, s], args.method, args.snr, s)
                   for s in cfg.experiment.seeds]
    emit_csv(records, out / f"eval_{args.method}_{args.snr:g}dB.csv")
    for r in records:
        print(json.dumps({"method": r.method, "seed": r.seed, "snr_db": r.snr_db, "psnr": r.psnr,
                          "ms_ssim": r.ms_ssim, "action_mse": r.action_mse, "task_score": r.task_score}))
    return 0


def cmd_ber(cfg: ExperimentConfig, out: Path, args) -> int:
    d, b = cfg.digital, cfg.ber
    code, const = ldpc_build(d.n, d.k_info, d.column_weight, d.code_seed), qam_constellation(d.order)
    seed = cfg.experiment.seeds[0]
    points = []
    for snr in b.grid:
        if b.mode == "qam":
            points.append(ber_point_qam(code, const, snr, b.frames, seed, max_iters=d.max_iters))
        else:
            points.append(ber_point_bpsk(code, snr, b.frames, seed, max_iters=d.max_iters))
    path = out / f"ber_{b.mode}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["snr_db" if b.mode == "qam" else "ebn0_db", "info_bits", "bit_errors", "ber",
                    "frames", "frame_errors", "fer"])
        for p in points:
            w.writerow([repr(p.ebn0_db), p.info_bits, p.bit_errors, repr(p.ber), p.frames, p.frame_errors, repr(p.fer)])
    threshold = measure_threshold(points, b.target_ber)
    print(f"wrote {path}")
    print(f"threshold (BER < {b.target_ber:g}): {'none in grid' if threshold is None else f'{threshold:g} dB'}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "sweep-snr": cmd_sweep_snr,
    "sweep-ratio": cmd_sweep_ratio,
    "eval": cmd_eval,
    "ber": cmd_ber,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tscc", description="Task-oriented source-channel coding simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="INI experiment file (defaults apply when omitted)")
        p.add_argument("--out", type=Path, default=Path("runs/default"), help="output directory")
        p.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
        p.add_argument("--threads", type=int, help="worker threads for independent jobs")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "eval":
            p.add_argument("--method", choices=("tscc", "jscc-rec", "digital"), default="tscc")
            p.add_argument("--snr", type=float, default=0.0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_resolved(cfg, out)
    try:
        return COMMANDS[args.command](cfg, out, args)
    except MissingCheckpoint as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
