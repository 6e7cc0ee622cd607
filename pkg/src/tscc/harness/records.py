"""Sweep records and their CSV form.

Columns, in order:

    method, seed, snr_db, quality, compression_ratio, task_score,
    action_mse, psnr, ms_ssim, failure_rate

``quality`` is the DCT quantisation scale for digital rows and empty for
neural codecs.  Floats are written with ``repr`` (shortest round-trip form),
so a parse of the file recovers every value exactly; +inf PSNR is ``inf``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass
from pathlib import Path
from typing import Iterable

COLUMNS = ("method", "seed", "snr_db", "quality", "compression_ratio", "task_score",
           "action_mse", "psnr", "ms_ssim", "failure_rate")


@dataclass(frozen=True)
class SweepRecord:
    method: str
    seed: int
    snr_db: float
    quality: float | None
    compression_ratio: float
    task_score: float
    action_mse: float
    psnr: float
    ms_ssim: float
    failure_rate: float

    def __post_init__(self):
        for name in ("snr_db", "compression_ratio", "task_score", "action_mse", "ms_ssim", "failure_rate"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not (math.isfinite(self.psnr) or self.psnr == math.inf):
            raise ValueError("psnr must be finite or +inf")
        if not 0 <= self.task_score <= 1 or not 0 <= self.failure_rate <= 1 or not 0 <= self.ms_ssim <= 1:
            raise ValueError("score fields must lie in [0, 1]")
        if self.action_mse < 0 or self.compression_ratio <= 0:
            raise ValueError("action_mse must be >= 0 and compression_ratio > 0")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if v == math.inf:
            return "inf"
        return repr(v)
    return str(v)


def records_to_csv(records: Iterable[SweepRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        w.writerow([_cell(v) for v in astuple(r)])
    return buf.getvalue()


def emit_csv(records: Iterable[SweepRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(records_to_csv(records))
    return path


def parse_csv(text: str) -> list[SweepRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise ValueError("unexpected CSV header")
    out = []
    for row in rows[1:]:
        method, seed, snr, quality, *rest = row
        out.append(SweepRecord(method, int(seed), float(snr), float(quality) if quality else None,
                               *(float(v) for v in rest)))
    return out


def read_csv(path) -> list[SweepRecord]:
    return parse_csv(Path(path).read_text())
