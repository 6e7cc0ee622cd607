"""Training, SNR sweeps and compression-ratio sweeps.

Every evaluation job is a pure function of (config, method, snr, seed):
channel noise is drawn from streams keyed by those values, so the CSV is the
same whatever the worker count or completion order.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from ..agent import build_surrogate_agent, coach_act
from ..baseline.chain import run_digital_chain
from ..baseline.dct_codec import CodecQuality
from ..baseline.ldpc import ldpc_build
from ..baseline.qam import qam_constellation
from ..core import STATE_DIM, ChannelConfig, compression_ratio
from ..jscc import JsccCodec, train_tscc, transmit_images
from ..metrics import metric_report
from .checkpoint import load_checkpoint, save_checkpoint
from .config import NEURAL, ExperimentConfig
from .dataset import Dataset, SceneSpec, generate_dataset, load_image_dir
from .records import SweepRecord, emit_csv

log = logging.getLogger(__name__)


class MissingCheckpoint(FileNotFoundError):
    def __init__(self, method: str, seed: int, path: Path):
        super().__init__(f"no checkpoint for method {method!r} (seed {seed}) at {path}; run `train` first")
        self.method = method


def load_dataset(config: ExperimentConfig) -> Dataset:
    ds = config.dataset
    dims = tuple(ds.image_dims)
    if ds.source == "synthetic":
        spec = SceneSpec(dims, tuple(ds.curvature_range), tuple(ds.obstacle_range), tuple(ds.lighting), ds.seed)
        return generate_dataset(spec, ds.count)
    if ds.source == "npz":
        data = Dataset.load(config.dataset_path)
        if data.image_dims != dims:
            raise ValueError(f"dataset dims {data.image_dims} differ from configured {dims}")
        return data
    images, _ = load_image_dir(config.dataset_path, dims)
    if len(images) < 2:
        raise ValueError("image directory must hold at least two decodable images")
    # directory images carry no vehicle state: a neutral state is paired with each
    states = np.zeros((len(images), STATE_DIM))
    return Dataset(np.stack([im.flat() for im in images]), states, dims)


@dataclass
class Workbench:
    """Dataset split, agent and coach targets shared by every job of a run."""

    config: ExperimentConfig
    train: Dataset
    test: Dataset

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "Workbench":
        data = load_dataset(config)
        n_train = min(config.dataset.train_count, len(data) - 1)
        train, test = data.split(n_train)
        if config.eval.eval_count:
            test = test.subset(slice(0, config.eval.eval_count))
        return cls(config, train, test)

    @cached_property
    def agent(self):
        a = self.config.agent
        dims = tuple(self.config.dataset.image_dims)
        if a.kind == "structured":
            return build_surrogate_agent(dims, seed=a.seed, kind="structured", gain=a.gain)
        return build_surrogate_agent(dims, seed=a.seed, kind="dense", output_gain=a.gain)

    @cached_property
    def targets(self) -> np.ndarray:
        return coach_act(self.agent, self.test.images, self.test.states)

    @cached_property
    def digital(self):
        d = self.config.digital
        return ldpc_build(d.n, d.k_info, d.column_weight, d.code_seed), qam_constellation(d.order)

    def prime(self, digital: bool = False) -> "Workbench":
        """Build the lazily cached pieces before worker threads share them."""
        _ = self.targets
        if digital:
            _ = self.digital
        return self

    def agent_info(self) -> dict:
        return {**self.agent.describe(), "checksum": self.agent.checksum()}

    def report(self, received: np.ndarray):
        a_hat = coach_act(self.agent, received, self.test.states)
        dims = self.test.image_dims
        return metric_report(self.test.images.reshape(-1, *dims), received.reshape(-1, *dims),
                             self.targets, a_hat, self.config.eval.tolerance, self.config.eval.ms_ssim_scales)


def checkpoint_path(out_dir, method: str, seed: int) -> Path:
    return Path(out_dir) / "checkpoints" / f"{method}-seed{seed}.ckpt"


def channel_for(config: ExperimentConfig, snr_db: float, seed: int) -> ChannelConfig:
    return ChannelConfig(kind=config.channel.kind, snr_db=float(snr_db),
                         power_budget=config.codec.power_budget, seed=int(seed))


# ---------------------------------------------------------------- training

def train_one(bench: Workbench, method: str, seed: int) -> JsccCodec:
    cfg = bench.config.codec_config(method, seed)
    result = train_tscc(cfg, bench.train, bench.agent, steps=bench.config.codec.steps)
    log.info("trained %s seed %d: loss %.4g -> %.4g", method, seed, result.history[0], result.history[-1])
    return result.codec


def train_methods(config: ExperimentConfig, out_dir, bench: Workbench | None = None) -> list[Path]:
    bench = bench or Workbench.from_config(config)
    jobs = [(m, s) for m in config.experiment.methods if m in NEURAL for s in config.experiment.seeds]
    _ = bench.agent

    def job(item):
        method, seed = item
        codec = train_one(bench, method, seed)
        return save_checkpoint(codec, checkpoint_path(out_dir, method, seed), bench.agent_info())

    return _pool_map(job, jobs, config.experiment.threads)


def load_codecs(config: ExperimentConfig, out_dir, bench: Workbench) -> dict:
    codecs = {}
    for method in config.experiment.methods:
        if method not in NEURAL:
            continue
        for seed in config.experiment.seeds:
            path = checkpoint_path(out_dir, method, seed)
            if not path.exists():
                raise MissingCheckpoint(method, seed, path)
            codec, header = load_checkpoint(path)
            expected = bench.config.codec_config(method, seed)
            if codec.config != expected:
                raise ValueError(f"checkpoint {path} was trained with a different codec config")
            if header.get("agent", {}).get("checksum") not in (None, bench.agent.checksum()):
                raise ValueError(f"checkpoint {path} was trained against a different agent")
            codecs[method, seed] = codec
    return codecs


# ---------------------------------------------------------------- evaluation

def evaluate_neural(bench: Workbench, codec: JsccCodec, method: str, snr_db: float, seed: int) -> SweepRecord:
    channel = channel_for(bench.config, snr_db, seed)
    received = transmit_images(codec, bench.test.images, channel, sample_latent=bench.config.codec.sample_latent,
                               index=f"{method}|{snr_db!r}")
    rep = bench.report(received)
    ratio = compression_ratio(codec.config.channel_dim, codec.config.source_dim)
    return SweepRecord(method, seed, float(snr_db), None, ratio, rep.task_score, rep.action_mse,
                       rep.psnr, rep.ms_ssim, 0.0)


def evaluate_digital(bench: Workbench, snr_db: float, seed: int, quality: float | None = None) -> SweepRecord:
    code, const = bench.digital
    d = bench.config.digital
    q = d.quality if quality is None else float(quality)
    channel = channel_for(bench.config, snr_db, seed)
    outs, failures, uses = [], 0, []
    for i in range(len(bench.test)):
        res = run_digital_chain(bench.test.image(i), CodecQuality(q), code, const, channel,
                                index=f"digital|{q!r}|{snr_db!r}|{i}", interleaver_seed=d.interleaver_seed,
                                max_iters=d.max_iters)
        outs.append(res.image.flat())
        failures += res.failed
        uses.append(res.ratio)
    rep = bench.report(np.stack(outs))
    return SweepRecord("digital", seed, float(snr_db), q, float(np.mean(uses)), rep.task_score, rep.action_mse,
                       rep.psnr, rep.ms_ssim, failures / len(bench.test))


def _pool_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run_snr_sweep(config: ExperimentConfig, out_dir, bench: Workbench | None = None,
                  csv_name: str = "snr_sweep.csv") -> list[SweepRecord]:
    """One record per (method, snr, seed) in the configured order; writes the CSV."""
    bench = bench or Workbench.from_config(config)
    codecs = load_codecs(config, out_dir, bench)
    exp = config.experiment
    bench.prime(digital="digital" in exp.methods)
    jobs = [(m, snr, s) for m in exp.methods for s in exp.seeds for snr in exp.snr_grid]

    def job(item):
        method, snr, seed = item
        if method == "digital":
            return evaluate_digital(bench, snr, seed)
        return evaluate_neural(bench, codecs[method, seed], method, snr, seed)

    records = _pool_map(job, jobs, exp.threads)
    emit_csv(records, Path(out_dir) / csv_name)
    return records


@dataclass(frozen=True)
class BandwidthSummary:
    tscc_ratio: float
    tscc_task_score: float
    digital_ratio: float | None
    saving: float | None


def ratio_at_score(points: list[tuple[float, float]], score: float) -> float | None:
    """Smallest bandwidth ratio at which a (ratio, task score) curve reaches ``score``.

    Points are sorted by ratio; the crossing is interpolated linearly.
    """
    pts = sorted(points)
    for i, (r, s) in enumerate(pts):
        if s >= score:
            if i == 0:
                return r
            r0, s0 = pts[i - 1]
            return r0 + (score - s0) / (s - s0) * (r - r0)
    return None


def bandwidth_saving(tscc: SweepRecord, digital: list[SweepRecord]) -> BandwidthSummary:
    dig = ratio_at_score([(r.compression_ratio, r.task_score) for r in digital], tscc.task_score)
    saving = None if dig is None else 1.0 - tscc.compression_ratio / dig
    return BandwidthSummary(tscc.compression_ratio, tscc.task_score, dig, saving)


def run_ratio_sweep(config: ExperimentConfig, out_dir, bench: Workbench | None = None,
                    csv_name: str = "ratio_sweep.csv") -> tuple[list[SweepRecord], list[BandwidthSummary]]:
    """Digital chain over the quality ladder and TSCC at its fixed ratio, at one SNR."""
    bench = bench or Workbench.from_config(config)
    snr = config.ratio.snr_db
    seeds = config.experiment.seeds
    methods = [m for m in config.experiment.methods if m in NEURAL]
    codecs = load_codecs(config, out_dir, bench) if methods else {}
    bench.prime(digital=True)
    jobs = [("digital", s, q) for s in seeds for q in config.ratio.qualities]
    jobs += [(m, s, None) for m in methods for s in seeds]

    def job(item):
        method, seed, q = item
        if method == "digital":
            return evaluate_digital(bench, snr, seed, q)
        return evaluate_neural(bench, codecs[method, seed], method, snr, seed)

    records = _pool_map(job, jobs, config.experiment.threads)
    emit_csv(records, Path(out_dir) / csv_name)
    summaries = []
    for seed in seeds:
        digital = [r for r in records if r.method == "digital" and r.seed == seed]
        for r in records:
            if r.method == "tscc" and r.seed == seed:
                summaries.append(bandwidth_saving(r, digital))
    return records, summaries


def format_summary(summaries: list[BandwidthSummary]) -> str:
    lines = ["tscc_ratio,tscc_task_score,digital_ratio_at_equal_score,bandwidth_saving"]
    for s in summaries:
        dig = "" if s.digital_ratio is None else repr(s.digital_ratio)
        sav = "" if s.saving is None else repr(s.saving)
        lines.append(f"{s.tscc_ratio!r},{s.tscc_task_score!r},{dig},{sav}")
    return "\n".join(lines) + "\n"

