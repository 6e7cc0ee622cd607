"""Experiment configuration read from an INI file.

Every key has a default, so an empty file is a valid configuration.  A fully
resolved copy (defaults filled in) is written next to every run's outputs.

    [experiment]  name, seeds, methods, snr_grid, threads
    [dataset]     source (synthetic | npz | directory), path, image_dims,
                  count, train_count, seed, curvature_range, obstacle_range,
                  lighting
    [agent]       kind (structured | dense), seed, gain
    [codec]       latent_dim, hidden_dims, beta_c_rec, beta_rec,
                  latent_samples, learning_rate, steps, batch_size,
                  power_budget, sample_latent
    [channel]     kind (awgn | rayleigh)
    [digital]     n, k_info, column_weight, order, quality, code_seed,
                  interleaver_seed, max_iters
    [ratio]       snr_db, qualities
    [ber]         mode (qam | bpsk), grid, frames, target_ber
    [eval]        tolerance, ms_ssim_scales, eval_count
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..core import CodecConfig

METHODS = ("tscc", "jscc-rec", "digital")
NEURAL = ("tscc", "jscc-rec")
DEFAULT_SNR_GRID = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _words(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


@dataclass(frozen=True)
class ExperimentSection:
    name: str = "experiment"
    seeds: tuple[int, ...] = (0, 1, 2)
    methods: tuple[str, ...] = METHODS
    snr_grid: tuple[float, ...] = DEFAULT_SNR_GRID
    threads: int = 1


@dataclass(frozen=True)
class DatasetSection:
    source: str = "synthetic"
    path: str = ""
    image_dims: tuple[int, ...] = (3, 32, 64)
    count: int = 640
    train_count: int = 512
    seed: int = 1
    curvature_range: tuple[float, ...] = (0.15, 1.0)
    obstacle_range: tuple[int, ...] = (0, 3)
    lighting: tuple[float, ...] = (0.6, 1.0)


@dataclass(frozen=True)
class AgentSection:
    kind: str = "structured"
    seed: int = 7
    gain: float = 4.0


@dataclass(frozen=True)
class CodecSection:
    latent_dim: int = 32
    hidden_dims: tuple[int, ...] = (256,)
    beta_c_rec: float = 2048.0
    beta_rec: float = 1.0
    latent_samples: int = 1
    learning_rate: float = 1e-3
    steps: int = 600
    batch_size: int = 32
    power_budget: float = 1.0
    sample_latent: bool = False


@dataclass(frozen=True)
class ChannelSection:
    kind: str = "awgn"


@dataclass(frozen=True)
class DigitalSection:
    n: int = 1536
    k_info: int = 512
    column_weight: int = 3
    order: int = 64
    quality: float = 1.0
    code_seed: int = 0
    interleaver_seed: int = 0
    max_iters: int = 50


@dataclass(frozen=True)
class RatioSection:
    snr_db: float = 10.0
    qualities: tuple[float, ...] = (0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)


@dataclass(frozen=True)
class BerSection:
    mode: str = "qam"
    grid: tuple[float, ...] = (6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0)
    frames: int = 100
    target_ber: float = 1e-4


@dataclass(frozen=True)
class EvalSection:
    tolerance: float = 0.05
    ms_ssim_scales: int = 3
    eval_count: int = 0  # 0 means the whole held-out split


_SECTIONS = {
    "experiment": ExperimentSection,
    "dataset": DatasetSection,
    "agent": AgentSection,
    "codec": CodecSection,
    "channel": ChannelSection,
    "digital": DigitalSection,
    "ratio": RatioSection,
    "ber": BerSection,
    "eval": EvalSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    agent: AgentSection = field(default_factory=AgentSection)
    codec: CodecSection = field(default_factory=CodecSection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    digital: DigitalSection = field(default_factory=DigitalSection)
    ratio: RatioSection = field(default_factory=RatioSection)
    ber: BerSection = field(default_factory=BerSection)
    eval: EvalSection = field(default_factory=EvalSection)
    base_dir: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        grid = self.experiment.snr_grid
        if not grid:
            raise ValueError("SNR grid must not be empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("SNR grid must be strictly ascending")
        unknown = set(self.experiment.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        if not self.experiment.seeds:
            raise ValueError("at least one seed is required")
        if self.dataset.source not in ("synthetic", "npz", "directory"):
            raise ValueError(f"unknown dataset source {self.dataset.source!r}")
        if self.dataset.source != "synthetic":
            if not self.dataset.path:
                raise ValueError("dataset path is required for npz/directory sources")
            if not self.dataset_path.exists():
                raise FileNotFoundError(f"dataset path {self.dataset_path} does not exist")
        if not 0 < self.dataset.train_count < self.dataset.count:
            raise ValueError("train_count must be between 1 and count - 1")
        if self.channel.kind not in ("awgn", "rayleigh"):
            raise ValueError(f"unknown channel kind {self.channel.kind!r}")
        if self.ber.mode not in ("qam", "bpsk"):
            raise ValueError(f"unknown BER mode {self.ber.mode!r}")

    @property
    def dataset_path(self) -> Path:
        p = Path(self.dataset.path)
        return p if p.is_absolute() else self.base_dir / p

    def codec_config(self, method: str, seed: int) -> CodecConfig:
        c = self.codec
        task = method == "tscc"
        return CodecConfig(
            latent_dim=c.latent_dim, hidden_dims=c.hidden_dims,
            beta_c_rec=c.beta_c_rec if task else c.beta_rec,
            latent_samples=c.latent_samples, learning_rate=c.learning_rate,
            batch_size=c.batch_size, seed=seed, power_budget=c.power_budget,
            image_dims=tuple(self.dataset.image_dims),
            objective="task" if task else "reconstruction",
        )

    def with_overrides(self, seed: int | None = None, threads: int | None = None) -> "ExperimentConfig":
        exp = self.experiment
        if seed is not None:
            exp = replace(exp, seeds=(int(seed),))
        if threads is not None:
            exp = replace(exp, threads=int(threads))
        return replace(self, experiment=exp)

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        for name in _SECTIONS:
            section = getattr(self, name)
            parser[name] = {f.name: _fmt(getattr(section, f.name)) for f in fields(section)}
        lines = []
        for name in parser.sections():
            lines.append(f"[{name}]")
            lines += [f"{k} = {v}" for k, v in parser[name].items()]
            lines.append("")
        return "\n".join(lines)


def _coerce(cls, key: str, raw: str):
    types = {f.name: f for f in fields(cls)}
    if key not in types:
        raise ValueError(f"unknown key {key!r} in section [{cls.__name__}]")
    default = getattr(cls(), key)
    if isinstance(default, bool):
        return _bool(raw)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        if key in ("methods",):
            return _words(raw)
        if default and isinstance(default[0], int):
            return _ints(raw)
        return _floats(raw)
    return raw.strip()


def parse_config(text: str, base_dir=".") -> ExperimentConfig:
    parser = configparser.ConfigParser()
    parser.read_string(text)
    kwargs = {}
    for name in parser.sections():
        if name not in _SECTIONS:
            raise ValueError(f"unknown config section [{name}]")
        cls = _SECTIONS[name]
        values = {k: _coerce(cls, k, v) for k, v in parser[name].items()}
        kwargs[name] = cls(**values)
    return ExperimentConfig(**kwargs, base_dir=Path(base_dir))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


def write_resolved(config: ExperimentConfig, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "resolved_config.ini"
    path.write_text(config.to_ini())
    return path
