import hashlib
import json
import math
import struct
import time
from dataclasses import replace

import numpy as np
import pytest
from PIL import Image

from tscc.cli import main
from tscc.core import CodecConfig
from tscc.harness.checkpoint import (MAGIC, CheckpointError, checkpoint_bytes, load_checkpoint, parameter_checksum,
                                     save_checkpoint)
from tscc.harness.config import ExperimentConfig, load_config, parse_config, write_resolved
from tscc.harness.dataset import Dataset, SceneSpec, generate_dataset, load_image_dir
from tscc.harness.records import COLUMNS, SweepRecord, parse_csv, read_csv, records_to_csv
from tscc.harness.sweeps import (MissingCheckpoint, Workbench, bandwidth_saving, load_dataset, ratio_at_score,
                                 run_ratio_sweep, run_snr_sweep, train_methods)
from tscc.jscc import JsccCodec


def tiny_config(**experiment) -> ExperimentConfig:
    base = ExperimentConfig()
    return replace(
        base,
        experiment=replace(base.experiment, seeds=(0,), snr_grid=(-10.0, 0.0, 20.0), **experiment),
        dataset=replace(base.dataset, count=40, train_count=32),
        codec=replace(base.codec, steps=10, hidden_dims=(16,)),
        ratio=replace(base.ratio, qualities=(1.0, 8.0, 64.0)),
    )


# ---------------------------------------------------------------- config

def test_empty_config_uses_defaults():
    cfg = parse_config("")
    assert cfg == ExperimentConfig()
    assert cfg.codec.beta_c_rec == 2048.0 and cfg.experiment.snr_grid[0] == -10.0


def test_config_parsing_and_resolved_roundtrip(tmp_path):
    text = "[experiment]\nseeds = 4, 5\nmethods = tscc digital\n[codec]\nhidden_dims = 64, 32\nsample_latent = yes\n"
    cfg = parse_config(text)
    assert cfg.experiment.seeds == (4, 5) and cfg.experiment.methods == ("tscc", "digital")
    assert cfg.codec.hidden_dims == (64, 32) and cfg.codec.sample_latent is True
    path = write_resolved(cfg, tmp_path)
    assert load_config(path) == cfg


@pytest.mark.parametrize("text", [
    "[experiment]\nsnr_grid = 5, 0\n",
    "[experiment]\nmethods = tscc magic\n",
    "[nonsense]\nx = 1\n",
    "[codec]\nwidth = 3\n",
    "[dataset]\ntrain_count = 900\n",
    "[channel]\nkind = rician\n",
    "[dataset]\nsource = npz\n",
])
def test_config_errors(text):
    with pytest.raises(ValueError):
        parse_config(text)


def test_codec_config_per_method():
    cfg = ExperimentConfig()
    task = cfg.codec_config("tscc", 1)
    rec = cfg.codec_config("jscc-rec", 1)
    assert task.objective == "task" and task.beta_c_rec == 2048.0
    assert rec.objective == "reconstruction" and rec.beta_c_rec == 1.0
    assert cfg.with_overrides(seed=9, threads=2).experiment.seeds == (9,)


# ---------------------------------------------------------------- checkpoints

def test_checkpoint_roundtrip(tmp_path):
    codec = JsccCodec.build(CodecConfig(latent_dim=8, hidden_dims=(16,), image_dims=(3, 4, 8), seed=5))
    path = save_checkpoint(codec, tmp_path / "c.ckpt", {"kind": "structured"})
    loaded, header = load_checkpoint(path)
    assert parameter_checksum(loaded) == parameter_checksum(codec)
    assert header["latent_dim"] == 8 and header["seed"] == 5 and header["beta_c_rec"] == 2048.0
    assert header["agent"] == {"kind": "structured"}
    assert path.read_bytes() == checkpoint_bytes(codec, {"kind": "structured"})


def test_checkpoint_failures(tmp_path):
    codec = JsccCodec.build(CodecConfig(latent_dim=8, hidden_dims=(16,), image_dims=(3, 4, 8)))
    blob = checkpoint_bytes(codec)
    (tmp_path / "trunc.ckpt").write_bytes(blob[:-100])
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(tmp_path / "trunc.ckpt")
    flipped = bytearray(blob)
    flipped[200] ^= 1
    (tmp_path / "flip.ckpt").write_bytes(bytes(flipped))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(tmp_path / "flip.ckpt")

    (hlen,) = struct.unpack_from("<I", blob, len(MAGIC))
    start = len(MAGIC) + 4
    header = json.loads(blob[start:start + hlen])
    header["format_version"] = 2
    new = json.dumps(header, sort_keys=True).encode()
    body = MAGIC + struct.pack("<I", len(new)) + new + blob[start + hlen:-32]
    (tmp_path / "v2.ckpt").write_bytes(body + hashlib.sha256(body).digest())
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(tmp_path / "v2.ckpt")


# ---------------------------------------------------------------- records

def _record(**kw):
    base = dict(method="tscc", seed=0, snr_db=0.0, quality=None, compression_ratio=16 / 6144, task_score=0.5,
                action_mse=0.01, psnr=12.5, ms_ssim=0.4, failure_rate=0.0)
    return SweepRecord(**{**base, **kw})


def test_csv_roundtrip_and_formatting():
    assert records_to_csv([]) == ",".join(COLUMNS) + "\n"
    rows = [_record(), _record(method="digital", quality=2.0, psnr=math.inf, snr_db=-5.0)]
    text = records_to_csv(rows)
    assert ",inf," in text and "tscc,0,0.0,,0.0026041666666666665," in text
    assert parse_csv(text) == rows
    with pytest.raises(ValueError):
        parse_csv("a,b\n")


def test_record_validation():
    with pytest.raises(ValueError):
        _record(task_score=1.5)
    with pytest.raises(ValueError):
        _record(action_mse=math.nan)
    with pytest.raises(ValueError):
        _record(compression_ratio=0.0)


# ---------------------------------------------------------------- data

def test_dataset_determinism_and_speed(tmp_path):
    spec = SceneSpec(seed=3)
    start = time.perf_counter()
    a = generate_dataset(spec, 1000)
    assert time.perf_counter() - start < 10
    b = generate_dataset(spec, 1000)
    assert a.images.tobytes() == b.images.tobytes() and a.states.tobytes() == b.states.tobytes()
    assert a.images.min() >= 0 and a.images.max() <= 1
    a.save(tmp_path / "d.npz")
    c = Dataset.load(tmp_path / "d.npz")
    assert np.array_equal(c.images, a.images) and c.image_dims == a.image_dims
    with pytest.raises(ValueError):
        generate_dataset(spec, 0)


def _row_centre(solid, k):
    cols = np.nonzero(solid[k])[0]
    return 0.5 * (cols.min() + cols.max())


def test_goal_offset_follows_rendered_lane():
    data = generate_dataset(SceneSpec(seed=0), 300)
    for img, state in zip(data.images, data.states):
        r, g, b = img.reshape(3, 32, 64)
        road = (np.abs(r - g) < 1e-9) & (b > r) & (b - r < 0.05)
        first = min(k for k in range(32) if road[k].any())
        solid = ~((g > r + 0.05) & (g > b + 0.05))
        far = np.mean([_row_centre(solid, k) for k in range(first, first + 3)])
        near = np.mean([_row_centre(solid, k) for k in (29, 30, 31)])
        assert np.sign(far - near) == np.sign(state[4])


def test_load_image_dir(tmp_path, caplog):
    assert load_image_dir(tmp_path) == ([], 0)
    assert "no PNG/PPM" in caplog.text
    Image.new("RGB", (128, 64), (255, 255, 255)).save(tmp_path / "a_white.png")
    wide = np.zeros((256, 900, 3), dtype=np.uint8)
    wide[:, :, 0] = 255
    wide[:, 194:706] = 255
    Image.fromarray(wide).save(tmp_path / "b_wide.png")
    (tmp_path / "c_broken.png").write_bytes(b"not an image")
    images, skipped = load_image_dir(tmp_path, (3, 32, 64))
    assert skipped == 1 and len(images) == 2
    assert np.array_equal(images[0].data, np.ones((3, 32, 64)))
    assert np.allclose(images[1].data, 1.0, atol=1 / 255)


def test_directory_source(tmp_path):
    for i, v in enumerate((0, 128, 255)):
        Image.new("RGB", (64, 32), (v, v, v)).save(tmp_path / f"{i}.png")
    cfg = parse_config(f"[dataset]\nsource = directory\npath = {tmp_path}\ncount = 3\ntrain_count = 2\n")
    data = load_dataset(cfg)
    assert len(data) == 3 and not data.states.any()


# ---------------------------------------------------------------- sweeps and CLI

@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    cfg = tiny_config()
    bench = Workbench.from_config(cfg)
    train_methods(cfg, out, bench)
    return cfg, out, bench


def test_snr_sweep_rows(tiny_run):
    cfg, out, bench = tiny_run
    records = run_snr_sweep(cfg, out, bench)
    assert read_csv(out / "snr_sweep.csv") == records
    tscc = [r for r in records if r.method == "tscc"]
    assert [r.snr_db for r in tscc] == [-10.0, 0.0, 20.0]
    assert all(math.isfinite(r.task_score) and math.isfinite(r.psnr) for r in tscc)
    assert all(r.compression_ratio == 16 / 6144 for r in records if r.method != "digital")
    digital = {r.snr_db: r for r in records if r.method == "digital"}
    assert digital[-10.0].failure_rate == 1.0 and digital[20.0].failure_rate == 0.0


def test_ratio_sweep_and_saving(tiny_run):
    cfg, out, bench = tiny_run
    records, summaries = run_ratio_sweep(cfg, out, bench)
    digital = [r for r in records if r.method == "digital"]
    assert [r.quality for r in digital] == [1.0, 8.0, 64.0]
    ratios = [r.compression_ratio for r in digital]
    assert ratios == sorted(ratios, reverse=True)
    assert len(summaries) == 1 and summaries[0].tscc_ratio == 16 / 6144


def test_ratio_at_score_interpolates():
    pts = [(0.1, 0.2), (0.3, 0.6), (0.5, 1.0)]
    assert ratio_at_score(pts, 0.4) == pytest.approx(0.2)
    assert ratio_at_score(pts, 0.1) == 0.1
    assert ratio_at_score(pts, 1.1) is None
    tscc = _record(task_score=0.4, compression_ratio=0.01)
    digital = [_record(method="digital", quality=1.0, compression_ratio=r, task_score=s) for r, s in pts]
    summary = bandwidth_saving(tscc, digital)
    assert summary.saving == pytest.approx(1 - 0.01 / 0.2)


def test_cli_missing_checkpoint_and_bad_config(tmp_path, capsys):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("[experiment]\nseeds = 0\nmethods = tscc\n[dataset]\ncount = 10\ntrain_count = 8\n")
    assert main(["sweep-snr", "--config", str(cfg), "--out", str(tmp_path / "run")]) == 3
    assert "tscc" in capsys.readouterr().err
    assert (tmp_path / "run" / "resolved_config.ini").exists()
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nsnr_grid = 3, 1\n")
    assert main(["train", "--config", str(bad), "--out", str(tmp_path / "bad")]) == 2
    with pytest.raises(MissingCheckpoint):
        run_snr_sweep(load_config(cfg), tmp_path / "run")


def test_cli_gen_data_and_eval(tmp_path, capsys):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("[experiment]\nseeds = 0\nmethods = tscc\n[dataset]\ncount = 10\ntrain_count = 8\n"
                   "[codec]\nsteps = 2\nhidden_dims = 8\n")
    out = tmp_path / "run"
    assert main(["gen-data", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(Dataset.load(out / "dataset.npz")) == 10
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    assert main(["eval", "--config", str(cfg), "--out", str(out), "--method", "tscc", "--snr", "5"]) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert json.loads(line)["snr_db"] == 5.0
    assert (out / "eval_tscc_5dB.csv").exists()
