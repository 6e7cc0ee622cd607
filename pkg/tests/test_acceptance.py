"""Acceptance gate: ten end-to-end criteria, one PASS/FAIL line each.

Criteria 5, 7 and 8 are Monte-Carlo / training runs and take several
minutes on one core.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from tscc import autodiff as ad
from tscc.agent import build_surrogate_agent, coach_act
from tscc.baseline.chain import ber_point_bpsk, ber_point_qam, measure_threshold
from tscc.baseline.ldpc import ldpc_build, ldpc_encode
from tscc.baseline.qam import qam_constellation, qam_hard_demodulate, qam_modulate
from tscc.channel import draw_fading, fading_stream, measure_empirical_snr, transmit_awgn
from tscc.core import ChannelConfig, CodecConfig, LatentGaussian, SymbolFrame, compression_ratio
from tscc.harness.config import ExperimentConfig, ExperimentSection
from tscc.harness.sweeps import Workbench, evaluate_digital, evaluate_neural, load_codecs, run_snr_sweep, train_methods
from tscc.jscc import JsccCodec, batch_loss, compute_kl, normalize_power, pack_complex
from tscc.metrics import detect_cliff
from tscc.rng import Stream


@pytest.fixture
def verdict(capsys):
    def emit(number: int, name: str, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'} {name}: {detail}")
        assert ok, f"criterion {number} ({name}) failed: {detail}"
    return emit


def test_01_power_constraint(verdict):
    cfg = CodecConfig(latent_dim=32, hidden_dims=(64,), image_dims=(3, 32, 64), seed=11)
    codec = JsccCodec.build(cfg)
    stream = Stream(11, "power")
    worst = 0.0
    k = cfg.channel_dim
    for chunk in range(10):
        x = stream.uniform((1000, cfg.source_dim))
        with ad.no_grad():
            mu, logvar = codec.encoder(x)
        z = mu.value + stream.normal(mu.shape) * np.exp(logvar.value / 2)
        for row in z:
            frame = normalize_power(pack_complex(row), k, cfg.power_budget)
            worst = max(worst, abs(np.sum(np.abs(frame.symbols) ** 2) / k - cfg.power_budget))
    verdict(1, "power constraint", worst < 1e-9 * cfg.power_budget,
            f"max |(1/k)||z~||^2 - P| = {worst:.2e} over 10^4 encoder outputs")


def test_02_kl_correctness(verdict):
    stream = Stream(12, "kl")
    d = 8
    worst = 0.0
    for i in range(100):
        mu = stream.normal(d)
        sigma = np.exp(stream.uniform(d, -1.0, 1.0))
        closed = compute_kl(LatentGaussian(mu, sigma))
        s = stream.child("mc", i)
        z = mu + sigma * s.normal((1_000_000, d))
        log_q = -0.5 * np.sum(((z - mu) / sigma) ** 2 + 2 * np.log(sigma), axis=1)
        log_p = -0.5 * np.sum(z ** 2, axis=1)
        mc = float(np.mean(log_q - log_p))
        worst = max(worst, abs(mc - closed) / closed)
    at_prior = compute_kl(LatentGaussian(np.zeros(d), np.ones(d)))
    verdict(2, "KL correctness", worst < 0.01 and at_prior == 0.0,
            f"max rel. deviation from 10^6-sample MC = {worst:.2e}; KL at prior = {at_prior}")


def _fd_error(kind: str, seed: int) -> float:
    dims = (3, 4, 8)
    codec = JsccCodec.build(CodecConfig(latent_dim=8, hidden_dims=(16,), image_dims=dims, seed=seed))
    kwargs = {"output_gain": 3.0, "hidden_dims": (16,)} if kind == "dense" else {}
    agent = build_surrogate_agent(dims, kind=kind, **kwargs)
    s = Stream(seed, "fd")
    x = s.uniform((4, 96))
    m = s.normal((4, 6)) * 0.5
    targets = coach_act(agent, x, m)
    eps = [s.normal((4, 8))]
    return ad.finite_difference_check(lambda: batch_loss(codec, x, m, agent, targets, eps),
                                      codec.parameters(), h=1e-4)


def test_03_gradient_fidelity(verdict):
    errs = {kind: _fd_error(kind, 0) for kind in ("structured", "dense")}
    worst = max(errs.values())
    verdict(3, "gradient fidelity", worst < 1e-4,
            "max rel. error vs central differences: " + ", ".join(f"{k} agent {v:.2e}" for k, v in errs.items()))


def test_04_channel_calibration(verdict):
    grid = [-10, -5, 0, 5, 10, 15, 20]
    k = 1_000_000
    sent = SymbolFrame(np.exp(2j * np.pi * Stream(14, "phase").uniform(k)))
    errors = []
    for snr in grid:
        received = transmit_awgn(sent, ChannelConfig(snr_db=snr, seed=14))
        errors.append(abs(measure_empirical_snr(sent, received) - snr))
    h = draw_fading(k, fading_stream(ChannelConfig(kind="rayleigh", snr_db=0, seed=14)))
    gain = float(np.mean(np.abs(h) ** 2))
    ok = max(errors) <= 0.1 and abs(gain - 1) < 0.01
    verdict(4, "channel calibration", ok,
            f"max |SNR_emp - SNR_dial| = {max(errors):.4f} dB over grid; Rayleigh E|h|^2 = {gain:.4f}")


@pytest.mark.slow
def test_05_ldpc_correctness(verdict):
    code = ldpc_build(1536, 512, seed=0)
    u = Stream(15, "msgs").bits((1000, 512))
    syndromes_ok = not code.syndrome(ldpc_encode(code, u)).any()
    point = ber_point_bpsk(code, 3.0, frames=1954, seed=15)
    ok = syndromes_ok and point.info_bits >= 1_000_000 and point.ber < 1e-4
    verdict(5, "LDPC correctness", ok,
            f"syndrome zero on 10^3 encodes: {syndromes_ok}; BER at Eb/N0=3 dB = {point.ber:.2e} "
            f"({point.bit_errors} errors / {point.info_bits} bits)")


def test_06_qam_correctness(verdict):
    c = qam_constellation(64)
    energy = float(np.mean(np.abs(c.points) ** 2))
    d = np.abs(c.points[:, None] - c.points[None, :])
    np.fill_diagonal(d, np.inf)
    nearest = np.isclose(d, d.min())
    pairs = np.argwhere(nearest)
    hamming = np.sum(c.labels[pairs[:, 0]] != c.labels[pairs[:, 1]], axis=1)
    gray = bool(np.all(hamming == 1)) and len(pairs) == 4 * 7 * 8
    bits = Stream(16, "qam").bits(100_000 * 6)
    symbols, _ = qam_modulate(bits, c)
    identity = bool(np.array_equal(qam_hard_demodulate(symbols, c), bits))
    ok = abs(energy - 1.0) < 1e-15 and gray and identity
    verdict(6, "QAM correctness", ok,
            f"mean energy = {energy!r}; {len(pairs)} neighbour pairs all one-bit: {gray}; "
            f"noiseless roundtrip identity on 10^5 symbols: {identity}")


# ---------------------------------------------------------------- trained-codec criteria

@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    config = ExperimentConfig(experiment=ExperimentSection(seeds=(0, 1, 2), methods=("tscc", "jscc-rec")))
    bench = Workbench.from_config(config)
    train_methods(config, out, bench)
    return config, bench, load_codecs(config, out, bench)


@pytest.mark.slow
def test_07_cliff_effect(trained, verdict):
    config, bench, codecs = trained
    code, const = bench.digital
    ber_grid = [float(v) for v in np.arange(7.0, 12.01, 0.5)]
    points = [ber_point_qam(code, const, snr, frames=100, seed=17) for snr in ber_grid]
    threshold = measure_threshold(points, 1e-4)
    assert threshold is not None, "BER threshold not reached inside the sweep grid"

    grid = sorted(set(config.experiment.snr_grid) | {threshold - 5, threshold - 3, threshold + 3})
    digital = {snr: evaluate_digital(bench, snr, 0).task_score for snr in grid}
    tscc = {snr: evaluate_neural(bench, codecs["tscc", 0], "tscc", snr, 0).task_score for snr in grid}

    dig_curve = sorted(digital.items())
    top = sorted(digital.values(), reverse=True)
    plateau = 0.5 * (top[0] + top[1])
    hi, lo = digital[threshold + 3] / plateau, digital[threshold - 3] / plateau
    tscc_keep = tscc[threshold - 5] / tscc[20.0]
    cliff_digital = detect_cliff(dig_curve)
    cliff_tscc = detect_cliff(sorted(tscc.items()))
    ok = (hi > 0.9 and lo < 0.1 and tscc_keep >= 0.5 and cliff_digital is not None
          and (cliff_tscc is None or cliff_tscc < cliff_digital))
    verdict(7, "cliff effect", ok,
            f"BER threshold {threshold:g} dB; digital task score {hi:.3f} of plateau at +3 dB, {lo:.3f} at -3 dB; "
            f"TSCC keeps {tscc_keep:.3f} of its 20 dB plateau at threshold-5 dB; "
            f"detect_cliff digital {cliff_digital}, TSCC {cliff_tscc}")


@pytest.mark.slow
def test_08_task_oriented_benefit(trained, verdict):
    config, bench, codecs = trained
    wins = []
    notes = []
    for seed in config.experiment.seeds:
        t = evaluate_neural(bench, codecs["tscc", seed], "tscc", 0.0, seed)
        r = evaluate_neural(bench, codecs["jscc-rec", seed], "jscc-rec", 0.0, seed)
        wins.append(t.action_mse < r.action_mse and r.psnr >= t.psnr)
        notes.append(f"seed {seed}: action_mse {t.action_mse:.4f} vs {r.action_mse:.4f}, "
                     f"PSNR {t.psnr:.2f} vs {r.psnr:.2f} dB")
    verdict(8, "task-oriented benefit", sum(wins) >= 2,
            f"{sum(wins)}/3 seeds with both orderings (TSCC vs reconstruction); " + "; ".join(notes))


def test_09_compression_accounting(verdict):
    cfg = CodecConfig(latent_dim=4096, hidden_dims=(8,), image_dims=(3, 256, 900))
    ratio = compression_ratio(cfg.channel_dim, cfg.source_dim)
    ok = cfg.channel_dim == 2048 and cfg.source_dim == 691200 and round(ratio, 5) == 0.00296 and round(ratio, 3) == 0.003
    verdict(9, "compression accounting", ok, f"k={cfg.channel_dim}, l={cfg.source_dim}, k/l={ratio:.6f}")


def test_10_determinism(tmp_path, verdict):
    base = ExperimentConfig()
    config = replace(
        base,
        experiment=replace(base.experiment, seeds=(0,), snr_grid=(-5.0, 5.0, 15.0)),
        dataset=replace(base.dataset, count=72, train_count=64),
        codec=replace(base.codec, steps=15, hidden_dims=(32,)),
    )
    outputs = []
    for run, threads in (("a", 1), ("b", 3)):
        cfg = config.with_overrides(threads=threads)
        out = tmp_path / run
        bench = Workbench.from_config(cfg)
        train_methods(cfg, out, bench)
        run_snr_sweep(cfg, out, bench)
        outputs.append((out / "snr_sweep.csv").read_bytes())
    same = outputs[0] == outputs[1]
    verdict(10, "determinism", same and len(outputs[0]) > 0,
            f"re-run (1 vs 3 worker threads) CSV byte-identical: {same} ({len(outputs[0])} bytes)")
