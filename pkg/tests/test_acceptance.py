"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` or ``python3 tests/test_acceptance.py``.
"""

import os
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
import torch

from dpanet import depth_potentiality as dp
from dpanet import metrics
from dpanet import train as tr
from dpanet.checkpoint import load_checkpoint, restore_model, save_checkpoint
from dpanet.config import TrainConfig
from dpanet.data import DatasetSpec, load_dataset, synth_samples
from dpanet.gma import GMA, gate_pair
from dpanet.gradcheck import run_all
from dpanet.losses import bce_loss

# dataset roots for the gated criterion; each holds rgb/, depth/ and gt/
DATASET_ENVS = {"DPANET_RGBD135": 0.495, "DPANET_NLPR_TEST": 0.481}


def _brute_pr(pred: np.ndarray, gt: np.ndarray):
    p = pred.ravel().astype(np.int64)
    g = gt.ravel().astype(bool)
    prec, rec = np.empty(256), np.empty(256)
    for t in range(256):
        hit = p > t
        tp = int(np.count_nonzero(hit & g))
        fp = int(np.count_nonzero(hit & ~g))
        prec[t] = tp / (tp + fp) if tp + fp else 1.0
        rec[t] = tp / int(g.sum())
    f = [(1.3 * a * b / (0.3 * a + b)) if a and b else 0.0 for a, b in zip(prec, rec)]
    err = sum(abs(int(v) / 255 - float(w)) for v, w in zip(p, g)) / p.size
    return prec, rec, max(f), err


def test_criterion_01_metric_oracle(record_criterion):
    rng = np.random.default_rng(1)
    worst, spent = 0.0, 0.0
    for _ in range(1000):
        pred = rng.integers(0, 256, (16, 16)).astype(np.uint8)
        gt = rng.random((16, 16)) < rng.uniform(0.05, 0.95)
        gt[rng.integers(16), rng.integers(16)] = True
        t0 = time.perf_counter()
        curve = metrics.pr_curve(pred, gt)
        got_f = metrics.max_f_measure(curve)
        got_mae = metrics.mae(pred, gt)
        spent += time.perf_counter() - t0
        prec, rec, f, err = _brute_pr(pred, gt)
        worst = max(worst, np.abs(curve.precision - prec).max(), np.abs(curve.recall - rec).max(),
                    abs(got_f - f), abs(got_mae - err))
    ok = worst < 1e-9 and spent < 30
    record_criterion(1, ok, f"max abs diff {worst:.2e}, metric time {spent:.2f} s")
    assert ok


def _exhaustive_otsu(img: np.ndarray) -> int:
    px = [int(v) for v in img.ravel()]
    n = len(px)
    best, best_t = Fraction(-1), 0
    for t in range(256):
        lo = [v for v in px if v <= t]
        n0 = len(lo)
        if n0 in (0, n):
            var = Fraction(0)
        else:
            s0, s = sum(lo), sum(px)
            mu0, mu1 = Fraction(s0, n0), Fraction(s - s0, n - n0)
            var = Fraction(n0, n) * Fraction(n - n0, n) * (mu0 - mu1) ** 2
        if var > best:
            best, best_t = var, t
    return best_t


def test_criterion_02_otsu_exact(record_criterion):
    rng = np.random.default_rng(2)
    mismatches = 0
    for i in range(200):
        h, w = rng.integers(8, 65, 2)
        levels = rng.choice(256, size=int(rng.integers(2, 12)), replace=False) if i % 2 else np.arange(256)
        img = rng.choice(levels, size=(h, w)).astype(np.uint8)
        mismatches += dp.otsu_threshold(img) != _exhaustive_otsu(img)
    record_criterion(2, mismatches == 0, f"{mismatches}/200 mismatches")
    assert mismatches == 0


def test_criterion_03_dp_algebra(record_criterion):
    worst = max(abs(dp.combine(d, d) - d) for d in np.linspace(0, 1, 11))
    hand = dp.combine(1 / 3, 1 / 2, 0.3)
    ok = worst < 1e-12 and abs(hand - 0.448276) < 1e-6
    record_criterion(3, ok, f"grid max err {worst:.1e}, hand case {hand:.6f}")
    assert ok


def test_criterion_04_gma_invariants(record_criterion):
    torch.manual_seed(4)
    gma = GMA(8, 8, 16).eval()
    rb, db = torch.randn(2, 8, 5, 6), torch.randn(2, 8, 5, 6)
    with torch.no_grad():
        out0 = gma(rb, db, torch.zeros(2))
        out1 = gma(rb, db, torch.ones(2))
    col_err = max((o.attn_dr.sum(dim=1) - 1).abs().max().item() for o in (out0, out1))
    col_err = max(col_err, max((o.attn_rd.sum(dim=1) - 1).abs().max().item() for o in (out0, out1)))
    nonneg = all(bool(torch.all(a >= 0)) for o in (out0, out1) for a in (o.attn_dr, o.attn_rd))
    g = torch.rand(10_000, dtype=torch.float64)
    g1, g2 = gate_pair(g)
    sums_exact = bool(torch.all(g1 + g2 == 1)) and bool(torch.all(sum(gate_pair(torch.rand(10_000))) == 1))
    rf_exact = torch.equal(out0.rf, out0.rb_att)
    df_exact = torch.equal(out1.df, out1.db_att)
    ok = col_err < 1e-6 and nonneg and sums_exact and rf_exact and df_exact
    record_criterion(4, ok, f"column err {col_err:.1e}, g1+g2==1 {sums_exact}, "
                            f"rf==rb_att at g=0 {rf_exact}, df==db_att at g=1 {df_exact}")
    assert ok


def test_criterion_05_gradient_checks(record_criterion):
    t0 = time.perf_counter()
    results = run_all(seed=0, include_network=False)
    spent = time.perf_counter() - t0
    worst = max(results, key=lambda r: r.max_rel_error)
    failed = [r.name for r in results if not r.passed(1e-4) or r.unresolved]
    ok = not failed and spent < 120
    record_criterion(5, ok, f"{len(results)} checks, worst {worst.name} {worst.max_rel_error:.1e}, "
                            f"{spent:.1f} s" + (f", failed {failed}" if failed else ""))
    assert ok


def _mean_bce(model, samples) -> float:
    maps, _ = tr.predict(model, samples)
    return float(np.mean([bce_loss(torch.tensor(m), torch.tensor(s.gt, dtype=torch.float64)).item()
                          for m, s in zip(maps, samples)]))


def test_criterion_06_overfit(record_criterion):
    cfg = TrainConfig.toy(max_iters=500, augment=False)
    data = synth_samples(8, 64, seed=0)
    t0 = time.perf_counter()
    result = tr.train(cfg, data)
    spent = time.perf_counter() - t0
    bce = _mean_bce(result.model, data)
    max_f = tr.evaluate_model(result.model, data).max_f
    ok = bce < 0.05 and max_f > 0.95 and spent < 300
    record_criterion(6, ok, f"BCE {bce:.4f}, max-F {max_f:.4f}, {spent:.0f} s")
    assert ok


def test_criterion_07_gate_supervision(record_criterion):
    cfg = TrainConfig.toy(max_iters=300)
    result = tr.train(cfg, synth_samples(32, 64, seed=1, corrupt_fraction=0.5))
    held_out = synth_samples(32, 64, seed=2, corrupt_fraction=0.5)
    _, gates = tr.predict(result.model, held_out)
    labels = np.array([s.label.g for s in held_out])
    err = float(np.mean(np.abs(np.array(gates) - labels)))
    ok = err < 0.15
    record_criterion(7, ok, f"held-out mean |g_hat - g| {err:.3f} after {cfg.max_iters} iterations "
                            f"(labels {labels.min():.2f}..{labels.max():.2f})")
    assert ok


ABLATIONS = [
    {"fusion_mode": "multiply"},
    {"fusion_mode": "concat"},
    {"fusion_mode": "sum"},
    {"gate_mode": "hard"},
    {"gate_mode": "off"},
    {"depth_branch": False},
]


def test_criterion_08_ablations(record_criterion):
    data = synth_samples(8, 64, seed=0, corrupt_fraction=0.25)
    notes, ok = [], True
    for change in ABLATIONS:
        losses = tr.train(TrainConfig.toy(max_iters=40, augment=False, **change), data).losses
        good = bool(np.all(np.isfinite(losses))) and np.mean(losses[-5:]) < np.mean(losses[:5])
        ok &= good
        key, val = next(iter(change.items()))
        notes.append(f"{key}={val} {np.mean(losses[:5]):.3f}->{np.mean(losses[-5:]):.3f}")

    torch.manual_seed(8)
    model = tr.build_model(TrainConfig.toy(depth_branch=False)).eval()
    rgb, depth = torch.randn(2, 3, 64, 64), torch.randn(2, 3, 64, 64)
    with torch.no_grad():
        a = model(rgb, depth).saliency
        b = model(rgb, depth + 5 * torch.randn_like(depth)).saliency
    invariant = torch.equal(a, b)
    ok &= invariant
    record_criterion(8, ok, "; ".join(notes) + f"; depth-off invariant {invariant}")
    assert ok


def test_criterion_09_dataset_dp_scores(record_criterion):
    present = {env: target for env, target in DATASET_ENVS.items() if os.environ.get(env)}
    if not present:
        record_criterion(9, None, f"dataset absent, set {' or '.join(DATASET_ENVS)} to a dataset root")
        pytest.skip("no RGB-D benchmark dataset configured")
    invert = os.environ.get("DPANET_INVERT_DEPTH", "") not in ("", "0")
    notes, ok = [], True
    for env, target in present.items():
        samples = load_dataset(DatasetSpec(root=os.environ[env], split="test", invert_depth=invert))
        report = dp.dataset_dp_report([(s.depth, s.gt) for s in samples])
        good = abs(report.mean_g - target) <= 0.02
        ok &= good
        notes.append(f"{env} mean g {report.mean_g:.3f} (target {target} +- 0.02, n={len(samples)})")
    record_criterion(9, ok, "; ".join(notes))
    assert ok


def test_criterion_10_reproducibility(record_criterion, tmp_path):
    cfg = TrainConfig.toy(stage_channels=(4, 8, 8, 16, 16), channels=16, gate_hidden=16, max_iters=12)
    data = synth_samples(8, 64, seed=10, corrupt_fraction=0.5)
    first = tr.train(cfg, data)
    second = tr.train(cfg, data)
    same_trace = first.losses == second.losses

    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, first.checkpoint)
    loaded = load_checkpoint(path)
    arrays_exact = loaded.model.keys() == first.checkpoint.model.keys() and all(
        np.array_equal(v, loaded.model[k]) and v.dtype == loaded.model[k].dtype for k, v in first.checkpoint.model.items())
    momentum_exact = all(np.array_equal(v, loaded.momentum[k]) for k, v in first.checkpoint.momentum.items())
    twice = tmp_path / "again.npz"
    save_checkpoint(twice, loaded)
    bytes_exact = path.read_bytes() == twice.read_bytes()

    model = tr.build_model(cfg)
    restore_model(model, loaded)
    a, _ = tr.predict(first.model, data[:2])
    b, _ = tr.predict(model, data[:2])
    outputs_exact = all(np.array_equal(x, y) for x, y in zip(a, b))
    ok = same_trace and arrays_exact and momentum_exact and bytes_exact and outputs_exact
    record_criterion(10, ok, f"loss trace identical {same_trace}, arrays {arrays_exact}, momentum {momentum_exact}, "
                             f"file bytes {bytes_exact}, restored outputs {outputs_exact}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([str(Path(__file__)), "-s", "-q", "-p", "no:cacheprovider"]))
