"""Acceptance criteria, each checked at its stated tolerance.

Every test records one PASS/FAIL line (printed in the terminal summary by
conftest) before asserting. The recovery benchmark trials behind criteria
4, 5 and 10 are shared and take about 40 minutes on one core.
"""
import csv
import json
import math
import statistics
import time
from fractions import Fraction

import numpy as np
import pytest

from gracevae import cli, evalsuite, experiment, objective, scmsynth
from gracevae.causal import temperature_schedule
from gracevae.diffcore import softmax_with_temperature

RESULTS: list[str] = []
RECOVERY_SEEDS = range(10)


def verdict(n: int, ok: bool, detail: str) -> None:
    RESULTS.append(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# ---- 1

def test_c01_gradient_integrity():
    start = time.perf_counter()
    err, seed = experiment.composite_grad_check(p=3, d=6, hidden=16, batch=8, eps=1e-4)
    secs = time.perf_counter() - start
    verdict(1, err < 1e-4 and secs < 30,
            f"max rel err {err:.2e} (< 1e-4) on instance seed {seed}, {secs:.1f}s (< 30s)")


# ---- 2

def test_c02_closed_forms():
    checks = {
        "recon x=xhat d=2": (objective.recon_nll(np.ones((1, 2)), np.ones((1, 2))).data, math.log(2 * math.pi)),
        "recon residual 2": (objective.recon_nll(np.array([[2.0]]), np.zeros((1, 1))).data,
                             2 + 0.5 * math.log(2 * math.pi)),
        "kl zero": (objective.kl_diag_gaussian(np.zeros((1, 3)), np.zeros((1, 3))).data, 0.0),
        "kl mu=1": (objective.kl_diag_gaussian(np.ones((1, 1)), np.zeros((1, 1))).data, 0.5),
        "kl var=4": (objective.kl_diag_gaussian(np.zeros((1, 1)), np.full((1, 1), math.log(4))).data,
                     0.5 * (3 - math.log(4))),
        "mmd two-point": (objective.mmd2(np.array([[0.0, 0.0]]), np.array([[1.0, 1.0]]), bandwidths=[3.0]).data,
                          2 - 2 * math.exp(-2 / 3)),
        "mmd identical": (objective.mmd2(np.eye(3), np.eye(3)[::-1]).data, 0.0),
        "softmax sym": (softmax_with_temperature(np.zeros(2), 1.0).data[0], 0.5),
        "softmax ln2": (softmax_with_temperature(np.array([math.log(2), 0.0]), 1.0).data[0], 2 / 3),
        "softmax t=50": (softmax_with_temperature(np.array([1.0, 0.0]), 50.0).data[0], 1 / (1 + math.exp(-50))),
    }
    worst = max(abs(float(np.asarray(got).reshape(-1)[0]) - want) for got, want in checks.values())
    verdict(2, worst < 1e-9, f"{len(checks)} closed forms, worst abs deviation {worst:.1e} (< 1e-9)")


# ---- 3

GOLDEN = {0: (0, 0, 1), 4: (0, 0, 1), 5: (0, 0, 1), 10: (Fraction(4, 5), 0, 1), 30: (4, 1, 1),
          50: (Fraction(36, 5), 2, 1), 75: (8, 2, Fraction(5, 2)), 100: (8, 2, 4)}


def test_c03_schedule_golden_table():
    wrong = []
    for e, want in GOLDEN.items():
        got = (objective.schedule("alpha", e, 100, 8), objective.schedule("beta", e, 100, 2),
               temperature_schedule(e, 100, 4))
        if got != want:
            wrong.append((e, got, want))
    verdict(3, not wrong, f"{len(GOLDEN)} epochs exact" if not wrong else f"mismatches {wrong}")


# ---- 4, 5, 10 share these trials

@pytest.fixture(scope="module")
def recovery():
    return [experiment.recovery_trial(seed, with_ablation=True) for seed in RECOVERY_SEEDS]


def test_c04_synthetic_recovery(recovery):
    corr = statistics.median(r["oracle"]["mean_abs_corr"] for r in recovery)
    acc = statistics.median(r["oracle"]["target_accuracy"] for r in recovery)
    shd = statistics.median(r["oracle"]["best_shd"] for r in recovery)
    slowest = max(r["seconds"] for r in recovery)
    per_seed = " ".join(f"{r['oracle']['mean_abs_corr']:.2f}/{r['oracle']['target_accuracy']:.2f}/"
                        f"{r['oracle']['best_shd']}" for r in recovery)
    verdict(4, corr >= 0.8 and acc >= 0.75 and shd <= 2 and slowest <= 600,
            f"median |corr| {corr:.3f} (>= 0.8), accuracy {acc:.2f} (>= 0.75), best SHD {shd} (<= 2), "
            f"slowest seed {slowest:.0f}s (<= 600); per seed corr/acc/shd: {per_seed}")


def test_c05_graph_context_trend(recovery):
    mmd_g = statistics.median(r["graph"]["mmd"] for r in recovery)
    mmd_0 = statistics.median(r["no_graph"]["mmd"] for r in recovery)
    r2_g = statistics.median(r["graph"]["r2"] for r in recovery)
    r2_0 = statistics.median(r["no_graph"]["r2"] for r in recovery)
    wins = sum(r["graph"]["mmd"] <= r["no_graph"]["mmd"] for r in recovery)
    verdict(5, mmd_g <= mmd_0 and r2_g >= r2_0 - 0.02,
            f"median MMD graph {mmd_g:.5f} vs none {mmd_0:.5f} (graph lower or equal in {wins}/{len(recovery)} "
            f"seeds); median R2 graph {r2_g:.4f} vs none {r2_0:.4f}")


def test_c10_double_intervention(recovery):
    r2 = [r["double_r2"] for r in recovery]
    med = statistics.median(-math.inf if v is None else v for v in r2)
    verdict(10, med >= 0.6, f"median held-out pair R2 {med:.3f} (>= 0.6); per seed "
                            + " ".join("err" if v is None else f"{v:.2f}" for v in r2))


# ---- 6

def test_c06_context_ablation_rows(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("latent_dim = 3\nobs_dim = 8\nn_obs = 200\nn_per_intervention = 100\nepochs = 2\n")
    assert cli.main(["-q", "synth", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    assert cli.main(["-q", "ablate", "--axis", "context", "--bundle", str(tmp_path / "b"), "--config", str(cfg),
                     "--out", str(tmp_path / "a")]) == 0
    with open(tmp_path / "a" / "ablation.csv") as fh:
        rows = list(csv.DictReader(fh))
    from gracevae.config import parse_lines

    cfgs = [parse_lines((d / "config.cfg").read_text()) for d in sorted((tmp_path / "a").glob("cell*"))]
    diffs = [{k for k in c if c[k] != cfgs[0][k]} for c in cfgs[1:]]
    masks = [r["edge_mask"] for r in rows]
    verdict(6, len(rows) == 3 and masks == ["GG", "GG+PG", "GG+PG+PP"] and all(d == {"edge_mask"} for d in diffs),
            f"rows {masks}, differing keys {diffs}")


# ---- 7

def test_c07_assumption_checkers():
    chain = scmsynth.chain_ground_truth([1.0], shift=1.0)
    power_tests = [t["reject"] for s in range(20)
                   for t in scmsynth.check_faithfulness(chain, 0, 5000, n_C_draws=2, seed=s).tests]
    power = float(np.mean(power_tests))
    null = scmsynth.chain_ground_truth([1.0], shift=0.0)
    null_tests = [t["reject"] for s in range(200)
                  for t in scmsynth.check_faithfulness(null, 0, 1000, n_C_draws=1, seed=10_000 + s).tests]
    fpr = float(np.mean(null_tests))
    unit = scmsynth.chain_ground_truth([1.0])
    flagged = scmsynth.check_total_separation(unit, (0, 1), [-2.0, -1.0, 0.0, 1.0])
    clean = scmsynth.check_total_separation(unit, (0, 1), [-2.0, 0.0, 1.0])
    ok = power >= 0.9 and fpr <= 0.08 and not flagged.holds and flagged.argmin["c_j"] == -1.0 and clean.holds
    verdict(7, ok, f"power {power:.3f} over {len(power_tests)} tests (>= 0.9), FPR {fpr:.4f} over "
                   f"{len(null_tests)} null tests (<= 0.08), c=-w flagged: {not flagged.holds}")


# ---- 8

def test_c08_cd_equivalence_oracle():
    exact = []
    for p in (2, 4, 8):
        rng = np.random.default_rng(100 + p)
        U = rng.standard_normal((100 * p, p))
        perm = rng.permutation(p)
        scale = rng.choice([-1.0, 1.0], p) * rng.uniform(0.2, 5.0, p)
        U_hat = U[:, perm] * scale + rng.standard_normal(p)
        m = evalsuite.match_latents(U_hat, U)
        exact.append(np.array_equal(m.perm, perm) and abs(m.mean_corr - 1.0) < 1e-9)
    agree = 0
    rng = np.random.default_rng(8)
    for trial in range(100):
        p = 2 + trial % 5
        U = rng.standard_normal((20 * p, p))
        U_hat = U @ rng.standard_normal((p, p)) + rng.standard_normal((20 * p, p))
        m = evalsuite.match_latents(U_hat, U)
        C, _ = evalsuite.abs_corr_matrix(U_hat, U)
        _, best = evalsuite.exhaustive_assignment(C)
        agree += abs(m.corr.sum() - best) < 1e-12
    verdict(8, all(exact) and agree == 100,
            f"affine-permuted recovery exact for p=2,4,8: {exact}; Hungarian = exhaustive in {agree}/100")


# ---- 9

def test_c09_determinism_and_resume(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("latent_dim = 3\nobs_dim = 10\nn_obs = 500\nn_per_intervention = 500\nseed = 3\n")
    b = str(tmp_path / "b")
    assert cli.main(["-q", "synth", "--config", str(cfg), "--out", b]) == 0
    train = ["-q", "train", "--bundle", b, "--config", str(cfg)]
    for name in ("a", "b2"):
        assert cli.main(train + ["--out", str(tmp_path / name)]) == 0
        assert cli.main(["-q", "eval", "--run", str(tmp_path / name), "--bundle", b]) == 0
    assert cli.main(train + ["--out", str(tmp_path / "half"), "--stop-epoch", "50"]) == 0
    assert cli.main(train + ["--out", str(tmp_path / "rest"), "--resume", str(tmp_path / "half")]) == 0
    same_metrics = all((tmp_path / "a" / "eval" / f).read_bytes() == (tmp_path / "b2" / "eval" / f).read_bytes()
                       for f in ("metrics.csv", "oracle.json", "samples.csv"))
    same_resume = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "rest" / f).read_bytes()
                      for f in ("checkpoint.ckpt", "train_log.csv"))
    epochs = json.loads((tmp_path / "rest" / "run.json").read_text())["epochs_done"]
    verdict(9, same_metrics and same_resume and epochs == 100,
            f"repeat-run reports byte-identical: {same_metrics}; 50+resume+50 checkpoint and log "
            f"identical to 100 straight: {same_resume}")
