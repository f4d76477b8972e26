"""Acceptance suite: one test per release criterion, at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to get one printed
PASS line per criterion (a failed assertion marks the criterion FAIL).
"""

import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from vtr.accel import AccelConfig, latency_lower_bound, peak_throughput, simulate_forward
from vtr.cli import main as cli_main
from vtr.matrix import BlockOrder, dbmm, from_blocked, naive_matmul, rel_error, to_blocked
from vtr.model import VtrConfig, count_macs, count_params, forward, lsa_attention
from vtr.weights_io import random_init

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def _ok(name):
    print(f"\nACCEPTANCE {name}: PASS")


def table_grid():
    """The full published hyper-parameter grid: 32 + 32 + 32 configs."""
    grid = []
    for patch in (8, 11):  # 88x88, 10 classes
        for dim in (44, 88):
            for depth in (4, 6, 8, 12):
                for heads in (2, 4):
                    grid.append(VtrConfig(88, 88, 1, patch, 4, 2, dim, depth, heads, 4, 10))
    for patch in (8, 16):  # 128x128, 10 classes
        for dim in (48, 96):
            for depth in (4, 6, 8, 12):
                for heads in (2, 4):
                    grid.append(VtrConfig(128, 128, 1, patch, 4, 2, dim, depth, heads, 4, 10))
    for patch in (8, 11):  # 88x88, 7 classes
        for dim in (44, 88):
            for depth in (4, 6, 8, 12):
                for heads in (2, 4):
                    grid.append(VtrConfig(88, 88, 1, patch, 4, 2, dim, depth, heads, 4, 7))
    return grid


def test_parameter_table_reproduction():
    t0 = time.perf_counter()
    rows = [
        (8, 44, 4, 2, 109.99e3),
        (8, 44, 6, 2, 157.33e3),
        (8, 88, 12, 4, 1156e3),
        (11, 44, 4, 2, 123.10e3),
    ]
    for patch, dim, depth, heads, want in rows:
        cfg = VtrConfig(88, 88, 1, patch, 4, 2, dim, depth, heads, 4, 10)
        got = count_params(cfg, paper_comparable=True)
        assert abs(got - want) / want < 0.02, (patch, dim, depth, heads, got, want)
    assert time.perf_counter() - t0 < 1.0
    _ok("parameter-table reproduction (4 rows within 2%, < 1 s)")


def test_peak_performance_cross_check():
    acfg = AccelConfig(p_h=4, p_t=12, p_c=2, p_pe=8, clock_hz=300e6)
    assert acfg.macs_per_cycle == 6144
    peak = peak_throughput(acfg)
    assert peak == pytest.approx(1.8432e12)
    assert abs(peak - 1.8e12) / 1.8e12 < 0.03
    _ok("peak throughput 6144 MACs/cycle = 1.843e12 MAC/s (within 3% of 1.8T)")


def test_dbmm_oracle_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240601)
    for case in range(200):
        m = int(rng.integers(1, 129))
        k = int(rng.integers(1, 129))
        n = int(rng.integers(1, 129))
        b = int(rng.choice([8, 16, 32]))
        a = rng.standard_normal((m, k)).astype(np.float32)
        w = rng.standard_normal((k, n)).astype(np.float32)
        ab = to_blocked(a, b, BlockOrder.ROW_MAJOR)
        wb = to_blocked(w, b, BlockOrder.COL_MAJOR)
        np.testing.assert_array_equal(from_blocked(ab), a)  # layout round-trip exact
        np.testing.assert_array_equal(from_blocked(wb), w)
        got = from_blocked(dbmm(ab, wb))
        want = naive_matmul(a, w)
        err = np.linalg.norm(got - want) / max(np.linalg.norm(want), 1e-30)
        assert err < 1e-5, (case, m, k, n, b, err)
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    _ok(f"DBMM vs naive oracle, 200 random cases within 1e-5 ({elapsed:.1f} s)")


def test_lsa_invariants():
    rng = np.random.default_rng(7)
    for _ in range(100):
        heads = int(rng.choice([1, 2, 4]))
        dim = heads * int(rng.choice([4, 8, 16]))
        cfg = VtrConfig(image_h=16, image_w=16, patch=8, dim=dim, depth=1, heads=heads,
                        num_classes=2)
        w = random_init(cfg, int(rng.integers(1 << 31)))
        w.layers[0].temperature = np.float32(rng.uniform(0.25, 8.0))
        z = (rng.standard_normal((cfg.seq_len, dim)) * rng.uniform(0.1, 3.0)).astype(np.float32)
        _, scores = lsa_attention(z, w.layers[0], cfg, return_scores=True)
        per_head = scores.reshape(heads, cfg.seq_len, cfg.seq_len)
        assert np.abs(per_head.sum(axis=2) - 1.0).max() <= 1e-6
        assert max(np.diagonal(per_head[h]).max() for h in range(heads)) < 1e-6

    cfg = VtrConfig(image_h=8, image_w=8, patch=8, shifts=0, dim=4, depth=1, heads=1,
                    num_classes=2)
    w = random_init(cfg, 3)
    z = np.random.default_rng(4).standard_normal((2, 4)).astype(np.float32)
    _, scores = lsa_attention(z, w.layers[0], cfg, return_scores=True)
    np.testing.assert_array_equal(scores, [[0.0, 1.0], [1.0, 0.0]])
    _ok("LSA invariants over 100 random models + exact 2-token forced case")


def test_engine_simulator_equivalence_full_grid():
    t0 = time.perf_counter()
    acfg = AccelConfig()
    worst = 0.0
    grid = table_grid()
    assert len(grid) == 96
    for idx, cfg in enumerate(grid):
        w = random_init(cfg, seed=1000 + idx)
        img = np.random.default_rng(idx).random(
            (cfg.image_h, cfg.image_w, cfg.channels), dtype=np.float32
        )
        engine_logits = forward(img, w, cfg)
        sim_logits, report = simulate_forward(img, w, cfg, acfg)
        err = rel_error(sim_logits, engine_logits)
        worst = max(worst, err)
        assert err < 1e-4, (idx, cfg, err)
        assert report.hppu_mac_total == count_macs(cfg), (idx, cfg)
        assert 0.0 < report.utilization <= 1.0, (idx, cfg, report.utilization)
        assert report.latency_s >= latency_lower_bound(cfg, acfg), (idx, cfg)
    elapsed = time.perf_counter() - t0
    assert elapsed < 600.0
    _ok(
        f"engine-simulator equivalence on 96-config grid "
        f"(worst rel err {worst:.2e}, MACs exact, {elapsed:.0f} s)"
    )


def test_golden_fixture_validation():
    assert FIXTURES.is_dir() and (FIXTURES / "manifest.json").exists(), (
        f"committed fixtures missing at {FIXTURES}"
    )
    assert cli_main(["validate", "--fixtures", str(FIXTURES)]) == 0
    _ok("golden-fixture validation (committed fixtures, every stage within 1e-4)")


def test_desk_scale_latency():
    cfg = VtrConfig(88, 88, 1, 8, 4, 2, 88, 12, 4, 4, 10)  # best published geometry
    w = random_init(cfg, 5)
    img = np.random.default_rng(5).random((88, 88, 1), dtype=np.float32)
    forward(img, w, cfg)  # warm-up
    samples = []
    for _ in range(15):
        t0 = time.perf_counter()
        forward(img, w, cfg)
        samples.append(time.perf_counter() - t0)
    median_ms = statistics.median(samples) * 1e3
    assert median_ms < 50.0, f"median {median_ms:.2f} ms"
    _ok(f"desk-scale latency: median {median_ms:.2f} ms < 50 ms on this host")
