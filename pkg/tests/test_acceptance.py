"""End-to-end acceptance checks; each prints one PASS/FAIL line."""
import io
import math
import time

import numpy as np
import pytest

from effsr import analysis, harness, ops, serialization, stats, zoo
from effsr.cli import main
from effsr.graph import GraphBuilder, execute
from effsr.ops import Conv2dParams
from effsr.reparam import ChannelGates, KernelBases, PruneError, fuse_cac, fuse_cac_sites, merge_kernel_bases, \
    prune_zero_gates
from oracles import scalar_psnr
from test_harness import FakeClock, identity_model
from test_reparam import INNER, WIDTH, cac_triple, gated_forward, random_gates, rel_err, three_block_net


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail, started):
        line = f"[criterion {number:>2}] {'PASS' if ok else 'FAIL'}  {title}: {detail} ({time.perf_counter() - started:.2f}s)"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return emit


def within(value, target, tol):
    return abs(value - target) <= tol * abs(target)


def test_criterion_01_baseline_exactness(verdict):
    t0 = time.perf_counter()
    out = io.StringIO()
    assert main(["analyze", "msrresnet", "--format", "json"], out=out) == 0
    import json
    r = json.loads(out.getvalue())
    ok = (r["params"] == 1_517_571 and r["conv_layer_count"] == 37
          and within(r["flops"], 166.36e9, 0.005) and within(r["activations"], 292.55e6, 0.001))
    verdict(1, "baseline exactness", ok and time.perf_counter() - t0 < 5,
            f"params={r['params']:,} convs={r['conv_layer_count']} flops={r['flops'] / 1e9:.3f}G "
            f"activations={r['activations'] / 1e6:.3f}M", t0)


def test_criterion_02_pan_calibration(verdict):
    t0 = time.perf_counter()
    params = analysis.analyze(zoo.build("pan")).params
    verdict(2, "PAN calibration", params == 272_419 and time.perf_counter() - t0 < 5,
            f"params={params:,} at nf={zoo.calibrate_pan_width()}", t0)


def test_criterion_03_zoo_fidelity(verdict):
    t0 = time.perf_counter()
    targets = {"rfdn": (0.433e6, 27.10e9, 112.03e6), "fimdn": (0.687e6, 44.98e9, 118.49e6),
               "imdn": (0.893e6, 58.53e9, 154.14e6)}
    parts, ok = [], True
    for name, (p, f, a) in targets.items():
        r = analysis.analyze(zoo.build(name))
        errs = [(r.params - p) / p, (r.flops - f) / f, (r.activations - a) / a]
        ok &= all(abs(e) <= 0.10 for e in errs)
        parts.append(f"{name} " + "/".join(f"{100 * e:+.1f}%" for e in errs))
    verdict(3, "zoo fidelity", ok and time.perf_counter() - t0 < 10, "; ".join(parts), t0)


def test_criterion_04_srocc_vs_runtime(verdict):
    t0 = time.perf_counter()
    res = stats.reproduce_table2(stats.load_fixture())
    ok = all(abs(res.values[m] - t) <= 0.05 for m, t in stats.SROCC_TARGETS.items())
    verdict(4, "SROCC vs runtime", ok and time.perf_counter() - t0 < 1,
            ", ".join(f"{m}={v:.4f}" for m, v in res.values.items()) + f" over {len(res.teams)} rows", t0)


def test_criterion_05_cac_fusion(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        c_in, c_out = (int(v) for v in rng.integers(1, 9, size=2))
        branches = cac_triple(rng, c_in, c_out)
        x = rng.standard_normal((1, c_in, 9, 9))
        worst = max(worst, rel_err(ops.conv2d(x, fuse_cac(*branches)), sum(ops.conv2d(x, p) for p in branches)))
    train = zoo.build("fimdn-train", seed=9)
    x = rng.standard_normal((1, 3, 32, 32))
    whole = rel_err(execute(fuse_cac_sites(train), x), execute(train, x))
    ok = worst <= 1e-10 and whole <= 1e-10
    verdict(5, "CAC fusion equivalence", ok and time.perf_counter() - t0 < 60,
            f"100 configs max rel err {worst:.2e}; FIMDN train->deploy {whole:.2e}", t0)


def test_criterion_06_kernel_bases(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 9))
        c_in, c_out = (int(v) for v in rng.integers(1, 6, size=2))
        kb = KernelBases(rng.standard_normal((n, c_out, c_in, 3, 3)), rng.standard_normal(n),
                         rng.standard_normal(c_out), padding=(1, 1, 1, 1))
        x = rng.standard_normal((1, c_in, 10, 10))
        want = sum(pi * ops.conv2d(x, kb.basis_params(i)) for i, pi in enumerate(kb.merge_weights))
        want = want + kb.bias[None, :, None, None]
        worst = max(worst, float(np.max(np.abs(ops.conv2d(x, merge_kernel_bases(kb)) - want))))
    verdict(6, "kernel-base merge", worst <= 1e-10 and time.perf_counter() - t0 < 30,
            f"100 cases, max abs err {worst:.2e}", t0)


def test_criterion_07_pruning(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst, counts_ok = 0.0, True
    for trial in range(20):
        graph = three_block_net(seed=trial)
        gates, removed = random_gates(rng, graph)
        pruned = prune_zero_gates(graph, gates)
        x = rng.standard_normal((1, 3, 12, 12))
        worst = max(worst, float(np.max(np.abs(execute(pruned, x) - gated_forward(graph, gates, x)))))
        counts_ok &= analysis.count_params(graph) - analysis.count_params(pruned) == removed
    post = np.ones(WIDTH)
    post[0] = 0
    try:
        prune_zero_gates(three_block_net(), ChannelGates(post={"blk0.c2": post}))
        residual_error = False
    except PruneError as e:
        residual_error = "residual" in str(e)
    ok = worst <= 1e-12 and counts_ok and residual_error
    verdict(7, "pruning exactness", ok and time.perf_counter() - t0 < 30,
            f"20 gate patterns max abs err {worst:.2e}; exact param drop={counts_ok}; "
            f"residual channel rejected={residual_error}", t0)


def test_criterion_08_psnr(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    diffs = []
    for _ in range(5):
        a = rng.integers(0, 256, (1, 3, 16, 16)).astype(float)
        b = rng.integers(0, 256, (1, 3, 16, 16)).astype(float)
        diffs.append(abs(harness.psnr(a, b) - scalar_psnr(a, b, 4)))
    zero = harness.psnr(np.zeros((3, 16, 16)), np.full((3, 16, 16), 255.0))
    same = harness.psnr(a, a)
    border = a.copy()
    border[..., :4, :] = 255 - border[..., :4, :]
    border[..., -4:, :] = 0
    border[..., :, :4] = 7
    border[..., :, -4:] = 200
    shaved = harness.psnr(border, a)
    ok = max(diffs) <= 1e-9 and zero == 0.0 and same == math.inf and shaved == math.inf and np.any(border != a)
    verdict(8, "PSNR protocol", ok and time.perf_counter() - t0 < 5,
            f"oracle diff {max(diffs):.1e} dB; black/white {zero} dB; identical {same}; border-only {shaved}", t0)


def test_criterion_09_runtime(verdict):
    t0 = time.perf_counter()
    images = [np.zeros((1, 3, 4, 4))] * 2
    fake = harness.run_benchmark(identity_model(), harness.BenchmarkConfig(images, trials=3),
                                 clock=FakeClock([1.0, 3.0, 0.5, 0.5, 2.0, 6.0]))
    protocol_ok = fake.trial_means == [2.0, 0.5, 4.0] and fake.runtime_s == 0.5
    rng = np.random.default_rng(9)
    inputs = [rng.random((1, 3, 64, 64)) for _ in range(2)]
    cfg = harness.BenchmarkConfig(inputs, trials=3, warmup=1, threads=1, precision="float32")
    rfdn = harness.run_benchmark(zoo.build("rfdn"), cfg).runtime_s
    msr = harness.run_benchmark(zoo.build("msrresnet"), cfg).runtime_s
    ok = protocol_ok and rfdn < msr
    verdict(9, "runtime protocol", ok and time.perf_counter() - t0 < 120,
            f"fake-clock min-of-means ok={protocol_ok}; 64x64 single-thread rfdn {rfdn:.3f}s < msrresnet {msr:.3f}s", t0)


def test_criterion_10_determinism_and_round_trips(verdict, tmp_path):
    t0 = time.perf_counter()
    graph = zoo.build("rfdn", seed=10)
    x = np.random.default_rng(10).standard_normal((1, 3, 16, 16))
    a = execute(graph, x)
    b = execute(graph, x)
    rev = execute(graph, x, order=graph.topological_order(key=lambda nid: tuple(-ord(c) for c in nid)))
    exec_ok = a.tobytes() == b.tobytes() == rev.tobytes()
    path = tmp_path / "w"
    serialization.save_weights(graph, path)
    again = tmp_path / "w2"
    serialization.save_weights(serialization.load_weights(graph, path), again)
    weights_ok = path.read_bytes() == again.read_bytes()
    reports = [analysis.analyze(zoo.build(n), (64, 64)) for n in ("rfdn", "imdn")]
    text = stats.emit_report(reports, stats.load_fixture(), "csv")
    csv_ok = stats.format_rows(stats.parse_csv_report(text), "csv") == text
    ok = exec_ok and weights_ok and csv_ok
    verdict(10, "determinism and round trips", ok and time.perf_counter() - t0 < 30,
            f"execution bit-identical across runs/orders={exec_ok}; weight file={weights_ok}; csv report={csv_ok}", t0)


def test_criterion_11_trained_psnr_not_reproducible(capsys):
    with capsys.disabled():
        print("\n[criterion 11] SKIP  trained PSNR (29.00 dB val / 28.70 dB test) needs full training on "
              "the full training corpus; covered structurally by criteria 1-3 and 5-8")
    pytest.skip("requires full training; not reproducible at desk scale")
