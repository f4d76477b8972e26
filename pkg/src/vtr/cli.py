"""Command-line surface: infer, simulate, count, validate, bench, trace-compare.

Exit codes: 0 success, 1 validation or comparison failure, 2 usage or
configuration error, 3 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import threading
import time
from pathlib import Path

import numpy as np

from .accel import AccelConfig, latency_lower_bound, peak_throughput, simulate_forward
from .errors import ConfigError, FormatError, VtrError
from .matrix import rel_error
from .model import (
    VtrConfig,
    count_macs,
    count_params,
    forward,
    mac_breakdown,
    param_breakdown,
)
from .weights_io import (
    load_image,
    load_manifest,
    load_tensor,
    load_weights,
    read_trace_bundle,
    write_trace_bundle,
)


def _softmax(v: np.ndarray) -> np.ndarray:
    e = np.exp(v - v.max())
    return e / e.sum()


def _cmd_infer(args) -> int:
    weights, cfg = load_weights(args.weights)
    img = load_image(args.image)
    if args.trace:
        logits, trace = forward(img, weights, cfg, trace=True)
        write_trace_bundle(args.trace, trace)
    else:
        logits = forward(img, weights, cfg)
    probs = _softmax(logits)
    argmax = int(np.argmax(logits))
    if args.json:
        print(json.dumps({"logits": logits.tolist(), "probs": probs.tolist(), "argmax": argmax}))
    else:
        for i, p in enumerate(probs):
            print(f"class {i}: {p:.6f}")
        print(f"argmax: {argmax}")
    return 0


def _accel_config(args) -> AccelConfig:
    return AccelConfig(
        p_h=args.ph,
        p_t=args.pt,
        p_c=args.pc,
        p_pe=args.ppe,
        block=args.block,
        clock_hz=args.clock_mhz * 1e6,
        cost_model=args.cost_model,
    )


def _cmd_simulate(args) -> int:
    weights, cfg = load_weights(args.weights)
    img = load_image(args.image)
    acfg = _accel_config(args)
    logits, report = simulate_forward(img, weights, cfg, acfg)
    engine_logits = forward(img, weights, cfg)
    err = rel_error(logits, engine_logits)
    if args.json:
        doc = json.loads(report.to_json())
        doc["logits"] = logits.tolist()
        doc["argmax"] = int(np.argmax(logits))
        doc["engine_rel_error"] = err
        doc["peak_macs_per_s"] = peak_throughput(acfg)
        doc["latency_lower_bound_s"] = latency_lower_bound(cfg, acfg)
        print(json.dumps(doc, indent=2))
    else:
        print(report.to_text())
        print(f"latency lower bound {latency_lower_bound(cfg, acfg) * 1e3:.4f} ms")
        print(f"argmax: {int(np.argmax(logits))}")
        print(f"engine agreement: rel error {err:.2e}")
    if err > 1e-4:
        print(f"FAIL: simulator and engine logits disagree ({err:.2e} > 1e-4)", file=sys.stderr)
        return 1
    return 0


def _cmd_count(args) -> int:
    if args.weights:
        _, cfg = load_weights(args.weights)
    else:
        cfg = VtrConfig(
            image_h=args.image_h,
            image_w=args.image_w,
            channels=args.channels,
            patch=args.patch,
            shifts=args.shifts,
            shift_px=args.shift_px,
            dim=args.dim,
            depth=args.depth,
            heads=args.heads,
            mlp_ratio=args.mlp_ratio,
            num_classes=args.classes,
        )
    full = count_params(cfg)
    comparable = count_params(cfg, paper_comparable=True)
    macs = count_macs(cfg)
    if args.json:
        print(
            json.dumps(
                {
                    "config": cfg.__dict__,
                    "params_full": full,
                    "params_paper_comparable": comparable,
                    "params_breakdown": param_breakdown(cfg),
                    "macs": macs,
                    "macs_breakdown": mac_breakdown(cfg),
                }
            )
        )
        return 0
    headline = comparable if args.paper_comparable else full
    print(f"parameters           {headline} ({headline / 1e3:.2f}K)")
    print(f"  full               {full}")
    print(f"  paper-comparable   {comparable} (no pos/class embeddings, no QKV biases)")
    for k, v in param_breakdown(cfg).items():
        print(f"    {k:<14} {v}")
    print(f"analytic MACs        {macs} ({macs / 1e6:.2f}M)")
    print("  formula: N*raw_dim*D + depth*[3(N+1)D^2 + 2(N+1)^2 D + (N+1)D^2")
    print("           + 2*ratio*(N+1)D^2] + D*classes")
    for k, v in mac_breakdown(cfg).items():
        print(f"    {k:<14} {v}")
    return 0


def _compare_bundles(got: dict, want: dict, tol: float, label: str) -> list[str]:
    failures = []
    for stage in sorted(want):
        if stage not in got:
            failures.append(f"{label}: stage {stage} missing")
            continue
        if got[stage].shape != want[stage].shape:
            failures.append(f"{label}: stage {stage} shape {got[stage].shape} != {want[stage].shape}")
            continue
        err = rel_error(got[stage], want[stage])
        if err > tol:
            failures.append(f"{label}: stage {stage} rel error {err:.3e} > {tol:g}")
    return failures


def _cmd_validate(args) -> int:
    fixtures = Path(args.fixtures)
    manifest_path = fixtures / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"no fixtures: {manifest_path} not found")
    manifest = load_manifest(manifest_path)
    if not manifest.samples:
        raise FormatError(f"no fixtures: {manifest_path} lists no samples")
    weights, cfg = load_weights(manifest.weights)
    failures: list[str] = []
    for n, sample in enumerate(manifest.samples):
        label = f"sample{n}"
        img = load_image(sample.image)
        logits, trace = forward(img, weights, cfg, trace=True)
        argmax = int(np.argmax(logits))
        if argmax != sample.expected_class:
            failures.append(f"{label}: argmax {argmax} != expected {sample.expected_class}")
        if sample.traces:
            golden = {stage: np.atleast_2d(load_tensor(p)) for stage, p in sample.traces.items()}
            got = {stage: np.atleast_2d(trace[stage]) for stage in golden if stage in trace}
            for stage in sorted(set(golden) - set(trace)):
                failures.append(f"{label}: engine trace lacks stage {stage}")
            failures += _compare_bundles(got, {k: golden[k] for k in got}, manifest.tolerance_rel, label)
        sim_logits, _ = simulate_forward(img, weights, cfg)
        err = rel_error(sim_logits, logits)
        if err > manifest.tolerance_rel:
            failures.append(f"{label}: simulator logits rel error {err:.3e}")
        status = "FAIL" if any(f.startswith(label) for f in failures) else "ok"
        print(f"{label}: class {argmax} [{status}]")
    if failures:
        for f in failures:
            print(f"FAIL {f}", file=sys.stderr)
        print(f"{len(failures)} failure(s) over {len(manifest.samples)} sample(s)", file=sys.stderr)
        return 1
    print(f"all {len(manifest.samples)} sample(s) passed (tolerance {manifest.tolerance_rel:g})")
    return 0


def _cmd_bench(args) -> int:
    weights, cfg = load_weights(args.weights)
    img = load_image(args.image)
    forward(img, weights, cfg)  # warm-up
    if args.threads > 1:
        def worker(times: list):
            for _ in range(args.iters):
                t0 = time.perf_counter()
                forward(img, weights, cfg)
                times.append(time.perf_counter() - t0)

        buckets: list[list[float]] = [[] for _ in range(args.threads)]
        threads = [threading.Thread(target=worker, args=(b,)) for b in buckets]
        wall0 = time.perf_counter()
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        wall = time.perf_counter() - wall0
        samples = [t for b in buckets for t in b]
        throughput = len(samples) / wall
    else:
        samples = []
        wall0 = time.perf_counter()
        for _ in range(args.iters):
            t0 = time.perf_counter()
            forward(img, weights, cfg)
            samples.append(time.perf_counter() - t0)
        wall = time.perf_counter() - wall0
        throughput = len(samples) / wall
    stats = {
        "iters": len(samples),
        "threads": args.threads,
        "min_ms": min(samples) * 1e3,
        "median_ms": statistics.median(samples) * 1e3,
        "mean_ms": statistics.fmean(samples) * 1e3,
        "images_per_s": throughput,
    }
    if args.json:
        print(json.dumps(stats))
    else:
        print(f"iterations      {stats['iters']} (threads {args.threads})")
        print(f"min latency     {stats['min_ms']:.3f} ms")
        print(f"median latency  {stats['median_ms']:.3f} ms")
        print(f"mean latency    {stats['mean_ms']:.3f} ms")
        print(f"throughput      {stats['images_per_s']:.1f} images/s")
    return 0


def _cmd_trace_compare(args) -> int:
    got = {k: np.atleast_2d(v) for k, v in read_trace_bundle(args.got).items()}
    want = {k: np.atleast_2d(v) for k, v in read_trace_bundle(args.want).items()}
    if not want:
        raise FormatError(f"no trace files in {args.want}")
    failures = _compare_bundles(got, want, args.tol, "trace")
    for stage in sorted(want):
        if stage in got and got[stage].shape == want[stage].shape:
            print(f"{stage}: rel error {rel_error(got[stage], want[stage]):.3e}")
    if failures:
        for f in failures:
            print(f"FAIL {f}", file=sys.stderr)
        return 1
    print(f"all {len(want)} stage(s) within {args.tol:g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vtr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="run one image through the inference engine")
    p.add_argument("--weights", required=True, help="VTRW weights file")
    p.add_argument("--image", required=True, help="VTRT or PGM image")
    p.add_argument("--trace", help="directory to write the activation trace bundle")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("simulate", help="run one image through the accelerator simulator")
    p.add_argument("--weights", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--ph", type=int, default=4, help="head compute units")
    p.add_argument("--pt", type=int, default=12, help="PE rows per HCU")
    p.add_argument("--pc", type=int, default=2, help="PE cols per HCU")
    p.add_argument("--ppe", type=int, default=8, help="systolic array side per PE")
    p.add_argument("--block", type=int, default=16, help="tile side b")
    p.add_argument("--clock-mhz", type=float, default=300.0)
    p.add_argument("--cost-model", choices=("ideal", "fill-drain"), default="ideal")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("count", help="analytic parameter and MAC counts")
    p.add_argument("--weights", help="read the config from a VTRW file instead of flags")
    p.add_argument("--image-h", type=int, default=88)
    p.add_argument("--image-w", type=int, default=88)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--patch", type=int, default=8)
    p.add_argument("--shifts", type=int, default=4)
    p.add_argument("--shift-px", type=int, default=2)
    p.add_argument("--dim", type=int, default=44)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--mlp-ratio", type=int, default=4)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--paper-comparable", action="store_true",
                   help="headline the variant without pos/class embeddings and QKV biases")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_count)

    p = sub.add_parser("validate", help="run golden-fixture and invariant checks")
    p.add_argument("--fixtures", required=True, help="directory containing manifest.json")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("bench", help="wall-clock engine latency statistics")
    p.add_argument("--weights", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("trace-compare", help="compare two activation trace bundles")
    p.add_argument("--got", required=True, help="trace bundle under test")
    p.add_argument("--want", required=True, help="golden trace bundle")
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=_cmd_trace_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "iters", 1) < 1 or getattr(args, "threads", 1) < 1:
        print("error: --iters and --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (FormatError, FileNotFoundError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except VtrError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
