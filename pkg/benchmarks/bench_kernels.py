"""Compiled vs pure-numpy hot kernels, micro and end-to-end.

Run twice to compare the two backends:

    python benchmarks/bench_kernels.py                    # compiled (if built)
    SUBDEQ_PURE_PYTHON=1 python benchmarks/bench_kernels.py

or let the script fork itself with the env toggle (default) and print the
side-by-side table.
"""

import json
import os
import subprocess
import sys
import time

import numpy as np


def bench(fn, *args, repeat=200):
    fn(*args)  # warm up
    start = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - start) / repeat


def make_layer_inputs(n=150, d=400, batch=128):
    from subdeq import DEQLayerConfig, Relu, ShiftedTanh
    from subdeq.numerics import RngSpec, random_fill

    rs = RngSpec(42, "standard-normal").split(4)
    cfg = DEQLayerConfig(
        weights=random_fill((n, n), rs[0]) / np.sqrt(n),
        injection_weights=random_fill((n, d), rs[1]) / np.sqrt(d),
        injection_bias=0.1 * random_fill((n,), rs[2]),
        injection_activation=Relu(),
        sigma2=ShiftedTanh(1.603),
    )
    x = random_fill((d, batch), RngSpec(rs[3].seed, "uniform01"))
    return cfg, x


def run_suite():
    from subdeq import _kernels, build_layer, contraction_probe
    from subdeq.deq import forward
    from subdeq.numerics import RngSpec
    from subdeq.solver import SolverConfig

    results = {"backend": _kernels.backend_name()}

    n, batch = 150, 128
    gen = np.random.default_rng(0)
    vec = gen.standard_normal(n)
    add = gen.random(n)
    zv = np.abs(gen.standard_normal(n)) + 0.1
    yv = np.abs(gen.standard_normal(n)) + 0.1
    pre2 = gen.standard_normal((n, batch))
    z2 = np.abs(gen.standard_normal((n, batch))) + 0.1

    results["tanh_shift_add_150_us"] = bench(_kernels.tanh_shift_add, vec, add, 1.603, repeat=5000) * 1e6
    results["tanh_shift_add_150x128_us"] = bench(_kernels.tanh_shift_add, pre2, add, 1.603) * 1e6
    results["column_pnorms_inf_150_us"] = bench(_kernels.column_pnorms, zv, np.inf, repeat=5000) * 1e6
    results["column_pnorms_inf_150x128_us"] = bench(_kernels.column_pnorms, z2, np.inf) * 1e6
    results["thompson_150_us"] = bench(_kernels.thompson, zv, yv, repeat=5000) * 1e6

    cfg, x = make_layer_inputs()
    layer = build_layer(cfg)
    start = time.perf_counter()
    for _ in range(5):
        report = forward(cfg, x, SolverConfig(tol=1e-8, max_iter=200))
    results["batched_forward_150x128_ms"] = (time.perf_counter() - start) / 5 * 1e3
    results["forward_iterations"] = report.iterations

    x_vec = x[:, 0]
    G = layer.equilibrium_map(x_vec)
    start = time.perf_counter()
    contraction_probe(
        G, 400, 150, RngSpec(0), layer.certificate.mu, False, slice_spec=cfg.normalization
    )
    results["contraction_probe_400_pairs_ms"] = (time.perf_counter() - start) * 1e3
    return results


def main():
    if os.environ.get("SUBDEQ_BENCH_CHILD") == "1":
        print(json.dumps(run_suite()))
        return

    rows = []
    for pure in ("0", "1"):
        env = dict(os.environ, SUBDEQ_BENCH_CHILD="1", SUBDEQ_PURE_PYTHON=pure)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__)],
            env=env,
            capture_output=True,
            text=True,
            check=True,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
        rows.append(json.loads(proc.stdout.strip().splitlines()[-1]))

    keys = [k for k in rows[0] if k != "backend"]
    width = max(len(k) for k in keys) + 2
    header = f"{'kernel':<{width}}" + "".join(f"{r['backend']:>16}" for r in rows)
    print(header)
    print("-" * len(header))
    for key in keys:
        line = f"{key:<{width}}"
        for r in rows:
            value = r[key]
            line += f"{value:>16.2f}" if isinstance(value, float) else f"{value:>16}"
        print(line)
    if rows[0]["backend"] == rows[1]["backend"]:
        print("\nnote: compiled extension unavailable; both columns ran the pure backend")


if __name__ == "__main__":
    main()
