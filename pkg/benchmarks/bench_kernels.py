"""Compare the compiled and pure-Python hash kernels, then time a full run.

    python benchmarks/bench_kernels.py [--rows 1000000] [--skip-pipeline]

The end-to-end timing runs once per backend in a fresh interpreter, with
CASEPRIVACY_PURE_PYTHON selecting the fallback.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from caseprivacy.suppress import kernels


def best_of(fn, repeat: int = 5) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_table(n: int) -> None:
    rng = np.random.default_rng(0)
    mods = kernels.backends()
    print(f"kernels on {n:,} keys (best of 5, seconds)")
    print(f"{'case':<28}" + "".join(f"{name:>12}" for name in mods))
    for groups in (100, 10_000, n // 4):
        keys = rng.integers(0, groups, n).astype(np.int64) * 2654435761
        ids, counts = mods["python"].group_first_seen(keys)
        vals = rng.integers(-1, 20, n).astype(np.int64)
        row = [best_of(lambda m=m: m.group_first_seen(keys)) for m in mods.values()]
        print(f"{'group_first_seen g=' + format(groups, ','):<28}" + "".join(f"{t:>12.4f}" for t in row))
        row = [best_of(lambda m=m: m.count_distinct(ids, vals, len(counts))) for m in mods.values()]
        print(f"{'count_distinct g=' + format(groups, ','):<28}" + "".join(f"{t:>12.4f}" for t in row))


PIPELINE = """
import sys, time
from datetime import date
from caseprivacy.pipeline import RunConfig, run_pipeline
from caseprivacy.schema import load_bundled
from caseprivacy.suppress import BACKEND
t0 = time.perf_counter()
r = run_pipeline(RunConfig(schema=load_bundled("scientific_use"), inputs=[sys.argv[1]], out=sys.argv[2],
                           release_date=date(2020, 12, 4)))
print(BACKEND, f"{time.perf_counter() - t0:.1f}", len(r.plan), r.report.verdict)
"""


def pipeline_table(rows: int) -> None:
    from caseprivacy.schema import load_bundled
    from caseprivacy.synth import synthesize

    with tempfile.TemporaryDirectory() as tmp:
        src = Path(tmp) / "in.csv"
        synthesize(load_bundled("scientific_use"), rows, seed=9).to_csv(src, index=False)
        print(f"\nend to end, scientific_use, {rows:,} rows, 6 quasi-identifiers, one worker")
        for pure in ("0", "1"):
            env = dict(os.environ, CASEPRIVACY_PURE_PYTHON=pure)
            if pure == "0":
                env.pop("CASEPRIVACY_PURE_PYTHON")
            out = subprocess.run([sys.executable, "-c", PIPELINE, str(src), str(Path(tmp) / f"o{pure}")],
                                 env=env, capture_output=True, text=True, check=True).stdout.split()
            print(f"  backend {out[0]:<8} {out[1]:>6} s   {int(out[2]):,} actions   verification {out[3]}")


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=1_000_000)
    ap.add_argument("--skip-pipeline", action="store_true")
    args = ap.parse_args()
    if "cython" not in kernels.backends():
        print("compiled extension not built; only the fallback is available")
    kernel_table(args.rows)
    if not args.skip_pipeline:
        pipeline_table(args.rows)


if __name__ == "__main__":
    main()
