"""Benchmark the compiled kernel core against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]

Times the three hot kernels (separable Gaussian blur, batch coalition
masking, subset-table Shapley accumulation) and an end-to-end budgeted
explanation under each backend.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from owenexplain._kernels import _pure

try:
    from owenexplain._kernels import _compiled
except ImportError:
    _compiled = None


def timeit(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_backend(impl, repeats: int) -> dict[str, float]:
    rng = np.random.default_rng(7)
    results = {}

    x64 = rng.uniform(0, 1, 64 * 64)
    results["blur 64x64 sigma=3"] = timeit(lambda: impl.gaussian_blur(x64, (64, 64), 3.0), repeats)

    x = rng.uniform(0, 1, 144)
    fill = rng.uniform(0, 1, 144)
    cell_atom = np.repeat(np.arange(16), 9).astype(np.int32)
    active = (rng.uniform(size=(256, 16)) > 0.5).astype(np.uint8)
    results["mask 256x(12x12)"] = timeit(lambda: impl.apply_masks(x, fill, cell_atom, active), repeats)

    table = rng.uniform(-1, 1, 1 << 16)
    results["shapley table n=16"] = timeit(lambda: impl.shapley_from_table(table, 16), repeats)
    return results


def bench_explain(backend_name: str, repeats: int) -> float:
    import importlib
    import os
    import subprocess
    import sys

    code = (
        "import time, numpy as np\n"
        "import owenexplain as ox\n"
        "spec = ox.VictimSpec(kind='quadrant_bright', seed=3, num_classes=4, "
        "input_shape=(12, 12), temperature=0.15)\n"
        "model = ox.make_victim(spec)\n"
        "grid = ox.build_atom_grid((12, 12), (1, 1))\n"
        "masker = ox.MaskerSpec(grid=grid, fill='blur')\n"
        "tree = ox.build_partition_tree(grid)\n"
        "cfg = ox.ExplainConfig(masker=masker, tree=tree, max_evals=256, target=0)\n"
        "x = ox.make_rng(1).uniform(0, 1, 144)\n"
        "best = float('inf')\n"
        f"for _ in range({repeats}):\n"
        "    t0 = time.perf_counter()\n"
        "    ox.explain(x, model, cfg)\n"
        "    best = min(best, time.perf_counter() - t0)\n"
        "print(best)\n"
    )
    env = dict(os.environ, OWEN_EXPLAIN_BACKEND=backend_name)
    out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                         text=True, env=env, check=True)
    return float(out.stdout.strip())


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = [("pure", _pure)]
    if _compiled is not None:
        backends.append(("compiled", _compiled))
    else:
        print("compiled core not built; benchmarking the fallback only")

    rows = {}
    for name, impl in backends:
        rows[name] = bench_backend(impl, args.repeats)
        rows[name]["explain 144 atoms, 256 evals"] = bench_explain(name, args.repeats)

    ops = list(next(iter(rows.values())))
    width = max(len(op) for op in ops) + 2
    header = f"{'operation':<{width}}" + "".join(f"{name:>14}" for name in rows)
    if len(rows) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for op in ops:
        line = f"{op:<{width}}"
        for name in rows:
            line += f"{rows[name][op] * 1e3:>12.3f}ms"
        if len(rows) == 2:
            line += f"{rows['pure'][op] / rows['compiled'][op]:>9.2f}x"
        print(line)


if __name__ == "__main__":
    main()
