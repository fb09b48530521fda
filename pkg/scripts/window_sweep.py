"""Window sweep: terminal-agnostic mean EER over window size and offset.

Writes sweep.tsv and sweep.svg under OUT. Invalid windows (offset beyond
the window) are left as n/a cells.

    python scripts/window_sweep.py --gesture watch-tap --sources watch --out runs/sweep
"""

import argparse
import time
from pathlib import Path

import numpy as np

from tapknock.dataset import parse_sources
from tapknock.forest import ForestConfig
from tapknock.model import GestureKind
from tapknock.protocols import EvalConfig, sweep_windows
from tapknock.report import fmt, write_sweep
from tapknock.synth import StudySpec, synthetic_study


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/sweep"))
    ap.add_argument("--gesture", type=GestureKind.parse, default=GestureKind.RING_TAP)
    ap.add_argument("--sources", default="ring,watch")
    ap.add_argument("--users", type=int, default=8)
    ap.add_argument("--separability", type=float, default=0.6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-seeds", type=int, default=2)
    ap.add_argument("--trees", type=int, default=50)
    args = ap.parse_args(argv)

    start = time.perf_counter()
    study = synthetic_study(StudySpec(n_users=args.users, separability=args.separability, seed=args.seed))
    cfg = EvalConfig(n_seeds=args.n_seeds, forest=ForestConfig(n_trees=args.trees))
    sizes, offsets = np.arange(1, 9) * 0.5, np.array([0.0, 0.5, 1.0])
    grid = sweep_windows(study, args.gesture, sizes, offsets, parse_sources(args.sources, args.gesture), cfg)
    write_sweep(grid, args.out, f"{args.gesture.slug}, terminal-agnostic mean EER")
    print("size\\offset\t" + "\t".join(f"{o:g}" for o in offsets))
    for i, s in enumerate(sizes):
        print(f"{s:g}\t" + "\t".join(fmt(grid.eer[i, j]) for j in range(len(offsets))))
    i, j = np.unravel_index(np.nanargmin(grid.eer), grid.eer.shape)
    print(f"# best window s={sizes[i]:g} o={offsets[j]:g}, EER {fmt(grid.eer[i, j])}; "
          f"{time.perf_counter() - start:.0f} s")


if __name__ == "__main__":
    main()
