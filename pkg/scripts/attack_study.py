"""Observation attack against terminal-known ring-tap models at several fidelities.

Fidelity 0 means the attacker taps in their own style, 1 a perfect copy of
the victim. Prints mean base-FAR and observation-FAR per fidelity and
writes one report directory per fidelity.

    python scripts/attack_study.py --fidelities 0 0.5 1 --out runs/attack
"""

import argparse
import time
from pathlib import Path

from tapknock.dataset import parse_sources
from tapknock.experiments import attack_run
from tapknock.forest import ForestConfig
from tapknock.model import GestureKind, WindowSpec
from tapknock.protocols import EvalConfig, wolf_lamb_report
from tapknock.report import write_report, write_wolf_lamb
from tapknock.synth import StudySpec


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/attack"))
    ap.add_argument("--fidelities", type=float, nargs="+", default=[0.0, 0.25, 0.5, 0.75, 1.0])
    ap.add_argument("--gesture", type=GestureKind.parse, default=GestureKind.RING_TAP)
    ap.add_argument("--sources", default="ring")
    ap.add_argument("--users", type=int, default=21)
    ap.add_argument("--attackers", type=int, default=3, help="attackers per victim")
    ap.add_argument("--separability", type=float, default=0.9)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-seeds", type=int, default=3)
    ap.add_argument("--trees", type=int, default=100)
    args = ap.parse_args(argv)

    spec = StudySpec(n_users=args.users, separability=args.separability, seed=args.seed,
                     attack_group=args.attackers, fidelity=1.0)
    cfg = EvalConfig(n_seeds=args.n_seeds, forest=ForestConfig(n_trees=args.trees))
    start = time.perf_counter()
    res = attack_run(spec, args.fidelities, cfg, args.gesture, WindowSpec(2.5, 0.0),
                     parse_sources(args.sources, args.gesture))
    print("fidelity\tbase_far\tobs_far\tgap\tlambs\twolves")
    for f, rep in res.reports.items():
        out = args.out / f"fidelity{f:g}"
        write_report(rep, out)
        wl = wolf_lamb_report(rep)
        write_wolf_lamb(wl, out)
        print(f"{f:g}\t{rep.mean_base_far:.4f}\t{rep.mean_obs_far:.4f}\t{res.gap(f):.4f}\t"
              f"{sum(v.lamb for v in wl.victims)}\t{sum(a.wolf for a in wl.attackers)}")
    print(f"# {time.perf_counter() - start:.0f} s")


if __name__ == "__main__":
    main()
