"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .dataset import DatasetError, FeatureTable, Study, parse_sources
from .features import ALL_SENSORS
from .forest import ForestConfig
from .model import DEVICE_ORDER, GestureKind, SensorKind, TapKnockError, ValidationError, WindowSpec
from .protocols import (
    EvalConfig,
    enrolment_sweep,
    run_protocol,
    run_terminal_known,
    sweep_windows,
    wolf_lamb_report,
)
from .report import (
    fmt,
    summary_line,
    write_enrolment,
    write_report,
    write_sweep,
    write_tsv,
    write_wolf_lamb,
)
from .segment import write_segment
from .svg import heatmap
from .synth import StudySpec, SynthError, generate_study, tree_digest

log = logging.getLogger("tapknock")

PROTOCOLS = ("terminal-agnostic", "terminal-specific", "terminal-known", "access-control", "sweep", "enrolment")


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage


# ---------------------------------------------------------------------------
# argument helpers


def _gesture(text: str) -> GestureKind:
    try:
        return GestureKind.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _range(text: str) -> List[float]:
    """'a:b:step' (inclusive) or a comma list."""
    try:
        if ":" in text:
            a, b, step = (float(x) for x in text.split(":"))
            if step <= 0 or b < a:
                raise ValueError
            n = int(np.floor((b - a) / step + 1e-9)) + 1
            return [round(a + i * step, 9) for i in range(n)]
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r} (want a:b:step or a,b,c)") from None


def _counts(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad count list {text!r}") from None


def _sensors(text: Optional[str]):
    if not text:
        return ALL_SENSORS
    try:
        return frozenset(SensorKind.parse(t.strip()) for t in text.split(","))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _ring_rate(text: str) -> Optional[float]:
    if text == "native":
        return None
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("ring rate must be a number or 'native'") from None
    if v <= 0:
        raise argparse.ArgumentTypeError("ring rate must be positive")
    return v


def _common(parser: argparse.ArgumentParser, top: bool) -> None:
    default = None if top else argparse.SUPPRESS
    parser.add_argument("--seed", type=int, default=0 if top else default, help="base random seed")
    parser.add_argument("--jobs", type=int, default=(os.cpu_count() or 1) if top else default,
                        help="worker processes (default: all cores)")
    parser.add_argument("--out", type=Path, default=default, help="output path")


def _data_flags(p):
    p.add_argument("--data", type=Path, required=True, help="study directory (holds session manifests)")
    p.add_argument("--ring-rate", type=_ring_rate, default=50.0, help="ring target rate in Hz, or 'native'")
    p.add_argument("--resample", choices=("interp", "decimate"), default="interp")


def _gesture_flags(p, default="ring-tap"):
    p.add_argument("--gesture", type=_gesture, default=_gesture(default))
    p.add_argument("--window", type=float, default=2.5, help="tap window size s in seconds")
    p.add_argument("--offset", type=float, default=0.0, help="tap window offset o in seconds")
    p.add_argument("--sources", default="combined", help="door, ring, watch, combined or a comma list")
    p.add_argument("--sensors", default=None, help="comma list of sensor codes (Acc,Gyr,LAc,GRV)")


def _forest_flags(p):
    p.add_argument("--n-seeds", type=int, default=10)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-features", type=int, default=None)
    p.add_argument("--min-leaf", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tapknock", description="Tap and knock gesture authentication pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    _common(parser, top=True)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _common(common, top=False)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic study")
    p.add_argument("--users", type=int, default=6)
    p.add_argument("--separability", type=float, default=0.9)
    p.add_argument("--taps-per-terminal", type=int, default=5)
    p.add_argument("--knocks-per-kind", type=int, default=8)
    p.add_argument("--fidelity", type=float, default=None, help="also write impersonation sessions")
    p.add_argument("--attackers-per-victim", type=int, default=3)

    p = sub.add_parser("ingest", parents=[common], help="load and validate a study, list its streams")
    _data_flags(p)

    p = sub.add_parser("segment", parents=[common], help="cut gestures into per-gesture files")
    _data_flags(p)
    _gesture_flags(p)

    p = sub.add_parser("features", parents=[common], help="write a feature table (CSV)")
    _data_flags(p)
    _gesture_flags(p)

    p = sub.add_parser("eval", parents=[common], help="run an evaluation protocol")
    _data_flags(p)
    _gesture_flags(p)
    _forest_flags(p)
    p.add_argument("--protocol", choices=PROTOCOLS, required=True)
    p.add_argument("--sizes", type=_range, default=_range("0.5:4.0:0.5"))
    p.add_argument("--offsets", type=_range, default=_range("0:1.0:0.5"))
    p.add_argument("--counts", type=_counts, default=[1, 2, 4, 6, 12, 18, 24])

    p = sub.add_parser("attack", parents=[common], help="observation-attack analysis")
    _data_flags(p)
    _gesture_flags(p)
    _forest_flags(p)
    p.add_argument("--lamb-threshold", type=float, default=0.10)
    p.add_argument("--wolf-threshold", type=float, default=0.10)

    p = sub.add_parser("report", parents=[common], help="print a run's summary and redraw its heatmap")
    p.add_argument("--run", type=Path, required=True, help="directory written by eval or attack")
    return parser


# ---------------------------------------------------------------------------
# commands


def _out_dir(args, default: str) -> Path:
    out = args.out if args.out is not None else Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _window(args) -> Optional[WindowSpec]:
    if not args.gesture.is_tap:
        return None
    try:
        return WindowSpec(args.window, args.offset)
    except ValidationError as exc:
        raise UsageError(str(exc)) from None


def _sources(args):
    try:
        return parse_sources(args.sources, args.gesture)
    except DatasetError as exc:
        raise UsageError(str(exc)) from None


def _eval_config(args) -> EvalConfig:
    if args.n_seeds < 1 or args.trees < 1 or args.min_leaf < 1 or args.seed < 0 or args.jobs < 0:
        raise UsageError("seed counts, tree counts and leaf sizes must be positive")
    forest = ForestConfig(args.trees, args.max_features, args.min_leaf, 0)
    return EvalConfig(args.n_seeds, args.seed, forest, args.jobs,
                      getattr(args, "lamb_threshold", 0.10), getattr(args, "wolf_threshold", 0.10))


def _load(args) -> Study:
    if not args.data.is_dir():
        raise UsageError(f"no such directory: {args.data}")
    try:
        return Study.load(args.data, args.ring_rate, args.resample)
    except (TapKnockError, OSError, ValueError) as exc:
        raise StageError("ingest", exc) from None


def _table(args, study: Study, window, sources, mask) -> FeatureTable:
    try:
        return study.table(args.gesture, window, sources, mask)
    except (TapKnockError, ValueError) as exc:
        raise StageError("features", exc) from None


def _run_summary(out: Path, args, inputs: Sequence[Path]) -> None:
    lines = ["# tapknock run", f"version = {__version__}", f"command = {args.command}"]
    for key in sorted(vars(args)):
        if key in ("command", "func"):
            continue
        val = getattr(args, key)
        if isinstance(val, GestureKind):
            val = val.slug
        lines.append(f"flag.{key} = {val}")
    for path in inputs:
        digest = tree_digest(path) if path.is_dir() else hashlib.sha256(path.read_bytes()).hexdigest()
        lines.append(f"input.{path.name} = sha256:{digest}")
    (out / "run.summary").write_text("\n".join(lines) + "\n")


def cmd_synth(args) -> int:
    try:
        spec = StudySpec(n_users=args.users, separability=args.separability,
                         taps_per_terminal=args.taps_per_terminal, knocks_per_kind=args.knocks_per_kind,
                         seed=args.seed, fidelity=args.fidelity, attack_group=args.attackers_per_victim)
    except SynthError as exc:
        raise UsageError(str(exc)) from None
    out = _out_dir(args, "study")
    try:
        summary = generate_study(spec, out)
    except (TapKnockError, OSError) as exc:
        raise StageError("synth", exc) from None
    genuine = len(list(out.glob("u*/s*/manifest.json")))
    imp = len(list(out.glob("imp/*/manifest.json")))
    print(f"users = {spec.n_users}  sessions = {genuine}  impersonation sessions = {imp}")
    print(f"summary = {summary}")
    print(f"study digest = {tree_digest(out)}")
    return 0


def cmd_ingest(args) -> int:
    study = _load(args)
    out = _out_dir(args, "ingest")
    rows = []
    for rec in study.recordings:
        for s in rec.streams:
            rows.append([rec.label, s.device.label, s.sensor.code, len(s), f"{s.rate_hz:g}",
                         fmt(s.t[0]) if len(s) else "NA", fmt(s.t[-1]) if len(s) else "NA", s.renormalized])
    write_tsv(out / "streams.tsv", ["session", "device", "sensor", "samples", "rate", "t_first", "t_last",
                                     "renormalized"], rows)
    _run_summary(out, args, [args.data])
    n_imp = sum(r.manifest.is_impersonation for r in study.recordings)
    print(f"users = {len(study.users)}  sessions = {len(study.recordings) - n_imp}  "
          f"impersonation sessions = {n_imp}  streams = {len(rows)}")
    return 0


def cmd_segment(args) -> int:
    window, sources = _window(args), _sources(args)
    study = _load(args)
    out = _out_dir(args, "segments")
    try:
        segs = study.segments(args.gesture, window, sources)
    except (TapKnockError, ValueError) as exc:
        raise StageError("segment", exc) from None
    for seg in segs:
        name = seg.meta.gesture_id.replace("/", "_").replace(">", "-")
        write_segment(out / f"{name}.txt", seg)
    (out / "dropped.txt").write_text("".join(d + "\n" for d in study.dropped))
    _run_summary(out, args, [args.data])
    print(f"segments = {len(segs)}  dropped = {len(study.dropped)}")
    return 0


def cmd_features(args) -> int:
    window, sources, mask = _window(args), _sources(args), _sensors(args.sensors)
    study = _load(args)
    table = _table(args, study, window, sources, mask)
    out = args.out if args.out is not None else Path("features.csv")
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "features.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    table.write_csv(out)
    print(f"rows = {len(table)}  features = {len(table.names)}  file = {out}")
    return 0


def cmd_eval(args) -> int:
    window, sources, mask = _window(args), _sources(args), _sensors(args.sensors)
    cfg = _eval_config(args)
    proto = args.protocol
    if proto in ("terminal-agnostic", "terminal-specific", "terminal-known", "sweep") and not args.gesture.is_tap:
        raise UsageError(f"protocol {proto} needs a tap gesture")
    if proto == "access-control" and args.gesture.is_tap:
        raise UsageError("access-control needs a knock gesture")
    if proto == "sweep":
        for s in args.sizes:
            if not 0 < s <= 4.0:
                raise UsageError(f"window size {s} not in (0, 4]")
        if any(o < 0 for o in args.offsets):
            raise UsageError("offsets must be non-negative")
    study = _load(args)
    out = _out_dir(args, "run")
    params = {"gesture": args.gesture.slug, "sources": ",".join(d.prefix for d in sources)}
    try:
        if proto == "sweep":
            grid = sweep_windows(study, args.gesture, args.sizes, args.offsets, sources, cfg)
            write_sweep(grid, out, f"{args.gesture.slug}, terminal-agnostic mean EER")
            s, o, e = grid.best()
            _run_summary(out, args, [args.data])
            print(f"best cell s = {s:g} o = {o:g}  mean EER = {fmt(e)}")
            return 0
        table = _table(args, study, window, sources, mask)
        if proto == "enrolment":
            kind = "payment" if args.gesture.is_tap else "access-control"
            curve = enrolment_sweep(table, args.counts, kind, cfg)
            write_enrolment(curve, out)
            for key, rep in curve.reports.items():
                write_report(rep, out, prefix=f"n{key}_")
            _run_summary(out, args, [args.data])
            for c, e in zip(curve.counts, curve.eer):
                print(f"train count = {c}  mean EER = {fmt(e)}")
            return 0
        if window is not None:
            params.update(window=f"{window.size_s:g}", offset=f"{window.offset_o:g}")
        report = run_protocol(proto, table, cfg, params)
    except (TapKnockError, ValueError) as exc:
        raise StageError(proto, exc) from None
    write_report(report, out)
    _run_summary(out, args, [args.data])
    print(summary_line(report))
    return 0


def cmd_attack(args) -> int:
    window, sources, mask = _window(args), _sources(args), _sensors(args.sensors)
    cfg = _eval_config(args)
    study = _load(args)
    if not study.has_impersonations:
        print("error: attack: no impersonation segments", file=sys.stderr)
        return 1
    table = _table(args, study, window, sources, mask)
    if not table.impostor.any():
        print("error: attack: no impersonation segments", file=sys.stderr)
        return 1
    out = _out_dir(args, "attack")
    params = {"gesture": args.gesture.slug, "sources": ",".join(d.prefix for d in sources)}
    try:
        report = run_terminal_known(table, cfg, params=params)
        wl = wolf_lamb_report(report, args.lamb_threshold, args.wolf_threshold)
    except (TapKnockError, ValueError) as exc:
        raise StageError("attack", exc) from None
    write_report(report, out)
    write_wolf_lamb(wl, out)
    _run_summary(out, args, [args.data])
    print(summary_line(report))
    print("victim\tbase_far\tobs_far\tdelta\tlamb")
    for v in wl.victims:
        print(f"{v.victim}\t{fmt(v.base_far)}\t{fmt(v.obs_far)}\t{fmt(v.delta)}\t{'yes' if v.lamb else 'no'}")
    print(f"lambs = {','.join(wl.lambs) or '-'}  wolves = {','.join(wl.wolves) or '-'}")
    return 0


def cmd_report(args) -> int:
    run = args.run
    if not run.is_dir():
        raise UsageError(f"no such directory: {run}")
    shown = False
    summary = run / "summary.json"
    if summary.exists():
        import json

        doc = json.loads(summary.read_text())
        print(f"protocol = {doc['protocol']}  classifiers = {doc['classifiers']}")
        if "mean_base_far" in doc:
            print(f"mean base-FAR = {doc['mean_base_far']:.4f}  mean observation-FAR = {doc['mean_obs_far']:.4f}")
        print(f"mean EER = {doc['mean_eer']:.4f}")
        for key, val in doc.get("per_terminal", {}).items():
            print(f"terminal {key}\t{val:.4f}")
        shown = True
    sweep = run / "sweep.tsv"
    if sweep.exists():
        lines = [ln.split("\t") for ln in sweep.read_text().splitlines()]
        offsets = lines[0][1:]
        sizes = [row[0] for row in lines[1:]]
        grid = np.array([[np.nan if c == "NA" else float(c) for c in row[1:]] for row in lines[1:]])
        out = args.out if args.out is not None else run / "sweep.svg"
        title = "terminal-agnostic mean EER"
        flags = run / "run.summary"
        if flags.exists():
            for line in flags.read_text().splitlines():
                if line.startswith("flag.gesture = "):
                    title = f"{line.split(' = ', 1)[1]}, {title}"
        out.write_text(heatmap(grid, sizes, offsets, title))
        print("\t".join(lines[0]))
        for row in lines[1:]:
            print("\t".join(row))
        print(f"heatmap = {out}")
        shown = True
    if not shown:
        raise StageError("report", FileNotFoundError(f"{run} holds no summary.json or sweep.tsv"))
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "segment": cmd_segment,
    "features": cmd_features,
    "eval": cmd_eval,
    "attack": cmd_attack,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TapKnockError, OSError) as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
