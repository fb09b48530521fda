"""Report files: tab-separated tables, a JSON summary and the audit.

Numbers are printed with four decimals so that reruns diff cleanly.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .protocols import EnrolmentCurve, EvalReport, SweepGrid, WolfLamb
from .svg import heatmap


def fmt(x) -> str:
    if x is None:
        return "NA"
    x = float(x)
    return "NA" if np.isnan(x) else f"{x:.4f}"


def _r4(x):
    return None if x is None or np.isnan(x) else round(float(x), 4)


def write_tsv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = ["\t".join(header)]
    lines += ["\t".join(str(c) for c in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def summary_line(report: EvalReport) -> str:
    if report.is_attack:
        return (f"mean base-FAR = {fmt(report.mean_base_far)}  "
                f"mean observation-FAR = {fmt(report.mean_obs_far)}")
    return f"mean EER = {fmt(report.mean_eer)}"


def report_summary(report: EvalReport) -> Dict:
    doc = {
        "protocol": report.protocol,
        "params": dict(sorted(report.params.items())),
        "classifiers": len(report.cells),
        "mean_eer": _r4(report.mean_eer),
        "per_seed_eer": [_r4(x) for x in report.per_seed_eer()],
        "per_user": {u: {"eer": _r4(v["eer"]), "theta": _r4(v["theta"])} for u, v in report.per_user().items()},
        "top_features": [[name, n] for name, n in report.importance_counts()[:10]],
    }
    if len(report.key_names) > 1 and report.key_names[1] == "terminal":
        doc["per_terminal"] = {k: _r4(v) for k, v in report.per_group(1).items()}
    if report.is_attack:
        doc["mean_base_far"] = _r4(report.mean_base_far)
        doc["mean_obs_far"] = _r4(report.mean_obs_far)
        doc["per_victim"] = {v: {"base_far": _r4(b), "obs_far": _r4(o)} for v, (b, o) in report.per_victim().items()}
        doc["per_attacker"] = {a: {"success": _r4(s), "base_far": _r4(b)}
                               for a, (s, b) in report.per_attacker().items()}
    return doc


def write_report(report: EvalReport, out_dir, prefix: str = "") -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def path(name):
        p = out / f"{prefix}{name}"
        written.append(p)
        return p

    keys = list(report.key_names)
    header = keys + ["seed", "eer", "theta", "n_pos", "n_neg"] + (["obs_far"] if report.is_attack else [])
    rows = []
    for c in report.cells:
        row = list(c.key) + [c.seed, fmt(c.eer), fmt(c.theta), c.n_pos, c.n_neg]
        if report.is_attack:
            row.append(fmt(c.obs_far))
        rows.append(row)
    write_tsv(path("cells.tsv"), header, rows)

    users = report.per_user()
    write_tsv(path("users.tsv"), [keys[0], "eer", "theta", "classifiers"],
              [[u, fmt(v["eer"]), fmt(v["theta"]), v["cells"]] for u, v in users.items()])
    curve_rows = []
    for u, v in users.items():
        for th, far, frr in zip(report.grid, v["far"], v["frr"]):
            curve_rows.append([u, fmt(th), fmt(far), fmt(frr)])
    write_tsv(path("curves.tsv"), [keys[0], "theta", "far", "frr"], curve_rows)

    if len(keys) > 1 and keys[1] == "terminal":
        write_tsv(path("terminals.tsv"), ["terminal", "eer"],
                  [[t, fmt(e)] for t, e in report.per_group(1).items()])
    if report.is_attack:
        write_tsv(path("victims.tsv"), ["victim", "base_far", "obs_far"],
                  [[v, fmt(b), fmt(o)] for v, (b, o) in report.per_victim().items()])
        write_tsv(path("attackers.tsv"), ["attacker", "success_far", "victims_base_far"],
                  [[a, fmt(s), fmt(b)] for a, (s, b) in report.per_attacker().items()])
    write_tsv(path("importance.tsv"), ["feature", "top5_count"], report.importance_counts())
    write_tsv(path("audit.tsv"), ["cell", "gesture_id", "role", "session", "terminal", "impersonation"],
              [[r.cell, r.gesture_id, r.role, r.session, r.terminal or "-", int(r.impostor)] for r in report.audit])
    path("summary.json").write_text(json.dumps(report_summary(report), indent=2, sort_keys=False) + "\n")
    return written


def write_wolf_lamb(wl: WolfLamb, out_dir, prefix: str = "") -> List[Path]:
    out = Path(out_dir)
    p1, p2 = out / f"{prefix}lambs.tsv", out / f"{prefix}wolves.tsv"
    write_tsv(p1, ["victim", "base_far", "obs_far", "delta", "lamb"],
              [[v.victim, fmt(v.base_far), fmt(v.obs_far), fmt(v.delta), int(v.lamb)] for v in wl.victims])
    write_tsv(p2, ["attacker", "success_far", "victims_base_far", "delta", "wolf"],
              [[a.attacker, fmt(a.success), fmt(a.base_far), fmt(a.delta), int(a.wolf)] for a in wl.attackers])
    return [p1, p2]


def write_sweep(grid: SweepGrid, out_dir, title: str = "") -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tsv, svg = out / "sweep.tsv", out / "sweep.svg"
    rows = [[f"{s:g}"] + [fmt(grid.eer[i, j]) for j in range(len(grid.offsets))] for i, s in enumerate(grid.sizes)]
    write_tsv(tsv, ["size\\offset"] + [f"{o:g}" for o in grid.offsets], rows)
    svg.write_text(heatmap(grid.eer, [f"{s:g}" for s in grid.sizes], [f"{o:g}" for o in grid.offsets], title))
    return [tsv, svg]


def write_enrolment(curve: EnrolmentCurve, out_dir) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = out / "enrolment.tsv"
    write_tsv(p, ["train_count", "mean_eer"], [[c, fmt(e)] for c, e in zip(curve.counts, curve.eer)])
    return [p]
