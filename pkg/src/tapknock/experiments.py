"""End-to-end synthetic experiments shared by the scripts and the acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Sequence

from .dataset import Study
from .model import DeviceKind, GestureKind, WindowSpec
from .protocols import EvalConfig, EvalReport, run_access_control, run_terminal_agnostic, run_terminal_known
from .report import write_report
from .synth import StudySpec, attack_pairs, generate_study, make_profiles, render_impersonation, render_session

DEFAULT_WINDOW = WindowSpec(2.5, 0.0)
TAP_SOURCES = (DeviceKind.RING, DeviceKind.WATCH)
KNOCK_SOURCES = (DeviceKind.DOOR, DeviceKind.RING, DeviceKind.WATCH)


@dataclass
class SeparabilityResult:
    agnostic: EvalReport
    access: EvalReport
    study_dir: Path
    report_dir: Optional[Path] = None

    @property
    def agnostic_eer(self) -> float:
        return self.agnostic.mean_eer

    @property
    def access_eer(self) -> float:
        return self.access.mean_eer


def separability_run(spec: StudySpec, cfg: EvalConfig, work_dir, window: WindowSpec = DEFAULT_WINDOW,
                     tap: GestureKind = GestureKind.RING_TAP, knock: GestureKind = GestureKind.KNOCK3,
                     tap_sources: Sequence[DeviceKind] = TAP_SOURCES,
                     knock_sources: Sequence[DeviceKind] = KNOCK_SOURCES) -> SeparabilityResult:
    """Write the study to disk, load it back, run terminal-agnostic and access-control, write reports."""
    work = Path(work_dir)
    data = work / "data"
    generate_study(spec, data)
    study = Study.load(data)
    agnostic = run_terminal_agnostic(study.table(tap, window, tap_sources), cfg,
                                     params={"gesture": tap.slug, "window": f"{window.size_s:g}",
                                             "offset": f"{window.offset_o:g}"})
    access = run_access_control(study.table(knock, None, knock_sources), cfg, params={"gesture": knock.slug})
    reports = work / "reports"
    write_report(agnostic, reports, prefix="agnostic_")
    write_report(access, reports, prefix="access_")
    return SeparabilityResult(agnostic, access, data, reports)


@dataclass
class AttackResult:
    reports: Dict[float, EvalReport] = field(default_factory=dict)

    def gap(self, fidelity: float) -> float:
        r = self.reports[fidelity]
        return r.mean_obs_far - r.mean_base_far


def attack_run(spec: StudySpec, fidelities: Sequence[float], cfg: EvalConfig,
               kind: GestureKind = GestureKind.RING_TAP, window: WindowSpec = DEFAULT_WINDOW,
               sources: Sequence[DeviceKind] = (DeviceKind.RING,)) -> AttackResult:
    """Terminal-known runs on one genuine study with impersonations of each fidelity.

    The genuine sessions are rendered once; only the impersonation sessions
    depend on the fidelity, so every run shares its base models' data.
    """
    base = replace(spec, fidelity=None)
    profiles = make_profiles(base)
    genuine = [render_session(base, p, i, s) for i, p in enumerate(profiles) for s in (1, 2)]
    out = AttackResult()
    for f in fidelities:
        attack_spec = replace(spec, fidelity=float(f))
        imps = [render_impersonation(attack_spec, profiles, a, v, f) for a, v in attack_pairs(attack_spec)]
        study = Study(genuine + imps, name=f"attack-{f:g}")
        table = study.table(kind, window if kind.is_tap else None, sources)
        out.reports[float(f)] = run_terminal_known(table, cfg, params={"gesture": kind.slug, "fidelity": f"{f:g}"})
    return out
