from dataclasses import replace

from tapknock import forest as rf
from tapknock.experiments import DEFAULT_WINDOW, attack_run, separability_run
from tapknock.model import DeviceKind, GestureKind
from tapknock.protocols import EvalConfig, run_terminal_known
from tapknock.synth import synthetic_study

CFG = EvalConfig(n_seeds=1, seed=2, forest=rf.ForestConfig(n_trees=10))


def test_attack_run_matches_a_plain_study(tiny_spec):
    # sharing the genuine sessions across fidelities must not change anything
    res = attack_run(tiny_spec, (0.5,), CFG)
    study = synthetic_study(replace(tiny_spec, fidelity=0.5))
    direct = run_terminal_known(study.table(GestureKind.RING_TAP, DEFAULT_WINDOW, (DeviceKind.RING,)), CFG)
    got = res.reports[0.5]
    assert [(c.key, c.eer, c.theta, c.obs_far) for c in got.cells] == \
        [(c.key, c.eer, c.theta, c.obs_far) for c in direct.cells]
    assert res.gap(0.5) == direct.mean_obs_far - direct.mean_base_far


def test_separability_run_writes_reports(tiny_spec, tmp_path):
    res = separability_run(replace(tiny_spec, fidelity=None), CFG, tmp_path)
    assert (res.study_dir / "study.summary").exists()
    for prefix in ("agnostic_", "access_"):
        assert (res.report_dir / f"{prefix}summary.json").exists()
    assert 0.0 <= res.agnostic_eer <= 1.0 and 0.0 <= res.access_eer <= 1.0
