import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tapknock.dataset import Study
from tapknock.ingest import ButtonEvent, NfcContactEvent, pair_button_bounds
from tapknock.model import GestureKind, SensorKind
from tapknock.synth import (
    KNOCK_PARAMS,
    TAP_PARAMS,
    StudySpec,
    SynthError,
    attack_pairs,
    generate_impersonations,
    generate_study,
    make_profiles,
    synthesize,
    tree_digest,
)

SMALL = StudySpec(n_users=2, taps_per_terminal=1, knocks_per_kind=1, seed=3)


def test_same_spec_same_bytes(tmp_path):
    generate_study(SMALL, tmp_path / "a")
    generate_study(SMALL, tmp_path / "b")
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")
    generate_study(StudySpec(n_users=2, taps_per_terminal=1, knocks_per_kind=1, seed=4), tmp_path / "c")
    assert tree_digest(tmp_path / "a") != tree_digest(tmp_path / "c")


def test_layout_and_summary(tiny_dir, tiny_spec):
    users = sorted(p.name for p in tiny_dir.iterdir() if p.name.startswith("u"))
    assert users == tiny_spec.users
    assert all((tiny_dir / u / s / "manifest.json").exists() for u in users for s in ("s1", "s2"))
    assert len(list((tiny_dir / "imp").iterdir())) == len(attack_pairs(tiny_spec))
    summary = dict(line.split(" = ") for line in (tiny_dir / "study.summary").read_text().splitlines()[1:])
    assert summary["n_users"] == "4" and summary["seed"] == "11"
    assert summary["sessions_written"] == str(2 * 4 + 12)


def test_native_rates(tiny_dir):
    study = Study.load(tiny_dir, ring_rate=None)
    rec = study.recordings[0]
    rates = {(s.device.kind.value, s.sensor): s.rate_hz for s in rec.streams}
    assert rates[("Ring", SensorKind.GRV)] == 100 and rates[("Watch", SensorKind.GRV)] == 50
    assert rates[("Door", SensorKind.GYROSCOPE)] == 30


def test_quaternions_are_unit(tiny_spec):
    for rec in synthesize(StudySpec(n_users=2, taps_per_terminal=1, knocks_per_kind=2, seed=8)):
        for s in rec.streams:
            if s.sensor is SensorKind.GRV:
                assert s.renormalized == 0


def test_quaternions_on_disk(tiny_study):
    for rec in tiny_study.recordings:
        for s in rec.streams:
            if s.sensor is SensorKind.GRV:
                assert s.renormalized == 0


def test_nfc_after_four_seconds(tiny_study):
    for rec in tiny_study.recordings:
        start = max(s.t[0] for s in rec.streams)
        for ev in rec.events:
            if isinstance(ev, NfcContactEvent):
                assert ev.t0 - start >= 4.0


def test_knock_bounds_follow_cadence(tiny_study, tiny_spec):
    profiles = {p.user: p for p in make_profiles(tiny_spec)}
    for rec in tiny_study.recordings:
        if rec.manifest.is_impersonation:
            continue
        prof = profiles[rec.manifest.user]
        buttons = [e for e in rec.events if isinstance(e, ButtonEvent)]
        labels = [b.label for b in buttons if b.role == "Start"]
        for (tb, te), label in zip(pair_button_bounds(buttons), labels):
            kind = GestureKind.parse(label)
            expected = prof.knock_period(kind) * prof.knock_count(kind)
            assert abs((te - tb) / expected - 1.0) <= 0.30


def test_three_knock_mean_duration(tiny_study):
    durations = []
    for rec in tiny_study.recordings:
        buttons = [e for e in rec.events if isinstance(e, ButtonEvent)]
        labels = [b.label for b in buttons if b.role == "Start"]
        durations += [te - tb for (tb, te), lab in zip(pair_button_bounds(buttons), labels) if GestureKind.parse(lab) is GestureKind.KNOCK3]
    assert 2.2 < np.mean(durations) < 3.4


def test_impersonation_counts(tiny_spec):
    segs = generate_impersonations(tiny_spec, ["u01"], ["u02", "u03", "u04"], 1.0,
                                   kinds=(GestureKind.RING_TAP, GestureKind.KNOCK5))
    taps = [s for s in segs if s.meta.gesture_kind is GestureKind.RING_TAP]
    knocks = [s for s in segs if s.meta.gesture_kind is GestureKind.KNOCK5]
    # 3 attackers x 2 terminals x 3 attempts
    assert len(taps) == 18
    assert len(knocks) == 9
    assert all(s.meta.impersonation.victim == "u01" for s in segs)
    assert sorted({s.meta.impersonation.attempt for s in taps}) == [1, 2, 3]


def test_impersonation_overlap_refused(tiny_spec):
    with pytest.raises(SynthError, match="both sides"):
        generate_impersonations(tiny_spec, ["u01", "u02"], ["u02"], 0.5)


def test_attack_pairs_are_cyclic():
    pairs = attack_pairs(StudySpec(n_users=5, fidelity=1.0, attack_group=2))
    assert [p for p in pairs if p[1] == "u05"] == [("u01", "u05"), ("u02", "u05")]
    assert all(a != v for a, v in pairs) and len(pairs) == 10


@pytest.mark.parametrize("kwargs,match", [
    ({"n_users": 1}, "need ≥ 2 users"),
    ({"separability": 1.5}, "separability"),
    ({"fidelity": -0.1}, "fidelity"),
    ({"sessions": 3}, "2 sessions"),
    ({"taps_per_terminal": 0}, "positive"),
    ({"fidelity": 1.0, "n_users": 3, "attack_group": 3}, "attackers per victim"),
])
def test_degenerate_specs(kwargs, match):
    with pytest.raises(SynthError, match=match):
        StudySpec(**kwargs)


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(SynthError, match="cannot create"):
        generate_study(SMALL, blocker / "sub")


def test_zero_separability_shares_one_profile():
    profiles = make_profiles(StudySpec(n_users=5, separability=0.0))
    first = profiles[0]
    for p in profiles[1:]:
        assert p.taps == first.taps and p.knock == first.knock
        assert p.secret_count == first.secret_count and p.secret_rhythm == first.secret_rhythm
        assert p.drift == first.drift


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_profile_invariants(seed, sep):
    for p in make_profiles(StudySpec(n_users=3, separability=sep, seed=seed)):
        for kind in (GestureKind.RING_TAP, GestureKind.WATCH_TAP):
            assert 0.5 < p.taps[kind]["approach"] < 4.0 and 0.5 < p.taps[kind]["withdraw"] < 4.0
        assert 3 <= p.secret_count <= 6
        for name, (_m, _s, _w, lo, hi) in KNOCK_PARAMS.items():
            assert lo <= p.knock[name] <= hi
        for name, (_m, _s, _w, lo, hi) in TAP_PARAMS.items():
            assert lo <= p.taps[GestureKind.RING_TAP][name] <= hi


def test_profiles_spread_with_separability():
    def spread(sep):
        ps = make_profiles(StudySpec(n_users=12, separability=sep, seed=1))
        return np.std([p.knock["cadence"] for p in ps])

    assert spread(0.0) == 0.0 and spread(0.2) < spread(0.9)
