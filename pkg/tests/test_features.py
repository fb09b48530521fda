import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from tapknock.features import (
    FeatureError,
    build_dimensions,
    energy,
    extract,
    kinematic_features,
    lowpass,
    smoothing_alpha,
    stat_features,
)
from tapknock.model import DEVICE_SENSORS, DeviceKind, GestureKind, GestureMeta, GestureSegment, SensorKind

import oracles
from helpers import DEVICES, device_streams, uniform_stream

KNOCK_META = GestureMeta("u01", 1, GestureKind.KNOCK3)


def _segment(devices, seed=0, t0=0.0, t1=2.5):
    rates = {DeviceKind.RING: 50.0, DeviceKind.WATCH: 50.0, DeviceKind.DOOR: 30.0}
    data = {d: {s.sensor: s for s in device_streams(d, rates[d], t0, t1, seed=seed + 10 * i)}
            for i, d in enumerate(devices)}
    return GestureSegment(KNOCK_META, (t0, t1), data)


# ---- filter


def test_constant_passes_unchanged():
    assert np.array_equal(lowpass(np.full(40, 5.0), 50.0), np.full(40, 5.0))


def test_impulse_decays_geometrically():
    a = smoothing_alpha(50.0)
    x = np.zeros(300)
    x[100] = 1.0
    y = lowpass(x, 50.0)
    # away from both ends the response falls off by (1 - alpha) per sample on each side
    right = y[101:160] / y[100:159]
    left = y[40:99] / y[41:100]
    assert np.allclose(right, 1 - a, rtol=1e-9)
    assert np.allclose(left, 1 - a, rtol=1e-9)
    assert np.argmax(y) == 100


def test_high_frequency_is_attenuated():
    t = np.arange(500) / 50.0
    x = np.sin(2 * np.pi * 20.0 * t)
    y = lowpass(x, 50.0)
    assert np.max(np.abs(y[50:-50])) < 0.5


def test_filter_keeps_length_and_rejects_bad_input():
    assert lowpass(np.arange(7.0), 30.0).shape == (7,)
    with pytest.raises(FeatureError):
        lowpass([1.0], 50.0)
    with pytest.raises(FeatureError, match="non-finite"):
        lowpass([1.0, np.nan, 2.0], 50.0)


# ---- energy and dimensions


@pytest.mark.parametrize("xyz,expected", [((3, 4, 0), 5.0), ((0, 0, 0), 0.0), ((1, 1, 1), math.sqrt(3))])
def test_energy(xyz, expected):
    assert energy(*xyz) == pytest.approx(expected, abs=1e-12)


def test_dimension_counts():
    seg = _segment((DeviceKind.DOOR, DeviceKind.RING, DeviceKind.WATCH))
    assert len(build_dimensions(seg.data[DeviceKind.RING], DeviceKind.RING)) == 19
    assert len(build_dimensions(seg.data[DeviceKind.DOOR], DeviceKind.DOOR)) == 10
    masked = build_dimensions(seg.data[DeviceKind.WATCH], DeviceKind.WATCH,
                              {SensorKind.ACCELEROMETER, SensorKind.GYROSCOPE})
    assert len(masked) == 10
    names = [c.name for c in build_dimensions(seg.data[DeviceKind.RING], DeviceKind.RING)]
    assert names[:5] == ["Acc-x", "Acc-y", "Acc-z", "Acc-efil", "Acc-eraw"]
    assert names[-4:] == ["GRV-x", "GRV-y", "GRV-z", "GRV-w"]


def test_missing_sensor():
    seg = _segment((DeviceKind.RING,))
    partial = dict(seg.data[DeviceKind.RING])
    del partial[SensorKind.GYROSCOPE]
    with pytest.raises(FeatureError, match="Gyroscope"):
        build_dimensions(partial, DeviceKind.RING)
    assert len(build_dimensions(partial, DeviceKind.RING, set(SensorKind) - {SensorKind.GYROSCOPE})) == 14


# ---- statistics


def test_stats_of_one_to_five():
    f = stat_features([1, 2, 3, 4, 5])
    assert f[:4].tolist() == [1, 5, 3, 3]
    assert f[5] == pytest.approx(2.0) and f[4] == pytest.approx(math.sqrt(2))
    assert f[6] == pytest.approx(2.0)  # quartiles 2 and 4


def test_stats_of_constant():
    f = stat_features([2, 2, 2, 2])
    assert f.tolist() == [2, 2, 2, 2, 0, 0, 0, 0, 0, 0]


def test_stats_need_four_samples():
    with pytest.raises(FeatureError, match="too short"):
        stat_features([1.0, 2.0, 3.0])


def test_peak_gate():
    x = np.zeros(21)
    x[[5, 15]] = 10.0
    x[10] = 0.5  # a local maximum well below mean + sd
    assert stat_features(x)[9] == 2


channels = arrays(np.float64, st.integers(4, 300),
                  elements=st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False))


def _close(a, b, rel=1e-9, floor=0.0):
    return abs(a - b) <= rel * max(abs(a), abs(b)) + floor


@given(channels)
def test_stats_match_brute_force(x):
    got = stat_features(x)
    want = oracles.stats(x)
    # values near zero after cancellation get an absolute floor of 1e-12 of the data scale
    scale = max(1.0, float(np.max(np.abs(x))))
    for i in range(7):
        floor = 1e-12 * (scale ** 2 if i == 5 else scale)
        assert _close(got[i], want[i], floor=floor), i
    if want[4] > 1e-3 * scale:
        # shape statistics are only well conditioned away from constant channels
        assert _close(got[7], want[7], floor=1e-12) and _close(got[8], want[8], floor=1e-12)
        assert got[9] == want[9]


def test_stat_block_matches_columns():
    x = np.random.default_rng(3).normal(size=(50, 4))
    block = stat_features(x)
    for j in range(4):
        assert np.allclose(block[:, j], stat_features(x[:, j]), rtol=1e-14, atol=0)


# ---- kinematics


def test_constant_acceleration():
    t = np.arange(101) / 50.0  # 2 s at 50 Hz
    a = np.column_stack([np.ones(101), np.zeros(101), np.zeros(101)])
    k = kinematic_features(t, a)
    assert k[3] == pytest.approx(2.0, rel=0.02)  # velomax x
    assert k[0] == pytest.approx(1.0, rel=0.02)  # velomean x
    assert k[6] == pytest.approx(2.0, rel=0.02)  # displacement x
    assert k[9] == pytest.approx(2.0, rel=0.02)
    assert np.all(k[[1, 2, 4, 5, 7, 8]] == 0)


def test_sinusoid_acceleration():
    t = np.arange(51) / 50.0
    a = np.column_stack([np.sin(2 * np.pi * t), np.zeros(51), np.zeros(51)])
    k = kinematic_features(t, a)
    # v = (1 - cos 2 pi t) / (2 pi), d = 1 / (2 pi) over one period
    assert k[3] == pytest.approx(1 / np.pi, rel=0.02)
    assert k[6] == pytest.approx(1 / (2 * np.pi), rel=0.02)


def test_zero_window():
    assert np.all(kinematic_features(np.arange(10) / 50.0, np.zeros((10, 3))) == 0)


def test_kinematics_need_two_samples():
    with pytest.raises(FeatureError):
        kinematic_features([0.0], np.zeros((1, 3)))


@given(st.floats(0.01, 100.0), st.integers(0, 1000))
def test_linear_in_scale(c, seed):
    rng = np.random.default_rng(seed)
    t = np.arange(60) / 50.0
    a = rng.normal(size=(60, 3))
    base, scaled = kinematic_features(t, a), kinematic_features(t, c * a)
    assert np.allclose(scaled, c * base, rtol=1e-9, atol=1e-12)
    e, ec = energy(*a.T), energy(*(c * a).T)
    assert np.allclose(ec, c * e, rtol=1e-9, atol=0)


# ---- vectors


@pytest.mark.parametrize("devices,length", [
    ((DeviceKind.RING,), 220), ((DeviceKind.WATCH,), 220), ((DeviceKind.DOOR,), 120),
    ((DeviceKind.RING, DeviceKind.WATCH), 440), ((DeviceKind.DOOR, DeviceKind.RING, DeviceKind.WATCH), 560),
])
def test_vector_lengths(devices, length):
    fv = extract(_segment(devices))
    assert len(fv) == length == len(set(fv.names))


def test_combined_is_concatenation_in_door_ring_watch_order():
    seg = _segment((DeviceKind.DOOR, DeviceKind.RING, DeviceKind.WATCH))
    full = extract(seg)
    parts = [extract(seg, (d,)) for d in (DeviceKind.DOOR, DeviceKind.RING, DeviceKind.WATCH)]
    assert np.array_equal(full.values, np.concatenate([p.values for p in parts]))
    assert full.names[0] == "d-" + parts[0].names[0]
    assert full.names[120] == "r-" + parts[1].names[0]
    assert full.names[340] == "w-" + parts[2].names[0]
    # requested order never changes the layout
    assert extract(seg, (DeviceKind.WATCH, DeviceKind.DOOR, DeviceKind.RING)).names == full.names


def test_names_and_counts():
    fv = extract(_segment((DeviceKind.RING,)))
    assert fv.names[0] == "Acc-x-min" and "Gyr-efil-kurt" in fv.names and "LAc-xyz-disp" in fv.names
    kin = [n for n in fv.names if "velo" in n or n.endswith("disp")]
    assert len(kin) == 30 and not any(n.startswith("GRV") for n in kin)
    assert len(fv.names) - len(kin) == 10 * 19


def test_sensor_mask_lengths():
    fv = extract(_segment((DeviceKind.WATCH,)), sensor_mask={SensorKind.ACCELEROMETER, SensorKind.GYROSCOPE})
    assert len(fv) == 10 * 10 + 2 * 10


def test_extraction_is_deterministic():
    a = extract(_segment((DeviceKind.RING, DeviceKind.WATCH), seed=4))
    b = extract(_segment((DeviceKind.RING, DeviceKind.WATCH), seed=4))
    assert a.values.tobytes() == b.values.tobytes() and a.names == b.names


def test_energy_channels_scale_with_sensor():
    seg = _segment((DeviceKind.WATCH,))
    acc = seg.data[DeviceKind.WATCH][SensorKind.ACCELEROMETER]
    scaled = type(acc)(acc.device, acc.sensor, acc.rate_hz, acc.t, 3.0 * acc.values)
    d0 = {c.name: c.values for c in build_dimensions({SensorKind.ACCELEROMETER: acc}, DeviceKind.WATCH,
                                                     {SensorKind.ACCELEROMETER})}
    d1 = {c.name: c.values for c in build_dimensions({SensorKind.ACCELEROMETER: scaled}, DeviceKind.WATCH,
                                                     {SensorKind.ACCELEROMETER})}
    for name in ("Acc-efil", "Acc-eraw"):
        assert np.allclose(d1[name], 3.0 * d0[name], rtol=1e-9, atol=0)
