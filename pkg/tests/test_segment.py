import numpy as np
import pytest
from hypothesis import given, strategies as st

from tapknock.ingest import NfcContactEvent
from tapknock.model import (
    DeviceKind,
    GestureKind,
    GestureMeta,
    Impersonation,
    SensorKind,
    WindowSpec,
    validate_segment,
)
from tapknock.segment import (
    SegmentError,
    extract_knock_segment,
    extract_tap_segment,
    read_segment,
    tap_window,
    write_segment,
)

from helpers import device_streams

TAP_META = GestureMeta("u01", 1, GestureKind.RING_TAP, "1", gesture_id="u01/s1/ring-tap/T1/001")
KNOCK_META = GestureMeta("u01", 2, GestureKind.KNOCK3, gesture_id="u01/s2/3-knock/001")


def _wearables(t0, t1, rate=50.0):
    return device_streams(DeviceKind.RING, rate, t0, t1) + device_streams(DeviceKind.WATCH, rate, t0, t1, seed=9)


@pytest.mark.parametrize("t0,s,o,expected", [
    (10.0, 2.5, 0.0, (7.5, 10.0)),
    (10.0, 4.0, 0.5, (5.5, 9.5)),
    (3.0, 4.0, 0.0, (-1.0, 3.0)),
])
def test_tap_window(t0, s, o, expected):
    assert tap_window(t0, (s, o)) == pytest.approx(expected)
    if WindowSpec.is_valid(s, o):
        assert tap_window(t0, WindowSpec(s, o)) == pytest.approx(expected)


def test_tap_segment_counts():
    ev = NfcContactEvent(10.0, "ring0", "4")
    seg = extract_tap_segment(_wearables(0.0, 12.0), ev, WindowSpec(2.5, 0.0), TAP_META)
    validate_segment(seg)
    assert seg.meta.terminal == "4"
    for device in (DeviceKind.RING, DeviceKind.WATCH):
        for stream in seg.data[device].values():
            assert abs(len(stream) - 125) <= 1


def test_window_precedes_stream():
    ev = NfcContactEvent(10.0, "ring0", "1")
    with pytest.raises(SegmentError, match="window precedes stream"):
        # (6.0, 9.5) starts before the stream does
        extract_tap_segment(_wearables(7.0, 12.0), ev, WindowSpec(3.5, 0.5), TAP_META)


def test_spaced_taps_do_not_overlap():
    streams = _wearables(0.0, 20.0)
    a = extract_tap_segment(streams, NfcContactEvent(8.0, "ring0", "1"), WindowSpec(4.0, 0.0), TAP_META)
    b = extract_tap_segment(streams, NfcContactEvent(14.0, "ring0", "1"), WindowSpec(4.0, 0.0), TAP_META)
    ta = a.data[DeviceKind.RING][SensorKind.ACCELEROMETER].t
    tb = b.data[DeviceKind.RING][SensorKind.ACCELEROMETER].t
    assert ta[-1] < tb[0]


def test_knock_segment_durations():
    streams = _wearables(0.0, 6.0) + device_streams(DeviceKind.DOOR, 30.0, 0.0, 6.0)
    seg = extract_knock_segment(streams, (1.0, 3.81), KNOCK_META)
    validate_segment(seg)
    assert seg.devices == (DeviceKind.DOOR, DeviceKind.RING, DeviceKind.WATCH)
    watch = seg.data[DeviceKind.WATCH][SensorKind.ACCELEROMETER]
    assert abs(len(watch) - 2.81 * 50) <= 1
    door = extract_knock_segment(streams, (0.0, 1.0), KNOCK_META, (DeviceKind.DOOR,))
    assert abs(len(door.data[DeviceKind.DOOR][SensorKind.GYROSCOPE]) - 30) <= 1


def test_knock_empty_window():
    streams = _wearables(0.0, 6.0)
    with pytest.raises(SegmentError, match="empty window"):
        extract_knock_segment(streams, (1.001, 1.001 + 0.01), KNOCK_META, (DeviceKind.WATCH,))


def test_knock_missing_device():
    with pytest.raises(SegmentError, match="Door"):
        extract_knock_segment(_wearables(0.0, 6.0), (1.0, 2.0), KNOCK_META)


@given(st.floats(min_value=4.5, max_value=15.0),
       st.floats(min_value=0.1, max_value=4.0),
       st.floats(min_value=0.0, max_value=1.0))
def test_tap_window_membership(t0, s, o):
    if s + o > 4.0:
        s = 4.0 - o
    spec = WindowSpec(s, o)
    seg = extract_tap_segment(_wearables(0.0, 16.0), NfcContactEvent(t0, "ring0", "2"), spec, TAP_META)
    for stream in seg.data[DeviceKind.RING].values():
        assert stream.t.max() <= t0 - o + 1e-12
        assert stream.t.min() >= t0 - o - s - 1e-12
        assert abs(len(stream) - s * stream.rate_hz) <= 1


def test_segment_file_round_trip(tmp_path):
    meta = GestureMeta("u03", 2, GestureKind.WATCH_TAP, "F", impersonation=Impersonation("u03", "u01", 2),
                       gesture_id="imp/u03>u01/watch-tap/TF/002")
    seg = extract_tap_segment(_wearables(0.0, 8.0), NfcContactEvent(6.0, "watch0", "F"), WindowSpec(2.0), meta)
    write_segment(tmp_path / "a.seg", seg)
    back = read_segment(tmp_path / "a.seg")
    assert back.meta == seg.meta
    assert back.window == pytest.approx(seg.window)
    for device in seg.devices:
        for sensor, stream in seg.data[device].items():
            other = back.data[device][sensor]
            assert np.allclose(other.t, stream.t, atol=1e-6)
            assert np.allclose(other.values, stream.values, atol=1e-5)
    # determinism: the same segment serialises to the same bytes
    write_segment(tmp_path / "b.seg", extract_tap_segment(
        _wearables(0.0, 8.0), NfcContactEvent(6.0, "watch0", "F"), WindowSpec(2.0), meta))
    assert (tmp_path / "a.seg").read_bytes() == (tmp_path / "b.seg").read_bytes()
