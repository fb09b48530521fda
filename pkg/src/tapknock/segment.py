"""Cutting streams into tap and knock gestures."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .ingest import FormatError, NfcContactEvent
from .model import (
    DEVICE_ORDER,
    DEVICE_SENSORS,
    Arm,
    DeviceId,
    DeviceKind,
    GestureKind,
    GestureMeta,
    GestureSegment,
    Impersonation,
    SensorKind,
    SensorStream,
    TapKnockError,
    WindowSpec,
)

log = logging.getLogger(__name__)

StreamIndex = Mapping[Tuple[DeviceKind, SensorKind], SensorStream]


class SegmentError(TapKnockError, ValueError):
    """A gesture window cannot be cut from the available streams."""


def index_streams(streams: Iterable[SensorStream]) -> Dict[Tuple[DeviceKind, SensorKind], SensorStream]:
    if isinstance(streams, Mapping):
        return dict(streams)
    return {s.key: s for s in streams}


def tap_window(t0: float, spec) -> Tuple[float, float]:
    """(T0 - o - s, T0 - o); `spec` is a WindowSpec or a plain (s, o) pair."""
    size, offset = (spec.size_s, spec.offset_o) if isinstance(spec, WindowSpec) else spec
    t_end = t0 - offset
    return (t_end - size, t_end)


def _cut(index: StreamIndex, window: Tuple[float, float], devices: Sequence[DeviceKind],
         check_start: bool) -> Dict[DeviceKind, Dict[SensorKind, SensorStream]]:
    t_start, t_end = window
    data: Dict[DeviceKind, Dict[SensorKind, SensorStream]] = {}
    for device in DEVICE_ORDER:
        if device not in devices:
            continue
        per_sensor = {}
        for sensor in DEVICE_SENSORS[device]:
            stream = index.get((device, sensor))
            if stream is None:
                continue
            if check_start and len(stream) and t_start < stream.t[0]:
                raise SegmentError(
                    f"window precedes stream: {device.value} {sensor.value} starts at "
                    f"{stream.t[0]:.3f}, window at {t_start:.3f}"
                )
            w = stream.between(t_start, t_end)
            if len(w) == 0:
                raise SegmentError(f"empty window for {device.value} {sensor.value}")
            per_sensor[sensor] = w
        if not per_sensor:
            raise SegmentError(f"no streams for required device {device.value}")
        data[device] = per_sensor
    return data


def extract_tap_segment(streams, event: NfcContactEvent, spec: WindowSpec, meta: GestureMeta,
                        devices: Sequence[DeviceKind] = (DeviceKind.RING, DeviceKind.WATCH)) -> GestureSegment:
    """Samples in [T0 - o - s, T0 - o] for each requested wearable sensor."""
    index = index_streams(streams)
    window = tap_window(event.t0, spec)
    data = _cut(index, window, devices, check_start=True)
    if meta.terminal != event.terminal:
        meta = GestureMeta(meta.user, meta.session, meta.gesture_kind, event.terminal,
                           meta.arm, meta.impersonation, meta.gesture_id)
    return GestureSegment(meta, window, data)


def extract_knock_segment(streams, bound: Tuple[float, float], meta: GestureMeta,
                          devices: Sequence[DeviceKind] = DEVICE_ORDER) -> GestureSegment:
    """Samples within the button-press bounds of a knock."""
    t_start, t_end = bound
    if not t_start < t_end:
        raise SegmentError(f"bad knock bound ({t_start}, {t_end})")
    index = index_streams(streams)
    data = _cut(index, (t_start, t_end), devices, check_start=False)
    return GestureSegment(meta, (t_start, t_end), data)


# ---------------------------------------------------------------------------
# per-gesture text files


def _meta_fields(meta: GestureMeta, window) -> str:
    parts = [
        f"id={meta.gesture_id or '-'}",
        f"user={meta.user}",
        f"session={meta.session}",
        f"kind={meta.gesture_kind.value}",
        f"terminal={meta.terminal or '-'}",
        f"arm={meta.arm.value}",
        f"window={window[0]:.6f},{window[1]:.6f}",
    ]
    if meta.impersonation is not None:
        imp = meta.impersonation
        parts.append(f"impersonation={imp.attacker},{imp.victim},{imp.attempt}")
    return " ".join(parts)


def write_segment(path, seg: GestureSegment, fmt: str = "%.6f") -> None:
    with open(path, "w") as fh:
        fh.write("# gesture " + _meta_fields(seg.meta, seg.window) + "\n")
        for device in seg.devices:
            for sensor, stream in seg.data[device].items():
                fh.write(
                    f"# stream device={stream.device.label} kind={device.value} "
                    f"sensor={sensor.code} rate={stream.rate_hz:g}\n"
                )
                np.savetxt(fh, np.column_stack([stream.t, stream.values]), fmt=fmt)


def _kv(line: str) -> Dict[str, str]:
    return dict(tok.split("=", 1) for tok in line.split()[2:] if "=" in tok)


def read_segment(path) -> GestureSegment:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("# gesture "):
        raise FormatError(f"{path}:1: missing gesture header")
    head = _kv(lines[0])
    imp = None
    if "impersonation" in head:
        a, v, n = head["impersonation"].split(",")
        imp = Impersonation(a, v, int(n))
    terminal = None if head["terminal"] == "-" else head["terminal"]
    meta = GestureMeta(
        head["user"], int(head["session"]), GestureKind.parse(head["kind"]), terminal,
        Arm(head["arm"]), imp, "" if head["id"] == "-" else head["id"],
    )
    w0, w1 = (float(x) for x in head["window"].split(","))
    data: Dict[DeviceKind, Dict[SensorKind, SensorStream]] = {}
    block: List[str] = []
    current: Optional[Dict[str, str]] = None

    def flush():
        if current is None:
            return
        kind = DeviceKind(current["kind"])
        sensor = SensorKind.parse(current["sensor"])
        arr = np.loadtxt(block, ndmin=2) if block else np.zeros((0, sensor.width + 1))
        data.setdefault(kind, {})[sensor] = SensorStream(
            DeviceId(kind, current["device"]), sensor, float(current["rate"]), arr[:, 0], arr[:, 1:]
        )

    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("# stream "):
            flush()
            current, block = _kv(line), []
        elif line.strip():
            if current is None:
                raise FormatError(f"{path}:{lineno}: sample before stream header")
            block.append(line)
    flush()
    return GestureSegment(meta, (w0, w1), data)
