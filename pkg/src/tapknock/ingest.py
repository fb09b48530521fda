"""Reading recordings and event logs into streams; resampling.

File formats are described in FORMATS.md at the repository root.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .model import (
    TERMINALS,
    Arm,
    DeviceId,
    DeviceKind,
    SensorKind,
    SensorStream,
    TapKnockError,
)

MANIFEST_FORMAT = "tapknock-session/1"


class FormatError(TapKnockError, ValueError):
    """A file does not follow the documented format."""


@dataclass(frozen=True)
class NfcContactEvent:
    t0: float
    device_name: str
    terminal: str


@dataclass(frozen=True)
class ButtonEvent:
    t: float
    role: str  # "Start" or "End"
    label: Optional[str] = None  # gesture kind, carried on Start lines

    @property
    def time(self) -> float:
        return self.t


Event = Union[NfcContactEvent, ButtonEvent]


def event_time(ev: Event) -> float:
    return ev.t0 if isinstance(ev, NfcContactEvent) else ev.t


@dataclass(frozen=True)
class StreamRef:
    file: str
    device: str
    sensor: SensorKind
    rate_hz: float


@dataclass(frozen=True)
class SessionManifest:
    user: str
    session: int
    arm: Arm
    devices: Dict[str, DeviceKind]
    streams: Tuple[StreamRef, ...]
    events: str
    clock_offsets: Dict[str, float] = field(default_factory=dict)
    origin: float = 0.0
    kind: str = "genuine"
    victim: Optional[str] = None
    base_dir: Path = Path(".")

    @property
    def is_impersonation(self) -> bool:
        return self.kind == "impersonation"

    def device_id(self, label: str) -> DeviceId:
        if label not in self.devices:
            raise FormatError(f"unknown device {label!r} in session {self.user}/s{self.session}")
        return DeviceId(self.devices[label], label)

    def to_json(self) -> dict:
        doc = {
            "format": MANIFEST_FORMAT,
            "user": self.user,
            "session": self.session,
            "arm": self.arm.value,
            "kind": self.kind,
            "devices": {k: v.value for k, v in self.devices.items()},
            "streams": [
                {"file": s.file, "device": s.device, "sensor": s.sensor.value, "rate": s.rate_hz}
                for s in self.streams
            ],
            "events": self.events,
            "clock_offsets": dict(self.clock_offsets),
            "origin": self.origin,
        }
        if self.victim is not None:
            doc["victim"] = self.victim
        return doc


def load_manifest(path) -> SessionManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise FormatError(f"missing file: {path}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed manifest: {exc}") from None
    try:
        if doc.get("format", MANIFEST_FORMAT) != MANIFEST_FORMAT:
            raise FormatError(f"{path}: unsupported manifest format {doc['format']!r}")
        devices = {k: DeviceKind(v) for k, v in doc["devices"].items()}
        streams = tuple(
            StreamRef(s["file"], s["device"], SensorKind.parse(s["sensor"]), float(s["rate"]))
            for s in doc["streams"]
        )
        offsets = {k: float(v) for k, v in doc.get("clock_offsets", {}).items()}
        manifest = SessionManifest(
            user=str(doc["user"]),
            session=int(doc["session"]),
            arm=Arm(doc.get("arm", "Left")),
            devices=devices,
            streams=streams,
            events=doc["events"],
            clock_offsets=offsets,
            origin=float(doc.get("origin", 0.0)),
            kind=doc.get("kind", "genuine"),
            victim=doc.get("victim"),
            base_dir=path.parent,
        )
    except KeyError as exc:
        raise FormatError(f"{path}: manifest lacks key {exc}") from None
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: {exc}") from None
    for s in manifest.streams:
        manifest.device_id(s.device)
    if any(not math.isfinite(v) for v in offsets.values()):
        raise FormatError(f"{path}: non-finite clock offset")
    return manifest


def write_manifest(path, manifest: SessionManifest) -> None:
    Path(path).write_text(json.dumps(manifest.to_json(), indent=2) + "\n")


def _parse_header(line: str, path) -> Dict[str, str]:
    fields = {}
    for token in line.lstrip("#").split():
        if "=" in token:
            k, v = token.split("=", 1)
            fields[k] = v
    missing = {"device", "sensor", "rate"} - fields.keys()
    if missing:
        raise FormatError(f"{path}:1: header lacks {sorted(missing)}")
    return fields


def _locate_bad_line(lines: Sequence[str], width: int, path) -> None:
    for lineno, line in enumerate(lines, start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        if len(parts) != width + 1:
            raise FormatError(f"{path}:{lineno}: malformed line (expected {width + 1} fields)")
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise FormatError(f"{path}:{lineno}: malformed line (not a number)") from None
        if not all(math.isfinite(v) for v in vals):
            raise FormatError(f"{path}:{lineno}: non-finite value")


def read_stream_file(path) -> Tuple[Dict[str, str], np.ndarray]:
    """Header fields and the (n, 1 + width) sample array of a stream file."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise FormatError(f"missing file: {path}") from None
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise FormatError(f"{path}:1: missing header line")
    header = _parse_header(lines[0], path)
    sensor = SensorKind.parse(header["sensor"])
    width = sensor.width
    try:
        data = np.loadtxt(lines, comments="#", dtype=np.float64, ndmin=2)
    except ValueError:
        _locate_bad_line(lines, width, path)
        raise FormatError(f"{path}: malformed stream file") from None
    if data.size == 0:
        data = np.zeros((0, width + 1))
    if data.shape[1] != width + 1:
        _locate_bad_line(lines, width, path)
    if not np.all(np.isfinite(data)):
        _locate_bad_line(lines, width, path)
    dt = np.diff(data[:, 0])
    if np.any(dt <= 0):
        bad_row = int(np.argmax(dt <= 0)) + 1
        # map the data row back to a file line (skipping header/comments)
        rows = [i for i, ln in enumerate(lines, 1) if ln.strip() and not ln.lstrip().startswith("#")]
        raise FormatError(f"{path}: non-monotone timestamps at line {rows[bad_row]}")
    return header, data


def write_stream_file(path, stream: SensorStream, label: Optional[str] = None, fmt: str = "%.6f") -> None:
    label = label or stream.device.label
    header = f"# device={label} sensor={stream.sensor.code} rate={stream.rate_hz:g}"
    block = np.column_stack([stream.t, stream.values])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, block, fmt=fmt, delimiter=" ")


def read_events(path) -> List[Event]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except FileNotFoundError:
        raise FormatError(f"missing file: {path}") from None
    events: List[Event] = []
    for lineno, line in enumerate(lines, start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        try:
            t = float(parts[0])
        except (ValueError, IndexError):
            raise FormatError(f"{path}:{lineno}: malformed line (bad timestamp)") from None
        if not math.isfinite(t) or len(parts) < 3:
            raise FormatError(f"{path}:{lineno}: malformed line")
        if parts[1] == "NFC":
            if len(parts) != 4 or parts[3] not in TERMINALS:
                raise FormatError(f"{path}:{lineno}: malformed NFC line")
            events.append(NfcContactEvent(t, parts[2], parts[3]))
        elif parts[1] == "BTN":
            if parts[2] not in ("Start", "End") or len(parts) > 4:
                raise FormatError(f"{path}:{lineno}: malformed BTN line")
            label = parts[3] if len(parts) == 4 else None
            events.append(ButtonEvent(t, parts[2], label))
        else:
            raise FormatError(f"{path}:{lineno}: unknown event type {parts[1]!r}")
    return events


def format_event(ev: Event) -> str:
    if isinstance(ev, NfcContactEvent):
        return f"{ev.t0:.6f} NFC {ev.device_name} {ev.terminal}"
    tail = f" {ev.label}" if ev.label else ""
    return f"{ev.t:.6f} BTN {ev.role}{tail}"


def write_events(path, events: Sequence[Event]) -> None:
    Path(path).write_text("".join(format_event(e) + "\n" for e in events))


def parse_session(manifest_path) -> Tuple[List[SensorStream], List[Event]]:
    """Load every stream and the event log named by a session manifest.

    Sample times are corrected by the per-device clock offset and rebased to
    the session origin: t = t_raw - offset[device] - origin.
    """
    manifest = load_manifest(manifest_path)
    return load_session(manifest)


def load_session(manifest: SessionManifest) -> Tuple[List[SensorStream], List[Event]]:
    streams = []
    for ref in manifest.streams:
        path = manifest.base_dir / ref.file
        header, data = read_stream_file(path)
        if SensorKind.parse(header["sensor"]) is not ref.sensor:
            raise FormatError(f"{path}: header sensor {header['sensor']} != manifest {ref.sensor.value}")
        shift = manifest.clock_offsets.get(ref.device, 0.0) + manifest.origin
        try:
            streams.append(
                SensorStream(
                    manifest.device_id(ref.device),
                    ref.sensor,
                    ref.rate_hz,
                    data[:, 0] - shift,
                    data[:, 1:],
                )
            )
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None
    events = read_events(manifest.base_dir / manifest.events)
    events = [_shift_event(e, -manifest.origin) for e in events]
    events.sort(key=event_time)
    return streams, events


def _shift_event(ev: Event, dt: float) -> Event:
    if dt == 0.0:
        return ev
    if isinstance(ev, NfcContactEvent):
        return NfcContactEvent(ev.t0 + dt, ev.device_name, ev.terminal)
    return ButtonEvent(ev.t + dt, ev.role, ev.label)


def _grid(t0: float, t_last: float, rate: float) -> np.ndarray:
    n = int(math.floor((t_last - t0) * rate + 1e-9)) + 1
    return t0 + np.arange(n) / rate


def resample(stream: SensorStream, target_hz: float, mode: str = "interp") -> SensorStream:
    """Resample onto a uniform grid anchored at the first sample.

    `interp` interpolates each component linearly (quaternions are
    renormalised afterwards); `decimate` keeps every k-th sample and needs an
    integer rate ratio. Upsampling is refused.
    """
    if target_hz > stream.rate_hz * (1 + 1e-9):
        raise ValueError(f"upsampling refused: {target_hz} Hz > {stream.rate_hz} Hz")
    if len(stream) < 2:
        raise ValueError("resampling needs at least 2 samples")
    if mode == "decimate":
        ratio = stream.rate_hz / target_hz
        step = int(round(ratio))
        if abs(ratio - step) > 1e-9:
            raise ValueError(f"decimation needs an integer ratio, got {ratio:.4f}")
        return SensorStream(
            stream.device, stream.sensor, target_hz, stream.t[::step], stream.values[::step]
        )
    if mode != "interp":
        raise ValueError(f"unknown resample mode {mode!r}")
    grid = _grid(stream.t[0], stream.t[-1], target_hz)
    values = np.column_stack(
        [np.interp(grid, stream.t, stream.values[:, j]) for j in range(stream.values.shape[1])]
    )
    # SensorStream renormalises quaternion rows
    return SensorStream(stream.device, stream.sensor, target_hz, grid, values)


def pair_button_bounds(events: Sequence[ButtonEvent]) -> List[Tuple[float, float]]:
    """Pair alternating Start/End presses into knock bounds."""
    pairs: List[Tuple[float, float]] = []
    start: Optional[float] = None
    for ev in events:
        if ev.role == "Start":
            if start is not None:
                raise FormatError(f"unpaired Start at t={start:.3f}")
            start = ev.t
        elif ev.role == "End":
            if start is None:
                raise FormatError(f"unpaired End at t={ev.t:.3f}")
            if ev.t <= start:
                raise FormatError(f"End at t={ev.t:.3f} does not follow its Start")
            if pairs and start < pairs[-1][1]:
                raise FormatError(f"overlapping pairs at t={start:.3f}")
            pairs.append((start, ev.t))
            start = None
        else:
            raise FormatError(f"unknown button role {ev.role!r}")
    if start is not None:
        raise FormatError(f"unpaired Start at t={start:.3f}")
    return pairs
