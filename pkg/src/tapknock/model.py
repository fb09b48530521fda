"""Domain types shared by the whole pipeline.

Everything here is in-memory and immutable once built. Sample sequences are
stored as numpy arrays (one row per sample) rather than lists of sample
objects; arrays are flagged read-only on construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Tuple

import numpy as np

QUAT_TOLERANCE = 1e-3
MAX_TAP_WINDOW_S = 4.0
CADENCE_TOLERANCE = 0.2

FIXED_TERMINALS = ("1", "2", "3", "4", "5", "6")
FREESTYLE = "F"
TERMINALS = FIXED_TERMINALS + (FREESTYLE,)


class TapKnockError(Exception):
    """Base class for pipeline errors."""


class ValidationError(TapKnockError, ValueError):
    """An invariant of a domain object does not hold."""


class DeviceKind(str, Enum):
    RING = "Ring"
    WATCH = "Watch"
    DOOR = "Door"

    @property
    def prefix(self) -> str:
        # leading character used in combined feature names
        return self.value[0].lower()


# combined feature vectors are always concatenated in this order
DEVICE_ORDER = (DeviceKind.DOOR, DeviceKind.RING, DeviceKind.WATCH)


class SensorKind(str, Enum):
    ACCELEROMETER = "Accelerometer"
    GYROSCOPE = "Gyroscope"
    LINEAR_ACCELEROMETER = "LinearAccelerometer"
    GRV = "GRV"

    @property
    def code(self) -> str:
        return _SENSOR_CODES[self]

    @property
    def is_quaternion(self) -> bool:
        return self is SensorKind.GRV

    @property
    def width(self) -> int:
        return 4 if self.is_quaternion else 3

    @classmethod
    def parse(cls, text: str) -> "SensorKind":
        for kind in cls:
            if text in (kind.value, kind.code, kind.name):
                return kind
        raise ValueError(f"unknown sensor kind {text!r}")


_SENSOR_CODES = {
    SensorKind.ACCELEROMETER: "Acc",
    SensorKind.GYROSCOPE: "Gyr",
    SensorKind.LINEAR_ACCELEROMETER: "LAc",
    SensorKind.GRV: "GRV",
}

SENSOR_ORDER = (
    SensorKind.ACCELEROMETER,
    SensorKind.GYROSCOPE,
    SensorKind.LINEAR_ACCELEROMETER,
    SensorKind.GRV,
)

DEVICE_SENSORS = {
    DeviceKind.RING: SENSOR_ORDER,
    DeviceKind.WATCH: SENSOR_ORDER,
    DeviceKind.DOOR: (SensorKind.ACCELEROMETER, SensorKind.GYROSCOPE),
}


class GestureKind(str, Enum):
    RING_TAP = "RingTap"
    WATCH_TAP = "WatchTap"
    KNOCK3 = "Knock3"
    KNOCK5 = "Knock5"
    SECRET_KNOCK = "SecretKnock"

    @property
    def is_tap(self) -> bool:
        return self in (GestureKind.RING_TAP, GestureKind.WATCH_TAP)

    @property
    def slug(self) -> str:
        return _GESTURE_SLUGS[self]

    @classmethod
    def parse(cls, text: str) -> "GestureKind":
        for kind in cls:
            if text in (kind.value, kind.slug, kind.name):
                return kind
        raise ValueError(f"unknown gesture kind {text!r}")


_GESTURE_SLUGS = {
    GestureKind.RING_TAP: "ring-tap",
    GestureKind.WATCH_TAP: "watch-tap",
    GestureKind.KNOCK3: "3-knock",
    GestureKind.KNOCK5: "5-knock",
    GestureKind.SECRET_KNOCK: "secret-knock",
}

KNOCK_KINDS = (GestureKind.KNOCK3, GestureKind.KNOCK5, GestureKind.SECRET_KNOCK)
TAP_KINDS = (GestureKind.RING_TAP, GestureKind.WATCH_TAP)


class Arm(str, Enum):
    LEFT = "Left"
    RIGHT = "Right"


@dataclass(frozen=True)
class DeviceId:
    kind: DeviceKind
    label: str

    def __post_init__(self):
        if not isinstance(self.kind, DeviceKind):
            object.__setattr__(self, "kind", DeviceKind(self.kind))
        if not self.label:
            raise ValidationError("device label must be nonempty")


@dataclass(frozen=True)
class Impersonation:
    attacker: str
    victim: str
    attempt: int


@dataclass(frozen=True)
class GestureMeta:
    """Who performed a gesture, where, and in which session.

    The tap/terminal pairing rule is checked by :func:`validate_segment`, not
    here, so that malformed metadata read from disk can still be reported.
    """

    user: str
    session: int
    gesture_kind: GestureKind
    terminal: Optional[str] = None
    arm: Arm = Arm.LEFT
    impersonation: Optional[Impersonation] = None
    gesture_id: str = ""

    def __post_init__(self):
        if self.session not in (1, 2):
            raise ValidationError(f"session must be 1 or 2, got {self.session}")
        if self.terminal is not None and self.terminal not in TERMINALS:
            raise ValidationError(f"unknown terminal {self.terminal!r}")

    @property
    def is_impersonation(self) -> bool:
        return self.impersonation is not None


@dataclass(frozen=True)
class WindowSpec:
    """Tap window: `size_s` seconds ending `offset_o` seconds before contact."""

    size_s: float
    offset_o: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.size_s <= MAX_TAP_WINDOW_S:
            raise ValidationError(f"window size {self.size_s} not in (0, 4]")
        if self.offset_o < 0.0:
            raise ValidationError(f"offset {self.offset_o} is negative")
        if self.offset_o + self.size_s > MAX_TAP_WINDOW_S + 1e-9:
            raise ValidationError(
                f"size {self.size_s} + offset {self.offset_o} exceeds 4 s"
            )

    @staticmethod
    def is_valid(size_s: float, offset_o: float) -> bool:
        try:
            WindowSpec(size_s, offset_o)
        except ValidationError:
            return False
        return True


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class SensorStream:
    """Timestamped samples of one sensor on one device.

    `values` has shape (n, 3) for vector sensors and (n, 4) for the GRV,
    whose columns are (x, y, z, w). Quaternions are renormalised on
    construction; `renormalized` counts samples that were off by more than
    the tolerance.
    """

    device: DeviceId
    sensor: SensorKind
    rate_hz: float
    t: np.ndarray
    values: np.ndarray
    renormalized: int = field(default=0, compare=False)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        v = v.reshape(len(t), -1) if v.size else v.reshape(0, self.sensor.width)
        if v.shape[1] != self.sensor.width:
            raise ValidationError(
                f"{self.sensor.value} expects {self.sensor.width} columns, got {v.shape[1]}"
            )
        if self.rate_hz <= 0:
            raise ValidationError("rate must be positive")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValidationError("non-finite sample")
        if len(t) > 1:
            dt = np.diff(t)
            if np.any(dt <= 0):
                bad = int(np.argmax(dt <= 0)) + 1
                raise ValidationError(f"timestamps not strictly increasing at sample {bad}")
            if abs(dt.mean() * self.rate_hz - 1.0) > CADENCE_TOLERANCE:
                raise ValidationError(
                    f"mean cadence {1.0 / dt.mean():.2f} Hz is not within 20% of {self.rate_hz} Hz"
                )
        count = self.renormalized
        if self.sensor.is_quaternion and len(v):
            norms = np.linalg.norm(v, axis=1)
            if np.any(norms == 0):
                raise ValidationError("zero quaternion")
            count += int(np.sum(np.abs(norms - 1.0) > QUAT_TOLERANCE))
            v = v / norms[:, None]
        object.__setattr__(self, "t", _frozen(t))
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "renormalized", count)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def key(self) -> Tuple[DeviceKind, SensorKind]:
        return (self.device.kind, self.sensor)

    def between(self, t_start: float, t_end: float) -> "SensorStream":
        """Samples with t in the closed interval [t_start, t_end]."""
        lo = int(np.searchsorted(self.t, t_start, side="left"))
        hi = int(np.searchsorted(self.t, t_end, side="right"))
        return SensorStream(
            self.device, self.sensor, self.rate_hz, self.t[lo:hi], self.values[lo:hi]
        )

    def shifted(self, dt: float) -> "SensorStream":
        return SensorStream(self.device, self.sensor, self.rate_hz, self.t + dt, self.values)


SegmentData = Mapping[DeviceKind, Mapping[SensorKind, SensorStream]]


@dataclass(frozen=True)
class GestureSegment:
    meta: GestureMeta
    window: Tuple[float, float]
    data: SegmentData

    def sensors(self, device: DeviceKind) -> Mapping[SensorKind, SensorStream]:
        return self.data[device]

    @property
    def devices(self) -> Tuple[DeviceKind, ...]:
        return tuple(d for d in DEVICE_ORDER if d in self.data)


def validate_segment(seg: GestureSegment) -> GestureSegment:
    """Return `seg` unchanged, or raise on the first violated invariant."""
    t_start, t_end = seg.window
    if not (math.isfinite(t_start) and math.isfinite(t_end)) or t_start >= t_end:
        raise ValidationError(f"bad window ({t_start}, {t_end})")
    kind = seg.meta.gesture_kind
    if kind.is_tap and seg.meta.terminal is None:
        raise ValidationError("tap requires terminal")
    if not kind.is_tap and seg.meta.terminal is not None:
        raise ValidationError("knock must not carry a terminal")
    if kind.is_tap and t_end - t_start > MAX_TAP_WINDOW_S + 1e-9:
        raise ValidationError("tap window longer than 4 s")
    if not seg.data:
        raise ValidationError("segment holds no devices")
    for device, sensors in seg.data.items():
        if not sensors:
            raise ValidationError(f"empty sensor window: {device.value} has no sensors")
        for sensor, stream in sensors.items():
            if len(stream) == 0:
                raise ValidationError(f"empty sensor window: {device.value} {sensor.value}")
            if stream.t[0] < t_start or stream.t[-1] > t_end:
                raise ValidationError(
                    f"sample outside window: {device.value} {sensor.value} "
                    f"[{stream.t[0]:.4f}, {stream.t[-1]:.4f}] vs [{t_start:.4f}, {t_end:.4f}]"
                )
    return seg
