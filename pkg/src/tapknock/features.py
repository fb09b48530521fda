"""Gesture feature vectors.

Each vector sensor (accelerometer, gyroscope, linear accelerometer) gives five
dimensions: filtered x, y, z, the energy of the filtered values and the
energy of the raw values. The GRV gives its four filtered quaternion
components. Every dimension contributes ten statistics, and every vector
sensor adds ten velocity/displacement features computed from raw values.
A full ring or watch vector therefore has 19 * 10 + 3 * 10 = 220 members and
a door vector 10 * 10 + 2 * 10 = 120.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.signal import lfilter

from .model import (
    DEVICE_ORDER,
    DEVICE_SENSORS,
    DeviceKind,
    GestureMeta,
    GestureSegment,
    SensorKind,
    SensorStream,
    TapKnockError,
)

CUTOFF_HZ = 10.0
PEAK_SIGMA = 1.0
# below this (relative) standard deviation a channel counts as constant
ZERO_VARIANCE_RTOL = 1e-12
INTEGRATE_RAW = True

STAT_NAMES = ("min", "max", "mean", "med", "stdev", "var", "iqr", "kurt", "skew", "peaks")
KINEMATIC_NAMES = (
    "x-velomean", "y-velomean", "z-velomean",
    "x-velomax", "y-velomax", "z-velomax",
    "x-disp", "y-disp", "z-disp",
    "xyz-disp",
)
VECTOR_DIMS = ("x", "y", "z", "efil", "eraw")
QUAT_DIMS = ("x", "y", "z", "w")

ALL_SENSORS: FrozenSet[SensorKind] = frozenset(SensorKind)


class FeatureError(TapKnockError, ValueError):
    pass


@dataclass(frozen=True)
class Channel:
    name: str
    values: np.ndarray


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    names: Tuple[str, ...]
    meta: Optional[GestureMeta]
    sensor_mask: FrozenSet[SensorKind] = ALL_SENSORS

    def __post_init__(self):
        if len(self.values) != len(self.names):
            raise FeatureError("values and names differ in length")
        if len(set(self.names)) != len(self.names):
            raise FeatureError("duplicate feature names")

    def __len__(self) -> int:
        return len(self.names)


def smoothing_alpha(rate_hz: float, cutoff_hz: float = CUTOFF_HZ) -> float:
    return 1.0 - math.exp(-2.0 * math.pi * cutoff_hz / rate_hz)


def lowpass(values, rate_hz: float, cutoff_hz: float = CUTOFF_HZ) -> np.ndarray:
    """Zero-phase exponential smoothing along axis 0.

    The single-pole section y[n] = y[n-1] + alpha * (x[n] - y[n-1]) is run
    forward and then backward, each pass starting from its first input so
    that constants pass through unchanged.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.shape[0] < 2:
        raise FeatureError("low-pass filter needs at least 2 samples")
    if not np.all(np.isfinite(x)):
        raise FeatureError("non-finite input to low-pass filter")
    a = smoothing_alpha(rate_hz, cutoff_hz)
    b, den = [a], [1.0, -(1.0 - a)]

    def one_pass(u):
        zi = (1.0 - a) * u[:1]
        y, _ = lfilter(b, den, u, axis=0, zi=zi)
        return y

    forward = one_pass(x)
    return one_pass(forward[::-1])[::-1].copy()


def energy(x, y, z):
    return np.sqrt(np.square(x) + np.square(y) + np.square(z))


def build_dimensions(sensors: Dict[SensorKind, SensorStream], device: DeviceKind,
                     sensor_mask: Iterable[SensorKind] = ALL_SENSORS) -> List[Channel]:
    """The processing dimensions of one device's gesture window."""
    mask = frozenset(sensor_mask)
    channels: List[Channel] = []
    for sensor in DEVICE_SENSORS[device]:
        if sensor not in mask:
            continue
        stream = sensors.get(sensor)
        if stream is None:
            raise FeatureError(f"missing sensor {sensor.value} for {device.value}")
        raw = stream.values
        filt = lowpass(raw, stream.rate_hz)
        code = sensor.code
        if sensor.is_quaternion:
            for j, dim in enumerate(QUAT_DIMS):
                channels.append(Channel(f"{code}-{dim}", filt[:, j]))
        else:
            for j, dim in enumerate("xyz"):
                channels.append(Channel(f"{code}-{dim}", filt[:, j]))
            channels.append(Channel(f"{code}-efil", energy(filt[:, 0], filt[:, 1], filt[:, 2])))
            channels.append(Channel(f"{code}-eraw", energy(raw[:, 0], raw[:, 1], raw[:, 2])))
    return channels


def stat_features(values) -> np.ndarray:
    """Ten statistics of a channel (or of each column of a 2-D block).

    Order: min, max, mean, median, stdev, variance, IQR, excess kurtosis,
    skewness, peak count. Moments use the population convention; a constant
    channel reports zero kurtosis and skewness. Peaks are interior samples
    above both neighbours and above mean + PEAK_SIGMA * stdev.
    """
    x = np.asarray(values, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    n = x.shape[0]
    if n < 4:
        raise FeatureError(f"channel too short ({n} samples, need 4)")
    mean = x.mean(axis=0)
    dev = x - mean
    m2 = np.mean(dev ** 2, axis=0)
    m3 = np.mean(dev ** 3, axis=0)
    m4 = np.mean(dev ** 4, axis=0)
    std = np.sqrt(m2)
    flat = std <= ZERO_VARIANCE_RTOL * np.maximum(1.0, np.abs(mean))
    safe = np.where(flat, 1.0, m2)
    skew = np.where(flat, 0.0, m3 / safe ** 1.5)
    kurt = np.where(flat, 0.0, m4 / safe ** 2 - 3.0)
    q25, q50, q75 = np.percentile(x, [25, 50, 75], axis=0)
    mid = x[1:-1]
    peaks = (mid > x[:-2]) & (mid > x[2:]) & (mid > mean + PEAK_SIGMA * std)
    peak_count = np.where(flat, 0, peaks.sum(axis=0)).astype(np.float64)
    out = np.stack(
        [x.min(axis=0), x.max(axis=0), mean, q50, std, m2, q75 - q25, kurt, skew, peak_count]
    )
    return out[:, 0] if squeeze else out


def kinematic_features(t, xyz) -> np.ndarray:
    """Velocity and displacement features of a 3-axis window.

    Velocity is the cumulative trapezoidal integral of the signal from zero;
    per-axis displacement is the trapezoidal integral of that velocity.
    Order: mean velocity x/y/z, max velocity x/y/z, displacement x/y/z,
    Euclidean displacement.
    """
    t = np.asarray(t, dtype=np.float64)
    a = np.asarray(xyz, dtype=np.float64)
    if len(t) < 2:
        raise FeatureError("kinematic features need at least 2 samples")
    vel = cumulative_trapezoid(a, t, axis=0, initial=0.0)
    disp = trapezoid(vel, t, axis=0)
    return np.concatenate([vel.mean(axis=0), vel.max(axis=0), disp, [math.sqrt(float(disp @ disp))]])


def device_feature_names(device: DeviceKind, sensor_mask: Iterable[SensorKind] = ALL_SENSORS,
                         prefix: str = "") -> List[str]:
    mask = frozenset(sensor_mask)
    names = []
    vector_sensors = []
    for sensor in DEVICE_SENSORS[device]:
        if sensor not in mask:
            continue
        dims = QUAT_DIMS if sensor.is_quaternion else VECTOR_DIMS
        for dim in dims:
            names += [f"{prefix}{sensor.code}-{dim}-{s}" for s in STAT_NAMES]
        if not sensor.is_quaternion:
            vector_sensors.append(sensor)
    for sensor in vector_sensors:
        names += [f"{prefix}{sensor.code}-{k}" for k in KINEMATIC_NAMES]
    return names


def device_features(sensors: Dict[SensorKind, SensorStream], device: DeviceKind,
                    sensor_mask: Iterable[SensorKind] = ALL_SENSORS) -> np.ndarray:
    mask = frozenset(sensor_mask)
    parts = []
    kinematic = []
    for sensor in DEVICE_SENSORS[device]:
        if sensor not in mask:
            continue
        stream = sensors.get(sensor)
        if stream is None:
            raise FeatureError(f"missing sensor {sensor.value} for {device.value}")
        chans = build_dimensions({sensor: stream}, device, {sensor})
        block = np.column_stack([c.values for c in chans])
        try:
            parts.append(stat_features(block).T.ravel())
        except FeatureError as exc:
            raise FeatureError(f"{device.value} {sensor.value}: {exc}") from None
        if not sensor.is_quaternion:
            src = stream.values if INTEGRATE_RAW else block[:, :3]
            kinematic.append(kinematic_features(stream.t, src))
    return np.concatenate(parts + kinematic) if parts else np.zeros(0)


def extract(segment: GestureSegment, devices: Optional[Sequence[DeviceKind]] = None,
            sensor_mask: Iterable[SensorKind] = ALL_SENSORS) -> FeatureVector:
    """Feature vector for the requested devices, concatenated door, ring, watch.

    Names carry a d-/r-/w- device prefix when more than one device is used.
    """
    mask = frozenset(sensor_mask)
    wanted = tuple(d for d in DEVICE_ORDER if d in (devices or segment.devices))
    if not wanted:
        raise FeatureError("no devices requested")
    combined = len(wanted) > 1
    values, names = [], []
    for device in wanted:
        if device not in segment.data:
            raise FeatureError(f"segment has no {device.value} data")
        prefix = device.prefix + "-" if combined else ""
        values.append(device_features(segment.data[device], device, mask))
        names += device_feature_names(device, mask, prefix)
    return FeatureVector(np.concatenate(values), tuple(names), segment.meta, mask)
