"""Small builders shared by the test modules."""

import numpy as np

from tapknock.model import DeviceId, DeviceKind, SensorKind, SensorStream

RING = DeviceId(DeviceKind.RING, "ring0")
WATCH = DeviceId(DeviceKind.WATCH, "watch0")
DOOR = DeviceId(DeviceKind.DOOR, "door0")
DEVICES = {DeviceKind.RING: RING, DeviceKind.WATCH: WATCH, DeviceKind.DOOR: DOOR}


def uniform_stream(device, sensor, rate, t0, t1, fn=None, seed=0):
    """Samples on [t0, t1] at `rate`; values from fn(t) or seeded noise."""
    n = int(round((t1 - t0) * rate)) + 1
    t = t0 + np.arange(n) / rate
    width = sensor.width
    if fn is not None:
        v = np.asarray(fn(t), dtype=float).reshape(n, width)
    else:
        v = np.random.default_rng(seed).normal(size=(n, width))
        if sensor.is_quaternion:
            v[:, 3] += 4.0
    return SensorStream(device, sensor, rate, t, v)


def device_streams(kind, rate, t0, t1, seed=0):
    from tapknock.model import DEVICE_SENSORS

    return [uniform_stream(DEVICES[kind], s, rate, t0, t1, seed=seed + i)
            for i, s in enumerate(DEVICE_SENSORS[kind])]
