"""Deterministic synthetic study generator.

Every user gets a motion profile: tap approach/withdraw timing, reach, lift
and sway amplitudes, wrist and finger rotations, impact strength, and knock
cadence, force and rhythm. A parameter's user value is

    mean + sqrt(separability) * between_sd * z_user

so separability 0 gives every user the same profile and separability 1 the
full between-user spread. Each session shifts the user's parameters by a
small drift (also scaled by sqrt(separability)) and each gesture jitters
them by within_sd. Sensor noise is fixed.

Motion is built from smooth primitives in a world frame with x toward the
terminal, y to the left and z up. Position follows a cycloid (its
acceleration is one sine period) and orientation follows the same shape.
Contact adds a ringing impact transient. Accelerometer readings are
R^T (a + g z), linear acceleration R^T a, gyroscope values the body-frame
rotation rate and the GRV the orientation quaternion (x, y, z, w).

Door sensors see only the knock impulses, each convolved with a damped
oscillation of the door panel.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from .dataset import Recording, Study, recording_segments
from .ingest import (
    ButtonEvent,
    NfcContactEvent,
    SessionManifest,
    StreamRef,
    write_events,
    write_manifest,
    write_stream_file,
)
from .model import (
    DEVICE_SENSORS,
    FIXED_TERMINALS,
    TERMINALS,
    Arm,
    DeviceId,
    DeviceKind,
    GestureKind,
    GestureSegment,
    SensorKind,
    SensorStream,
    TapKnockError,
    WindowSpec,
)

GRAVITY = 9.81

# height cm, screen tilt deg, distance from table edge cm
TERMINAL_GEOMETRY: Dict[str, Tuple[float, float, float]] = {
    "1": (100.0, 0.0, 5.0),
    "2": (120.0, 60.0, 25.0),
    "3": (95.0, 45.0, -10.0),
    "4": (105.0, 30.0, 15.0),
    "5": (110.0, 15.0, 10.0),
    "6": (115.0, 90.0, 30.0),
}
# seconds per knock for an average user, from mean gesture durations
KNOCK_PERIOD = {GestureKind.KNOCK3: 0.94, GestureKind.KNOCK5: 0.66, GestureKind.SECRET_KNOCK: 0.84}
KNOCK_COUNT = {GestureKind.KNOCK3: 3, GestureKind.KNOCK5: 5}

NOISE = {SensorKind.ACCELEROMETER: 0.08, SensorKind.GYROSCOPE: 0.03, SensorKind.LINEAR_ACCELEROMETER: 0.08, SensorKind.GRV: 0.002}
DOOR_NOISE = {SensorKind.ACCELEROMETER: 0.04, SensorKind.GYROSCOPE: 0.01}
DRIFT = 0.15  # session drift, in units of the scaled between-user sd
WITHIN_SCALE = 1.0  # multiplies every within-gesture sd
IMPERSONATION_JITTER = 1.2  # extra spread of an attacker's attempts
DOOR_RING_HZ = 9.0
DOOR_DECAY_S = 0.08

DEVICE_LABELS = {DeviceKind.RING: "ring0", DeviceKind.WATCH: "watch0", DeviceKind.DOOR: "door0"}
CLOCK_OFFSETS = {"ring0": 0.0, "watch0": 0.137, "door0": -0.052}

# name: (mean, between-user sd, within-gesture sd, lo, hi)
TAP_PARAMS: Dict[str, Tuple[float, float, float, float, float]] = {
    "approach": (1.6, 0.35, 0.08, 0.7, 3.0),
    "withdraw": (0.75, 0.15, 0.05, 0.55, 1.2),
    "reach": (0.30, 0.08, 0.02, 0.05, 0.8),
    "sway": (0.0, 0.08, 0.015, -0.4, 0.4),
    "lift": (0.05, 0.06, 0.012, -0.3, 0.4),
    "roll": (0.3, 0.35, 0.05, -1.5, 2.0),
    "pitch": (0.1, 0.30, 0.05, -1.2, 1.2),
    "yaw": (0.0, 0.30, 0.05, -1.2, 1.2),
    "rest_roll": (0.0, 0.40, 0.04, -1.5, 1.5),
    "rest_pitch": (-0.3, 0.30, 0.04, -1.3, 1.0),
    "rest_yaw": (0.0, 0.40, 0.04, -1.5, 1.5),
    "finger": (0.3, 0.25, 0.03, -0.5, 1.2),
    "flick": (0.25, 0.20, 0.04, -0.3, 0.9),
    "impact": (3.0, 1.2, 0.3, 0.2, 8.0),
    "tilt_gain": (0.6, 0.25, 0.04, 0.0, 1.2),
}
WATCH_TAP_MEANS = {"roll": 1.0, "flick": 0.05}

KNOCK_PARAMS: Dict[str, Tuple[float, float, float, float, float]] = {
    "cadence": (1.0, 0.15, 0.03, 0.7, 1.4),
    "force": (6.0, 2.5, 0.6, 1.0, 15.0),
    "strike": (4.0, 1.5, 0.4, 0.5, 10.0),
    "flex": (0.5, 0.2, 0.05, 0.1, 1.0),
    "reach": (0.2, 0.06, 0.02, 0.02, 0.5),
    "lift": (0.15, 0.08, 0.02, -0.2, 0.4),
    "pose_roll": (1.2, 0.40, 0.05, -0.5, 2.2),
    "pose_pitch": (0.0, 0.30, 0.05, -1.0, 1.0),
    "pose_yaw": (0.0, 0.30, 0.05, -1.0, 1.0),
}
SECRET_COUNT = (4.5, 1.2)
SECRET_RHYTHM = (1.0, 0.4, 0.05, 0.4, 2.0)
MAX_SECRET = 6

ATTACK_KINDS = (GestureKind.RING_TAP, GestureKind.WATCH_TAP, GestureKind.KNOCK5, GestureKind.SECRET_KNOCK)
ATTACK_TERMINALS = ("2", "3")


class SynthError(TapKnockError, ValueError):
    pass


@dataclass(frozen=True)
class StudySpec:
    n_users: int = 6
    separability: float = 0.9
    taps_per_terminal: int = 5  # per tap kind, terminal and session
    knocks_per_kind: int = 8  # per knock kind and session
    seed: int = 0
    fidelity: Optional[float] = None  # None: no impersonation sessions
    attack_group: int = 3  # attackers per victim
    attempts: int = 3
    sessions: int = 2
    ring_rate_hz: float = 100.0
    watch_rate_hz: float = 50.0
    door_rate_hz: float = 30.0

    def __post_init__(self):
        if self.n_users < 2:
            raise SynthError("need ≥ 2 users")
        if not 0.0 <= self.separability <= 1.0:
            raise SynthError(f"separability {self.separability} not in [0, 1]")
        if self.fidelity is not None and not 0.0 <= self.fidelity <= 1.0:
            raise SynthError(f"fidelity {self.fidelity} not in [0, 1]")
        if self.sessions != 2:
            raise SynthError("studies have exactly 2 sessions")
        if self.taps_per_terminal < 1 or self.knocks_per_kind < 1 or self.attempts < 1:
            raise SynthError("gesture counts must be positive")
        if self.seed < 0:
            raise SynthError("seed must be non-negative")
        if self.fidelity is not None and not 0 < self.attack_group < self.n_users:
            raise SynthError("attackers per victim must be in [1, n_users - 1]")

    @property
    def users(self) -> List[str]:
        return [user_name(i) for i in range(self.n_users)]


def user_name(i: int) -> str:
    return f"u{i + 1:02d}"


@dataclass(frozen=True)
class UserProfile:
    user: str
    seed: int
    arm: Arm
    taps: Mapping[GestureKind, Mapping[str, float]]
    knock: Mapping[str, float]
    secret_count: int
    secret_rhythm: Tuple[float, ...]
    noise: Mapping[SensorKind, float] = field(default_factory=lambda: dict(NOISE))
    drift: Mapping[int, Mapping[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        for kind, p in self.taps.items():
            for key in ("approach", "withdraw"):
                if not 0.5 < p[key] < 4.0:
                    raise SynthError(f"{self.user} {kind.value} {key} {p[key]:.3f} s outside (0.5, 4)")
        if not 3 <= self.secret_count <= MAX_SECRET:
            raise SynthError("secret knock count must be 3..6")
        if len(self.secret_rhythm) != MAX_SECRET - 1:
            raise SynthError("secret rhythm needs one weight per possible interval")

    def knock_period(self, kind: GestureKind) -> float:
        return KNOCK_PERIOD[kind] * self.knock["cadence"]

    def knock_count(self, kind: GestureKind) -> int:
        return KNOCK_COUNT.get(kind, self.secret_count)


def _draw(table, rng, scale, means=None):
    out = {}
    for name, (mean, sd, _w, lo, hi) in table.items():
        m = (means or {}).get(name, mean)
        out[name] = float(np.clip(m + scale * sd * rng.standard_normal(), lo, hi))
    return out


def make_profile(spec: StudySpec, index: int) -> UserProfile:
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 1, index]))
    scale = math.sqrt(spec.separability)
    taps = {
        GestureKind.RING_TAP: _draw(TAP_PARAMS, rng, scale),
        GestureKind.WATCH_TAP: _draw(TAP_PARAMS, rng, scale, WATCH_TAP_MEANS),
    }
    knock = _draw(KNOCK_PARAMS, rng, scale)
    mean, sd = SECRET_COUNT
    count = int(np.clip(np.rint(mean + scale * sd * rng.standard_normal()), 3, MAX_SECRET))
    m, s, _w, lo, hi = SECRET_RHYTHM
    rhythm = tuple(float(np.clip(m + scale * s * z, lo, hi)) for z in rng.standard_normal(MAX_SECRET - 1))
    drift = {}
    for session in (1, 2):
        d = {}
        for table, tag in ((TAP_PARAMS, "tap"), (KNOCK_PARAMS, "knock")):
            for name, (_m, sd_, _w, _lo, _hi) in table.items():
                d[f"{tag}.{name}"] = float(scale * DRIFT * sd_ * rng.standard_normal())
        drift[session] = d
    return UserProfile(user_name(index), int(spec.seed), Arm.LEFT, taps, knock, count, rhythm, dict(NOISE), drift)


def make_profiles(spec: StudySpec) -> List[UserProfile]:
    return [make_profile(spec, i) for i in range(spec.n_users)]


def blend_profiles(attacker: UserProfile, victim: UserProfile, fidelity: float) -> UserProfile:
    """(1 - f) * attacker + f * victim, parameter by parameter."""
    f = float(fidelity)
    mix = lambda a, b: {k: (1 - f) * a[k] + f * b[k] for k in a}
    taps = {k: mix(attacker.taps[k], victim.taps[k]) for k in attacker.taps}
    count = victim.secret_count if f >= 0.5 else attacker.secret_count
    rhythm = tuple((1 - f) * a + f * b for a, b in zip(attacker.secret_rhythm, victim.secret_rhythm))
    return UserProfile(attacker.user, attacker.seed, attacker.arm, taps,
                       mix(attacker.knock, victim.knock), count, rhythm, dict(attacker.noise), {})


# ---------------------------------------------------------------------------
# motion primitives


def _cyc(tau):
    """Cycloid position fraction: 0 at tau <= 0, 1 at tau >= 1."""
    tau = np.clip(tau, 0.0, 1.0)
    return tau - np.sin(2 * np.pi * tau) / (2 * np.pi)


def _cyc_acc(tau, duration):
    """Second time derivative of _cyc((t - t_a) / duration)."""
    inside = (tau >= 0.0) & (tau <= 1.0)
    return np.where(inside, 2 * np.pi / duration ** 2 * np.sin(2 * np.pi * tau), 0.0)


def _bump(t, centre, half_width):
    """Raised cosine of height 1 centred at `centre`."""
    u = (t - centre) / half_width
    return np.where(np.abs(u) < 1.0, 0.5 * (1.0 + np.cos(np.pi * u)), 0.0)


def _ringdown(t, t_hit, freq, decay):
    dt = t - t_hit
    live = (dt >= 0) & (dt < 8 * decay)
    return np.where(live, np.exp(-np.maximum(dt, 0) / decay) * np.sin(2 * np.pi * freq * np.maximum(dt, 0)), 0.0)


@dataclass
class _Tap:
    kind: GestureKind
    terminal: str
    t0: float
    slot: Tuple[float, float]
    p: Dict[str, float]
    rest: np.ndarray  # deviation of this gesture's rest pose from the session pose

    def _shape(self, t):
        ta = self.t0 - self.p["approach"]
        before = t < self.t0
        pos = np.where(before, _cyc((t - ta) / self.p["approach"]),
                       1.0 - _cyc((t - self.t0) / self.p["withdraw"]))
        acc = np.where(before, _cyc_acc((t - ta) / self.p["approach"], self.p["approach"]),
                       -_cyc_acc((t - self.t0) / self.p["withdraw"], self.p["withdraw"]))
        return pos, acc

    def _settle(self, t):
        s0, s1 = self.slot
        return _cyc((t - s0) / 0.3) - _cyc((t - (s1 - 0.3)) / 0.3)

    def euler(self, t):
        pos, _ = self._shape(t)
        delta = np.array([self.p["roll"], self.p["pitch"], self.p["yaw"]])
        return pos[:, None] * delta + self._settle(t)[:, None] * self.rest

    def finger(self, t):
        return self.p["flick"] * _bump(t, self.t0 - 0.15, 0.2)

    def acc(self, t, impact_gain):
        _, a = self._shape(t)
        out = a[:, None] * np.array([self.p["reach"], self.p["sway"], self.p["lift"]])
        out[:, 0] -= impact_gain * self.p["impact"] * _ringdown(t, self.t0, 8.0, 0.05)
        return out


@dataclass
class _Knock:
    kind: GestureKind
    bound: Tuple[float, float]
    hits: np.ndarray
    forces: np.ndarray
    slot: Tuple[float, float]
    p: Dict[str, float]
    period: float

    def _ramp(self, t):
        tb, te = self.bound
        ramp = max(0.5 * self.period - 0.08, 0.15)
        a = _cyc((t - tb) / ramp) - _cyc((t - (te - ramp)) / ramp)
        acc = _cyc_acc((t - tb) / ramp, ramp) - _cyc_acc((t - (te - ramp)) / ramp, ramp)
        return a, acc

    def _width(self):
        return min(0.18, 0.3 * self.period)

    def euler(self, t):
        pos, _ = self._ramp(t)
        delta = np.array([self.p["pose_roll"], self.p["pose_pitch"], self.p["pose_yaw"]])
        out = pos[:, None] * delta
        w = self._width()
        for hit in self.hits:
            out[:, 1] -= self.p["flex"] * _bump(t, hit - 0.5 * w, w)
        return out

    def finger(self, t):
        return np.zeros_like(t)

    def acc(self, t, impact_gain):
        _, a = self._ramp(t)
        out = a[:, None] * np.array([self.p["reach"], 0.0, self.p["lift"]])
        w = self._width()
        for hit, force in zip(self.hits, self.forces):
            u = (t - (hit - w)) / w
            out[:, 0] += self.p["strike"] * np.where((u >= 0) & (u <= 1), np.sin(np.pi * u), 0.0)
            out[:, 0] -= impact_gain * force * _ringdown(t, hit, 10.0, 0.03)
        return out

    def door(self, t):
        sig = np.zeros_like(t)
        for hit, force in zip(self.hits, self.forces):
            sig += force * _ringdown(t, hit, DOOR_RING_HZ, DOOR_DECAY_S)
        return sig


def _jitter(values: Mapping[str, float], table, rng, scale=1.0, drift=None, tag=""):
    out = {}
    for name, (_m, _sd, w, lo, hi) in table.items():
        v = values[name] + (drift or {}).get(f"{tag}.{name}", 0.0)
        out[name] = float(np.clip(v + WITHIN_SCALE * scale * w * rng.standard_normal(), lo, hi))
    return out


def _apply_terminal(p: Dict[str, float], terminal: str, rng) -> Dict[str, float]:
    p = dict(p)
    if terminal in TERMINAL_GEOMETRY:
        height, tilt, dist = TERMINAL_GEOMETRY[terminal]
        p["reach"] += dist / 100.0
        p["lift"] += (height - 100.0) / 100.0
        p["pitch"] += p["tilt_gain"] * math.radians(tilt)
    else:
        # freestyle: the user holds the terminal wherever it suits them
        p["reach"] += 0.1 + 0.05 * rng.standard_normal()
        p["lift"] += -0.05 + 0.05 * rng.standard_normal()
        p["pitch"] += p["tilt_gain"] * math.radians(20.0 + 10.0 * rng.standard_normal())
    return p


def _secret_hits(profile: UserProfile, count: int, period: float, rng, scale) -> np.ndarray:
    weights = np.array(profile.secret_rhythm[: count - 1])
    weights = np.clip(weights + scale * SECRET_RHYTHM[2] * rng.standard_normal(len(weights)), 0.2, None)
    gaps = weights / weights.sum() * (count - 1) * period
    return 0.5 * period + np.concatenate([[0.0], np.cumsum(gaps)])


class _Timeline:
    def __init__(self, profile: UserProfile, rng, drift, jitter_scale=1.0):
        self.profile = profile
        self.rng = rng
        self.drift = drift or {}
        self.scale = jitter_scale
        self.cursor = 0.3
        self.plans: list = []
        self.events: list = []
        self.rest_pose = np.array([profile.taps[GestureKind.RING_TAP][k] for k in ("rest_roll", "rest_pitch", "rest_yaw")])

    def tap(self, kind: GestureKind, terminal: str):
        rng = self.rng
        p = _jitter(self.profile.taps[kind], TAP_PARAMS, rng, self.scale, self.drift, "tap")
        p = _apply_terminal(p, terminal, rng)
        start = self.cursor
        t0 = start + 4.3 + 0.3 * rng.random()
        end = t0 + p["withdraw"] + 0.2
        rest = np.array([p["rest_roll"], p["rest_pitch"], p["rest_yaw"]]) - self.rest_pose
        self.plans.append(_Tap(kind, terminal, t0, (start, end), p, rest))
        device = DeviceKind.RING if kind is GestureKind.RING_TAP else DeviceKind.WATCH
        self.events.append(NfcContactEvent(t0, DEVICE_LABELS[device], terminal))
        self.cursor = end

    def knock(self, kind: GestureKind):
        rng = self.rng
        prof = self.profile
        p = _jitter(prof.knock, KNOCK_PARAMS, rng, self.scale, self.drift, "knock")
        period = KNOCK_PERIOD[kind] * p["cadence"]
        count = prof.knock_count(kind)
        tb = self.cursor + 1.0
        te = tb + count * period
        if kind is GestureKind.SECRET_KNOCK:
            offsets = _secret_hits(prof, count, period, rng, self.scale)
        else:
            offsets = (np.arange(count) + 0.5) * period
        hits = tb + offsets
        forces = p["force"] * np.clip(1.0 + 0.1 * self.scale * rng.standard_normal(count), 0.3, None)
        slot = (self.cursor, te + 0.7)
        self.plans.append(_Knock(kind, (tb, te), hits, forces, slot, p, period))
        self.events += [ButtonEvent(tb, "Start", kind.value), ButtonEvent(te, "End")]
        self.cursor = te + 1.0

    def render(self, spec: StudySpec, rng_noise) -> List[SensorStream]:
        duration = self.cursor + 0.5
        streams = []
        for device, rate in ((DeviceKind.RING, spec.ring_rate_hz), (DeviceKind.WATCH, spec.watch_rate_hz)):
            t = np.arange(int(math.floor(duration * rate)) + 1) / rate
            streams += self._wearable(device, t, rate, rng_noise)
        if any(isinstance(p, _Knock) for p in self.plans):
            rate = spec.door_rate_hz
            t = np.arange(int(math.floor(duration * rate)) + 1) / rate
            streams += self._door(t, rate, rng_noise)
        return streams

    def _sum(self, t, what, width, **kw):
        out = np.zeros((len(t), width)) if width > 1 else np.zeros(len(t))
        for plan in self.plans:
            lo, hi = np.searchsorted(t, plan.slot[0]), np.searchsorted(t, plan.slot[1], side="right")
            if hi > lo:
                val = getattr(plan, what)(t[lo:hi], **kw)
                out[lo:hi] += val
        return out

    def _rotation(self, device, t):
        euler = self.rest_pose + self._sum(t, "euler", 3)
        rot = Rotation.from_euler("xyz", euler)
        if device is DeviceKind.RING:
            finger = self.profile.taps[GestureKind.RING_TAP]["finger"]
            rot = rot * Rotation.from_euler("y", finger + self._sum(t, "finger", 1))
        return rot

    def _wearable(self, device, t, rate, rng) -> List[SensorStream]:
        h = 1e-3
        rot = self._rotation(device, t)
        omega = (self._rotation(device, t - h).inv() * self._rotation(device, t + h)).as_rotvec() / (2 * h)
        gain = 1.0 if device is DeviceKind.RING else 0.5
        a_world = self._sum(t, "acc", 3, impact_gain=gain)
        inv = rot.inv()
        lin = inv.apply(a_world)
        acc = inv.apply(a_world + np.array([0.0, 0.0, GRAVITY]))
        quat = rot.as_quat(canonical=True)
        noise = self.profile.noise
        values = {
            SensorKind.ACCELEROMETER: acc + noise[SensorKind.ACCELEROMETER] * rng.standard_normal(acc.shape),
            SensorKind.GYROSCOPE: omega + noise[SensorKind.GYROSCOPE] * rng.standard_normal(omega.shape),
            SensorKind.LINEAR_ACCELEROMETER: lin + noise[SensorKind.LINEAR_ACCELEROMETER] * rng.standard_normal(lin.shape),
            SensorKind.GRV: quat + noise[SensorKind.GRV] * rng.standard_normal(quat.shape),
        }
        q = values[SensorKind.GRV]
        values[SensorKind.GRV] = q / np.linalg.norm(q, axis=1, keepdims=True)
        dev = DeviceId(device, DEVICE_LABELS[device])
        return [SensorStream(dev, s, rate, t, values[s]) for s in DEVICE_SENSORS[device]]

    def _door(self, t, rate, rng) -> List[SensorStream]:
        sig = np.zeros(len(t))
        for plan in self.plans:
            if isinstance(plan, _Knock):
                lo, hi = np.searchsorted(t, plan.slot[0]), np.searchsorted(t, plan.slot[1], side="right")
                sig[lo:hi] += plan.door(t[lo:hi])
        acc = np.column_stack([sig, 0.25 * np.roll(sig, 1), GRAVITY + 0.1 * sig])
        gyr = np.column_stack([0.02 * sig, 0.05 * sig, 0.01 * sig])
        dev = DeviceId(DeviceKind.DOOR, DEVICE_LABELS[DeviceKind.DOOR])
        return [
            SensorStream(dev, SensorKind.ACCELEROMETER, rate, t, acc + DOOR_NOISE[SensorKind.ACCELEROMETER] * rng.standard_normal(acc.shape)),
            SensorStream(dev, SensorKind.GYROSCOPE, rate, t, gyr + DOOR_NOISE[SensorKind.GYROSCOPE] * rng.standard_normal(gyr.shape)),
        ]


def _manifest(profile_user: str, session: int, arm: Arm, streams, kind="genuine", victim=None,
              base_dir=Path(".")) -> SessionManifest:
    refs = tuple(
        StreamRef(f"{s.device.label}_{s.sensor.code.lower()}.txt", s.device.label, s.sensor, s.rate_hz)
        for s in streams
    )
    devices = {s.device.label: s.device.kind for s in streams}
    offsets = {label: CLOCK_OFFSETS[label] for label in devices}
    return SessionManifest(profile_user, session, arm, devices, refs, "events.txt", offsets, 0.0, kind, victim, base_dir)


def render_session(spec: StudySpec, profile: UserProfile, index: int, session: int) -> Recording:
    """One genuine session: every tap kind on every terminal, then the knocks."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 2, index, session]))
    tl = _Timeline(profile, rng, profile.drift.get(session))
    for terminal in TERMINALS:
        for kind in (GestureKind.RING_TAP, GestureKind.WATCH_TAP):
            for _ in range(spec.taps_per_terminal):
                tl.tap(kind, terminal)
    for kind in (GestureKind.KNOCK3, GestureKind.KNOCK5, GestureKind.SECRET_KNOCK):
        for _ in range(spec.knocks_per_kind):
            tl.knock(kind)
    streams = tl.render(spec, rng)
    return Recording(_manifest(profile.user, session, profile.arm, streams), streams, tl.events)


def attack_pairs(spec: StudySpec) -> List[Tuple[str, str]]:
    """(attacker, victim) pairs: each victim is attacked by the next k users, cyclically."""
    users = spec.users
    n = len(users)
    return [(users[(v + j) % n], users[v]) for v in range(n) for j in range(1, spec.attack_group + 1)]


def render_impersonation(spec: StudySpec, profiles: Sequence[UserProfile], attacker: str, victim: str,
                         fidelity: float) -> Recording:
    if attacker == victim:
        raise SynthError(f"user {attacker} cannot impersonate themselves")
    by_name = {p.user: (i, p) for i, p in enumerate(profiles)}
    for who in (attacker, victim):
        if who not in by_name:
            raise SynthError(f"unknown user {who}")
    ia, pa = by_name[attacker]
    iv, pv = by_name[victim]
    mixed = blend_profiles(pa, pv, fidelity)
    # one stream of randomness per pair, independent of the fidelity
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 3, ia, iv]))
    tl = _Timeline(mixed, rng, pa.drift.get(2), jitter_scale=IMPERSONATION_JITTER)
    for kind in ATTACK_KINDS:
        for _ in range(spec.attempts):
            if kind.is_tap:
                for terminal in ATTACK_TERMINALS:
                    tl.tap(kind, terminal)
            else:
                tl.knock(kind)
    streams = tl.render(spec, rng)
    man = _manifest(attacker, 2, pa.arm, streams, "impersonation", victim)
    return Recording(man, streams, tl.events)


def synthesize(spec: StudySpec, with_impersonations: bool = True) -> List[Recording]:
    profiles = make_profiles(spec)
    recs = [render_session(spec, p, i, s) for i, p in enumerate(profiles) for s in (1, 2)]
    if with_impersonations and spec.fidelity is not None:
        recs += [render_impersonation(spec, profiles, a, v, spec.fidelity) for a, v in attack_pairs(spec)]
    return recs


def synthetic_study(spec: StudySpec, ring_rate: Optional[float] = 50.0, resample_mode: str = "interp") -> Study:
    """The study in memory, as if generated and loaded back."""
    return Study(synthesize(spec), ring_rate, resample_mode, name=f"synth-{spec.seed}")


def generate_impersonations(spec: StudySpec, victims: Sequence[str], attackers: Sequence[str], fidelity: float,
                            window: WindowSpec = WindowSpec(2.5, 0.0), ring_rate: Optional[float] = 50.0,
                            kinds: Sequence[GestureKind] = ATTACK_KINDS) -> List[GestureSegment]:
    """Impersonation segments of every attacker against every victim."""
    overlap = set(victims) & set(attackers)
    if overlap:
        raise SynthError(f"users on both sides of the attack: {sorted(overlap)}")
    profiles = make_profiles(spec)
    study = Study([render_impersonation(spec, profiles, a, v, fidelity) for v in victims for a in attackers],
                  ring_rate)
    segs: List[GestureSegment] = []
    for rec in study.recordings:
        for kind in kinds:
            segs += recording_segments(rec, kind, window if kind.is_tap else None)
    return segs


def _write_recording(rec: Recording, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    m = rec.manifest
    by_key = {(s.device.label, s.sensor): s for s in rec.streams}
    for ref in m.streams:
        stream = by_key[(ref.device, ref.sensor)]
        # files carry device clock time; the manifest offset maps it back
        write_stream_file(directory / ref.file, stream.shifted(m.clock_offsets.get(ref.device, 0.0)))
    write_events(directory / m.events, rec.events)
    write_manifest(directory / "manifest.json", m)


def generate_study(spec: StudySpec, out_dir) -> Path:
    """Write the study under `out_dir` and return the path of its summary file."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SynthError(f"cannot create {out}: {exc}") from None
    recs = synthesize(spec)
    counts: Dict[str, int] = {}
    for rec in recs:
        m = rec.manifest
        sub = out / "imp" / f"{m.user}_{m.victim}" if m.is_impersonation else out / m.user / f"s{m.session}"
        _write_recording(rec, sub)
        for ev in rec.events:
            key = "nfc_events" if isinstance(ev, NfcContactEvent) else "button_events"
            counts[key] = counts.get(key, 0) + 1
    lines = [f"{k} = {v}" for k, v in asdict(spec).items()]
    lines += [f"sessions_written = {len(recs)}"] + [f"{k} = {v}" for k, v in sorted(counts.items())]
    summary = out / "study.summary"
    summary.write_text("# synthetic study\n" + "\n".join(lines) + "\n")
    return summary


def tree_digest(root) -> str:
    """SHA-256 over every file path and its bytes, in sorted order."""
    h = hashlib.sha256()
    root = Path(root)
    for p in sorted(x for x in root.rglob("*") if x.is_file()):
        h.update(str(p.relative_to(root)).encode() + b"\0" + p.read_bytes())
    return h.hexdigest()
