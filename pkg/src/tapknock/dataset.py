"""Studies (collections of session recordings) and feature tables."""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .features import ALL_SENSORS, FeatureError, extract
from .ingest import (
    ButtonEvent,
    Event,
    NfcContactEvent,
    SessionManifest,
    load_manifest,
    load_session,
    pair_button_bounds,
    resample,
)
from .model import (
    DEVICE_ORDER,
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
from .segment import SegmentError, extract_knock_segment, extract_tap_segment, index_streams

log = logging.getLogger(__name__)

TAP_DEVICES = (DeviceKind.RING, DeviceKind.WATCH)
DEVICE_TAPS = {DeviceKind.RING: GestureKind.RING_TAP, DeviceKind.WATCH: GestureKind.WATCH_TAP}


class DatasetError(TapKnockError, ValueError):
    pass


def parse_sources(text, kind: GestureKind) -> Tuple[DeviceKind, ...]:
    """'ring', 'ring,watch', 'combined', ... -> devices in door/ring/watch order."""
    if not isinstance(text, str):
        devices = {DeviceKind(d) if not isinstance(d, DeviceKind) else d for d in text}
    else:
        devices = set()
        for token in text.lower().replace("+", ",").split(","):
            token = token.strip()
            if token == "combined":
                devices |= set(TAP_DEVICES if kind.is_tap else DEVICE_ORDER)
            elif token in ("door", "ring", "watch"):
                devices.add(DeviceKind(token.capitalize()))
            else:
                raise DatasetError(f"unknown source {token!r}")
    if kind.is_tap and DeviceKind.DOOR in devices:
        raise DatasetError("door data exists only for knock gestures")
    if not devices:
        raise DatasetError("no sources given")
    return tuple(d for d in DEVICE_ORDER if d in devices)


@dataclass
class Recording:
    manifest: SessionManifest
    streams: List[SensorStream]
    events: List[Event]

    @property
    def label(self) -> str:
        m = self.manifest
        if m.is_impersonation:
            return f"imp/{m.user}>{m.victim}"
        return f"{m.user}/s{m.session}"


@dataclass
class FeatureTable:
    """Feature rows plus per-row metadata arrays for protocol selection."""

    X: np.ndarray
    names: Tuple[str, ...]
    metas: Tuple[GestureMeta, ...]

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64).reshape(len(self.metas), len(self.names))
        m = self.metas
        self.ids = np.array([x.gesture_id for x in m], dtype=object)
        self.users = np.array([x.user for x in m], dtype=object)
        self.sessions = np.array([x.session for x in m], dtype=np.int64)
        self.terminals = np.array([x.terminal or "" for x in m], dtype=object)
        self.kinds = np.array([x.gesture_kind.value for x in m], dtype=object)
        self.impostor = np.array([x.is_impersonation for x in m], dtype=bool)
        self.attackers = np.array([x.impersonation.attacker if x.impersonation else "" for x in m], dtype=object)
        self.victims = np.array([x.impersonation.victim if x.impersonation else "" for x in m], dtype=object)
        if len(set(self.ids)) != len(self.ids):
            raise DatasetError("duplicate gesture ids in feature table")

    def __len__(self) -> int:
        return len(self.metas)

    @property
    def genuine_users(self) -> List[str]:
        return sorted(set(self.users[~self.impostor]))

    def subset(self, mask) -> "FeatureTable":
        idx = np.flatnonzero(mask)
        return FeatureTable(self.X[idx], self.names, tuple(self.metas[i] for i in idx))

    def concat(self, other: "FeatureTable") -> "FeatureTable":
        if other.names != self.names:
            raise DatasetError("cannot join tables with different schemas")
        return FeatureTable(np.vstack([self.X, other.X]), self.names, self.metas + other.metas)

    META_COLUMNS = ("gesture_id", "user", "session", "gesture", "terminal", "arm", "attacker", "victim", "attempt")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(self.META_COLUMNS) + list(self.names))
            for meta, row in zip(self.metas, self.X):
                imp = meta.impersonation
                w.writerow(
                    [meta.gesture_id, meta.user, meta.session, meta.gesture_kind.value, meta.terminal or "",
                     meta.arm.value, imp.attacker if imp else "", imp.victim if imp else "",
                     imp.attempt if imp else ""]
                    + [repr(float(v)) for v in row]
                )

    @classmethod
    def read_csv(cls, path) -> "FeatureTable":
        from .model import Arm

        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            k = len(cls.META_COLUMNS)
            if tuple(header[:k]) != cls.META_COLUMNS:
                raise DatasetError(f"{path}: unexpected header")
            metas, rows = [], []
            for rec in r:
                gid, user, sess, kind, term, arm, att, vic, att_n = rec[:k]
                imp = Impersonation(att, vic, int(att_n)) if att else None
                metas.append(GestureMeta(user, int(sess), GestureKind(kind), term or None, Arm(arm), imp, gid))
                rows.append([float(v) for v in rec[k:]])
        return cls(np.array(rows).reshape(len(metas), len(header) - k), tuple(header[k:]), tuple(metas))


class Study:
    """All recordings of a study, with ring streams brought to a common rate.

    `ring_rate=None` keeps the ring's native rate.
    """

    def __init__(self, recordings: Sequence[Recording], ring_rate: Optional[float] = 50.0,
                 resample_mode: str = "interp", name: str = ""):
        self.name = name
        self.ring_rate = ring_rate
        self.resample_mode = resample_mode
        self.recordings: List[Recording] = []
        for rec in recordings:
            streams = [self._rate_fix(s) for s in rec.streams]
            self.recordings.append(Recording(rec.manifest, streams, rec.events))
        self._tables: Dict[tuple, FeatureTable] = {}
        self.dropped: List[str] = []

    def _rate_fix(self, s: SensorStream) -> SensorStream:
        if (self.ring_rate and s.device.kind is DeviceKind.RING
                and s.rate_hz > self.ring_rate * (1 + 1e-9)):
            return resample(s, self.ring_rate, self.resample_mode)
        return s

    @classmethod
    def load(cls, root, ring_rate: Optional[float] = 50.0, resample_mode: str = "interp") -> "Study":
        root = Path(root)
        paths = sorted(root.rglob("manifest.json"))
        if not paths:
            raise DatasetError(f"no session manifests under {root}")
        recs = []
        for p in paths:
            manifest = load_manifest(p)
            streams, events = load_session(manifest)
            recs.append(Recording(manifest, streams, events))
        return cls(recs, ring_rate, resample_mode, name=str(root))

    @property
    def users(self) -> List[str]:
        return sorted({r.manifest.user for r in self.recordings if not r.manifest.is_impersonation})

    @property
    def has_impersonations(self) -> bool:
        return any(r.manifest.is_impersonation for r in self.recordings)

    def segments(self, kind: GestureKind, window: Optional[WindowSpec] = None,
                 devices: Optional[Sequence[DeviceKind]] = None,
                 impersonations: bool = True) -> List[GestureSegment]:
        out: List[GestureSegment] = []
        for rec in self.recordings:
            if rec.manifest.is_impersonation and not impersonations:
                continue
            out += recording_segments(rec, kind, window, devices, self.dropped)
        return out

    def table(self, kind: GestureKind, window: Optional[WindowSpec] = None,
              sources: Optional[Sequence[DeviceKind]] = None,
              sensor_mask: Iterable[SensorKind] = ALL_SENSORS) -> FeatureTable:
        sources = tuple(sources) if sources else (TAP_DEVICES if kind.is_tap else DEVICE_ORDER)
        mask = frozenset(sensor_mask)
        if kind.is_tap and window is None:
            raise DatasetError("tap gestures need a window spec")
        key = (kind, window if kind.is_tap else None, sources, mask)
        if key not in self._tables:
            segs = self.segments(kind, window, sources)
            self._tables[key] = table_from_segments(segs, sources, mask)
        return self._tables[key]


def _gesture_id(meta: GestureMeta, counter: int, victim: Optional[str]) -> str:
    term = f"/T{meta.terminal}" if meta.terminal else ""
    if victim is not None:
        return f"imp/{meta.user}>{victim}/{meta.gesture_kind.slug}{term}/{counter:03d}"
    return f"{meta.user}/s{meta.session}/{meta.gesture_kind.slug}{term}/{counter:03d}"


def recording_segments(rec: Recording, kind: GestureKind, window: Optional[WindowSpec] = None,
                       devices: Optional[Sequence[DeviceKind]] = None,
                       dropped: Optional[List[str]] = None) -> List[GestureSegment]:
    """Cut every gesture of one kind out of a recording.

    Tap gestures whose window starts before the recording are dropped and
    logged; they are never padded.
    """
    m = rec.manifest
    index = index_streams(rec.streams)
    victim = m.victim if m.is_impersonation else None
    counters: Dict[tuple, int] = defaultdict(int)
    out: List[GestureSegment] = []
    if kind.is_tap:
        if window is None:
            raise DatasetError("tap gestures need a window spec")
        devices = tuple(devices) if devices else TAP_DEVICES
        for ev in rec.events:
            if not isinstance(ev, NfcContactEvent):
                continue
            if DEVICE_TAPS.get(m.device_id(ev.device_name).kind) is not kind:
                continue
            counters[ev.terminal] += 1
            n = counters[ev.terminal]
            imp = Impersonation(m.user, victim, n) if victim is not None else None
            meta = GestureMeta(m.user, m.session, kind, ev.terminal, m.arm, imp)
            meta = GestureMeta(m.user, m.session, kind, ev.terminal, m.arm, imp, _gesture_id(meta, n, victim))
            try:
                out.append(extract_tap_segment(index, ev, window, meta, devices))
            except SegmentError as exc:
                log.info("dropping %s: %s", meta.gesture_id, exc)
                if dropped is not None:
                    dropped.append(f"{meta.gesture_id}: {exc}")
        return out
    devices = tuple(devices) if devices else DEVICE_ORDER
    buttons = [e for e in rec.events if isinstance(e, ButtonEvent)]
    labels = [b.label for b in buttons if b.role == "Start"]
    for bound, label in zip(pair_button_bounds(buttons), labels):
        if label is None:
            raise DatasetError(f"{rec.label}: knock Start event without gesture label")
        if GestureKind.parse(label) is not kind:
            continue
        counters[None] += 1
        n = counters[None]
        imp = Impersonation(m.user, victim, n) if victim is not None else None
        meta = GestureMeta(m.user, m.session, kind, None, m.arm, imp)
        meta = GestureMeta(m.user, m.session, kind, None, m.arm, imp, _gesture_id(meta, n, victim))
        try:
            out.append(extract_knock_segment(index, bound, meta, devices))
        except SegmentError as exc:
            log.info("dropping %s: %s", meta.gesture_id, exc)
            if dropped is not None:
                dropped.append(f"{meta.gesture_id}: {exc}")
    return out


def table_from_segments(segments: Sequence[GestureSegment], sources: Sequence[DeviceKind],
                        sensor_mask: Iterable[SensorKind] = ALL_SENSORS) -> FeatureTable:
    mask = frozenset(sensor_mask)
    rows, metas, names = [], [], None
    for seg in segments:
        try:
            fv = extract(seg, sources, mask)
        except FeatureError as exc:
            raise FeatureError(f"{seg.meta.gesture_id}: {exc}") from None
        if names is None:
            names = fv.names
        rows.append(fv.values)
        metas.append(seg.meta)
    if names is None:
        raise DatasetError("no gestures to tabulate")
    return FeatureTable(np.array(rows), names, tuple(metas))
