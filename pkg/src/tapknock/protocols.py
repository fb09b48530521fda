"""Training/testing protocols, window and enrolment sweeps, wolf/lamb analysis.

Every protocol is a list of cells. A cell fixes the training rows (with
labels), the positive and negative test rows and, for attack runs, the
impersonation rows scored at the cell's EER threshold. Cells are evaluated
once per forest seed and results are kept in sorted (key, seed) order, so
the outcome does not depend on how the work is scheduled.

Session 1 trains and session 2 tests throughout. Each run emits an audit of
every gesture's role per cell and checks it before returning: a session-2
or impersonation gesture in a training set is a bug, not a result.
"""

from __future__ import annotations

import logging
import multiprocessing as mp
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import forest as rf
from .dataset import FeatureTable, Study
from .metrics import ScoreSet, eer, rate_curves
from .model import FIXED_TERMINALS, TERMINALS, GestureKind, TapKnockError, WindowSpec

log = logging.getLogger(__name__)

TOP_K = 5


class ProtocolError(TapKnockError, ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    n_seeds: int = 10
    seed: int = 0
    forest: rf.ForestConfig = rf.ForestConfig()
    jobs: int = 1
    lamb_threshold: float = 0.10
    wolf_threshold: float = 0.10

    def __post_init__(self):
        if self.n_seeds < 1:
            raise ProtocolError("n_seeds must be >= 1")
        if self.seed < 0:
            raise ProtocolError("seed must be non-negative")
        if self.jobs < 0:
            raise ProtocolError("jobs must be >= 0 (0 = all cores)")

    def forest_for(self, index: int) -> rf.ForestConfig:
        return replace(self.forest, seed=self.seed + index)


@dataclass(frozen=True)
class Cell:
    key: Tuple[str, ...]
    train: np.ndarray
    labels: np.ndarray
    test_pos: np.ndarray
    test_neg: np.ndarray
    attack: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    held_out: str = ""  # terminal withheld from training, terminal-agnostic only

    @property
    def label(self) -> str:
        return "/".join(self.key)


@dataclass(frozen=True)
class CellResult:
    key: Tuple[str, ...]
    seed: int
    eer: float
    theta: float
    n_pos: int
    n_neg: int
    far: np.ndarray  # on the report grid
    frr: np.ndarray
    obs_far: Optional[float] = None
    top_features: Tuple[str, ...] = ()


@dataclass(frozen=True)
class AuditRow:
    cell: str
    gesture_id: str
    role: str  # train+, train-, test+, test-, attack, excluded
    session: int
    terminal: str
    impostor: bool
    held_out: str = ""


@dataclass
class EvalReport:
    protocol: str
    key_names: Tuple[str, ...]
    params: Dict[str, str]
    cells: List[CellResult]
    audit: List[AuditRow]
    grid: np.ndarray

    # ---- aggregates, all recomputed from the cell results

    def _group(self, pos: int) -> Dict[str, List[CellResult]]:
        out: Dict[str, List[CellResult]] = defaultdict(list)
        for c in self.cells:
            out[c.key[pos]].append(c)
        return dict(sorted(out.items()))

    @property
    def seeds(self) -> List[int]:
        return sorted({c.seed for c in self.cells})

    def per_seed_eer(self) -> np.ndarray:
        by_seed = defaultdict(list)
        for c in self.cells:
            by_seed[c.seed].append(c.eer)
        return np.array([np.mean(by_seed[s]) for s in sorted(by_seed)])

    def per_user(self) -> Dict[str, Dict[str, object]]:
        """Per first-key entry (user or victim): mean EER, mean threshold, mean curves."""
        out = {}
        for user, cells in self._group(0).items():
            out[user] = {
                "eer": float(np.mean([c.eer for c in cells])),
                "theta": float(np.mean([c.theta for c in cells])),
                "far": np.mean([c.far for c in cells], axis=0),
                "frr": np.mean([c.frr for c in cells], axis=0),
                "cells": len(cells),
            }
        return out

    @property
    def mean_eer(self) -> float:
        return float(np.mean([v["eer"] for v in self.per_user().values()]))

    def per_group(self, pos: int = 1) -> Dict[str, float]:
        return {k: float(np.mean([c.eer for c in v])) for k, v in self._group(pos).items()}

    @property
    def is_attack(self) -> bool:
        return any(c.obs_far is not None for c in self.cells)

    def per_pair(self) -> Dict[Tuple[str, str], Tuple[float, float]]:
        """(victim, attacker) -> (base-FAR, observation-FAR), averaged over seeds."""
        acc = defaultdict(list)
        for c in self.cells:
            acc[(c.key[0], c.key[1])].append((c.eer, c.obs_far))
        return {k: (float(np.mean([a for a, _ in v])), float(np.mean([b for _, b in v])))
                for k, v in sorted(acc.items())}

    def per_victim(self) -> Dict[str, Tuple[float, float]]:
        acc = defaultdict(list)
        for (victim, _a), vals in self.per_pair().items():
            acc[victim].append(vals)
        return {v: (float(np.mean([b for b, _ in x])), float(np.mean([o for _, o in x]))) for v, x in acc.items()}

    def per_attacker(self) -> Dict[str, Tuple[float, float]]:
        """attacker -> (mean success FAR, mean base-FAR of their victims)."""
        acc = defaultdict(list)
        for (_v, attacker), vals in self.per_pair().items():
            acc[attacker].append(vals)
        return {a: (float(np.mean([o for _, o in x])), float(np.mean([b for b, _ in x])))
                for a, x in sorted(acc.items())}

    @property
    def mean_base_far(self) -> float:
        return float(np.mean([b for b, _ in self.per_victim().values()]))

    @property
    def mean_obs_far(self) -> float:
        return float(np.mean([o for _, o in self.per_victim().values()]))

    def importance_counts(self) -> List[Tuple[str, int]]:
        """How often each feature is among a classifier's top five."""
        counts = Counter(f for c in self.cells for f in c.top_features)
        return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


# ---------------------------------------------------------------------------
# cell evaluation

_SHARED: Dict[str, object] = {}


def _eval_task(task) -> CellResult:
    cell, seed_index = task
    X = _SHARED["X"]
    names = _SHARED["names"]
    cfg: EvalConfig = _SHARED["cfg"]
    grid = _SHARED["grid"]
    forest = rf.train(X[cell.train], cell.labels, cfg.forest_for(seed_index), names)
    pos = rf.score(forest, X[cell.test_pos])
    neg = rf.score(forest, X[cell.test_neg])
    scores = ScoreSet(pos, neg)
    e, theta = eer(scores)
    far, frr = rate_curves(scores, grid)
    obs = None
    if len(cell.attack):
        obs = float(np.mean(rf.score(forest, X[cell.attack]) >= theta))
    return CellResult(cell.key, seed_index, e, theta, len(pos), len(neg), far, frr, obs,
                      forest.top_features(TOP_K))


def _pool_init(shared):
    _SHARED.update(shared)


def _resolve_jobs(jobs: int) -> int:
    return (os.cpu_count() or 1) if jobs == 0 else jobs


def evaluate_cells(table: FeatureTable, tasks: Sequence[Tuple[Cell, int]], cfg: EvalConfig) -> List[CellResult]:
    grid = np.arange(cfg.forest.n_trees + 1) / cfg.forest.n_trees
    shared = {"X": table.X, "names": table.names, "cfg": cfg, "grid": grid}
    tasks = sorted(tasks, key=lambda t: (t[0].key, t[1]))
    jobs = min(_resolve_jobs(cfg.jobs), len(tasks))
    if jobs <= 1:
        _pool_init(shared)
        try:
            return [_eval_task(t) for t in tasks]
        finally:
            _SHARED.clear()
    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else mp.get_context()
    with ctx.Pool(jobs, initializer=_pool_init, initargs=(shared,)) as pool:
        return pool.map(_eval_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs)))


def _audit(table: FeatureTable, cells: Sequence[Cell]) -> List[AuditRow]:
    rows = []
    for cell in sorted(cells, key=lambda c: c.key):
        role = np.full(len(table), "excluded", dtype=object)
        role[cell.train[cell.labels == 1]] = "train+"
        role[cell.train[cell.labels == 0]] = "train-"
        role[cell.test_pos] = "test+"
        role[cell.test_neg] = "test-"
        role[cell.attack] = "attack"
        for i in range(len(table)):
            rows.append(AuditRow(cell.label, table.ids[i], role[i], int(table.sessions[i]),
                                 table.terminals[i], bool(table.impostor[i]), cell.held_out))
    return rows


def audit_violations(audit: Sequence[AuditRow]) -> List[str]:
    bad = []
    for r in audit:
        if not r.role.startswith("train"):
            continue
        if r.session != 1:
            bad.append(f"{r.cell}: session-{r.session} gesture {r.gesture_id} in training")
        if r.impostor:
            bad.append(f"{r.cell}: impersonation gesture {r.gesture_id} in training")
        if r.held_out and r.terminal == r.held_out:
            bad.append(f"{r.cell}: held-out terminal gesture {r.gesture_id} in training")
    return bad


def _run(protocol: str, key_names, params, table: FeatureTable, cells: List[Cell], cfg: EvalConfig,
         per_seed_cells: bool = False) -> EvalReport:
    if per_seed_cells:
        tasks = [(c, int(c.key[-1])) for c in cells]
    else:
        tasks = [(c, s) for c in cells for s in range(cfg.n_seeds)]
    audit = _audit(table, cells)
    bad = audit_violations(audit)
    if bad:
        raise ProtocolError(f"{protocol}: isolation violated: {bad[0]} ({len(bad)} total)")
    results = evaluate_cells(table, tasks, cfg)
    if per_seed_cells:
        results = [replace(r, key=r.key[:-1]) for r in results]
    grid = np.arange(cfg.forest.n_trees + 1) / cfg.forest.n_trees
    params = dict(params, n_seeds=str(cfg.n_seeds), seed=str(cfg.seed), n_trees=str(cfg.forest.n_trees))
    return EvalReport(protocol, tuple(key_names), params, results, audit, grid)


# ---------------------------------------------------------------------------
# protocol definitions


def _need_users(table: FeatureTable) -> List[str]:
    users = table.genuine_users
    if len(users) < 2:
        raise ProtocolError("need >= 2 users")
    return users


def _cell(key, table, train_mask, user, test_mask, attack=None, held_out="") -> Cell:
    train = np.flatnonzero(train_mask)
    labels = (table.users[train] == user).astype(np.int64)
    pos = np.flatnonzero(test_mask & (table.users == user))
    neg = np.flatnonzero(test_mask & (table.users != user))
    where = "/".join(key)
    if labels.sum() == 0:
        raise ProtocolError(f"{where}: no session-1 training gestures for user {user}")
    if labels.sum() == len(labels):
        raise ProtocolError(f"{where}: no negative training gestures")
    if len(pos) == 0:
        raise ProtocolError(f"{where}: no session-2 test gestures for user {user}")
    if len(neg) == 0:
        raise ProtocolError(f"{where}: no negative test gestures")
    att = np.zeros(0, np.int64) if attack is None else np.flatnonzero(attack)
    return Cell(tuple(key), train, labels, pos, neg, att, held_out)


def run_terminal_agnostic(table: FeatureTable, cfg: EvalConfig = EvalConfig(),
                          terminals: Sequence[str] = FIXED_TERMINALS, params=None) -> EvalReport:
    """Leave one fixed terminal out: train on the other five, test on it."""
    users = _need_users(table)
    genuine = ~table.impostor & np.isin(table.terminals, list(terminals))
    s1 = genuine & (table.sessions == 1)
    s2 = genuine & (table.sessions == 2)
    cells = []
    for user in users:
        for term in terminals:
            on = table.terminals == term
            cells.append(_cell((user, term), table, s1 & ~on, user, s2 & on, held_out=term))
    return _run("terminal-agnostic", ("user", "terminal"), params or {}, table, cells, cfg)


def run_terminal_specific(table: FeatureTable, cfg: EvalConfig = EvalConfig(),
                          terminals: Sequence[str] = TERMINALS, params=None) -> EvalReport:
    """Train and test on gestures from one terminal at a time."""
    users = _need_users(table)
    genuine = ~table.impostor
    cells = []
    for term in terminals:
        on = genuine & (table.terminals == term)
        if not on.any():
            raise ProtocolError(f"no gestures on terminal {term}")
        for user in users:
            cells.append(_cell((user, term), table, on & (table.sessions == 1), user, on & (table.sessions == 2)))
    return _run("terminal-specific", ("user", "terminal"), params or {}, table, cells, cfg)


def run_access_control(table: FeatureTable, cfg: EvalConfig = EvalConfig(), params=None) -> EvalReport:
    """One model per user: session 1 trains, session 2 tests."""
    users = _need_users(table)
    genuine = ~table.impostor
    cells = [_cell((u,), table, genuine & (table.sessions == 1), u, genuine & (table.sessions == 2))
             for u in users]
    return _run("access-control", ("user",), params or {}, table, cells, cfg)


def run_terminal_known(table: FeatureTable, cfg: EvalConfig = EvalConfig(),
                       pairs: Optional[Sequence[Tuple[str, str]]] = None, params=None) -> EvalReport:
    """Observation attack.

    Each (victim, attacker) model trains on session-1 gestures from every
    terminal, leaving out all of the attacker's gestures. Its threshold is
    set at the EER against the other users' session-2 gestures (the
    base-FAR); the attacker's impersonations are then scored at that
    threshold (the observation-FAR). `pairs` holds (attacker, victim).
    """
    _need_users(table)
    if not table.impostor.any():
        raise ProtocolError("no impersonation segments")
    if pairs is None:
        found = sorted({(a, v) for a, v, imp in zip(table.attackers, table.victims, table.impostor) if imp})
    else:
        found = list(pairs)
    genuine = ~table.impostor
    cells = []
    for attacker, victim in sorted(found, key=lambda p: (p[1], p[0])):
        if attacker == victim:
            raise ProtocolError(f"attacker {attacker} equals victim")
        attack = table.impostor & (table.attackers == attacker) & (table.victims == victim)
        if not attack.any():
            raise ProtocolError(f"attacker {attacker} has no impersonation samples against {victim}")
        keep = genuine & (table.users != attacker)
        cells.append(_cell((victim, attacker), table, keep & (table.sessions == 1), victim,
                           keep & (table.sessions == 2), attack))
    return _run("terminal-known", ("victim", "attacker"), params or {}, table, cells, cfg)


def run_protocol(name: str, table: FeatureTable, cfg: EvalConfig = EvalConfig(), params=None) -> EvalReport:
    runners = {
        "terminal-agnostic": run_terminal_agnostic,
        "terminal-specific": run_terminal_specific,
        "access-control": run_access_control,
        "terminal-known": run_terminal_known,
    }
    if name not in runners:
        raise ProtocolError(f"unknown protocol {name!r}")
    return runners[name](table, cfg, params=params)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepGrid:
    sizes: np.ndarray
    offsets: np.ndarray
    eer: np.ndarray  # (len(sizes), len(offsets)); NaN where the window is invalid
    valid: np.ndarray
    reports: Dict[Tuple[float, float], EvalReport] = field(default_factory=dict, repr=False)

    def best(self) -> Tuple[float, float, float]:
        i, j = np.unravel_index(np.nanargmin(self.eer), self.eer.shape)
        return float(self.sizes[i]), float(self.offsets[j]), float(self.eer[i, j])


def sweep_windows(study: Study, kind: GestureKind, sizes: Sequence[float], offsets: Sequence[float],
                  sources=None, cfg: EvalConfig = EvalConfig()) -> SweepGrid:
    """Terminal-agnostic mean EER for every valid (size, offset) pair."""
    if not kind.is_tap:
        raise ProtocolError("window sweeps apply to tap gestures")
    sizes = np.round(np.asarray(sizes, dtype=np.float64), 9)
    offsets = np.round(np.asarray(offsets, dtype=np.float64), 9)
    out = np.full((len(sizes), len(offsets)), np.nan)
    valid = np.zeros_like(out, dtype=bool)
    reports = {}
    for i, s in enumerate(sizes):
        for j, o in enumerate(offsets):
            if not WindowSpec.is_valid(s, o):
                log.info("skipping invalid window s=%g o=%g", s, o)
                continue
            table = study.table(kind, WindowSpec(float(s), float(o)), sources)
            rep = run_terminal_agnostic(table, cfg, params={"window": f"{s:g}", "offset": f"{o:g}"})
            out[i, j] = rep.mean_eer
            valid[i, j] = True
            reports[(float(s), float(o))] = rep
    return SweepGrid(sizes, offsets, out, valid, reports)


@dataclass
class EnrolmentCurve:
    counts: Tuple[int, ...]
    eer: np.ndarray
    reports: Dict[int, EvalReport] = field(default_factory=dict, repr=False)


def _spread_pick(rows: np.ndarray, terminals: np.ndarray, count: int, rng) -> np.ndarray:
    """`count` rows drawn round-robin over terminals, random within each."""
    groups = [rng.permutation(rows[terminals[rows] == t]) for t in sorted(set(terminals[rows]))]
    picked = []
    depth = 0
    while len(picked) < count:
        for g in groups:
            if depth < len(g) and len(picked) < count:
                picked.append(g[depth])
        depth += 1
    return np.sort(np.array(picked, dtype=np.int64))


def enrolment_sweep(table: FeatureTable, counts: Sequence[int], protocol: str = "payment",
                    cfg: EvalConfig = EvalConfig()) -> EnrolmentCurve:
    """Mean EER against the number of positive training gestures.

    `payment` draws the user's taps evenly across the six fixed terminals;
    `access-control` draws knocks uniformly. Negatives are every other
    user's session-1 gestures. The draw depends only on (seed, count, user).
    """
    if protocol not in ("payment", "access-control"):
        raise ProtocolError(f"unknown enrolment protocol {protocol!r}")
    users = _need_users(table)
    genuine = ~table.impostor
    if protocol == "payment":
        genuine &= np.isin(table.terminals, list(FIXED_TERMINALS))
    s1 = genuine & (table.sessions == 1)
    s2 = genuine & (table.sessions == 2)
    curve, reports = [], {}
    for count in counts:
        if count < 1:
            raise ProtocolError("training counts must be positive")
        cells = []
        for ui, user in enumerate(users):
            own = np.flatnonzero(s1 & (table.users == user))
            if count > len(own):
                raise ProtocolError(f"user {user} has {len(own)} training gestures, {count} requested")
            for s in range(cfg.n_seeds):
                rng = np.random.default_rng(np.random.SeedSequence([cfg.seed + s, count, ui]))
                if protocol == "payment":
                    chosen = _spread_pick(own, table.terminals, count, rng)
                else:
                    chosen = np.sort(rng.choice(own, size=count, replace=False))
                mask = s1 & (table.users != user)
                mask[chosen] = True
                cells.append(_cell((user, str(count), str(s)), table, mask, user, s2))
        rep = _run(f"enrolment-{protocol}", ("user", "count"), {"count": str(count)}, table, cells, cfg,
                   per_seed_cells=True)
        reports[count] = rep
        curve.append(rep.mean_eer)
    return EnrolmentCurve(tuple(counts), np.array(curve), reports)


# ---------------------------------------------------------------------------
# wolves and lambs


@dataclass(frozen=True)
class VictimRow:
    victim: str
    base_far: float
    obs_far: float
    delta: float
    lamb: bool


@dataclass(frozen=True)
class AttackerRow:
    attacker: str
    success: float
    base_far: float
    delta: float
    wolf: bool


@dataclass(frozen=True)
class WolfLamb:
    victims: Tuple[VictimRow, ...]
    attackers: Tuple[AttackerRow, ...]
    lamb_threshold: float
    wolf_threshold: float

    @property
    def lambs(self) -> List[str]:
        return [v.victim for v in self.victims if v.lamb]

    @property
    def wolves(self) -> List[str]:
        return [a.attacker for a in self.attackers if a.wolf]


def wolf_lamb_report(report: EvalReport, lamb_threshold: float = 0.10,
                     wolf_threshold: float = 0.10) -> WolfLamb:
    """Victims ranked by observation-FAR minus base-FAR, attackers by mean success.

    A victim is a lamb when the delta exceeds `lamb_threshold`; an attacker
    is a wolf when their mean success exceeds their victims' mean base-FAR
    by more than `wolf_threshold`. Both thresholds are reporting defaults.
    """
    if not report.is_attack:
        raise ProtocolError("wolf/lamb analysis needs an attack report")
    victims = [VictimRow(v, b, o, o - b, (o - b) > lamb_threshold) for v, (b, o) in report.per_victim().items()]
    victims.sort(key=lambda r: (-r.delta, r.victim))
    attackers = [AttackerRow(a, s, b, s - b, (s - b) > wolf_threshold) for a, (s, b) in report.per_attacker().items()]
    attackers.sort(key=lambda r: (-r.success, r.attacker))
    return WolfLamb(tuple(victims), tuple(attackers), lamb_threshold, wolf_threshold)
