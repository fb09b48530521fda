"""False acceptance / rejection rates and the equal error rate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .model import TapKnockError


class MetricError(TapKnockError, ValueError):
    pass


@dataclass(frozen=True)
class ScoreSet:
    positives: np.ndarray  # legitimate-user scores
    negatives: np.ndarray  # adversary scores

    def __post_init__(self):
        pos = np.asarray(self.positives, dtype=np.float64).ravel()
        neg = np.asarray(self.negatives, dtype=np.float64).ravel()
        if len(pos) == 0 or len(neg) == 0:
            raise MetricError("empty class list")
        for arr in (pos, neg):
            if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
                raise MetricError("scores must lie in [0, 1]")
        object.__setattr__(self, "positives", pos)
        object.__setattr__(self, "negatives", neg)


def _scoreset(scores) -> ScoreSet:
    return scores if isinstance(scores, ScoreSet) else ScoreSet(*scores)


def far_frr(scores, theta: float) -> Tuple[float, float]:
    """FAR = share of negatives scoring >= theta; FRR = share of positives below it."""
    s = _scoreset(scores)
    return float(np.mean(s.negatives >= theta)), float(np.mean(s.positives < theta))


def rate_curves(scores, thetas) -> Tuple[np.ndarray, np.ndarray]:
    s = _scoreset(scores)
    thetas = np.asarray(thetas, dtype=np.float64)
    neg = np.sort(s.negatives)
    pos = np.sort(s.positives)
    far = (len(neg) - np.searchsorted(neg, thetas, side="left")) / len(neg)
    frr = np.searchsorted(pos, thetas, side="left") / len(pos)
    return far, frr


def candidate_thresholds(scores) -> np.ndarray:
    """Distinct observed scores plus one point above everything."""
    s = _scoreset(scores)
    values = np.unique(np.concatenate([s.positives, s.negatives]))
    top = np.nextafter(max(1.0, values[-1]), np.inf)
    return np.append(values, top)


def eer(scores) -> Tuple[float, float]:
    """Equal error rate and the threshold that attains it.

    Thresholds are swept over :func:`candidate_thresholds` in ascending
    order. At the first threshold minimising |FAR - FRR| the EER is
    (FAR + FRR) / 2, which is the exact crossing value when the step curves
    meet.
    """
    thetas = candidate_thresholds(scores)
    far, frr = rate_curves(scores, thetas)
    i = int(np.argmin(np.abs(far - frr)))
    return float((far[i] + frr[i]) / 2.0), float(thetas[i])


def granularity_bound(scores) -> float:
    """Largest possible |FAR - FRR| at the EER threshold for tie-free scores."""
    s = _scoreset(scores)
    return 1.0 / min(len(s.positives), len(s.negatives))
