"""Subjective-study score processing: session partitioning, per-subject
Z-scores rescaled to [0, 100], correlation-based subject rejection, and MOS
aggregation over the remaining subjects.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .errors import ConfigurationError, DataError, PreconditionError

SCORE_MIN, SCORE_MAX = 1, 5
REJECTION_THRESHOLD = 0.25

# ratings of one session: subject_id -> {image_id -> raw score}
SessionRatings = Mapping[str, Mapping[str, float]]


def partition_sessions(
    corpus: Sequence[str], n_sessions: int, seed: int = 0
) -> list[list[str]]:
    """Random disjoint partition into sessions with sizes equal up to 1."""
    if n_sessions <= 0:
        raise ConfigurationError("n_sessions must be positive")
    if len(corpus) < n_sessions:
        raise ConfigurationError(
            f"cannot split {len(corpus)} images into {n_sessions} sessions"
        )
    items = list(corpus)
    random.Random(seed).shuffle(items)
    base, rem = divmod(len(items), n_sessions)
    sessions, start = [], 0
    for i in range(n_sessions):
        size = base + (1 if i < rem else 0)
        sessions.append(items[start : start + size])
        start += size
    return sessions


@dataclass
class SubjectStats:
    mean: float
    std: float
    n_ratings: int
    constant: bool  # std == 0, unusable for z-scoring


def subject_stats(scores: Sequence[float]) -> SubjectStats:
    """Per-subject mean and sample (N-1) standard deviation within a session."""
    if len(scores) < 2:
        raise PreconditionError(
            "z-scoring needs at least 2 ratings from the subject in the session"
        )
    mean = sum(scores) / len(scores)
    var = sum((s - mean) ** 2 for s in scores) / (len(scores) - 1)
    std = math.sqrt(var)
    return SubjectStats(mean=mean, std=std, n_ratings=len(scores), constant=std == 0)


def zscore_and_rescale(scores: Sequence[float]) -> list[float]:
    """Z-score a subject's session ratings and map to [0, 100].

    Z values of -3..+3 map linearly onto 0..100; the tail outside that range
    is clamped.
    """
    stats = subject_stats(scores)
    if stats.constant:
        raise PreconditionError(
            "subject rated every image identically; z-score undefined"
        )
    out = []
    for s in scores:
        z = (s - stats.mean) / stats.std
        rescaled = 100.0 * (z + 3.0) / 6.0
        out.append(min(100.0, max(0.0, rescaled)))
    return out


def _pearson(a: Sequence[float], b: Sequence[float]) -> Optional[float]:
    n = len(a)
    if n < 2:
        return None
    ma = sum(a) / n
    mb = sum(b) / n
    va = sum((x - ma) ** 2 for x in a)
    vb = sum((x - mb) ** 2 for x in b)
    if va == 0 or vb == 0:
        return None
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    return cov / math.sqrt(va * vb)


def _usable_subjects(ratings: SessionRatings) -> dict[str, dict[str, float]]:
    """Subjects with >= 2 ratings and non-constant scores; others are flagged
    by the caller."""
    usable = {}
    for subject, scores in ratings.items():
        if len(scores) < 2:
            continue
        values = list(scores.values())
        if max(values) == min(values):
            continue
        usable[subject] = dict(scores)
    return usable


def _rescaled_by_subject(
    ratings: Mapping[str, Mapping[str, float]]
) -> dict[str, dict[str, float]]:
    rescaled = {}
    for subject, scores in ratings.items():
        image_ids = list(scores)
        values = zscore_and_rescale([scores[i] for i in image_ids])
        rescaled[subject] = dict(zip(image_ids, values))
    return rescaled


def _provisional_mos(rescaled: Mapping[str, Mapping[str, float]]) -> dict[str, float]:
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for scores in rescaled.values():
        for image_id, value in scores.items():
            sums[image_id] = sums.get(image_id, 0.0) + value
            counts[image_id] = counts.get(image_id, 0) + 1
    return {i: sums[i] / counts[i] for i in sums}


def reject_subjects(
    ratings: SessionRatings,
    threshold: float = REJECTION_THRESHOLD,
) -> set[str]:
    """Iterative correlation screen against the provisional MOS.

    Each subject is correlated with the provisional MOS of the *other*
    remaining subjects (leave-one-out, so a noisy rater cannot prop itself up
    through its own share of the mean). The lowest correlator below
    ``threshold`` is removed and the screen repeats; at most floor(N/4)
    subjects are removed.
    """
    usable = _usable_subjects(ratings)
    if not usable:
        raise DataError("no usable subjects: all constant or under-sampled")
    max_removals = len(usable) // 4
    rejected: set[str] = set()
    while len(rejected) < max_removals:
        current = {s: v for s, v in usable.items() if s not in rejected}
        if len(current) < 3:
            break
        rescaled = _rescaled_by_subject(current)
        worst_subject, worst_corr = None, None
        for subject, scores in current.items():
            others = {s: v for s, v in rescaled.items() if s != subject}
            mos = _provisional_mos(others)
            paired = [(scores[i], mos[i]) for i in scores if i in mos]
            corr = _pearson([p[0] for p in paired], [p[1] for p in paired])
            if corr is None:
                continue
            if worst_corr is None or corr < worst_corr:
                worst_subject, worst_corr = subject, corr
        if worst_subject is None or worst_corr is None or worst_corr >= threshold:
            break
        rejected.add(worst_subject)
    return rejected


@dataclass
class MosResult:
    """MOS of one session plus the processing diagnostics around it."""

    mos: dict[str, float]
    subject_mean: dict[str, float]
    subject_std: dict[str, float]
    rejected_subjects: set[str]
    flagged_subjects: set[str]  # constant or under-sampled raters
    n_subjects: int  # before rejection (usable raters included in N_k)
    m_subjects: int  # after rejection
    histogram: list[int] = field(default_factory=list)  # bin width 5 over [0,100]

    def histogram_edges(self) -> list[float]:
        return [5.0 * i for i in range(len(self.histogram) + 1)]


def compute_mos(
    ratings: SessionRatings,
    rejection_threshold: float = REJECTION_THRESHOLD,
) -> MosResult:
    """Full per-session pipeline: flag bad raters, reject outliers, average
    the rescaled scores of the remaining subjects per image."""
    if not ratings:
        raise PreconditionError("session has no ratings")
    usable = _usable_subjects(ratings)
    flagged = set(ratings) - set(usable)
    if len(usable) < 2:
        raise PreconditionError(
            f"need at least 2 usable subjects, got {len(usable)} "
            f"(flagged: {sorted(flagged)})"
        )
    rejected = reject_subjects(usable, threshold=rejection_threshold)
    remaining = {s: v for s, v in usable.items() if s not in rejected}
    if len(remaining) < 2:
        raise PreconditionError("fewer than 2 subjects remain after rejection")

    rescaled = _rescaled_by_subject(remaining)
    mos = _provisional_mos(rescaled)

    stats = {s: subject_stats(list(v.values())) for s, v in usable.items()}
    histogram = [0] * 20
    for value in mos.values():
        bin_index = min(19, int(value // 5))
        histogram[bin_index] += 1
    return MosResult(
        mos=mos,
        subject_mean={s: st.mean for s, st in stats.items()},
        subject_std={s: st.std for s, st in stats.items()},
        rejected_subjects=rejected,
        flagged_subjects=flagged,
        n_subjects=len(usable),
        m_subjects=len(remaining),
        histogram=histogram,
    )


def scatter_export(
    mos: Mapping[str, float], domains: Mapping[str, str]
) -> list[tuple[str, str, float]]:
    """(image_id, domain, mos) rows for per-domain scatter plots."""
    return [
        (image_id, domains.get(image_id, "unknown"), value)
        for image_id, value in sorted(mos.items())
    ]
