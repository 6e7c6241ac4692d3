"""Scoring for generated edits and locations: edit similarity, exact match, rewards.

Edit similarity (ES) is character-level normalized Levenshtein similarity:
``1 - distance(a, b) / max(len(a), len(b))``, with two empty strings scoring
1.0. ES numbers elsewhere in reports are this value times 100. The unit
matters: a token- or line-level ES would produce different numbers, so the
definition is fixed here and nowhere else.

Rewards are the scalar signals exported for RL trainers: locations earn a
binary +1/-1; edits earn +1 for an exact match, half the similarity when it
exceeds 0.5, and -1 otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Literal, Union

import numpy as np

KEEP = "keep"
Location = Union[int, str]  # a 1-based line number or the KEEP token


class EmptyInput(Exception):
    """aggregate() was given no scores."""


def levenshtein(a: str, b: str) -> int:
    """Character-level Levenshtein distance (unit costs)."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    b_codes = np.fromiter(map(ord, b), dtype=np.int64, count=len(b))
    width = len(b) + 1
    offsets = np.arange(width, dtype=np.int64)
    prev = offsets.copy()
    t = np.empty(width, dtype=np.int64)
    for i, ch in enumerate(a, start=1):
        cost = (b_codes != ord(ch)).astype(np.int64)
        t[0] = i
        np.minimum(prev[1:] + 1, prev[:-1] + cost, out=t[1:])
        # Fold in the left-to-right insertion chain: cur[j] = min_k<=j t[k] + (j-k).
        t -= offsets
        np.minimum.accumulate(t, out=t)
        t += offsets
        prev, t = t, prev
    return int(prev[-1])


def edit_similarity(gen: str, gt: str) -> float:
    """Normalized Levenshtein similarity in [0, 1]; both-empty scores 1.0."""
    if gen == gt:
        return 1.0
    longest = max(len(gen), len(gt))
    return 1.0 - levenshtein(gen, gt) / longest


@dataclass(frozen=True)
class EditScore:
    """Per-sample edit outcome: similarity, exactness, and the training reward."""

    es: float
    exact: bool
    reward: float


@dataclass(frozen=True)
class LocationScore:
    """Per-sample location outcome: correctness and the binary training reward."""

    correct: bool
    reward: float


def reward_edit(gen: str, gt: str) -> EditScore:
    """Hierarchical edit reward: 1.0 on exact match, 0.5*ES when ES > 0.5, else -1.0."""
    if gen == gt:
        return EditScore(es=1.0, exact=True, reward=1.0)
    es = edit_similarity(gen, gt)
    reward = 0.5 * es if es > 0.5 else -1.0
    return EditScore(es=es, exact=False, reward=reward)


def reward_location(gen: Location, gt: Location) -> LocationScore:
    """Binary location reward: +1.0 when the prediction equals the target, else -1.0."""
    correct = gen == gt
    return LocationScore(correct=correct, reward=1.0 if correct else -1.0)


@dataclass(frozen=True)
class SplitSummary:
    """Aggregate over one split; percentages in [0, 100].

    ``do`` summaries carry es/emr, ``keep`` summaries carry acc.
    """

    split: Literal["do", "keep"]
    n: int
    es: float | None = None
    emr: float | None = None
    acc: float | None = None


def aggregate(scores: list, split: Literal["do", "keep"]) -> SplitSummary:
    """Summarize per-sample scores for one split.

    do: mean ES (x100) and exact-match rate over EditScores.
    keep: preservation accuracy over LocationScores/EditScores/booleans.
    """
    if not scores:
        raise EmptyInput(f"no scores for split {split!r}")
    n = len(scores)
    if split == "do":
        es = 100.0 * sum(s.es for s in scores) / n
        emr = 100.0 * sum(1 for s in scores if s.exact) / n
        return SplitSummary(split="do", n=n, es=es, emr=emr)
    correct = 0
    for s in scores:
        if isinstance(s, bool):
            correct += s
        elif isinstance(s, LocationScore):
            correct += s.correct
        else:
            correct += s.exact
    return SplitSummary(split="keep", n=n, acc=100.0 * correct / n)


def round_half_up(value: float, ndigits: int) -> float:
    """Decimal round-half-up (2/3 of keeps preserved reports as 66.7, not 66.6)."""
    q = Decimal(1).scaleb(-ndigits)
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


def format_pct(value: float) -> str:
    """Percentage with one decimal, round half up."""
    return f"{round_half_up(value, 1):.1f}%"


def format_es(value: float) -> str:
    """ES (x100) with two decimals, round half up."""
    return f"{round_half_up(value, 2):.2f}"
