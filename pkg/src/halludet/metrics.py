"""Agreement and correlation statistics.

Undefined cases (zero rank variance, chance agreement of exactly 1) raise
:class:`DegenerateInput` with a machine-readable kind instead of silently
returning 0 or 1; report assembly turns those into explicit sentinels.
"""

from __future__ import annotations

from collections import Counter
from typing import Hashable, Sequence

import numpy as np

from .errors import DegenerateInput


def fractional_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values receive the average of their rank range."""
    arr = np.asarray(values, dtype=np.float64)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(len(arr), dtype=np.float64)
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        # ranks i+1 .. j+1 average to (i + j) / 2 + 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Rank correlation: Pearson correlation of fractional (average) ranks."""
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise ValueError("need at least 2 pairs")
    rx = fractional_ranks(xs)
    ry = fractional_ranks(ys)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sx = float(np.sqrt(np.sum(dx * dx)))
    sy = float(np.sqrt(np.sum(dy * dy)))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateInput(
            "rank correlation undefined: an input has zero rank variance",
            kind="zero-variance",
        )
    return float(np.sum(dx * dy)) / (sx * sy)


def cohen_kappa(a: Sequence[Hashable], b: Sequence[Hashable]) -> float:
    """Chance-corrected pairwise agreement: (p_o - p_e) / (1 - p_e).

    Chance agreement p_e comes from the two labelings' marginal frequencies.
    When both labelings are constant and identical, p_e = 1 and the statistic
    is undefined; that degenerates with kind "perfect-agreement".
    """
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if not a:
        raise ValueError("need at least 1 item")
    n = len(a)
    p_observed = sum(1 for x, y in zip(a, b) if x == y) / n
    freq_a = Counter(a)
    freq_b = Counter(b)
    p_expected = sum(
        (freq_a[cat] / n) * (freq_b[cat] / n) for cat in freq_a.keys() | freq_b.keys()
    )
    if p_expected == 1.0:
        raise DegenerateInput(
            "kappa undefined: both labelings constant and identical",
            kind="perfect-agreement",
        )
    return (p_observed - p_expected) / (1.0 - p_expected)


def fleiss_kappa(ratings: Sequence[Sequence[int]], n_raters: int) -> float:
    """Multi-rater chance-corrected agreement over per-item category counts.

    ``ratings`` has one row per item and one column per category; every row
    must sum to ``n_raters`` (items with other panel sizes are excluded
    upstream). All raters unanimous on a single category everywhere makes the
    statistic undefined (kind "unanimous-single-category").
    """
    table = np.asarray(ratings, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] < 1:
        raise ValueError("ratings must be a non-empty 2-D table")
    if n_raters < 2:
        raise ValueError("need at least 2 raters")
    if not np.all(table.sum(axis=1) == n_raters):
        raise ValueError("every item must have exactly n_raters ratings")

    n_items = table.shape[0]
    per_item_agreement = ((table * table).sum(axis=1) - n_raters) / (
        n_raters * (n_raters - 1)
    )
    mean_agreement = float(per_item_agreement.mean())
    category_share = table.sum(axis=0) / (n_items * n_raters)
    chance_agreement = float((category_share * category_share).sum())
    if chance_agreement == 1.0:
        raise DegenerateInput(
            "kappa undefined: all ratings fall in a single category",
            kind="unanimous-single-category",
        )
    return (mean_agreement - chance_agreement) / (1.0 - chance_agreement)
