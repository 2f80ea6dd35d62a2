"""Weighted Slope One baseline.

dev(i, j) is the mean of r_ui - r_uj over users who rated both items,
and c(i, j) the number of such users. A prediction for item i from a
profile averages r_j + dev(i, j) over co-rated profile items, weighted
by c(i, j) (or unweighted if ``weighted=False``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse

from .ratings import RATING_MAX, RATING_MIN, Dataset


@dataclass(frozen=True, eq=False)
class SlopeOneModel:
    dev: np.ndarray  # dense n_items x n_items; 0 where counts == 0
    counts: np.ndarray
    item_ids: tuple[int, ...]
    weighted: bool = True

    def __post_init__(self):
        object.__setattr__(self, "_item_pos", {c: k for k, c in enumerate(self.item_ids)})

    def item_index(self, champion_id: int) -> int:
        try:
            return self._item_pos[champion_id]
        except KeyError:
            raise KeyError(f"champion {champion_id} unknown to model") from None

    def has_item(self, champion_id: int) -> bool:
        return champion_id in self._item_pos

    def deviation(self, i: int, j: int) -> float | None:
        """dev between two champion ids, or None if never co-rated."""
        a, b = self.item_index(i), self.item_index(j)
        return float(self.dev[a, b]) if self.counts[a, b] > 0 else None

    def pairs(self) -> int:
        """Number of ordered pairs (i != j) with at least one co-rating."""
        c = self.counts > 0
        return int(c.sum() - np.trace(c))


def train_slope_one(d: Dataset, weighted: bool = True) -> SlopeOneModel:
    # R: users x items ratings, B: indicator of an observed rating
    R = sparse.csr_matrix((d.ratings, (d.users, d.items)), shape=(d.n_users, d.n_items))
    B = sparse.csr_matrix((np.ones(len(d)), (d.users, d.items)), shape=(d.n_users, d.n_items))
    counts = (B.T @ B).toarray()
    # sum_u r_ui * [u rated j]  -  sum_u [u rated i] * r_uj
    S = (R.T @ B).toarray()
    diff = S - S.T
    with np.errstate(invalid="ignore", divide="ignore"):
        dev = np.where(counts > 0, diff / np.maximum(counts, 1), 0.0)
    np.fill_diagonal(dev, 0.0)
    return SlopeOneModel(dev=dev, counts=counts.astype(np.int64), item_ids=d.item_ids, weighted=weighted)


def _profile_arrays(m: SlopeOneModel, profile: Sequence[tuple[int, float]]):
    known = [(m.item_index(c), float(r)) for c, r in profile if m.has_item(c)]
    idx = np.array([k for k, _ in known], dtype=np.int64)
    r = np.array([v for _, v in known], dtype=np.float64)
    mean = float(np.mean([float(v) for _, v in profile]))
    return idx, r, mean


def predict_slope_one(m: SlopeOneModel, profile: Sequence[tuple[int, float]], item: int) -> float:
    """Slope One estimate for ``item``; falls back to the profile mean
    when no profile item was ever co-rated with it."""
    if not profile:
        raise ValueError("empty profile")
    target = m.item_index(item)
    idx, r, mean = _profile_arrays(m, profile)
    return float(_predict_rows(m, idx, r, mean, np.array([target]))[0])


def predict_all_slope_one(m: SlopeOneModel, profile: Sequence[tuple[int, float]]) -> np.ndarray:
    """Estimates for every item in dense order."""
    if not profile:
        raise ValueError("empty profile")
    idx, r, mean = _profile_arrays(m, profile)
    return _predict_rows(m, idx, r, mean, np.arange(len(m.item_ids)))


def _predict_rows(m, idx, r, mean, targets):
    c = m.counts[np.ix_(targets, idx)].astype(np.float64)
    w = c if m.weighted else (c > 0).astype(np.float64)
    num = (w * (r[None, :] + m.dev[np.ix_(targets, idx)])).sum(axis=1)
    den = w.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        est = np.where(den > 0, num / np.where(den > 0, den, 1.0), mean)
    return np.clip(est, RATING_MIN, RATING_MAX)
