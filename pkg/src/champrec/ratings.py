"""Mastery records, implicit ratings and the training-set builder.

Raw champion mastery points are turned into per-player ratings on a
1..100 scale: the player's most played champion is 100 and every other
champion is scaled linearly against it, rounding up.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

RATING_MIN = 1
RATING_MAX = 100


class DataError(ValueError):
    """Raised when mastery or rating data violates its invariants."""


@dataclass(frozen=True)
class MasteryRecord:
    player_id: str
    champion_id: int
    cmp: int

    def __post_init__(self):
        if self.cmp < 0:
            raise DataError(f"negative mastery points for {self.player_id}/{self.champion_id}")
        if self.champion_id < 0:
            raise DataError(f"negative champion id {self.champion_id}")


@dataclass(frozen=True)
class RatingTriple:
    player_id: str
    champion_id: int
    rating: int


def scale_rating(value: int, max_value: int) -> int:
    """ceil(100 * value / max_value) in exact integer arithmetic."""
    return -((-RATING_MAX * value) // max_value)


def normalize_user(records: Sequence[MasteryRecord]) -> list[RatingTriple]:
    """Normalize one player's positive mastery records to 1..100 ratings.

    Output order follows input order. The record holding the maximum
    mastery maps to exactly 100.
    """
    if not records:
        raise DataError("no mastery data")
    player = records[0].player_id
    for r in records:
        if r.player_id != player:
            raise DataError(f"mixed players in one profile: {player!r} and {r.player_id!r}")
        if r.cmp <= 0:
            raise DataError(
                f"non-positive mastery for {r.player_id}/{r.champion_id}; filter zeros first"
            )
    top = max(r.cmp for r in records)
    return [RatingTriple(r.player_id, r.champion_id, scale_rating(r.cmp, top)) for r in records]


@dataclass(frozen=True)
class Dataset:
    """Immutable training set with dense user/item indices.

    ``users``, ``items`` and ``ratings`` are parallel arrays of dense
    indices and integer ratings; ``user_ids``/``item_ids`` map the dense
    index back to the external identifier.
    """

    user_ids: tuple[str, ...]
    item_ids: tuple[int, ...]
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    _user_pos: dict = field(init=False, repr=False, compare=False)
    _item_pos: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_user_pos", {u: k for k, u in enumerate(self.user_ids)})
        object.__setattr__(self, "_item_pos", {i: k for k, i in enumerate(self.item_ids)})
        if len(self._user_pos) != len(self.user_ids) or len(self._item_pos) != len(self.item_ids):
            raise DataError("duplicate identifiers in index")
        for a in (self.users, self.items, self.ratings):
            a.setflags(write=False)
        keys = self.users.astype(np.int64) * max(len(self.item_ids), 1) + self.items
        if len(np.unique(keys)) != len(keys):
            raise DataError("duplicate (player, champion) pairs in dataset")

    @classmethod
    def from_triples(cls, triples: Iterable[RatingTriple]) -> "Dataset":
        user_pos: dict[str, int] = {}
        item_pos: dict[int, int] = {}
        us, its, rs = [], [], []
        for t in triples:
            if not RATING_MIN <= t.rating <= RATING_MAX:
                raise DataError(f"rating {t.rating} out of range for {t.player_id}/{t.champion_id}")
            us.append(user_pos.setdefault(t.player_id, len(user_pos)))
            its.append(item_pos.setdefault(t.champion_id, len(item_pos)))
            rs.append(t.rating)
        return cls(
            user_ids=tuple(user_pos),
            item_ids=tuple(item_pos),
            users=np.asarray(us, dtype=np.int64),
            items=np.asarray(its, dtype=np.int64),
            ratings=np.asarray(rs, dtype=np.float64),
        )

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def __len__(self) -> int:
        return len(self.ratings)

    def user_index(self, player_id: str) -> int:
        return self._user_pos[player_id]

    def item_index(self, champion_id: int) -> int:
        return self._item_pos[champion_id]

    def has_item(self, champion_id: int) -> bool:
        return champion_id in self._item_pos

    def triples(self) -> list[RatingTriple]:
        return [
            RatingTriple(self.user_ids[u], self.item_ids[i], int(r))
            for u, i, r in zip(self.users, self.items, self.ratings)
        ]

    def subset(self, rows: np.ndarray) -> "Dataset":
        """Rows selected by position, re-indexed densely in first-seen order."""
        rows = np.asarray(rows, dtype=np.int64)
        u_old, i_old = self.users[rows], self.items[rows]
        u_keep, u_new = _first_seen(u_old)
        i_keep, i_new = _first_seen(i_old)
        return Dataset(
            user_ids=tuple(self.user_ids[k] for k in u_keep),
            item_ids=tuple(self.item_ids[k] for k in i_keep),
            users=u_new,
            items=i_new,
            ratings=self.ratings[rows].copy(),
        )

    def item_counts(self) -> np.ndarray:
        """Number of ratings per dense item index."""
        return np.bincount(self.items, minlength=self.n_items)


def _first_seen(codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct codes in order of first appearance, and codes remapped to 0..n-1."""
    uniq, first, inverse = np.unique(codes, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return uniq[order], rank[inverse].astype(np.int64)


def build_training_set(records: Iterable[MasteryRecord]) -> Dataset:
    """Drop zero-mastery rows, normalize each player, and index densely.

    Players and champions are indexed in the order they are first seen.
    """
    kept: list[MasteryRecord] = []
    top: dict[str, int] = {}
    seen: set[tuple[str, int]] = set()
    for r in records:
        key = (r.player_id, r.champion_id)
        if key in seen:
            raise DataError(f"duplicate mastery record for {key}")
        seen.add(key)
        if r.cmp > 0:
            kept.append(r)
            top[r.player_id] = max(top.get(r.player_id, 0), r.cmp)
    if not kept:
        raise DataError("no usable mastery records (all empty or zero)")
    # same result as normalize_user per player, but keeps the input row order
    return Dataset.from_triples(
        RatingTriple(r.player_id, r.champion_id, scale_rating(r.cmp, top[r.player_id]))
        for r in kept
    )


@dataclass(frozen=True)
class DatasetStats:
    n_users: int
    n_items: int
    n_rows: int
    rows_per_user: float
    rating_histogram: dict[int, int]


def dataset_stats(d: Dataset) -> DatasetStats:
    hist = Counter(int(r) for r in d.ratings)
    return DatasetStats(
        n_users=d.n_users,
        n_items=d.n_items,
        n_rows=len(d),
        rows_per_user=len(d) / d.n_users,
        rating_histogram=dict(sorted(hist.items())),
    )
