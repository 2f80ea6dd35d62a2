"""Query pipeline: mastery snapshot -> top-5 profile -> fold-in -> top-k."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Callable, Sequence

import numpy as np

from .data import ChampionCatalog
from .ratings import DataError, MasteryRecord, normalize_user
from .svd import FactorModel, ModelError, fold_in, predict_all

logger = logging.getLogger(__name__)

PROFILE_SIZE = 5


@dataclass(frozen=True)
class QueryProfile:
    player_id: str
    entries: tuple[tuple[int, int], ...]

    @property
    def champions(self) -> frozenset[int]:
        return frozenset(c for c, _ in self.entries)


@dataclass(frozen=True)
class RecommendationList:
    player_id: str
    items: tuple[tuple[int, float], ...]
    k: int

    @property
    def champions(self) -> list[int]:
        return [c for c, _ in self.items]


def top_champions(records: Sequence[MasteryRecord], n: int = PROFILE_SIZE) -> QueryProfile:
    """The n highest-mastery champions, renormalized so the top one is 100.

    Ties on mastery go to the lower champion id.
    """
    played = [r for r in records if r.cmp > 0]
    if not played:
        raise DataError("player has no champion with positive mastery")
    chosen = sorted(played, key=lambda r: (-r.cmp, r.champion_id))[:n]
    triples = normalize_user(chosen)
    return QueryProfile(chosen[0].player_id, tuple((t.champion_id, t.rating) for t in triples))


def rank_items(
    scores: np.ndarray, item_ids: Sequence[int], exclude: frozenset[int], k: int
) -> list[tuple[int, float]]:
    """Top-k (champion_id, score) by score descending, then id ascending."""
    cand = [(float(s), c) for s, c in zip(scores, item_ids) if c not in exclude]
    cand.sort(key=lambda sc: (-sc[0], sc[1]))
    return [(c, s) for s, c in cand[:k]]


def recommend_from_profile(
    m: FactorModel, profile: QueryProfile, k: int = PROFILE_SIZE
) -> RecommendationList:
    if k <= 0:
        raise ValueError("k must be positive")
    known = [(c, r) for c, r in profile.entries if m.has_item(c)]
    if not known:
        raise ModelError(f"none of {profile.player_id!r}'s profile champions are known to the model")
    if len(known) < len(profile.entries):
        logger.warning("%d profile champions unknown to model; ignored", len(profile.entries) - len(known))
    p = fold_in(m, known)
    items = rank_items(predict_all(m, p), m.item_ids, profile.champions, k)
    return RecommendationList(profile.player_id, tuple(items), k)


def recommend(m: FactorModel, records: Sequence[MasteryRecord], k: int = PROFILE_SIZE) -> RecommendationList:
    """Top-k champions for a player not necessarily seen in training."""
    if k <= 0:
        raise ValueError("k must be positive")
    return recommend_from_profile(m, top_champions(records), k)


def format_recommendations(
    r: RecommendationList,
    catalog: ChampionCatalog | None = None,
    fmt: str = "json",
    now: Callable[[], datetime] | datetime | None = None,
) -> str:
    """Render as ``json`` ({player, generated_at, items}) or ``text``.

    Pass ``now`` (a datetime or a callable) to pin the timestamp.
    """
    if now is None:
        ts = datetime.now(timezone.utc)
    else:
        ts = now() if callable(now) else now
    rows = []
    for cid, score in r.items:
        name = catalog.name(cid) if catalog is not None else None
        if name is None:
            if catalog is not None:
                logger.warning("champion id %d not in catalog", cid)
            name = f"#{cid}"
        rows.append({"champion_id": cid, "name": name, "score": round(score, 6)})
    if fmt == "json":
        doc = {"player": r.player_id, "generated_at": ts.isoformat(), "items": rows}
        return json.dumps(doc, indent=2) + "\n"
    if fmt == "text":
        lines = [f"Recommendations for {r.player_id} ({ts.isoformat()}):"]
        lines += [f"{n:>2}. {row['name']:<20} {row['score']:8.3f}" for n, row in enumerate(rows, 1)]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")
