"""Offline evaluation: RMSE, cross-validation, grid search, hit rate,
popularity share, the one-sided two-sample Z-test and histograms."""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .ratings import Dataset, scale_rating
from .recommender import QueryProfile, RecommendationList, rank_items
from .svd import DivergenceError, FactorModel, Hyperparams, clamp, fold_in, init_model, predict_all, train

logger = logging.getLogger(__name__)


class EvalError(ValueError):
    pass


def rmse(predictions: Sequence[float], truths: Sequence[float]) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise EvalError(f"length mismatch: {p.shape} vs {t.shape}")
    if len(p) == 0:
        raise EvalError("rmse of empty sequences")
    return float(np.sqrt(np.mean((p - t) ** 2)))


# -- cross-validation ----------------------------------------------------------


@dataclass
class CVResult:
    fold_rmse: list[float]
    fold_sizes: list[int]
    skipped: list[int]
    init_rmse: list[float]

    @property
    def mean_rmse(self) -> float:
        return float(np.mean(self.fold_rmse))


def fold_assignment(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded random partition of range(n) into near-equal folds."""
    if folds < 2:
        raise EvalError("need at least 2 folds")
    if n < folds:
        raise EvalError(f"cannot split {n} rows into {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def _test_predictions(m: FactorModel, d: Dataset, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    upos = {p: k for k, p in enumerate(m.user_ids)}
    preds, truths, skipped = [], [], 0
    for k in rows:
        u = upos.get(d.user_ids[d.users[k]])
        cid = d.item_ids[d.items[k]]
        if u is None or not m.has_item(cid):
            skipped += 1
            continue
        preds.append(float(clamp(m.P[u] @ m.Q[m.item_index(cid)])))
        truths.append(d.ratings[k])
    return np.array(preds), np.array(truths), skipped


def kfold_cv(d: Dataset, h: Hyperparams, folds: int = 5, seed: int = 0) -> CVResult:
    """k-fold test RMSE; held-out rows with a user or item absent from the
    training folds are skipped and counted."""
    parts = fold_assignment(len(d), folds, seed)
    res = CVResult([], [], [], [])
    for k, test in enumerate(parts):
        train_rows = np.concatenate([p for j, p in enumerate(parts) if j != k])
        sub = d.subset(np.sort(train_rows))
        m, _ = train(sub, h)
        preds, truths, skipped = _test_predictions(m, d, test)
        if len(preds) == 0:
            raise EvalError(f"fold {k}: every held-out row is unseen in training")
        m0 = init_model(sub, h)
        p0, t0, _ = _test_predictions(m0, d, test)
        res.fold_rmse.append(rmse(preds, truths))
        res.fold_sizes.append(len(test))
        res.skipped.append(skipped)
        res.init_rmse.append(rmse(p0, t0))
    return res


# -- grid search ---------------------------------------------------------------


@dataclass(frozen=True)
class HyperGrid:
    epochs_values: tuple[int, ...]
    lambda_values: tuple[float, ...]
    gamma_values: tuple[float, ...]

    def __post_init__(self):
        if not (self.epochs_values and self.lambda_values and self.gamma_values):
            raise EvalError("every grid axis needs at least one value")

    def points(self, base: Hyperparams) -> list[Hyperparams]:
        """Grid points in lexicographic (epochs, lambda, gamma) order."""
        return [
            base.replace(epochs=e, lam=l, gamma=g)
            for e, l, g in itertools.product(self.epochs_values, self.lambda_values, self.gamma_values)
        ]


GRID_COLUMNS = ("epochs", "lam", "gamma", "mean_rmse", "fold_rmse", "diverged")


def grid_search(
    d: Dataset,
    g: HyperGrid,
    folds: int = 3,
    seed: int = 0,
    base: Hyperparams | None = None,
) -> tuple[Hyperparams, list[dict]]:
    """Exhaustive CV over the grid; best = lowest mean RMSE, first on ties.

    A point whose training diverges is kept in the table with infinite RMSE.
    """
    base = base or Hyperparams()
    table = []
    for h in g.points(base):
        try:
            cv = kfold_cv(d, h, folds, seed)
            row = dict(epochs=h.epochs, lam=h.lam, gamma=h.gamma, mean_rmse=cv.mean_rmse,
                       fold_rmse=cv.fold_rmse, diverged=False)
        except DivergenceError:
            logger.warning("grid point epochs=%d lam=%g gamma=%g diverged", h.epochs, h.lam, h.gamma)
            row = dict(epochs=h.epochs, lam=h.lam, gamma=h.gamma, mean_rmse=math.inf,
                       fold_rmse=[], diverged=True)
        table.append(row)
    best = min(range(len(table)), key=lambda k: (table[k]["mean_rmse"], k))
    if math.isinf(table[best]["mean_rmse"]):
        raise EvalError("every grid point diverged")
    return g.points(base)[best], table


def grid_table_csv(table: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GRID_COLUMNS)
    for row in table:
        w.writerow([row["epochs"], row["lam"], row["gamma"], repr(row["mean_rmse"]),
                    ";".join(repr(x) for x in row["fold_rmse"]), int(row["diverged"])])
    return buf.getvalue()


# -- recommendation metrics ----------------------------------------------------


def popular_items(d: Dataset, decile: float = 0.10) -> set[int]:
    """Champion ids in the top ``decile`` by rating count (ties: lower id)."""
    n_top = max(1, int(round(decile * d.n_items)))
    counts = d.item_counts()
    order = sorted(range(d.n_items), key=lambda k: (-counts[k], d.item_ids[k]))
    return {d.item_ids[k] for k in order[:n_top]}


def popularity_share(recs: Sequence[RecommendationList], d: Dataset, decile: float = 0.10) -> float:
    """Fraction of all recommended slots taken by top-decile items."""
    top = popular_items(d, decile)
    slots = [c for r in recs for c in r.champions]
    if not slots:
        return 0.0
    return sum(c in top for c in slots) / len(slots)


def renormalized_profile(player_id: str, rated: Sequence[tuple[int, float]], n: int = 5) -> QueryProfile:
    """Top-n of already-normalized ratings, rescaled so the top one is 100."""
    chosen = sorted(rated, key=lambda cr: (-cr[1], cr[0]))[:n]
    top = chosen[0][1]
    return QueryProfile(player_id, tuple((c, scale_rating(int(r), int(top))) for c, r in chosen))


@dataclass
class HitRateResult:
    hits: int
    trials: int
    unseen_hidden: int = 0
    profile_sizes: list[int] = field(default_factory=list)
    hidden: list[tuple[str, int]] = field(default_factory=list)

    @property
    def rate(self) -> float:
        return self.hits / self.trials if self.trials else 0.0


def leave_one_out(d: Dataset, seed: int, n_users: int | None = None):
    """Pick users with >= 2 ratings and one top-rated item of each to hide.

    Returns (train_rows, [(player_id, hidden_champion, remaining[(champ, rating)])]).
    """
    rng = np.random.default_rng(seed)
    rows_of: dict[int, list[int]] = {}
    for k, u in enumerate(d.users):
        rows_of.setdefault(int(u), []).append(k)
    eligible = [u for u in range(d.n_users) if len(rows_of.get(u, ())) >= 2]
    if n_users is not None and n_users < len(eligible):
        eligible = sorted(rng.choice(eligible, size=n_users, replace=False).tolist())
    hide = set()
    cases = []
    for u in eligible:
        rows = rows_of[u]
        best = max(d.ratings[k] for k in rows)
        top_rows = [k for k in rows if d.ratings[k] == best]
        h = int(top_rows[rng.integers(len(top_rows))])
        hide.add(h)
        rest = [(d.item_ids[d.items[k]], float(d.ratings[k])) for k in rows if k != h]
        cases.append((d.user_ids[u], d.item_ids[d.items[h]], rest))
    train_rows = np.array([k for k in range(len(d)) if k not in hide], dtype=np.int64)
    return train_rows, cases


def hit_rate_at_k(
    d: Dataset,
    h: Hyperparams,
    k: int = 5,
    seed: int = 0,
    n_users: int | None = None,
    untrained: bool = False,
    profile_size: int = 5,
) -> HitRateResult:
    """Leave-one-out hit rate of the SVD recommender.

    Each sampled user's hidden item is removed from training; the user is
    then folded in from their remaining top ``profile_size`` ratings. A
    hidden item that no remaining player rated cannot be recommended and
    counts as a miss (tallied in ``unseen_hidden``), so hold out a sample
    rather than every player when tastes are homogeneous.
    ``untrained=True`` uses the random initial factors as a baseline.
    """
    train_rows, cases = leave_one_out(d, seed, n_users)
    sub = d.subset(train_rows)
    m = init_model(sub, h) if untrained else train(sub, h)[0]
    res = HitRateResult(0, 0)
    for player, hidden, rest in cases:
        known = [(c, r) for c, r in rest if m.has_item(c)]
        if not known:
            continue
        prof = renormalized_profile(player, known, profile_size)
        p = fold_in(m, list(prof.entries))
        top = rank_items(predict_all(m, p), m.item_ids, prof.champions, k)
        res.trials += 1
        res.unseen_hidden += not m.has_item(hidden)
        res.hits += any(c == hidden for c, _ in top)
        res.profile_sizes.append(len(prof.entries))
        res.hidden.append((player, hidden))
    return res


def random_hit_rate(n_items: int, profile_size: int, k: int) -> float:
    """Hit probability of k uniformly random picks among the non-profile items."""
    return min(1.0, k / (n_items - profile_size))


# -- study statistics ----------------------------------------------------------


def normal_sf(z: float) -> float:
    """Upper-tail standard normal probability 1 - Phi(z)."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def z_test_one_sided(sample_a: Sequence[float], sample_b: Sequence[float]) -> tuple[float, float]:
    """Two-sample Z-test for H1: mean(a) > mean(b), unpooled sample variances."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise EvalError("each sample needs at least 2 values")
    se = math.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
    diff = float(a.mean() - b.mean())
    if se == 0:
        if diff == 0:
            return 0.0, 0.5
        raise EvalError("zero variance in both samples; z is undefined")
    z = diff / se
    return z, normal_sf(z)


def histogram(values: Sequence[float], bin_edges: Sequence[float]) -> np.ndarray:
    """Counts in [e_k, e_k+1), last bin closed; out-of-range values ignored."""
    edges = np.asarray(bin_edges, dtype=np.float64)
    if edges.ndim != 1 or len(edges) < 2:
        raise EvalError("need at least 2 bin edges")
    if np.any(np.diff(edges) <= 0):
        raise EvalError("bin edges must be strictly ascending")
    counts, _ = np.histogram(np.asarray(values, dtype=np.float64), bins=edges)
    return counts.astype(np.int64)


def histogram_csv(counts: Sequence[int], bin_edges: Sequence[float]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("bin_low", "bin_high", "count"))
    for lo, hi, c in zip(bin_edges[:-1], bin_edges[1:], counts):
        w.writerow((lo, hi, int(c)))
    return buf.getvalue()


@dataclass
class EvalReport:
    rmse: float | None = None
    fold_rmse: list[float] = field(default_factory=list)
    hit_rate_at_k: float | None = None
    popularity_share: float | None = None
    z: float | None = None
    p: float | None = None
    histogram: list[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {k: v for k, v in dataclasses.asdict(self).items() if v not in (None, [], {})}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
