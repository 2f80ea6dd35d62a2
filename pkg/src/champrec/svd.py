"""Unbiased latent-factor model trained by stochastic gradient descent.

A rating is modelled as the inner product ``q_i . p_u`` of an item
vector and a user vector, with no global mean and no bias terms. Each
observed rating contributes ``(r - q.p)^2 + lam * (|p|^2 + |q|^2)`` to the
objective and one SGD step per epoch:

    e   = r - q.p
    p  += gamma * (e * q - lam * p)
    q  += gamma * (e * p - lam * q)

Queried players that were not part of training are folded in by ridge
regression against the fixed item factors.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass
from os import PathLike
from typing import Sequence

import numpy as np
from numba import njit

from .ratings import RATING_MAX, RATING_MIN, Dataset

FORMAT_VERSION = 1
_MAGIC = b"CHRECMF\x00"
_SEED_MASK = (1 << 64) - 1


class ModelError(ValueError):
    pass


class DivergenceError(ModelError):
    """SGD produced non-finite factors (learning rate too large for the rating scale)."""


class ModelFormatError(ModelError):
    """Model file is corrupt, truncated or of an unsupported version."""


@dataclass(frozen=True)
class Hyperparams:
    f: int = 100
    epochs: int = 20
    gamma: float = 0.02
    lam: float = 0.005
    seed: int = 0
    init_std: float = 0.1
    fold_in_lambda: float | None = None

    def __post_init__(self):
        if self.f < 1 or self.epochs < 1:
            raise ValueError("f and epochs must be >= 1")
        if not self.gamma > 0:
            raise ValueError("gamma (learning rate) must be > 0")
        if self.lam < 0 or self.init_std < 0:
            raise ValueError("lam and init_std must be >= 0")
        if self.fold_in_lambda is not None and self.fold_in_lambda < 0:
            raise ValueError("fold_in_lambda must be >= 0")

    @property
    def fold_in_reg(self) -> float:
        return self.lam if self.fold_in_lambda is None else self.fold_in_lambda

    def replace(self, **changes) -> "Hyperparams":
        return dataclasses.replace(self, **changes)


PRESETS = {
    "paper-default": dict(epochs=20, lam=0.005, gamma=0.02),
    "paper-tuned": dict(epochs=20, lam=0.4, gamma=0.0005),
}


def preset(name: str, **overrides) -> Hyperparams:
    """Hyperparams for a named preset (``paper-default`` or ``paper-tuned``)."""
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return Hyperparams(**{**base, **overrides})


@dataclass(frozen=True, eq=False)
class FactorModel:
    P: np.ndarray
    Q: np.ndarray
    hyperparams: Hyperparams
    user_ids: tuple[str, ...]
    item_ids: tuple[int, ...]
    epochs_trained: int = 0

    def __post_init__(self):
        for a in (self.P, self.Q):
            a.setflags(write=False)
        object.__setattr__(self, "_item_pos", {c: k for k, c in enumerate(self.item_ids)})

    rating_bounds = (RATING_MIN, RATING_MAX)

    @property
    def f(self) -> int:
        return self.hyperparams.f

    def item_index(self, champion_id: int) -> int:
        try:
            return self._item_pos[champion_id]
        except KeyError:
            raise ModelError(f"champion {champion_id} unknown to model") from None

    def has_item(self, champion_id: int) -> bool:
        return champion_id in self._item_pos

    def user_vector(self, player_id: str) -> np.ndarray:
        try:
            return self.P[self.user_ids.index(player_id)]
        except ValueError:
            raise ModelError(f"player {player_id!r} not in training set") from None

    def same_as(self, other: "FactorModel") -> bool:
        """Bitwise equality of factors, mappings and settings."""
        return (
            self.hyperparams == other.hyperparams
            and self.user_ids == other.user_ids
            and self.item_ids == other.item_ids
            and self.epochs_trained == other.epochs_trained
            and self.P.tobytes() == other.P.tobytes()
            and self.Q.tobytes() == other.Q.tobytes()
        )


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([seed & _SEED_MASK, *stream])


def init_model(d: Dataset, h: Hyperparams) -> FactorModel:
    """Gaussian factors N(0, init_std^2) drawn from a generator seeded by h.seed."""
    rng = _rng(h.seed, 0)
    P = rng.normal(0.0, h.init_std, size=(d.n_users, h.f)) if h.init_std > 0 else np.zeros((d.n_users, h.f))
    Q = rng.normal(0.0, h.init_std, size=(d.n_items, h.f)) if h.init_std > 0 else np.zeros((d.n_items, h.f))
    return FactorModel(P, Q, h, d.user_ids, d.item_ids)


@njit(cache=True)
def _sgd_pass(P, Q, users, items, ratings, order, gamma, lam):
    f = P.shape[1]
    for k in order:
        u = users[k]
        i = items[k]
        dot = 0.0
        for j in range(f):
            dot += P[u, j] * Q[i, j]
        e = ratings[k] - dot
        for j in range(f):
            pu = P[u, j]
            qi = Q[i, j]
            P[u, j] = pu + gamma * (e * qi - lam * pu)
            Q[i, j] = qi + gamma * (e * pu - lam * qi)


def _aligned_indices(m: FactorModel, d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Map d's dense indices to m's dense indices."""
    if d.user_ids == m.user_ids and d.item_ids == m.item_ids:
        return d.users, d.items
    upos = {p: k for k, p in enumerate(m.user_ids)}
    try:
        umap = np.array([upos[p] for p in d.user_ids], dtype=np.int64)
        imap = np.array([m.item_index(c) for c in d.item_ids], dtype=np.int64)
    except KeyError as exc:
        raise ModelError(f"player {exc.args[0]!r} not indexed in model") from None
    return umap[d.users], imap[d.items]


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    """Visiting order of the n training rows in the given (0-based) epoch."""
    return _rng(seed, 1, epoch).permutation(n)


def _run_epoch(P, Q, users, items, ratings, h: Hyperparams, epoch: int) -> None:
    order = epoch_order(h.seed, epoch, len(ratings))
    _sgd_pass(P, Q, users, items, ratings, order, float(h.gamma), float(h.lam))
    if not (np.isfinite(P).all() and np.isfinite(Q).all()):
        raise DivergenceError(
            f"factors became non-finite in epoch {epoch + 1} "
            f"(gamma={h.gamma}, lam={h.lam}); lower the learning rate"
        )


def sgd_epoch(m: FactorModel, d: Dataset) -> FactorModel:
    """One shuffled pass over d; returns the updated model."""
    users, items = _aligned_indices(m, d)
    P, Q = m.P.copy(), m.Q.copy()
    _run_epoch(P, Q, users, items, d.ratings, m.hyperparams, m.epochs_trained)
    return dataclasses.replace(m, P=P, Q=Q, epochs_trained=m.epochs_trained + 1)


def objective(P, Q, users, items, ratings, lam: float) -> float:
    """Sum over observed ratings of squared error plus per-rating L2 penalty."""
    pu, qi = P[users], Q[items]
    err = ratings - np.einsum("ij,ij->i", pu, qi)
    return float(err @ err + lam * (np.sum(pu * pu) + np.sum(qi * qi)))


def objective_gradient(P, Q, users, items, ratings, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of :func:`objective`.

    Each rating's term is -2/gamma times that rating's SGD step, so
    this is the same direction the update rules follow.
    """
    pu, qi = P[users], Q[items]
    err = ratings - np.einsum("ij,ij->i", pu, qi)
    dP = np.zeros_like(P)
    dQ = np.zeros_like(Q)
    np.add.at(dP, users, -2.0 * (err[:, None] * qi - lam * pu))
    np.add.at(dQ, items, -2.0 * (err[:, None] * pu - lam * qi))
    return dP, dQ


def model_objective(m: FactorModel, d: Dataset) -> float:
    users, items = _aligned_indices(m, d)
    return objective(m.P, m.Q, users, items, d.ratings, m.hyperparams.lam)


def train(d: Dataset, h: Hyperparams) -> tuple[FactorModel, list[float]]:
    """init_model followed by h.epochs SGD passes.

    Returns the model and the objective value after each epoch.
    """
    m = init_model(d, h)
    P, Q = m.P.copy(), m.Q.copy()
    trace = []
    for epoch in range(h.epochs):
        _run_epoch(P, Q, d.users, d.items, d.ratings, h, epoch)
        trace.append(objective(P, Q, d.users, d.items, d.ratings, h.lam))
    return dataclasses.replace(m, P=P, Q=Q, epochs_trained=h.epochs), trace


def clamp(x):
    return np.clip(x, RATING_MIN, RATING_MAX)


def predict(m: FactorModel, user_vector: np.ndarray, item: int) -> float:
    """Clamped inner-product estimate for champion ``item``."""
    return float(clamp(m.Q[m.item_index(item)] @ np.asarray(user_vector, dtype=np.float64)))


def predict_all(m: FactorModel, user_vector: np.ndarray) -> np.ndarray:
    """Clamped estimates for every item, in dense item order."""
    return clamp(m.Q @ np.asarray(user_vector, dtype=np.float64))


def fold_in_objective(Qp: np.ndarray, r: np.ndarray, p: np.ndarray, reg: float) -> float:
    e = r - Qp @ p
    return float(e @ e + reg * (p @ p))


def fold_in(m: FactorModel, profile: Sequence[tuple[int, float]], reg: float | None = None) -> np.ndarray:
    """User vector minimizing sum (r - q_i.p)^2 + reg * |p|^2 with Q fixed.

    With ``reg == 0`` and fewer ratings than factors the minimizer is not
    unique; the minimum-norm one is returned.
    """
    if not profile:
        raise ModelError("empty profile")
    reg = m.hyperparams.fold_in_reg if reg is None else reg
    Qp = m.Q[[m.item_index(c) for c, _ in profile]]
    r = np.array([float(v) for _, v in profile])
    if reg > 0:
        A = Qp.T @ Qp + reg * np.eye(m.f)
        return np.linalg.solve(A, Qp.T @ r)
    return np.linalg.lstsq(Qp, r, rcond=None)[0]


# -- persistence -------------------------------------------------------------
#
# Layout (all integers little-endian):
#   8 bytes   magic b"CHRECMF\0"
#   u32       format_version
#   u64       header length H
#   H bytes   UTF-8 JSON header (sorted keys)
#   n_items   int64 item ids
#   n_items*f float64 Q, row-major
#   n_users*f float64 P, row-major
#   32 bytes  SHA-256 of everything above


def _header(m: FactorModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "f": m.f,
        "n_users": len(m.user_ids),
        "n_items": len(m.item_ids),
        "hyperparams": dataclasses.asdict(m.hyperparams),
        "seed": m.hyperparams.seed,
        "epochs_trained": m.epochs_trained,
        "user_ids": list(m.user_ids),
    }


def dumps_model(m: FactorModel) -> bytes:
    header = json.dumps(_header(m), sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(
        [
            _MAGIC,
            struct.pack("<IQ", FORMAT_VERSION, len(header)),
            header,
            np.asarray(m.item_ids, dtype="<i8").tobytes(),
            np.ascontiguousarray(m.Q, dtype="<f8").tobytes(),
            np.ascontiguousarray(m.P, dtype="<f8").tobytes(),
        ]
    )
    return body + hashlib.sha256(body).digest()


def loads_model(blob: bytes) -> FactorModel:
    if len(blob) < len(_MAGIC) + 12 + 32 or blob[: len(_MAGIC)] != _MAGIC:
        raise ModelFormatError("not a model file (bad magic or too short)")
    version, hlen = struct.unpack_from("<IQ", blob, len(_MAGIC))
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version} (expected {FORMAT_VERSION})")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ModelFormatError("model file is truncated or corrupt (checksum mismatch)")
    pos = len(_MAGIC) + 12
    try:
        header = json.loads(body[pos : pos + hlen])
        f, n_users, n_items = header["f"], header["n_users"], header["n_items"]
        hp = Hyperparams(**header["hyperparams"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ModelFormatError(f"bad model header: {exc}") from None
    pos += hlen
    expected = pos + 8 * (n_items + n_items * f + n_users * f)
    if expected != len(body):
        raise ModelFormatError(f"model payload size {len(body)} != expected {expected}")
    item_ids = np.frombuffer(body, "<i8", n_items, pos)
    pos += 8 * n_items
    Q = np.frombuffer(body, "<f8", n_items * f, pos).reshape(n_items, f).astype(np.float64)
    pos += 8 * n_items * f
    P = np.frombuffer(body, "<f8", n_users * f, pos).reshape(n_users, f).astype(np.float64)
    return FactorModel(
        P=P,
        Q=Q,
        hyperparams=hp,
        user_ids=tuple(header["user_ids"]),
        item_ids=tuple(int(c) for c in item_ids),
        epochs_trained=header["epochs_trained"],
    )


def save_model(m: FactorModel, path: str | PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_model(m))


def load_model(path: str | PathLike) -> FactorModel:
    with open(path, "rb") as fh:
        return loads_model(fh.read())
