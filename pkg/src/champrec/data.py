"""Data at the boundary: dataset CSV files, the champion catalog, the
synthetic population generator and the mastery API client.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence
from urllib.parse import quote

import httpx
import numpy as np

from .ratings import DataError, MasteryRecord

logger = logging.getLogger(__name__)

CSV_HEADER = ("player_id", "champion_id", "cmp")
API_KEY_ENV = "RIOT_API_KEY"


# -- dataset CSV ---------------------------------------------------------------


def _int_field(value: str, name: str, lineno: int) -> int:
    try:
        v = int(value)
    except ValueError:
        raise DataError(f"line {lineno}: {name} {value!r} is not an integer") from None
    if v < 0:
        raise DataError(f"line {lineno}: {name} must be non-negative, got {v}")
    return v


def parse_csv(text: str) -> list[MasteryRecord]:
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header is None or tuple(header) != CSV_HEADER:
        raise DataError(f"line 1: expected header {','.join(CSV_HEADER)}, got {header}")
    records = []
    seen: set[tuple[str, int]] = set()
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise DataError(f"line {lineno}: expected 3 fields, got {len(row)}")
        player = row[0]
        if not player:
            raise DataError(f"line {lineno}: empty player_id")
        champ = _int_field(row[1], "champion_id", lineno)
        cmp = _int_field(row[2], "cmp", lineno)
        if (player, champ) in seen:
            raise DataError(f"line {lineno}: duplicate record for player {player!r}, champion {champ}")
        seen.add((player, champ))
        records.append(MasteryRecord(player, champ, cmp))
    return records


def format_csv(records: Iterable[MasteryRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow((r.player_id, r.champion_id, r.cmp))
    return buf.getvalue()


def load_csv(path: str | os.PathLike) -> list[MasteryRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_csv(fh.read())


def save_csv(records: Iterable[MasteryRecord], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_csv(records))


# -- champion catalog --------------------------------------------------------


@dataclass(frozen=True)
class ChampionCatalog:
    entries: Mapping[int, str]

    def name(self, champion_id: int) -> str | None:
        return self.entries.get(champion_id)

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def generic(cls, ids: Iterable[int]) -> "ChampionCatalog":
        return cls({int(i): f"Champion {int(i)}" for i in ids})


def load_catalog(path: str | os.PathLike) -> ChampionCatalog:
    """Read a ``champion_id,name`` CSV (with header) into a catalog."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"champion catalog not found: {path}")
    entries: dict[int, str] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or [h.strip() for h in header] != ["champion_id", "name"]:
            raise DataError(f"{path}: expected header champion_id,name")
        for lineno, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields")
            cid = _int_field(row[0], "champion_id", lineno)
            name = row[1].strip()
            if not name:
                raise DataError(f"{path}:{lineno}: empty champion name")
            if cid in entries:
                raise DataError(f"{path}:{lineno}: duplicate champion id {cid}")
            entries[cid] = name
    return ChampionCatalog(entries)


# -- synthetic population ----------------------------------------------------


@dataclass(frozen=True)
class Archetype:
    """A taste group: the champions its players touch and how hard."""

    pool: tuple[int, ...]
    intensity: tuple[float, ...]

    def __post_init__(self):
        if not self.pool:
            raise ValueError("archetype pool must be non-empty")
        if len(self.pool) != len(self.intensity):
            raise ValueError("pool and intensity lengths differ")
        if any(not x > 0 for x in self.intensity):
            raise ValueError("intensities must be > 0")


@dataclass(frozen=True)
class SynthConfig:
    """Poisson mastery population.

    Every user gets one archetype (drawn with ``weights``) and an activity
    level ``exp(N(activity_mu, activity_sigma^2))``; mastery for each pool
    champion is Poisson with mean activity * intensity.
    """

    n_users: int
    archetypes: tuple[Archetype, ...]
    activity_mu: float = 0.0
    activity_sigma: float = 0.5
    seed: int = 0
    weights: tuple[float, ...] | None = None
    player_prefix: str = "u"


def generate_synthetic(cfg: SynthConfig) -> list[MasteryRecord]:
    rng = np.random.default_rng(cfg.seed)
    k = len(cfg.archetypes)
    w = np.full(k, 1.0 / k) if cfg.weights is None else np.asarray(cfg.weights) / np.sum(cfg.weights)
    kinds = rng.choice(k, size=cfg.n_users, p=w)
    activity = rng.lognormal(cfg.activity_mu, cfg.activity_sigma, size=cfg.n_users)
    width = len(str(max(cfg.n_users - 1, 0)))
    records = []
    for u in range(cfg.n_users):
        arch = cfg.archetypes[kinds[u]]
        cmp = rng.poisson(activity[u] * np.asarray(arch.intensity))
        pid = f"{cfg.player_prefix}{u:0{width}d}"
        records.extend(
            MasteryRecord(pid, int(c), int(x)) for c, x in zip(arch.pool, cmp) if x > 0
        )
    return records


def archetype_of(cfg: SynthConfig) -> list[int]:
    """Archetype index of each generated user, replaying the config's draws."""
    rng = np.random.default_rng(cfg.seed)
    k = len(cfg.archetypes)
    w = np.full(k, 1.0 / k) if cfg.weights is None else np.asarray(cfg.weights) / np.sum(cfg.weights)
    return [int(a) for a in rng.choice(k, size=cfg.n_users, p=w)]


def two_archetype_config(
    n_users: int = 300,
    n_items: int = 40,
    *,
    seed: int = 0,
    scale: float = 2000.0,
    cross: float = 0.0,
) -> SynthConfig:
    """Two disjoint-taste groups splitting champions 0..n_items-1 in half.

    Intensity decays geometrically along each half so profiles have a
    clear ranking. ``cross > 0`` adds the other half to each pool at that
    relative intensity.
    """
    half = n_items // 2
    a, b = tuple(range(half)), tuple(range(half, n_items))
    decay = tuple(scale * 0.9**j for j in range(half))
    rest = n_items - half

    def make(own, other):
        if cross <= 0:
            return Archetype(own, decay[: len(own)])
        return Archetype(own + other, decay[: len(own)] + tuple(scale * cross for _ in other))

    return SynthConfig(n_users=n_users, archetypes=(make(a, b), make(b, a[:rest])), seed=seed)


def skewed_config(
    n_users: int = 500,
    n_items: int = 60,
    *,
    n_popular: int = 6,
    boost: float = 10.0,
    taste: float = 30.0,
    n_groups: int = 6,
    base: float = 1.0,
    activity_sigma: float = 0.5,
    seed: int = 0,
) -> SynthConfig:
    """Popularity-skewed population over champions 0..n_items-1.

    Every pool holds every champion. The first ``n_popular`` champions get
    ``boost`` times the base intensity for all players; the remaining
    champions are split into ``n_groups`` taste groups, played at
    ``taste`` times base by their own group and at base by everyone else.
    """
    popular = tuple(range(n_popular))
    niche = list(range(n_popular, n_items))
    groups = [set(niche[g::n_groups]) for g in range(n_groups)]
    archetypes = []
    for own in groups:
        intensity = [base * boost] * n_popular + [base * (taste if c in own else 1.0) for c in niche]
        archetypes.append(Archetype(popular + tuple(niche), tuple(intensity)))
    return SynthConfig(
        n_users=n_users, archetypes=tuple(archetypes), seed=seed, activity_sigma=activity_sigma
    )


# -- mastery API client ------------------------------------------------------


class ApiError(RuntimeError):
    pass


class NotFoundError(ApiError):
    pass


class RateLimitError(ApiError):
    pass


class ProtocolError(ApiError):
    pass


@dataclass
class ApiConfig:
    base_url: str = "https://na1.api.riotgames.com"
    region: str = "na1"
    mode: str = "fixture"
    fixture_dir: str | None = None
    max_requests: int = 20
    window_seconds: float = 1.0
    timeout: float = 10.0
    max_retries: int = 4
    backoff_base: float = 1.0
    backoff_cap: float = 30.0
    api_key: str | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in ("live", "fixture"):
            raise ValueError(f"mode must be 'live' or 'fixture', got {self.mode!r}")

    def key(self) -> str:
        key = self.api_key or os.environ.get(API_KEY_ENV)
        if not key:
            raise ApiError(f"live mode needs an API key in ${API_KEY_ENV}")
        return key


class TokenBucket:
    """Allow at most ``capacity`` acquisitions per ``window`` seconds on average."""

    def __init__(
        self,
        capacity: int,
        window: float,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.capacity = float(capacity)
        self.rate = capacity / window
        self._tokens = float(capacity)
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> float:
        """Take one token, sleeping if none is available. Returns seconds slept."""
        with self._lock:
            now = self._clock()
            self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
            self._last = now
            waited = 0.0
            if self._tokens < 1.0:
                waited = (1.0 - self._tokens) / self.rate
                self._sleep(waited)
                self._tokens = 1.0
                self._last = self._clock()
            self._tokens -= 1.0
            return waited


class MasteryClient:
    """Summoner lookup + champion-mastery retrieval, live or from fixtures.

    Fixture mode reads ``<fixture_dir>/<summoner>.json``, a JSON array of
    mastery entries in the wire format, and never touches the network.
    """

    SUMMONER_PATH = "/lol/summoner/v4/summoners/by-name/{name}"
    MASTERY_PATH = "/lol/champion-mastery/v4/champion-masteries/by-summoner/{summoner_id}"

    def __init__(
        self,
        cfg: ApiConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.cfg = cfg
        self._transport = transport
        self._sleep = sleep
        self._bucket = TokenBucket(cfg.max_requests, cfg.window_seconds, clock=clock, sleep=sleep)
        self._client: httpx.Client | None = None
        self.calls = 0

    def _http(self) -> httpx.Client:
        if self._client is None:
            self._client = httpx.Client(
                base_url=self.cfg.base_url,
                headers={"X-Riot-Token": self.cfg.key()},
                timeout=self.cfg.timeout,
                transport=self._transport,
            )
        return self._client

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _get_json(self, path: str):
        client = self._http()
        for attempt in range(self.cfg.max_retries + 1):
            self._bucket.acquire()
            self.calls += 1
            resp = client.get(path)
            if resp.status_code == 429:
                if attempt == self.cfg.max_retries:
                    break
                delay = min(self.cfg.backoff_cap, self.cfg.backoff_base * 2**attempt)
                retry_after = resp.headers.get("Retry-After")
                if retry_after is not None:
                    try:
                        delay = min(self.cfg.backoff_cap, max(delay, float(retry_after)))
                    except ValueError:
                        pass
                logger.warning("throttled on %s, retrying in %.1fs", path, delay)
                self._sleep(delay)
                continue
            if resp.status_code == 404:
                raise NotFoundError(f"not found: {path}")
            if resp.status_code >= 400:
                raise ApiError(f"HTTP {resp.status_code} for {path}")
            try:
                return resp.json()
            except ValueError:
                raise ProtocolError(f"non-JSON response for {path}") from None
        raise RateLimitError(f"still throttled after {self.cfg.max_retries} retries: {path}")

    def _fixture_entries(self, summoner_name: str) -> list:
        if not self.cfg.fixture_dir:
            raise ApiError("fixture mode needs fixture_dir")
        path = Path(self.cfg.fixture_dir) / f"{summoner_name}.json"
        if not path.is_file():
            raise NotFoundError(f"no fixture for summoner {summoner_name!r} ({path})")
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise ProtocolError(f"{path}: invalid JSON ({exc})") from None

    def mastery_entries(self, summoner_name: str) -> list:
        if self.cfg.mode == "fixture":
            return self._fixture_entries(summoner_name)
        summoner = self._get_json(self.SUMMONER_PATH.format(name=quote(summoner_name, safe="")))
        if not isinstance(summoner, dict) or "id" not in summoner:
            raise ProtocolError("summoner response lacks 'id'")
        return self._get_json(self.MASTERY_PATH.format(summoner_id=quote(str(summoner["id"]), safe="")))

    def fetch(self, summoner_name: str) -> list[MasteryRecord]:
        return entries_to_records(summoner_name, self.mastery_entries(summoner_name))


def entries_to_records(player_id: str, entries: Sequence) -> list[MasteryRecord]:
    """Wire entries -> records; only ``championId`` and ``championPoints`` are read."""
    if not isinstance(entries, list):
        raise ProtocolError("mastery response is not a list")
    out = []
    for k, e in enumerate(entries):
        try:
            cid, pts = e["championId"], e["championPoints"]
        except (TypeError, KeyError):
            raise ProtocolError(f"mastery entry {k} lacks championId/championPoints") from None
        if not isinstance(cid, int) or not isinstance(pts, int) or cid < 0 or pts < 0:
            raise ProtocolError(f"mastery entry {k} has invalid values")
        out.append(MasteryRecord(player_id, cid, pts))
    return out


def records_to_entries(records: Iterable[MasteryRecord]) -> list[dict]:
    """Inverse of :func:`entries_to_records`, for writing fixtures."""
    return [{"championId": r.champion_id, "championPoints": r.cmp} for r in records]


def fetch_player_masteries(
    summoner_name: str, cfg: ApiConfig, transport: httpx.BaseTransport | None = None
) -> list[MasteryRecord]:
    with MasteryClient(cfg, transport=transport) as client:
        return client.fetch(summoner_name)
