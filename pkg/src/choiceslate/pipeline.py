"""Interaction logs -> per-period engagement tensors -> model inputs.

Log rows are tweets shown on a user's timeline.  A topic counts as exposed
(``r = 1``) in a period when at least one tweet of that topic was published
for the user in that period, and as engaged (``e = 1``) when at least one of
those tweets carries a timestamp for the selected engagement kind.  The
engagement is credited to the tweet's publication period.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import InputError

ENGAGEMENT_KINDS = ("like", "reply", "retweet", "rt_comment")
LOG_COLUMNS = ("user_id", "tweet_id", "topic", "tweet_ts", "like_ts", "reply_ts", "retweet_ts", "rt_comment_ts")
DATASET_MAGIC = b"ENGT1"


@dataclass
class InteractionLog:
    """Columnar log; missing engagement timestamps are NaN."""

    user_id: np.ndarray
    tweet_id: np.ndarray
    topic: np.ndarray
    tweet_ts: np.ndarray
    engagement_ts: dict[str, np.ndarray]

    def __post_init__(self):
        n = len(self.user_id)
        self.user_id = np.asarray(self.user_id, dtype=str)
        self.tweet_id = np.asarray(self.tweet_id, dtype=str)
        self.topic = np.asarray(self.topic, dtype=np.int64)
        self.tweet_ts = np.asarray(self.tweet_ts, dtype=np.int64)
        eng = {}
        for kind in ENGAGEMENT_KINDS:
            col = self.engagement_ts.get(kind)
            eng[kind] = np.full(n, np.nan) if col is None else np.asarray(col, dtype=np.float64)
        self.engagement_ts = eng
        for name in ("tweet_id", "topic", "tweet_ts"):
            if len(getattr(self, name)) != n:
                raise InputError(f"log column {name} has the wrong length")
        for kind, col in eng.items():
            if len(col) != n:
                raise InputError(f"log column {kind}_ts has the wrong length")
            bad = np.flatnonzero(col < self.tweet_ts)
            if bad.size:
                raise InputError(f"record {self.tweet_id[bad[0]]!r}: {kind} timestamp precedes the tweet")

    def __len__(self):
        return len(self.user_id)

    def subset(self, mask) -> "InteractionLog":
        return InteractionLog(
            self.user_id[mask],
            self.tweet_id[mask],
            self.topic[mask],
            self.tweet_ts[mask],
            {k: v[mask] for k, v in self.engagement_ts.items()},
        )


@dataclass(frozen=True)
class PeriodGrid:
    period_length_seconds: int = 12 * 3600
    num_periods: int = 14
    origin_timestamp: int = 0

    def validate(self, T: int) -> None:
        if self.period_length_seconds <= 0:
            raise InputError("period length must be positive")
        if self.num_periods < T + 2:
            raise InputError(f"need at least T+2={T + 2} periods, got {self.num_periods}")

    @property
    def end_timestamp(self) -> int:
        return self.origin_timestamp + self.num_periods * self.period_length_seconds


@dataclass
class EngagementTensor:
    """Binary (user, period, topic) arrays ``e`` (engaged) and ``r`` (exposed)."""

    e: np.ndarray
    r: np.ndarray
    user_ids: tuple[str, ...]

    @property
    def num_users(self) -> int:
        return self.e.shape[0]

    @property
    def num_periods(self) -> int:
        return self.e.shape[1]

    @property
    def num_topics(self) -> int:
        return self.e.shape[2]


@dataclass(frozen=True)
class ModelInputs:
    E_T: np.ndarray  # (J, T), column 0 is the newest period
    E_inf: np.ndarray  # (J,)
    R_next: np.ndarray  # (J,)
    y: np.ndarray  # (J,)
    user: int = -1
    target_period: int = -1


@dataclass
class InputBatch:
    """A stack of :class:`ModelInputs` along a leading instance axis."""

    E_T: np.ndarray  # (N, J, T)
    E_inf: np.ndarray  # (N, J)
    R: np.ndarray  # (N, J)
    y: np.ndarray  # (N, J)
    users: np.ndarray  # (N,)
    periods: np.ndarray  # (N,)

    def __len__(self):
        return len(self.y)

    def __getitem__(self, i: int) -> ModelInputs:
        return ModelInputs(self.E_T[i], self.E_inf[i], self.R[i], self.y[i], int(self.users[i]), int(self.periods[i]))

    def __iter__(self) -> Iterator[ModelInputs]:
        return (self[i] for i in range(len(self)))

    @property
    def num_topics(self) -> int:
        return self.y.shape[1]

    @property
    def history_length(self) -> int:
        return self.E_T.shape[2]

    def take(self, idx) -> "InputBatch":
        return InputBatch(self.E_T[idx], self.E_inf[idx], self.R[idx], self.y[idx], self.users[idx], self.periods[idx])

    @classmethod
    def concat(cls, batches: Sequence["InputBatch"]) -> "InputBatch":
        if not batches:
            raise InputError("nothing to concatenate")
        return cls(*(np.concatenate([getattr(b, f) for b in batches]) for f in ("E_T", "E_inf", "R", "y", "users", "periods")))


# --------------------------------------------------------------------------
# log I/O


def read_log(path: str | Path) -> InteractionLog:
    """Read the tab-separated log; the first line must be the column header."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"log file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or tuple(lines[0].split("\t")) != LOG_COLUMNS:
        raise InputError(f"{path}: header must be {chr(9).join(LOG_COLUMNS)!r}")
    cols: list[list[str]] = [[] for _ in LOG_COLUMNS]
    for lineno, line in enumerate(lines[1:], 2):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != len(LOG_COLUMNS):
            raise InputError(f"{path}:{lineno}: expected {len(LOG_COLUMNS)} fields, got {len(fields)}")
        for col, val in zip(cols, fields):
            col.append(val)
    try:
        eng = {kind: np.array([float(v) if v else np.nan for v in col]) for kind, col in zip(ENGAGEMENT_KINDS, cols[4:])}
        return InteractionLog(
            np.array(cols[0], dtype=str),
            np.array(cols[1], dtype=str),
            np.array([int(v) for v in cols[2]], dtype=np.int64),
            np.array([int(v) for v in cols[3]], dtype=np.int64),
            eng,
        )
    except ValueError as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"{path}: {exc}") from exc


def write_log(path: str | Path, log: InteractionLog) -> None:
    def fmt(x):
        return "" if math.isnan(x) else str(int(x))

    out = ["\t".join(LOG_COLUMNS)]
    eng = [log.engagement_ts[k].tolist() for k in ENGAGEMENT_KINDS]
    for n in range(len(log)):
        row = [log.user_id[n], log.tweet_id[n], str(log.topic[n]), str(log.tweet_ts[n])]
        row += [fmt(col[n]) for col in eng]
        out.append("\t".join(row))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def filter_users(log: InteractionLog, min_tweets_per_user: int) -> InteractionLog:
    """Drop users with fewer than ``min_tweets_per_user`` log rows."""
    if min_tweets_per_user <= 1:
        return log
    users, inverse, counts = np.unique(log.user_id, return_inverse=True, return_counts=True)
    return log.subset(counts[inverse] >= min_tweets_per_user)


# --------------------------------------------------------------------------
# tensors


def split_periods(
    log: InteractionLog,
    grid: PeriodGrid,
    num_topics: int | None = None,
    kind: str = "retweet",
) -> EngagementTensor:
    if kind not in ENGAGEMENT_KINDS:
        raise InputError(f"unknown engagement kind {kind!r}; choose from {ENGAGEMENT_KINDS}")
    if num_topics is None:
        num_topics = int(log.topic.max()) + 1 if len(log) else 0
    bad = np.flatnonzero((log.topic < 0) | (log.topic >= num_topics))
    if bad.size:
        raise InputError(f"record {log.tweet_id[bad[0]]!r}: topic {log.topic[bad[0]]} outside [0, {num_topics})")
    offset = log.tweet_ts - grid.origin_timestamp
    bad = np.flatnonzero((offset < 0) | (log.tweet_ts >= grid.end_timestamp))
    if bad.size:
        raise InputError(f"record {log.tweet_id[bad[0]]!r}: timestamp {log.tweet_ts[bad[0]]} outside the period grid")

    user_ids, user_idx = np.unique(log.user_id, return_inverse=True)
    period = offset // grid.period_length_seconds
    shape = (len(user_ids), grid.num_periods, num_topics)
    r = np.zeros(shape, dtype=np.uint8)
    e = np.zeros(shape, dtype=np.uint8)
    r[user_idx, period, log.topic] = 1
    engaged = ~np.isnan(log.engagement_ts[kind])
    e[user_idx[engaged], period[engaged], log.topic[engaged]] = 1
    return EngagementTensor(e, r, tuple(str(u) for u in user_ids))


@dataclass(frozen=True)
class ActiveState:
    record: int
    start: int
    end: int


def label_active_states(log: InteractionLog, kind: str = "retweet") -> list[ActiveState]:
    """Interval from publication to engagement for every engaged record."""
    ts = log.engagement_ts[kind]
    return [ActiveState(int(n), int(log.tweet_ts[n]), int(ts[n])) for n in np.flatnonzero(~np.isnan(ts))]


def build_model_inputs(tensor: EngagementTensor, T: int, target_period: int) -> InputBatch:
    """One instance per user predicting ``target_period`` from earlier periods."""
    if T < 1:
        raise InputError("T must be >= 1")
    if target_period < T:
        raise InputError(f"target period {target_period} has fewer than T={T} periods of history")
    if target_period >= tensor.num_periods:
        raise InputError(f"target period {target_period} beyond the last period {tensor.num_periods - 1}")
    t = target_period
    e = tensor.e
    E_T = e[:, t - T : t, :][:, ::-1, :].transpose(0, 2, 1).astype(np.float64)
    E_inf = e[:, :t, :].sum(axis=1) / t
    n = tensor.num_users
    return InputBatch(
        np.ascontiguousarray(E_T),
        E_inf,
        tensor.r[:, t, :].astype(np.float64),
        e[:, t, :].astype(np.float64),
        np.arange(n),
        np.full(n, t),
    )


def build_all_inputs(tensor: EngagementTensor, T: int) -> dict[int, InputBatch]:
    return {t: build_model_inputs(tensor, T, t) for t in range(T, tensor.num_periods)}


def split_counts(n_periods: int, ratios: Sequence[float] = (0.8, 0.1, 0.1)) -> tuple[int, int, int]:
    if n_periods < 3:
        raise InputError(f"need at least 3 eligible target periods, got {n_periods}")
    total = sum(ratios)
    n_valid = max(1, math.floor(n_periods * ratios[1] / total + 0.5))
    n_test = max(1, math.floor(n_periods * ratios[2] / total + 0.5))
    n_train = n_periods - n_valid - n_test
    if n_train < 1:
        n_train, n_valid, n_test = n_periods - 2, 1, 1
    return n_train, n_valid, n_test


def split_train_valid_test(
    inputs: Mapping[int, InputBatch], ratios: Sequence[float] = (0.8, 0.1, 0.1)
) -> tuple[InputBatch, InputBatch, InputBatch]:
    """Chronological split: earliest target periods train, latest test."""
    periods = sorted(inputs)
    n_train, n_valid, _ = split_counts(len(periods), ratios)
    groups = periods[:n_train], periods[n_train : n_train + n_valid], periods[n_train + n_valid :]
    return tuple(InputBatch.concat([inputs[p] for p in g]) for g in groups)


# --------------------------------------------------------------------------
# binary dataset container


def write_dataset(path: str | Path, tensor: EngagementTensor, T: int) -> None:
    """Write the ``ENGT1`` container.

    Layout (little-endian): magic, u32 I, J, T, P; packed bits of ``e`` then
    ``r`` in (user, period, topic) row-major order; float64 frequency
    vectors for each user and each target period T..P-1; u32 byte count and
    newline-joined UTF-8 user ids.
    """
    I, P, J = tensor.e.shape
    freq = np.stack([tensor.e[:, :t, :].sum(axis=1) / t for t in range(T, P)], axis=1) if P > T else np.zeros((I, 0, J))
    ids = "\n".join(tensor.user_ids).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<4I", I, J, T, P))
        fh.write(np.packbits(tensor.e.ravel(), bitorder="little").tobytes())
        fh.write(np.packbits(tensor.r.ravel(), bitorder="little").tobytes())
        fh.write(freq.astype("<f8").tobytes())
        fh.write(struct.pack("<I", len(ids)))
        fh.write(ids)


def read_dataset(path: str | Path) -> tuple[EngagementTensor, int]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"dataset file not found: {path}")
    buf = path.read_bytes()
    if buf[:5] != DATASET_MAGIC:
        raise InputError(f"{path}: not an ENGT1 dataset")
    try:
        I, J, T, P = struct.unpack_from("<4I", buf, 5)
        pos = 5 + 16
        n_bits = I * P * J
        n_bytes = (n_bits + 7) // 8
        arrays = []
        for _ in range(2):
            bits = np.unpackbits(np.frombuffer(buf, np.uint8, n_bytes, pos), count=n_bits, bitorder="little")
            arrays.append(bits.reshape(I, P, J))
            pos += n_bytes
        pos += 8 * I * max(P - T, 0) * J
        (n_ids,) = struct.unpack_from("<I", buf, pos)
        ids = buf[pos + 4 : pos + 4 + n_ids].decode("utf-8")
        if len(buf) != pos + 4 + n_ids:
            raise InputError(f"{path}: unexpected trailing or missing bytes")
    except (struct.error, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"{path}: truncated dataset") from exc
    user_ids = tuple(ids.split("\n")) if I else ()
    return EngagementTensor(arrays[0], arrays[1], user_ids), T
