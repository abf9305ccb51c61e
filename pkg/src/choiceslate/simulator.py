"""Synthetic engagement logs from a known choice process.

For user i in period t, each topic is exposed independently with its
exposure rate.  Given the exposure vector r, the probability that an exposed
topic j is engaged with is

    q_j = sigmoid(base_ij + sum_k recency_k * e_{i,t-1-k,j} + sum_a S[a, j] * r_a)

where base_i mixes a few archetype preference vectors plus user noise, and
S is the substitution matrix (zero diagonal).  The default S makes topics in
the same block of ``group_size`` cannibalise each other, an effect a
per-topic model cannot see.  Unexposed topics are never engaged.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, InputError
from .evaluation import auc
from .net import sigmoid
from .pipeline import EngagementTensor, InteractionLog, PeriodGrid

TRUTH_MAGIC = b"ENGP1"


@dataclass(frozen=True)
class SimConfig:
    num_users: int = 2000
    num_topics: int = 30
    num_periods: int = 14
    period_length_seconds: int = 12 * 3600
    origin_timestamp: int = 0
    exposure_rate: float | tuple[float, ...] = 0.4
    num_archetypes: int = 4
    archetype_concentration: float = 0.5
    archetype_scale: float = 1.0
    base_offset: float = -0.5
    user_noise: float = 0.5
    recency_weights: tuple[float, ...] = (0.8, 0.4, 0.2, 0.1)
    substitution_strength: float = 1.0
    group_size: int = 5
    substitution: tuple[tuple[float, ...], ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.num_users < 1 or self.num_topics < 1 or self.num_periods < 1:
            raise ConfigError("num_users, num_topics and num_periods must be positive")
        rates = self.exposure_rates
        if rates.shape != (self.num_topics,) or rates.min() < 0 or rates.max() > 1:
            raise ConfigError("exposure_rate must be in [0, 1], scalar or one per topic")
        S = self.substitution_matrix
        if S.shape != (self.num_topics, self.num_topics):
            raise ConfigError("substitution matrix must be J x J")
        if np.any(np.diag(S) != 0):
            raise ConfigError("substitution matrix diagonal must be zero")
        if self.group_size < 1 or self.num_archetypes < 1:
            raise ConfigError("group_size and num_archetypes must be positive")

    @property
    def exposure_rates(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.exposure_rate, dtype=np.float64), (self.num_topics,)).copy()

    @property
    def substitution_matrix(self) -> np.ndarray:
        """``S[a, b]``: effect of showing topic a on topic b's engagement logit."""
        if self.substitution is not None:
            return np.asarray(self.substitution, dtype=np.float64)
        group = np.arange(self.num_topics) // self.group_size
        S = -self.substitution_strength * (group[:, None] == group[None, :]).astype(np.float64)
        np.fill_diagonal(S, 0.0)
        return S + 0.0  # normalise -0.0

    @property
    def grid(self) -> PeriodGrid:
        return PeriodGrid(self.period_length_seconds, self.num_periods, self.origin_timestamp)


@dataclass
class GroundTruth:
    """True engagement probabilities given exposure, plus the generating parameters."""

    q: np.ndarray  # (I, P, J), engagement probability if exposed
    base: np.ndarray  # (I, J)
    substitution: np.ndarray  # (J, J)
    recency: np.ndarray  # (T,)
    user_ids: tuple[str, ...]

    def aligned(self, user_ids: Sequence[str]) -> "GroundTruth":
        """Reorder/restrict to the given user ids (e.g. a filtered tensor)."""
        index = {u: k for k, u in enumerate(self.user_ids)}
        try:
            idx = np.array([index[u] for u in user_ids], dtype=np.int64)
        except KeyError as exc:
            raise InputError(f"user {exc.args[0]!r} is missing from the ground truth") from None
        return GroundTruth(self.q[idx], self.base[idx], self.substitution, self.recency, tuple(user_ids))

    def bind(self, user: int) -> "UserTruth":
        return UserTruth(self.base[user], self.substitution, self.recency)


@dataclass
class UserTruth:
    """Ground-truth predictor for one user, usable by the slate optimizer."""

    base: np.ndarray
    substitution: np.ndarray
    recency: np.ndarray
    name = "ground_truth"

    def predict_many(self, Rs, E_T, E_inf=None) -> np.ndarray:
        Rs = np.asarray(Rs, dtype=np.float64)
        E_T = np.asarray(E_T, dtype=np.float64)
        k = len(self.recency)
        if E_T.shape[-1] < k:
            raise InputError(f"history has {E_T.shape[-1]} periods; the truth needs {k}")
        q = sigmoid(self.base + E_T[..., :k] @ self.recency + Rs @ self.substitution)
        return Rs * q

    def predict(self, R, E_T, E_inf=None) -> np.ndarray:
        return self.predict_many(np.asarray(R, dtype=np.float64)[None], E_T)[0]


def generate_log(cfg: SimConfig) -> tuple[InteractionLog, GroundTruth]:
    """Simulate the log and keep the true probabilities.

    Every user draws from their own generator spawned from ``cfg.seed``, so
    the output does not depend on how users are processed.
    """
    I, J, P = cfg.num_users, cfg.num_topics, cfg.num_periods
    root = np.random.SeedSequence(cfg.seed)
    children = root.spawn(I + 1)
    g = np.random.Generator(np.random.PCG64(children[0]))
    archetypes = cfg.base_offset + cfg.archetype_scale * g.standard_normal((cfg.num_archetypes, J))
    S = cfg.substitution_matrix
    rec = np.asarray(cfg.recency_weights, dtype=np.float64)
    rates = cfg.exposure_rates
    half = max(cfg.period_length_seconds // 2, 1)

    base = np.empty((I, J))
    q_all = np.zeros((I, P, J))
    cols = {k: [] for k in ("user_id", "tweet_id", "topic", "tweet_ts", "retweet_ts")}
    for i in range(I):
        rng = np.random.Generator(np.random.PCG64(children[i + 1]))
        mix = rng.dirichlet(np.full(cfg.num_archetypes, cfg.archetype_concentration))
        base[i] = mix @ archetypes + cfg.user_noise * rng.standard_normal(J)
        u_expose = rng.random((P, J))
        u_engage = rng.random((P, J))
        publish = rng.integers(0, half, size=(P, J))
        delay = rng.integers(1, half, size=(P, J)) if half > 1 else np.ones((P, J), dtype=np.int64)

        r = (u_expose < rates).astype(np.float64)
        e = np.zeros((P, J))
        for t in range(P):
            hist = np.zeros(J)
            for k, w in enumerate(rec):
                if t - 1 - k >= 0:
                    hist += w * e[t - 1 - k]
            q = sigmoid(base[i] + hist + r[t] @ S)
            if np.any(q <= 0.0) or np.any(q >= 1.0):
                raise ConfigError(f"engagement probability saturated for user {i}, period {t}; reduce logit scales")
            q_all[i, t] = q
            e[t] = r[t] * (u_engage[t] < q)

        uid = f"u{i:05d}"
        for t, j in zip(*np.nonzero(r)):
            ts = cfg.origin_timestamp + t * cfg.period_length_seconds + int(publish[t, j])
            cols["user_id"].append(uid)
            cols["tweet_id"].append(f"{uid}-{t}-{j}")
            cols["topic"].append(int(j))
            cols["tweet_ts"].append(ts)
            cols["retweet_ts"].append(float(ts + delay[t, j]) if e[t, j] else np.nan)

    log = InteractionLog(
        np.array(cols["user_id"], dtype=str),
        np.array(cols["tweet_id"], dtype=str),
        np.array(cols["topic"], dtype=np.int64),
        np.array(cols["tweet_ts"], dtype=np.int64),
        {"retweet": np.array(cols["retweet_ts"], dtype=np.float64)},
    )
    truth = GroundTruth(q_all, base, S, rec, tuple(f"u{i:05d}" for i in range(I)))
    return log, truth


def ground_truth_auc_bound(truth: GroundTruth, tensor: EngagementTensor, periods: Sequence[int] | None = None) -> float:
    """AUC of the true engagement probabilities against the sampled labels."""
    truth = truth.aligned(tensor.user_ids) if truth.user_ids != tensor.user_ids else truth
    if periods is None:
        periods = range(tensor.num_periods)
    periods = list(periods)
    scores = tensor.r[:, periods, :] * truth.q[:, periods, :]
    return auc(scores.ravel(), tensor.e[:, periods, :].ravel())


def write_truth(path: str | Path, truth: GroundTruth) -> None:
    """Ground-truth sidecar in the ENGT1 conventions.

    Layout (little-endian): magic ``ENGP1``, u32 I, J, P, T; float64 q
    (I, P, J), base (I, J), substitution (J, J), recency (T,), row-major;
    u32 byte count and newline-joined UTF-8 user ids.
    """
    I, P, J = truth.q.shape
    ids = "\n".join(truth.user_ids).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(TRUTH_MAGIC)
        fh.write(struct.pack("<4I", I, J, P, len(truth.recency)))
        for arr in (truth.q, truth.base, truth.substitution, truth.recency):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(ids)))
        fh.write(ids)


def read_truth(path: str | Path) -> GroundTruth:
    path = Path(path)
    if not path.exists():
        raise InputError(f"ground-truth file not found: {path}")
    buf = path.read_bytes()
    if buf[:5] != TRUTH_MAGIC:
        raise InputError(f"{path}: not a ground-truth sidecar")
    try:
        I, J, P, T = struct.unpack_from("<4I", buf, 5)
        pos = 21
        arrays = []
        for shape in ((I, P, J), (I, J), (J, J), (T,)):
            n = int(np.prod(shape))
            arrays.append(np.frombuffer(buf, "<f8", n, pos).astype(np.float64).reshape(shape))
            pos += 8 * n
        (n_ids,) = struct.unpack_from("<I", buf, pos)
        ids = buf[pos + 4 : pos + 4 + n_ids].decode("utf-8")
    except (struct.error, ValueError) as exc:
        raise InputError(f"{path}: truncated ground-truth sidecar") from exc
    return GroundTruth(*arrays, tuple(ids.split("\n")) if I else ())
