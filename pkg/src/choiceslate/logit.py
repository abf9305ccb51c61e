"""Per-topic binary logit baseline.

Topic j's probability depends only on topic j's own features

    [1, r_j, E_inf_j, E_T[j, 0], ..., E_T[j, T-1]]

so there are no cross-topic weights at all.  Each topic is fitted
separately by minimising mean BCE plus a small L2 ridge with Newton steps
and a backtracking (Armijo) line search.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    ConfigError,
    DimensionMismatchError,
    InputError,
    TruncatedFileError,
)
from .net import sigmoid
from .pipeline import InputBatch

LOGIT_MAGIC = b"BLGT1"


@dataclass(frozen=True)
class LogitConfig:
    ridge: float = 1e-4
    tol: float = 1e-9
    max_iter: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.ridge < 0 or self.tol <= 0 or self.max_iter < 1:
            raise ConfigError("ridge >= 0, tol > 0 and max_iter >= 1 required")


@dataclass
class LogitParams:
    weights: np.ndarray  # (J, T + 3)
    degenerate: tuple[bool, ...] = ()
    iterations: tuple[int, ...] = ()
    final_loss: tuple[float, ...] = field(default=())

    @property
    def num_topics(self) -> int:
        return self.weights.shape[0]

    @property
    def history_length(self) -> int:
        return self.weights.shape[1] - 3


def topic_features(R, E_T, E_inf) -> np.ndarray:
    """Stack per-topic feature rows; output shape (..., J, T + 3)."""
    R = np.asarray(R, dtype=np.float64)
    E_T = np.asarray(E_T, dtype=np.float64)
    E_inf = np.asarray(E_inf, dtype=np.float64)
    return np.concatenate([np.ones_like(R)[..., None], R[..., None], E_inf[..., None], E_T], axis=-1)


def _objective(w, X, y, ridge):
    s = X @ w
    # mean of log(1 + e^s) - y*s, computed stably
    return float(np.mean(np.logaddexp(0.0, s) - y * s) + 0.5 * ridge * w @ w)


def _fit_topic(X, y, w, cfg: LogitConfig):
    n = len(y)
    eye = np.eye(X.shape[1])
    f = _objective(w, X, y, cfg.ridge)
    it = 0
    for it in range(1, cfg.max_iter + 1):
        p = sigmoid(X @ w)
        grad = X.T @ (p - y) / n + cfg.ridge * w
        if np.linalg.norm(grad) < cfg.tol:
            break
        hess = (X * (p * (1 - p))[:, None]).T @ X / n + cfg.ridge * eye
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = -grad
        slope = grad @ step
        alpha = 1.0
        while True:
            w_new = w + alpha * step
            f_new = _objective(w_new, X, y, cfg.ridge)
            if f_new <= f + 1e-4 * alpha * slope or alpha < 1e-12:
                break
            alpha *= 0.5
        w, f = w_new, f_new
    return w, it, f


def train_logit(data: InputBatch, cfg: LogitConfig = LogitConfig()) -> LogitParams:
    if len(data) == 0:
        raise InputError("training dataset is empty")
    X = topic_features(data.R, data.E_T, data.E_inf)  # (N, J, D)
    J, D = X.shape[1], X.shape[2]
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    w0 = rng.normal(scale=0.01, size=(J, D))
    weights = np.empty((J, D))
    degenerate, iters, losses = [], [], []
    for j in range(J):
        y = data.y[:, j]
        degenerate.append(bool(y.min() == y.max()))
        weights[j], it, f = _fit_topic(X[:, j, :], y, w0[j], cfg)
        iters.append(it)
        losses.append(f)
    return LogitParams(weights, tuple(degenerate), tuple(iters), tuple(losses))


def predict_logit(params: LogitParams, R, E_T, E_inf) -> np.ndarray:
    """p_j = sigmoid(w_j . features_j); works on a single instance or a batch."""
    X = topic_features(R, E_T, E_inf)
    if X.shape[-2:] != params.weights.shape:
        raise InputError(f"feature shape {X.shape[-2:]} does not match weights {params.weights.shape}")
    return sigmoid(np.einsum("...jd,jd->...j", X, params.weights))


class LogitModel:
    name = "binary_logit"

    def __init__(self, params: LogitParams):
        self.params = params

    @property
    def num_topics(self) -> int:
        return self.params.num_topics

    def predict(self, R, E_T, E_inf) -> np.ndarray:
        return predict_logit(self.params, R, E_T, E_inf)

    def predict_many(self, Rs, E_T, E_inf) -> np.ndarray:
        Rs = np.asarray(Rs, dtype=np.float64)
        M = Rs.shape[0]
        return predict_logit(
            self.params,
            Rs,
            np.broadcast_to(np.asarray(E_T, dtype=np.float64), (M,) + np.shape(E_T)),
            np.broadcast_to(np.asarray(E_inf, dtype=np.float64), (M,) + np.shape(E_inf)),
        )

    def predict_batch(self, data: InputBatch) -> np.ndarray:
        return predict_logit(self.params, data.R, data.E_T, data.E_inf)


def save_logit(params: LogitParams, path: str | Path) -> None:
    """``BLGT1`` magic, u32 J, u32 T, then J x (T+3) little-endian float64."""
    J, D = params.weights.shape
    Path(path).write_bytes(LOGIT_MAGIC + struct.pack("<2I", J, D - 3) + params.weights.astype("<f8").tobytes())


def load_logit(path: str | Path, expected_J: int | None = None, expected_T: int | None = None) -> LogitParams:
    path = Path(path)
    if not path.exists():
        raise InputError(f"logit checkpoint not found: {path}")
    buf = path.read_bytes()
    if buf[:5] != LOGIT_MAGIC:
        raise BadMagicError(f"{path}: bad magic bytes {buf[:5]!r}")
    if len(buf) < 13:
        raise TruncatedFileError(f"{path}: header is truncated")
    J, T = struct.unpack_from("<2I", buf, 5)
    if (expected_J is not None and J != expected_J) or (expected_T is not None and T != expected_T):
        raise DimensionMismatchError(f"{path}: J={J}, T={T} do not match J={expected_J}, T={expected_T}")
    if len(buf) != 13 + 8 * J * (T + 3):
        raise TruncatedFileError(f"{path}: expected {13 + 8 * J * (T + 3)} bytes, found {len(buf)}")
    w = np.frombuffer(buf, "<f8", J * (T + 3), 13).astype(np.float64).reshape(J, T + 3)
    return LogitParams(w)
