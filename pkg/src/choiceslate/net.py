"""Choice-aware engagement network with hand-written backpropagation.

For one (user, period) instance with exposure vector R (J), recent history
E_T (J x T, newest column first) and lifetime frequencies E_inf (J):

    E_H   = leaky_relu(E_T @ w_time.T)               (J x H)
    R_bar = W_d.T @ W_d @ R                          tied-weight bottlenecks
    Einf_bar = W_inf.T @ W_inf @ E_inf
    EH_bar = W_H.T @ W_H @ E_H                       (each of the H columns)
    z     = [1, R, R_bar, E_inf, Einf_bar, E_H, EH_bar]    (J x K, K = 5 + 2H)
    p     = sigmoid(z @ theta_p)                     (J,)

``theta_p`` is shared by all topics.  Only the encoder matrices are stored;
decoders are always their transposes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import (
    BadMagicError,
    ConfigError,
    DimensionMismatchError,
    InputError,
    TruncatedFileError,
    VersionMismatchError,
)
from .pipeline import InputBatch, ModelInputs

PARAM_NAMES = ("w_time", "W_d", "W_inf", "W_H", "theta_p")
CLIP_EPS = 1e-7
CHECKPOINT_MAGIC = b"CAEM1"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    J: int
    T: int = 4
    H: int = 20
    L: int = 8
    leaky_slope: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.T < 1 or self.H < 1 or self.L < 1:
            raise ConfigError("T, H and L must all be >= 1")
        if self.L >= self.J:
            raise ConfigError(f"bottleneck width L={self.L} must be smaller than J={self.J}")
        if self.leaky_slope < 0:
            raise ConfigError("leaky_slope must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")

    @property
    def K(self) -> int:
        return 5 + 2 * self.H

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {
            "w_time": (self.H, self.T),
            "W_d": (self.L, self.J),
            "W_inf": (self.L, self.J),
            "W_H": (self.L, self.J),
            "theta_p": (self.K,),
        }


@dataclass
class ModelParams:
    cfg: ModelConfig
    weights: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    adam_step: int = 0

    def __getattr__(self, name):
        # expose weights as attributes: params.W_d etc.
        weights = self.__dict__.get("weights")
        if weights is not None and name in weights:
            return weights[name]
        raise AttributeError(name)

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.cfg,
            {k: v.copy() for k, v in self.weights.items()},
            {k: v.copy() for k, v in self.adam_m.items()},
            {k: v.copy() for k, v in self.adam_v.items()},
            self.adam_step,
        )


def init_scale(fan_in: int) -> float:
    return 1.0 / np.sqrt(fan_in)


def init_params(cfg: ModelConfig) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights from a PCG64 stream.

    Fan-in is T for the time filters, J for the bottleneck encoders and K for
    the output head.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, 0])))
    fan_in = {"w_time": cfg.T, "W_d": cfg.J, "W_inf": cfg.J, "W_H": cfg.J, "theta_p": cfg.K}
    weights = {}
    for name, shape in cfg.shapes().items():
        a = init_scale(fan_in[name])
        weights[name] = rng.uniform(-a, a, size=shape)
    zeros = {k: np.zeros_like(v) for k, v in weights.items()}
    return ModelParams(cfg, weights, zeros, {k: v.copy() for k, v in zeros.items()}, 0)


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x >= 0, x, slope * x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def time_filter(E_T: np.ndarray, params: ModelParams) -> np.ndarray:
    """Leaky-ReLU of each topic's history dotted with every filter.

    Accepts a single (J, T) history or a (B, J, T) stack.
    """
    cfg = params.cfg
    E_T = np.asarray(E_T, dtype=np.float64)
    if E_T.shape[-2:] != (cfg.J, cfg.T):
        raise InputError(f"history shape {E_T.shape} does not end in (J={cfg.J}, T={cfg.T})")
    return leaky_relu(E_T @ params.w_time.T, cfg.leaky_slope)


def bottleneck(x: np.ndarray, W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Encode with ``W`` (L x J) and decode with its transpose.

    ``x`` is a J-vector or a J x H matrix (each column encoded separately).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != W.shape[1]:
        raise InputError(f"bottleneck input has {x.shape[0]} rows, W expects {W.shape[1]}")
    code = W @ x
    return code, W.T @ code


@dataclass
class ForwardTrace:
    E_T: np.ndarray
    E_inf: np.ndarray
    R: np.ndarray
    pre_h: np.ndarray
    E_H: np.ndarray
    F_d: np.ndarray
    R_bar: np.ndarray
    F_inf: np.ndarray
    E_inf_bar: np.ndarray
    F_H: np.ndarray
    E_H_bar: np.ndarray
    z: np.ndarray
    logits: np.ndarray
    p: np.ndarray
    single: bool = False


def _as_arrays(inputs) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    if isinstance(inputs, InputBatch):
        return inputs.E_T, inputs.E_inf, inputs.R, False
    if isinstance(inputs, ModelInputs):
        return inputs.E_T[None], inputs.E_inf[None], inputs.R_next[None], True
    E_T, E_inf, R = inputs
    E_T = np.asarray(E_T, dtype=np.float64)
    if E_T.ndim == 2:
        return E_T[None], np.asarray(E_inf, dtype=np.float64)[None], np.asarray(R, dtype=np.float64)[None], True
    return E_T, np.asarray(E_inf, dtype=np.float64), np.asarray(R, dtype=np.float64), False


def forward(inputs, params: ModelParams) -> ForwardTrace:
    """Run the network on a ModelInputs, an InputBatch or an (E_T, E_inf, R) tuple."""
    cfg = params.cfg
    E_T, E_inf, R, single = _as_arrays(inputs)
    B = E_T.shape[0]
    if E_T.shape != (B, cfg.J, cfg.T) or E_inf.shape != (B, cfg.J) or R.shape != (B, cfg.J):
        raise InputError(f"input shapes {E_T.shape}, {E_inf.shape}, {R.shape} do not match J={cfg.J}, T={cfg.T}")
    for name, arr in (("E_T", E_T), ("E_inf", E_inf), ("R", R)):
        if np.isnan(arr).any():
            raise InputError(f"NaN in input {name}")

    W_d, W_inf, W_H = params.W_d, params.W_inf, params.W_H
    pre_h = E_T @ params.w_time.T
    E_H = leaky_relu(pre_h, cfg.leaky_slope)
    F_d = R @ W_d.T
    R_bar = F_d @ W_d
    F_inf = E_inf @ W_inf.T
    E_inf_bar = F_inf @ W_inf
    F_H = np.einsum("lj,bjh->blh", W_H, E_H)
    E_H_bar = np.einsum("lj,blh->bjh", W_H, F_H)
    z = np.concatenate(
        [np.ones((B, cfg.J, 1)), R[..., None], R_bar[..., None], E_inf[..., None], E_inf_bar[..., None], E_H, E_H_bar],
        axis=2,
    )
    logits = z @ params.theta_p
    p = sigmoid(logits)
    return ForwardTrace(E_T, E_inf, R, pre_h, E_H, F_d, R_bar, F_inf, E_inf_bar, F_H, E_H_bar, z, logits, p, single)


def clip_probs(p: np.ndarray) -> np.ndarray:
    return np.clip(p, CLIP_EPS, 1.0 - CLIP_EPS)


def bce_terms(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    pc = clip_probs(np.asarray(p, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    return -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))


def loss_bce(trace: ForwardTrace, y: np.ndarray) -> float:
    """Summed binary cross-entropy over topics (and instances, for a batch)."""
    y = np.asarray(y, dtype=np.float64).reshape(trace.p.shape)
    return float(bce_terms(trace.p, y).sum())


def _tied_grad(x, W, F, g):
    """Gradients of ``W.T @ W @ x`` given upstream ``g`` for a batch of vectors."""
    dF = g @ W.T
    dW = F.T @ g + dF.T @ x
    return dW, dF @ W


def backward(trace: ForwardTrace, y: np.ndarray, params: ModelParams) -> dict[str, np.ndarray]:
    """Exact gradients of :func:`loss_bce` with respect to every weight array."""
    cfg = params.cfg
    H = cfg.H
    y = np.asarray(y, dtype=np.float64).reshape(trace.p.shape)
    p = trace.p
    # the clipped loss is flat where clipping is active
    active = (p > CLIP_EPS) & (p < 1.0 - CLIP_EPS)
    dlogit = (p - y) * active
    theta = params.theta_p

    d_theta = np.einsum("bj,bjk->k", dlogit, trace.z)
    dz = dlogit[..., None] * theta

    dW_d, _ = _tied_grad(trace.R, params.W_d, trace.F_d, dz[..., 2])
    dW_inf, _ = _tied_grad(trace.E_inf, params.W_inf, trace.F_inf, dz[..., 4])

    g_bar = dz[..., 5 + H :]
    W_H = params.W_H
    dF_H = np.einsum("lj,bjh->blh", W_H, g_bar)
    dW_H = np.einsum("blh,bjh->lj", trace.F_H, g_bar) + np.einsum("blh,bjh->lj", dF_H, trace.E_H)
    dE_H = dz[..., 5 : 5 + H] + np.einsum("lj,blh->bjh", W_H, dF_H)
    dpre = dE_H * np.where(trace.pre_h >= 0, 1.0, cfg.leaky_slope)
    dw_time = np.einsum("bjt,bjh->ht", trace.E_T, dpre)

    return {"w_time": dw_time, "W_d": dW_d, "W_inf": dW_inf, "W_H": dW_H, "theta_p": d_theta}


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], adam: AdamConfig = AdamConfig()) -> ModelParams:
    """Bias-corrected Adam update, applied in place; returns ``params``."""
    params.adam_step += 1
    t = params.adam_step
    c1 = 1.0 - adam.beta1**t
    c2 = 1.0 - adam.beta2**t
    for name in PARAM_NAMES:
        g = grads[name]
        m = params.adam_m[name] = adam.beta1 * params.adam_m[name] + (1.0 - adam.beta1) * g
        v = params.adam_v[name] = adam.beta2 * params.adam_v[name] + (1.0 - adam.beta2) * g * g
        params.weights[name] = params.weights[name] - adam.lr * (m / c1) / (np.sqrt(v / c2) + adam.eps)
    return params


# --------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-5
    batch_size: int = 32
    epochs: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("lr must be positive, batch_size >= 1, epochs >= 0")

    @property
    def adam(self) -> AdamConfig:
        return AdamConfig(self.lr, self.beta1, self.beta2, self.eps)


@dataclass
class TrainResult:
    params: ModelParams
    curve: list[tuple[int, float, float]]
    initial_train_bce: float


def mean_instance_bce(params: ModelParams, data: InputBatch, chunk: int = 4096) -> float:
    total = 0.0
    for start in range(0, len(data), chunk):
        part = data.take(slice(start, start + chunk))
        total += loss_bce(forward(part, params), part.y)
    return total / len(data)


def train(
    data: InputBatch,
    cfg: ModelConfig,
    hyper: TrainConfig = TrainConfig(),
    valid: InputBatch | None = None,
    params: ModelParams | None = None,
    on_epoch: Callable[[int, float, float], None] | None = None,
) -> TrainResult:
    """Mini-batch Adam on the summed BCE.

    Batches are drawn from a fixed permutation per epoch seeded by
    ``cfg.seed``; the same inputs and seed give the same parameters.
    """
    if len(data) == 0:
        raise InputError("training dataset is empty")
    if data.num_topics != cfg.J or data.history_length != cfg.T:
        raise InputError(f"dataset has J={data.num_topics}, T={data.history_length}; model expects J={cfg.J}, T={cfg.T}")
    params = init_params(cfg) if params is None else params
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, 1])))
    adam = hyper.adam
    curve = []
    initial = mean_instance_bce(params, data)
    nan = float("nan")
    for epoch in range(1, hyper.epochs + 1):
        order = rng.permutation(len(data))
        for start in range(0, len(data), hyper.batch_size):
            batch = data.take(order[start : start + hyper.batch_size])
            trace = forward(batch, params)
            adam_step(params, backward(trace, batch.y, params), adam)
        train_bce = mean_instance_bce(params, data)
        valid_bce = mean_instance_bce(params, valid) if valid is not None and len(valid) else nan
        curve.append((epoch, train_bce, valid_bce))
        if on_epoch is not None:
            on_epoch(epoch, train_bce, valid_bce)
    return TrainResult(params, curve, initial)


def write_loss_curve(path: str | Path, curve) -> None:
    lines = [f"{epoch}\t{tr:.10g}\t{va:.10g}" for epoch, tr, va in curve]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# predictor wrapper


class EngagementNet:
    """Read-only predictor over trained parameters."""

    name = "choice_net"

    def __init__(self, params: ModelParams):
        self.params = params

    @property
    def num_topics(self) -> int:
        return self.params.cfg.J

    def predict(self, R, E_T, E_inf) -> np.ndarray:
        return forward((E_T, E_inf, R), self.params).p[0]

    def predict_many(self, Rs, E_T, E_inf) -> np.ndarray:
        """Probabilities for several candidate slates sharing one context."""
        Rs = np.asarray(Rs, dtype=np.float64)
        M = Rs.shape[0]
        E_T = np.broadcast_to(np.asarray(E_T, dtype=np.float64), (M,) + np.shape(E_T))
        E_inf = np.broadcast_to(np.asarray(E_inf, dtype=np.float64), (M,) + np.shape(E_inf))
        return forward((E_T, E_inf, Rs), self.params).p

    def predict_batch(self, data: InputBatch) -> np.ndarray:
        return forward(data, self.params).p


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(params: ModelParams, path: str | Path) -> None:
    """Write a ``CAEM1`` checkpoint.

    Layout (little-endian): magic, u32 version, u32 J, T, H, L, f64
    leaky_slope, u64 seed, then float64 arrays w_time, W_d, W_inf, W_H,
    theta_p (row-major), then u64 Adam step, first moments and second
    moments in the same array order.
    """
    cfg = params.cfg
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<5I", CHECKPOINT_VERSION, cfg.J, cfg.T, cfg.H, cfg.L),
        struct.pack("<dQ", cfg.leaky_slope, cfg.seed),
    ]
    parts += [params.weights[n].astype("<f8").tobytes() for n in PARAM_NAMES]
    parts.append(struct.pack("<Q", params.adam_step))
    parts += [params.adam_m[n].astype("<f8").tobytes() for n in PARAM_NAMES]
    parts += [params.adam_v[n].astype("<f8").tobytes() for n in PARAM_NAMES]
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path, expected: ModelConfig | None = None) -> ModelParams:
    """Read a checkpoint, optionally checking its dimensions against ``expected``.

    Raises BadMagicError, VersionMismatchError, DimensionMismatchError or
    TruncatedFileError.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"checkpoint not found: {path}")
    buf = path.read_bytes()
    if buf[:5] != CHECKPOINT_MAGIC:
        raise BadMagicError(f"{path}: bad magic bytes {buf[:5]!r}")
    header = 5 + 20 + 16
    if len(buf) < header:
        raise TruncatedFileError(f"{path}: header is truncated")
    version, J, T, H, L = struct.unpack_from("<5I", buf, 5)
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {CHECKPOINT_VERSION}")
    slope, seed = struct.unpack_from("<dQ", buf, 25)
    if expected is not None and (J, T, H, L) != (expected.J, expected.T, expected.H, expected.L):
        raise DimensionMismatchError(
            f"{path}: checkpoint dims J={J},T={T},H={H},L={L} do not match "
            f"J={expected.J},T={expected.T},H={expected.H},L={expected.L}"
        )
    try:
        cfg = ModelConfig(J=J, T=T, H=H, L=L, leaky_slope=slope, seed=seed)
    except ConfigError as exc:
        raise DimensionMismatchError(f"{path}: invalid dimensions: {exc}") from exc
    shapes = cfg.shapes()
    n_weights = sum(int(np.prod(s)) for s in shapes.values())
    if len(buf) != header + 8 * (3 * n_weights + 1):
        raise TruncatedFileError(f"{path}: expected {header + 8 * (3 * n_weights + 1)} bytes, found {len(buf)}")

    pos = header

    def read_block():
        nonlocal pos
        out = {}
        for name in PARAM_NAMES:
            n = int(np.prod(shapes[name]))
            out[name] = np.frombuffer(buf, "<f8", n, pos).astype(np.float64).reshape(shapes[name])
            pos += 8 * n
        return out

    weights = read_block()
    (step,) = struct.unpack_from("<Q", buf, pos)
    pos += 8
    m = read_block()
    v = read_block()
    return ModelParams(cfg, weights, m, v, step)
