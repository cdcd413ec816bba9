"""Small fully-connected networks with hand-rolled backprop and Adam.

The layer algebra is fixed (identity input layer, dense hidden layers with a
scalar activation, dense output layer), so reverse-mode differentiation is
written out explicitly instead of pulling in an autodiff framework. Decision
networks use a sigmoid output mapping into (0,1); regression networks use the
identity.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NetworkConfig",
    "NetworkParams",
    "InputScaler",
    "TrainedNet",
    "TrainSchedule",
    "Adam",
    "init_params",
    "forward",
    "forward_cached",
    "backward",
    "round_off",
    "train_network",
    "config_hash",
    "pack_net",
    "unpack_net",
]

_NET_FORMAT_VERSION = 1


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# activation -> (value, derivative expressed through the activation value)
_ACTIVATIONS = {
    "tanh": (np.tanh, lambda a: 1.0 - a * a),
    "sigmoid": (_sigmoid, lambda a: a * (1.0 - a)),
    "relu": (lambda z: np.maximum(z, 0.0), lambda a: (a > 0.0).astype(float)),
    "identity": (lambda z: z, lambda a: np.ones_like(a)),
}


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    hidden: tuple = (30, 30, 30)
    output_dim: int = 1
    hidden_activation: str = "tanh"
    output_activation: str = "sigmoid"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        for name in (self.hidden_activation, self.output_activation):
            if name not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {name!r}")

    @property
    def layer_sizes(self) -> tuple:
        return (self.input_dim, *self.hidden, self.output_dim)


@dataclass
class NetworkParams:
    """Weight matrices (fan_in, fan_out) and bias vectors per dense layer."""

    weights: list
    biases: list

    def copy(self) -> "NetworkParams":
        return NetworkParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def check_shapes(self, cfg: NetworkConfig) -> None:
        sizes = cfg.layer_sizes
        if len(self.weights) != len(sizes) - 1:
            raise ValueError("layer count mismatch")
        for ell, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            if self.weights[ell].shape != (n_in, n_out) or self.biases[ell].shape != (n_out,):
                raise ValueError(f"shape mismatch in layer {ell}")


def init_params(cfg: NetworkConfig, rng: np.random.Generator) -> NetworkParams:
    """Biases zero, weights i.i.d. normal scaled by 1/sqrt(fan_in)."""
    weights, biases = [], []
    sizes = cfg.layer_sizes
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.standard_normal((n_in, n_out)) / np.sqrt(n_in))
        biases.append(np.zeros(n_out))
    return NetworkParams(weights, biases)


def forward(params: NetworkParams, cfg: NetworkConfig, x: np.ndarray) -> np.ndarray:
    out, _ = forward_cached(params, cfg, x, keep_cache=False)
    return out


def forward_cached(params: NetworkParams, cfg: NetworkConfig, x: np.ndarray, keep_cache: bool = True):
    """Batched forward pass; x has shape (m, input_dim)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != cfg.input_dim:
        raise ValueError(f"expected input of shape (m, {cfg.input_dim}), got {x.shape}")
    acts = [x] if keep_cache else None
    a = x
    last = len(params.weights) - 1
    for ell, (w, b) in enumerate(zip(params.weights, params.biases)):
        name = cfg.output_activation if ell == last else cfg.hidden_activation
        a = _ACTIVATIONS[name][0](a @ w + b)
        if keep_cache:
            acts.append(a)
    return a, acts


def backward(params: NetworkParams, cfg: NetworkConfig, acts: list, grad_out: np.ndarray):
    """Gradients of sum_batch loss given dL/d(output); returns [(dW, db), ...]."""
    grads = [None] * len(params.weights)
    last = len(params.weights) - 1
    delta = grad_out
    for ell in range(last, -1, -1):
        name = cfg.output_activation if ell == last else cfg.hidden_activation
        delta = delta * _ACTIVATIONS[name][1](acts[ell + 1])
        grads[ell] = (acts[ell].T @ delta, delta.sum(axis=0))
        if ell > 0:
            delta = delta @ params.weights[ell].T
    return grads


def round_off(p: np.ndarray) -> np.ndarray:
    """Component-wise binary decision: 1 where the probability is >= 0.5."""
    return np.asarray(p) >= 0.5


@dataclass
class InputScaler:
    """Per-feature affine standardisation frozen at training time."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "InputScaler":
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        return cls(mean, std)

    @classmethod
    def identity(cls, dim: int) -> "InputScaler":
        return cls(np.zeros(dim), np.ones(dim))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std


@dataclass
class TrainedNet:
    """A network plus its frozen input scaler and optional output de-scaling.

    ``y_mean``/``y_scale`` undo target standardisation for regression nets;
    they may be scalars or per-output vectors.
    """

    cfg: NetworkConfig
    params: NetworkParams
    x_scaler: InputScaler
    y_mean: np.ndarray | float = 0.0
    y_scale: np.ndarray | float = 1.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raw = forward(self.params, self.cfg, self.x_scaler.apply(x))
        if np.all(np.asarray(self.y_mean) == 0.0) and np.all(np.asarray(self.y_scale) == 1.0):
            return raw
        return raw * self.y_scale + self.y_mean


@dataclass(frozen=True)
class TrainSchedule:
    """Mini-batch schedule with step-wise geometric learning-rate decay.

    The learning rate starts at ``lr_start`` and steps down every
    ``decay_every`` batches in equal log-space steps, reaching ``lr_end`` on
    the final segment.
    """

    batch_size: int = 4096
    n_batches: int = 600
    lr_start: float = 1e-2
    lr_end: float = 1e-6
    decay_every: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr_start <= 0 or self.lr_end <= 0 or self.lr_end > self.lr_start:
            raise ValueError("need 0 < lr_end <= lr_start")
        if self.batch_size < 1 or self.n_batches < 1 or self.decay_every < 1:
            raise ValueError("batch_size, n_batches and decay_every must be >= 1")

    def validate_for(self, n_rows: int) -> None:
        if n_rows % self.batch_size != 0:
            raise ValueError(f"batch_size {self.batch_size} does not divide the training set size {n_rows}")

    def lr(self, batch_index: int) -> float:
        n_segments = -(-self.n_batches // self.decay_every)
        if n_segments <= 1:
            return self.lr_start
        k = min(batch_index // self.decay_every, n_segments - 1)
        return self.lr_start * (self.lr_end / self.lr_start) ** (k / (n_segments - 1))


class Adam:
    """Adam state for one NetworkParams instance; updates in place."""

    def __init__(self, params: NetworkParams, schedule: TrainSchedule):
        self.schedule = schedule
        self.t = 0
        self.m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(params.weights, params.biases)]
        self.v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(params.weights, params.biases)]

    def step(self, params: NetworkParams, grads, lr: float) -> None:
        s = self.schedule
        self.t += 1
        c1 = 1.0 - s.beta1**self.t
        c2 = 1.0 - s.beta2**self.t
        for ell, (dw, db) in enumerate(grads):
            if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
                raise FloatingPointError(f"non-finite gradient in layer {ell} at step {self.t}")
            mw, mb = self.m[ell]
            vw, vb = self.v[ell]
            mw *= s.beta1
            mw += (1 - s.beta1) * dw
            mb *= s.beta1
            mb += (1 - s.beta1) * db
            vw *= s.beta2
            vw += (1 - s.beta2) * dw * dw
            vb *= s.beta2
            vb += (1 - s.beta2) * db * db
            params.weights[ell] -= lr * (mw / c1) / (np.sqrt(vw / c2) + s.eps)
            params.biases[ell] -= lr * (mb / c1) / (np.sqrt(vb / c2) + s.eps)


def train_network(
    params: NetworkParams,
    cfg: NetworkConfig,
    inputs: np.ndarray,
    loss_grad,
    schedule: TrainSchedule,
    rng: np.random.Generator,
) -> float:
    """Mini-batch optimisation loop shared by all training objectives.

    ``loss_grad(rows, outputs)`` returns (batch loss, dL/d(outputs)); rows are
    the indices of the current batch so callers can gather auxiliary arrays.
    Returns the loss of the final batch. Aborts on non-finite losses.
    """
    n_rows = inputs.shape[0]
    params.check_shapes(cfg)
    opt = Adam(params, schedule)
    per_epoch = max(1, -(-n_rows // schedule.batch_size))
    order = None
    last_loss = np.nan
    for step in range(schedule.n_batches):
        pos = step % per_epoch
        if pos == 0:
            order = rng.permutation(n_rows)
        rows = order[pos * schedule.batch_size : min((pos + 1) * schedule.batch_size, n_rows)]
        out, acts = forward_cached(params, cfg, inputs[rows])
        loss, grad_out = loss_grad(rows, out)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite training loss at batch {step}")
        grads = backward(params, cfg, acts, grad_out)
        opt.step(params, grads, schedule.lr(step))
        last_loss = float(loss)
    return last_loss


def config_hash(cfg: NetworkConfig) -> str:
    payload = json.dumps(
        {
            "input_dim": cfg.input_dim,
            "hidden": list(cfg.hidden),
            "output_dim": cfg.output_dim,
            "hidden_activation": cfg.hidden_activation,
            "output_activation": cfg.output_activation,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def pack_net(net: TrainedNet, prefix: str) -> dict:
    """Flatten a trained net into named arrays for .npz serialisation."""
    arrays = {
        f"{prefix}meta": np.array(
            json.dumps(
                {
                    "format_version": _NET_FORMAT_VERSION,
                    "config": {
                        "input_dim": net.cfg.input_dim,
                        "hidden": list(net.cfg.hidden),
                        "output_dim": net.cfg.output_dim,
                        "hidden_activation": net.cfg.hidden_activation,
                        "output_activation": net.cfg.output_activation,
                    },
                    "config_hash": config_hash(net.cfg),
                    "n_layers": len(net.params.weights),
                }
            )
        ),
        f"{prefix}x_mean": net.x_scaler.mean,
        f"{prefix}x_std": net.x_scaler.std,
        f"{prefix}y_mean": np.asarray(net.y_mean, dtype=float),
        f"{prefix}y_scale": np.asarray(net.y_scale, dtype=float),
    }
    for ell, (w, b) in enumerate(zip(net.params.weights, net.params.biases)):
        arrays[f"{prefix}w{ell}"] = w
        arrays[f"{prefix}b{ell}"] = b
    return arrays


def unpack_net(arrays, prefix: str) -> TrainedNet:
    meta = json.loads(str(arrays[f"{prefix}meta"]))
    if meta["format_version"] != _NET_FORMAT_VERSION:
        raise ValueError(f"unsupported network format version {meta['format_version']}")
    cfg = NetworkConfig(
        input_dim=meta["config"]["input_dim"],
        hidden=tuple(meta["config"]["hidden"]),
        output_dim=meta["config"]["output_dim"],
        hidden_activation=meta["config"]["hidden_activation"],
        output_activation=meta["config"]["output_activation"],
    )
    if meta["config_hash"] != config_hash(cfg):
        raise ValueError("network config hash mismatch")
    params = NetworkParams(
        [np.asarray(arrays[f"{prefix}w{ell}"]) for ell in range(meta["n_layers"])],
        [np.asarray(arrays[f"{prefix}b{ell}"]) for ell in range(meta["n_layers"])],
    )
    scaler = InputScaler(np.asarray(arrays[f"{prefix}x_mean"]), np.asarray(arrays[f"{prefix}x_std"]))
    y_mean = np.asarray(arrays[f"{prefix}y_mean"])
    y_scale = np.asarray(arrays[f"{prefix}y_scale"])
    if y_mean.ndim == 0:
        y_mean, y_scale = float(y_mean), float(y_scale)
    return TrainedNet(cfg, params, scaler, y_mean=y_mean, y_scale=y_scale)
