"""Dense multi-head networks in plain numpy.

A network is a shared ReLU trunk followed by one small head per task. Students
use 2-way softmax heads, the teacher uses linear heads that emit Q-values.
Everything is float64 and single-threaded so runs are bit-reproducible.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _rng
from .errors import CacheError, ConfigError, NumericError, ShapeError


class Activation(str, Enum):
    RELU = "relu"
    SOFTMAX2 = "softmax2"
    IDENTITY = "identity"


LayerGrads = list  # list of (dW, db) tuples, one per layer


@dataclass
class DenseParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[Activation]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ShapeError("weights, biases and activations must have equal length")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ShapeError(f"layer {k}: weight {W.shape} and bias {b.shape} do not agree")
            if k > 0 and W.shape[1] != self.weights[k - 1].shape[0]:
                raise ShapeError(f"layer {k} input {W.shape[1]} != layer {k - 1} output")
        for k, act in enumerate(self.activations):
            if act is Activation.SOFTMAX2 and (k != len(self.activations) - 1 or self.weights[k].shape[0] != 2):
                raise ShapeError("softmax2 is only allowed on a final layer with 2 outputs")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def arrays(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def copy(self) -> DenseParams:
        return DenseParams(
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
        )


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    post: list[np.ndarray]

    @property
    def n(self) -> int:
        return self.inputs[0].shape[0]


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: DenseParams) -> AdamState:
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


@dataclass
class OptState:
    shared: AdamState
    heads: list[AdamState]


@dataclass(frozen=True)
class AdamWConfig:
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01


@dataclass
class MtlNetwork:
    shared: DenseParams
    heads: list[DenseParams]
    task_weights: np.ndarray
    opt_state: OptState

    def __post_init__(self):
        shapes = {tuple(W.shape for W in h.weights) for h in self.heads}
        if len(shapes) != 1:
            raise ShapeError("all heads must have identical shape")
        if self.heads[0].in_dim != self.hidden_dim:
            raise ShapeError("head input dim must equal trunk output dim")
        if self.task_weights.shape != (len(self.heads),):
            raise ShapeError("task_weights must have one entry per head")

    @property
    def n_tasks(self) -> int:
        return len(self.heads)

    @property
    def input_dim(self) -> int:
        return self.shared.in_dim

    @property
    def hidden_dim(self) -> int:
        return self.shared.out_dim

    def copy(self) -> MtlNetwork:
        return copy.deepcopy(self)

    def parameter_arrays(self) -> list[np.ndarray]:
        out = self.shared.arrays()
        for h in self.heads:
            out.extend(h.arrays())
        return out


@dataclass
class MtlCache:
    trunk: ForwardCache
    heads: list[ForwardCache]

    @property
    def n(self) -> int:
        return self.trunk.n


@dataclass
class Gradients:
    heads: dict[int, LayerGrads] = field(default_factory=dict)
    shared: LayerGrads | None = None
    scope: str = "both"


# -- initialization ---------------------------------------------------------

def _uniform_layer(rng, fan_in, fan_out, bound):
    W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
    return W, np.zeros(fan_out)


def mlp_init(
    trunk_dims,
    n_tasks: int,
    seed: int,
    head_activation: Activation = Activation.SOFTMAX2,
    head_out: int = 2,
    stream_key: int = 0,
) -> MtlNetwork:
    """Build a trunk ``trunk_dims[0] -> ... -> trunk_dims[-1]`` with ``n_tasks`` heads.

    Trunk layers are He-uniform, heads Xavier-uniform, biases zero. Task
    weights start at ``1/T``. ``stream_key`` separates networks that share a
    run seed (the student uses 0, the teacher 1).
    """
    dims = [int(d) for d in trunk_dims]
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ConfigError(f"trunk_dims needs at least an input and one hidden size, all > 0; got {trunk_dims}")
    if n_tasks < 1:
        raise ConfigError("n_tasks must be >= 1")
    rng = _rng.stream(seed, "init", stream_key)
    Ws, bs = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        W, b = _uniform_layer(rng, fan_in, fan_out, np.sqrt(6.0 / fan_in))
        Ws.append(W)
        bs.append(b)
    shared = DenseParams(Ws, bs, [Activation.RELU] * len(Ws))
    h = dims[-1]
    heads = []
    for _ in range(n_tasks):
        W, b = _uniform_layer(rng, h, head_out, np.sqrt(6.0 / (h + head_out)))
        heads.append(DenseParams([W], [b], [Activation(head_activation)]))
    opt = OptState(AdamState.zeros_like(shared), [AdamState.zeros_like(hd) for hd in heads])
    return MtlNetwork(shared, heads, np.full(n_tasks, 1.0 / n_tasks), opt)


# -- forward / backward -----------------------------------------------------

def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _activate(z, act):
    if act is Activation.RELU:
        return np.maximum(z, 0.0)
    if act is Activation.SOFTMAX2:
        return softmax(z)
    return z


def dense_forward(params: DenseParams, X: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.in_dim:
        raise ShapeError(f"expected input of width {params.in_dim}, got shape {X.shape}")
    cache = ForwardCache([], [], [])
    a = X
    for W, b, act in zip(params.weights, params.biases, params.activations):
        cache.inputs.append(a)
        z = a @ W.T + b
        a = _activate(z, act)
        cache.pre.append(z)
        cache.post.append(a)
    return a, cache


def dense_backward(params: DenseParams, cache: ForwardCache, d_out: np.ndarray) -> tuple[LayerGrads, np.ndarray]:
    """Backpropagate ``d_out`` (gradient w.r.t. the final activation).

    Returns per-layer ``(dW, db)`` and the gradient w.r.t. the layer input.
    """
    if len(cache.inputs) != params.n_layers:
        raise CacheError("cache layer count does not match network")
    if d_out.shape != cache.post[-1].shape:
        raise CacheError(f"output gradient {d_out.shape} does not match cached output {cache.post[-1].shape}")
    grads = [None] * params.n_layers
    da = d_out
    for k in reversed(range(params.n_layers)):
        W, act = params.weights[k], params.activations[k]
        if cache.inputs[k].shape[1] != W.shape[1]:
            raise CacheError(f"stale cache at layer {k}")
        if act is Activation.RELU:
            dz = da * (cache.pre[k] > 0)
        elif act is Activation.SOFTMAX2:
            A = cache.post[k]
            dz = A * (da - np.sum(da * A, axis=1, keepdims=True))
        else:
            dz = da
        grads[k] = (dz.T @ cache.inputs[k], dz.sum(axis=0))
        da = dz @ W
    return grads, da


def forward(net: MtlNetwork, X: np.ndarray) -> tuple[list[np.ndarray], MtlCache]:
    H, trunk_cache = dense_forward(net.shared, X)
    outs, head_caches = [], []
    for head in net.heads:
        P, c = dense_forward(head, H)
        outs.append(P)
        head_caches.append(c)
    return outs, MtlCache(trunk_cache, head_caches)


def backward(net: MtlNetwork, cache: MtlCache, dP, scope: str = "both") -> Gradients:
    """Analytic gradients for the loss whose output gradients are ``dP``.

    ``dP`` is a list with one entry per task (``None`` to skip a task) or a
    dict ``{task: array}``. Shared-trunk gradients are the plain sum of the
    per-task contributions, so callers pre-scale ``dP`` to weight tasks.
    """
    if scope not in ("head", "shared", "both"):
        raise ValueError(f"unknown scope {scope!r}")
    if not isinstance(dP, dict):
        dP = {t: g for t, g in enumerate(dP) if g is not None}
    if len(cache.heads) != net.n_tasks:
        raise CacheError("cache was produced by a network with a different task count")
    H = cache.trunk.post[-1]
    dH = np.zeros_like(H)
    out = Gradients(scope=scope)
    for t in sorted(dP):
        g, d_in = dense_backward(net.heads[t], cache.heads[t], np.asarray(dP[t], dtype=np.float64))
        if scope != "shared":
            out.heads[t] = g
        dH += d_in
    if scope != "head":
        out.shared, _ = dense_backward(net.shared, cache.trunk, dH)
    return out


# -- optimizer and helpers --------------------------------------------------

def adamw_step(
    params: DenseParams,
    grads: LayerGrads,
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> DenseParams:
    """One AdamW update applied in place to ``params`` and ``state``.

    Weight decay is decoupled: parameters shrink by ``lr * weight_decay``
    before the bias-corrected Adam step.
    """
    if lr < 0:
        raise ConfigError("learning rate must be non-negative")
    if len(grads) != params.n_layers:
        raise ShapeError("gradient layer count does not match parameters")
    for k, (dW, db) in enumerate(grads):
        if dW.shape != params.weights[k].shape or db.shape != params.biases[k].shape:
            raise ShapeError(f"gradient shape mismatch at layer {k}")
        if not (np.all(np.isfinite(dW)) and np.all(np.isfinite(db))):
            err = NumericError(f"non-finite gradient in layer {k}")
            err.layer = k
            raise err
    b1, b2 = betas
    state.step += 1
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    flat_grads = [g for pair in grads for g in pair]
    for i, (p, g) in enumerate(zip(params.arrays(), flat_grads)):
        p *= 1.0 - lr * weight_decay
        m, v = state.m[i], state.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params


def l2_norm(grads) -> float:
    """Euclidean norm over every entry of ``grads`` (arrays or (dW, db) pairs)."""
    total = 0.0
    for g in grads:
        parts = g if isinstance(g, tuple) else (g,)
        for a in parts:
            a = np.asarray(a, dtype=np.float64)
            total += float(np.dot(a.ravel(), a.ravel()))
    return float(np.sqrt(total))


def flatten_head(head: DenseParams) -> np.ndarray:
    if head.n_layers != 1 or head.out_dim != 2:
        raise ShapeError("flatten_head expects a single 2-neuron layer")
    return np.concatenate([head.weights[0].ravel(), head.biases[0]])


def unflatten_head(vec: np.ndarray, hidden_dim: int, activation: Activation = Activation.SOFTMAX2) -> DenseParams:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (2 * hidden_dim + 2,):
        raise ShapeError(f"expected vector of length {2 * hidden_dim + 2}, got {vec.shape}")
    W = vec[: 2 * hidden_dim].reshape(2, hidden_dim).copy()
    return DenseParams([W], [vec[2 * hidden_dim:].copy()], [Activation(activation)])
