"""Dense Q-network in plain numpy: forward pass, squared-error gradients
restricted to the chosen-action outputs, an Adam optimizer, and a checkpoint
container with a bit-exact round trip.

Everything is float64.  At the sizes used here (an 8 or 9 wide input, three
hidden layers of 128, seven outputs) this is fast enough, and 64-bit
determinism makes seed-replay and finite-difference verification exact.

Parameters live in one flat vector; the per-layer weight and bias arrays
are row-major views into it, in layer order (W1, b1, W2, b2, ...).  The
optimizer updates the flat vector in a handful of whole-network vector
operations, which is what keeps the per-step cost down at these tiny layer
sizes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

HIDDEN_DIMS = (128, 128, 128)
DEFAULT_LR = 1e-5

_MAGIC = b"COEXCPM-MLP"
_FORMAT_VERSION = 1


class NonFiniteGradientError(RuntimeError):
    """Raised by optimizer_step when a gradient contains NaN or Inf."""


def _layer_views(flat: np.ndarray, dims) -> tuple:
    weights, biases = [], []
    pos = 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(flat[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out))
        pos += fan_in * fan_out
        biases.append(flat[pos:pos + fan_out])
        pos += fan_out
    assert pos == flat.size
    return weights, biases


def _param_count(dims) -> int:
    return sum(i * o + o for i, o in zip(dims[:-1], dims[1:]))


@dataclass
class MlpParams:
    """Weights/biases of an MLP with rectifier hidden layers and identity
    output.  ``dims`` is the full chain, e.g. (9, 128, 128, 128, 7);
    ``weights``/``biases`` are views into ``flat``."""

    dims: tuple
    flat: np.ndarray = field(repr=False)
    weights: list = field(repr=False)
    biases: list = field(repr=False)

    @classmethod
    def from_flat(cls, dims, flat: np.ndarray) -> "MlpParams":
        dims = tuple(int(d) for d in dims)
        if flat.size != _param_count(dims):
            raise ValueError("flat size does not match dims")
        weights, biases = _layer_views(flat, dims)
        return cls(dims=dims, flat=flat, weights=weights, biases=biases)


@dataclass
class Grads:
    """Gradient structure mirroring MlpParams' flat layout."""

    flat: np.ndarray = field(repr=False)
    d_weights: list = field(repr=False)
    d_biases: list = field(repr=False)
    loss: float = 0.0


def grads_like(params: MlpParams) -> Grads:
    flat = np.zeros_like(params.flat)
    dw, db = _layer_views(flat, params.dims)
    return Grads(flat=flat, d_weights=dw, d_biases=db)


def init_mlp(dims: Sequence[int], rng: np.random.Generator) -> MlpParams:
    """Fan-in scaled uniform initialization, biases zero."""
    dims = tuple(int(d) for d in dims)
    params = MlpParams.from_flat(dims, np.zeros(_param_count(dims)))
    for w in params.weights:
        limit = np.sqrt(6.0 / w.shape[0])
        w[:] = rng.uniform(-limit, limit, size=w.shape)
    return params


def q_network_params(input_dim: int, n_actions: int,
                     rng: np.random.Generator) -> MlpParams:
    return init_mlp((input_dim, *HIDDEN_DIMS, n_actions), rng)


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Evaluate the network.  Accepts a single input vector or a batch
    (rows are samples); the output shape follows the input shape."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != params.dims[0]:
        raise ValueError(f"input dim {h.shape[1]} != {params.dims[0]}")
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i != last:
            np.maximum(h, 0.0, out=h)
    return h[0] if single else h


def _forward_cached(params, x):
    acts = [x]
    last = len(params.weights) - 1
    h = x
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i != last:
            np.maximum(h, 0.0, out=h)
        acts.append(h)
    return acts


def squared_loss(params: MlpParams, xs: np.ndarray, actions: np.ndarray,
                 targets: np.ndarray) -> float:
    """Mean squared error between targets and the chosen-action outputs."""
    q = forward(params, np.atleast_2d(xs))
    chosen = q[np.arange(len(actions)), actions]
    return float(np.mean((targets - chosen) ** 2))


def grad_squared_loss(params: MlpParams, xs: np.ndarray, actions: np.ndarray,
                      targets: np.ndarray, out: Optional[Grads] = None) -> Grads:
    """Backpropagate the mean squared error over a batch.

    Only the output selected by each sample's action carries error; the
    other outputs contribute nothing, matching a Q-learning regression
    target on the taken action.  ``out`` may supply a preallocated
    gradient structure to fill.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    actions = np.asarray(actions, dtype=np.intp)
    targets = np.asarray(targets, dtype=np.float64)
    if len(xs) == 0:
        raise ValueError("batch must be nonempty")
    grads = out if out is not None else grads_like(params)
    acts = _forward_cached(params, xs)
    batch = len(xs)
    final = acts[-1]
    chosen = final[np.arange(batch), actions]
    grads.loss = float(np.mean((targets - chosen) ** 2))

    delta = np.zeros_like(final)
    delta[np.arange(batch), actions] = 2.0 * (chosen - targets) / batch
    for i in range(len(params.weights) - 1, -1, -1):
        np.matmul(acts[i].T, delta, out=grads.d_weights[i])
        delta.sum(axis=0, out=grads.d_biases[i])
        if i > 0:
            delta = (delta @ params.weights[i].T) * (acts[i] > 0)
    return grads


@dataclass
class AdamState:
    """First/second moment accumulators with bias correction, flat like
    the parameters they update."""

    lr: float = DEFAULT_LR
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)
    _tmp: np.ndarray = field(default=None, repr=False)


def adam_init(params: MlpParams, lr: float = DEFAULT_LR) -> AdamState:
    return AdamState(lr=lr, m=np.zeros_like(params.flat),
                     v=np.zeros_like(params.flat),
                     _tmp=np.empty_like(params.flat))


def optimizer_step(params: MlpParams, grads: Grads, opt: AdamState) -> MlpParams:
    """One Adam update, in place.  Raises NonFiniteGradientError on NaN or
    Inf gradients (the training-halt signal)."""
    g = grads.flat
    # The sum over a gradient vector is finite iff every element is.
    if not np.isfinite(g.sum()):
        raise NonFiniteGradientError("non-finite gradient")
    opt.step += 1
    c1 = 1.0 - opt.beta1 ** opt.step
    # Fold both bias corrections into the step size; identical to the
    # textbook update up to eps scaling.
    c2_sqrt = np.sqrt(1.0 - opt.beta2 ** opt.step)
    alpha = opt.lr * c2_sqrt / c1
    m, v, tmp = opt.m, opt.v, opt._tmp
    m *= opt.beta1
    np.multiply(g, 1.0 - opt.beta1, out=tmp)
    m += tmp
    v *= opt.beta2
    np.multiply(g, g, out=tmp)
    tmp *= 1.0 - opt.beta2
    v += tmp
    np.sqrt(v, out=tmp)
    tmp += opt.eps * c2_sqrt
    np.divide(m, tmp, out=tmp)
    tmp *= alpha
    params.flat -= tmp
    return params


def copy_params(params: MlpParams) -> MlpParams:
    return MlpParams.from_flat(params.dims, params.flat.copy())


def finite_diff_grad(params: MlpParams, xs, actions, targets,
                     h: float = 1e-5) -> Grads:
    """Central-difference gradient of the same loss.  Uses only forward
    evaluations, so it is an independent check on grad_squared_loss."""
    grads = grads_like(params)
    flat = params.flat
    gflat = grads.flat
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        up = squared_loss(params, xs, actions, targets)
        flat[k] = orig - h
        down = squared_loss(params, xs, actions, targets)
        flat[k] = orig
        gflat[k] = (up - down) / (2.0 * h)
    grads.loss = squared_loss(params, xs, actions, targets)
    return grads


def save_checkpoint(path, params: MlpParams, opt_step: int = 0) -> None:
    """Self-describing container: magic, JSON header (format version,
    layer dims, optimizer step), then row-major 64-bit little-endian
    parameter blocks, weights and biases interleaved per layer."""
    header = json.dumps({"version": _FORMAT_VERSION,
                         "dims": list(params.dims),
                         "opt_step": int(opt_step)}).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC + b"\n")
        fh.write(header + b"\n")
        fh.write(params.flat.astype("<f8", copy=False).tobytes())


def load_checkpoint(path):
    """Returns (MlpParams, opt_step).  Round-trips save_checkpoint output
    bit for bit."""
    with open(path, "rb") as fh:
        magic = fh.readline().rstrip(b"\n")
        if magic != _MAGIC:
            raise ValueError(f"not a checkpoint file: {path}")
        header = json.loads(fh.readline().decode())
        if header["version"] != _FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        dims = tuple(header["dims"])
        count = _param_count(dims)
        flat = np.frombuffer(fh.read(8 * count), dtype="<f8").copy()
        if flat.size != count:
            raise ValueError("truncated checkpoint")
        if fh.read(1):
            raise ValueError("trailing bytes in checkpoint")
    return MlpParams.from_flat(dims, flat), header["opt_step"]
