"""Small multi-layer perceptron with two output heads.

The trunk is a tanh MLP.  Two linear heads share it: a K-way class
head producing softmax probabilities, and a one-vs-all head producing
K independent inlier/outlier pairs.  Parameters flatten to a single
float64 vector with a fixed documented ordering ("flat-v1": trunk
layers in order, weight matrix row-major then bias, then class head,
then one-vs-all head), which is also the checkpoint format.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, softmax
from .errors import ConfigError, NumericError, ParseError, ShapeError

FLAT_ORDERING = "flat-v1"


def _frozen(a):
    a = np.asarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ModelParams:
    """Immutable parameter container. Replace, never mutate."""

    layers: tuple  # tuple of (W: (out, in), b: (out,)) for the trunk
    head_class: tuple  # (W: (K, trunk_out), b: (K,))
    head_ova: tuple  # (W: (2K, trunk_out), b: (2K,))

    @property
    def layer_sizes(self):
        sizes = [self.layers[0][0].shape[1]] if self.layers else [
            self.head_class[0].shape[1]
        ]
        for w, _ in self.layers:
            sizes.append(w.shape[0])
        return tuple(sizes)

    @property
    def k_classes(self):
        return self.head_class[0].shape[0]

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in self._pairs())

    def _pairs(self):
        return list(self.layers) + [self.head_class, self.head_ova]

    def flatten(self):
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in self._pairs()])

    def unflatten(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.n_params,):
            raise ShapeError(
                f"expected flat vector of length {self.n_params}, got shape {vec.shape}"
            )
        pairs = []
        pos = 0
        for w, b in self._pairs():
            nw, nb = w.size, b.size
            pairs.append(
                (
                    _frozen(vec[pos : pos + nw].reshape(w.shape)),
                    _frozen(vec[pos + nw : pos + nw + nb]),
                )
            )
            pos += nw + nb
        return ModelParams(tuple(pairs[:-2]), pairs[-2], pairs[-1])


@dataclass(frozen=True)
class Prediction:
    """Class probabilities p (K,) and one-vs-all pair probabilities q (K, 2)."""

    p: np.ndarray
    q: np.ndarray


def init_mlp(layer_sizes, k_classes, seed):
    """Build a fresh model: scaled-uniform weights, zero biases.

    Every weight entry is uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    Draw order is fixed (trunk layers, class head, one-vs-all head) so
    a seed fully determines the parameters.
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 1 or any(s < 1 for s in sizes):
        raise ConfigError(f"layer_sizes must be positive, got {layer_sizes!r}")
    if k_classes < 2:
        raise ConfigError(f"k_classes must be >= 2, got {k_classes}")
    rng = np.random.default_rng(seed)

    def linear(fan_in, fan_out):
        bound = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        return _frozen(w), _frozen(np.zeros(fan_out))

    layers = tuple(linear(sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1))
    trunk_out = sizes[-1]
    head_class = linear(trunk_out, k_classes)
    head_ova = linear(trunk_out, 2 * k_classes)
    return ModelParams(layers, head_class, head_ova)


class TensorNet:
    """Differentiable view of a ModelParams for building loss graphs."""

    def __init__(self, params):
        self.params = params
        self.layers = tuple(
            (Tensor(w, requires_grad=True), Tensor(b, requires_grad=True))
            for w, b in params.layers
        )
        self.head_class = tuple(
            Tensor(a, requires_grad=True) for a in params.head_class
        )
        self.head_ova = tuple(Tensor(a, requires_grad=True) for a in params.head_ova)

    def trunk(self, x):
        """Hidden representation for a batch, as a (n, trunk_out) tensor."""
        h = x if isinstance(x, Tensor) else Tensor(np.atleast_2d(x))
        for w, b in self.layers:
            h = (h @ w.T + b).tanh()
        return h

    def heads(self, x):
        """Class logits (n, K) and one-vs-all logits (n, K, 2) for a batch."""
        h = self.trunk(x)
        wc, bc = self.head_class
        wo, bo = self.head_ova
        z = h @ wc.T + bc
        k = wc.data.shape[0]
        o = (h @ wo.T + bo).reshape(-1, k, 2)
        return z, o

    def _pairs(self):
        return list(self.layers) + [self.head_class, self.head_ova]

    def flat_grad(self):
        """Flat gradient vector; parameters outside the graph contribute zeros."""
        parts = []
        for w, b in self._pairs():
            parts.append(
                (w.grad if w.grad is not None else np.zeros_like(w.data)).ravel()
            )
            parts.append(b.grad if b.grad is not None else np.zeros_like(b.data))
        return np.concatenate(parts)


def forward_batch(params, x):
    """Plain-numpy forward pass: probabilities P (n, K) and Q (n, K, 2)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != params.layer_sizes[0]:
        raise ShapeError(
            f"input dim {x.shape[1]} != model input dim {params.layer_sizes[0]}"
        )
    h = x
    for w, b in params.layers:
        h = np.tanh(h @ w.T + b)
    wc, bc = params.head_class
    wo, bo = params.head_ova
    z = h @ wc.T + bc
    o = (h @ wo.T + bo).reshape(-1, params.k_classes, 2)

    def stable_softmax(a):
        e = np.exp(a - a.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)

    return stable_softmax(z), stable_softmax(o)


def forward(params, x):
    """Single-instance prediction."""
    p, q = forward_batch(params, np.asarray(x, dtype=np.float64).reshape(1, -1))
    return Prediction(p=p[0], q=q[0])


def grad(params, objective):
    """Exact reverse-mode gradient of `objective` as a flat vector.

    `objective` maps a TensorNet to a scalar Tensor.  A non-finite loss
    value raises NumericError before any backward work.
    """
    net = TensorNet(params)
    out = objective(net)
    value = float(np.asarray(out.data).reshape(()))
    if not math.isfinite(value):
        raise NumericError(f"objective evaluated to non-finite value {value!r}")
    out.backward()
    return net.flat_grad()


def objective_value(params, objective):
    """Evaluate an objective without keeping gradients."""
    out = objective(TensorNet(params))
    return float(np.asarray(out.data).reshape(()))


def finite_diff_grad(params, objective, h=1e-5):
    """Central-difference gradient over every flat coordinate."""
    if not h > 0:
        raise ConfigError(f"finite-difference step must be positive, got {h}")
    theta = params.flatten()
    out = np.empty_like(theta)
    for i in range(theta.size):
        bump = np.zeros_like(theta)
        bump[i] = h
        hi = objective_value(params.unflatten(theta + bump), objective)
        lo = objective_value(params.unflatten(theta - bump), objective)
        out[i] = (hi - lo) / (2.0 * h)
    return out


def sgd_step(params, grad_vec, lr, momentum=0.0, velocity=None):
    """One SGD step with Nesterov momentum on the flat parameter vector.

    Returns (new_params, new_velocity).  With momentum 0 this is plain
    theta - lr * grad.
    """
    grad_vec = np.asarray(grad_vec, dtype=np.float64)
    theta = params.flatten()
    if grad_vec.shape != theta.shape:
        raise ShapeError(
            f"gradient shape {grad_vec.shape} != parameter shape {theta.shape}"
        )
    if velocity is None:
        velocity = np.zeros_like(theta)
    velocity = momentum * velocity + grad_vec
    step = grad_vec + momentum * velocity if momentum else grad_vec
    return params.unflatten(theta - lr * step), velocity


def cosine_lr(t, total, lr0):
    """Cosine-annealed learning rate lr0 * cos(7 pi t / (16 total))."""
    if total <= 0:
        raise ConfigError(f"total epochs must be positive, got {total}")
    if not 0 <= t <= total:
        raise ValueError(f"epoch {t} outside [0, {total}]")
    return lr0 * math.cos(7.0 * math.pi * t / (16.0 * total))


def ova_probs_tensor(o):
    """Pair probabilities from one-vs-all logits (n, K, 2), on the tape."""
    return softmax(o, axis=-1)


def save_params(params, path, seed=None):
    """Write parameters as little-endian float64 plus a JSON sidecar."""
    path = str(path)
    with open(path, "wb") as f:
        f.write(params.flatten().astype("<f8").tobytes())
    sidecar = {
        "layer_sizes": list(params.layer_sizes),
        "k_classes": params.k_classes,
        "seed": seed,
        "ordering": FLAT_ORDERING,
    }
    with open(path + ".json", "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")


def load_params(path):
    """Read a checkpoint written by save_params; returns (params, sidecar)."""
    path = str(path)
    with open(path + ".json") as f:
        sidecar = json.load(f)
    if sidecar.get("ordering") != FLAT_ORDERING:
        raise ParseError(
            f"unsupported parameter ordering {sidecar.get('ordering')!r}"
        )
    template = init_mlp(sidecar["layer_sizes"], sidecar["k_classes"], seed=0)
    flat = np.frombuffer(open(path, "rb").read(), dtype="<f8").astype(np.float64)
    if flat.size != template.n_params:
        raise ParseError(
            f"checkpoint holds {flat.size} values, model needs {template.n_params}"
        )
    return template.unflatten(flat), sidecar
