"""Feed-forward networks with exact input gradients.

Weights are stored ``[out x in]`` so a layer computes ``a @ W.T + b`` on a
batch of row vectors.
"""

from dataclasses import dataclass, field
import json

import numpy as np

from ..errors import ContractError
from ..linalg import make_rng

ACTIVATIONS = ("relu", "sigmoid", "softmax", "identity")
HEADS = ("sigmoid", "softmax")


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return sigmoid(z)
    if kind == "softmax":
        return softmax(z)
    if kind == "identity":
        return z
    raise ContractError(f"unknown activation {kind!r}")


def _activation_backward(kind, z, a, grad_a):
    """Map dL/da to dL/dz for one layer (row-batched)."""
    if kind == "relu":
        return grad_a * (z > 0)
    if kind == "sigmoid":
        return grad_a * a * (1.0 - a)
    if kind == "softmax":
        return a * (grad_a - np.sum(grad_a * a, axis=-1, keepdims=True))
    if kind == "identity":
        return grad_a
    raise ContractError(f"unknown activation {kind!r}")


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim != 2 or b.shape[0] != w.shape[0]:
            raise ContractError(f"bias of length {b.shape[0]} does not fit weight {w.shape}")
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def fan_in(self):
        return self.weight.shape[1]

    @property
    def fan_out(self):
        return self.weight.shape[0]


@dataclass(frozen=True)
class MlpModel:
    """An immutable stack of dense layers.

    Hidden layers are expected to use ``relu`` and the head ``sigmoid`` or
    ``softmax``; ``identity`` is accepted anywhere so linear reference
    models can be expressed in the same type.
    """

    layers: tuple
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ContractError("a model needs at least one layer")
        for prev, nxt in zip(layers[:-1], layers[1:]):
            if prev.fan_out != nxt.fan_in:
                raise ContractError(
                    f"layer widths do not chain: {prev.fan_out} -> {nxt.fan_in}")
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self):
        return self.layers[0].fan_in

    @property
    def output_dim(self):
        return self.layers[-1].fan_out

    @property
    def head(self):
        return self.layers[-1].activation

    @property
    def n_params(self):
        return sum(l.weight.size + l.bias.size for l in self.layers)

    def params(self):
        """Flat list ``[W0, b0, W1, b1, ...]`` (read-only views)."""
        out = []
        for l in self.layers:
            out.extend([l.weight, l.bias])
        return out

    def with_params(self, params):
        layers = tuple(
            Layer(params[2 * i], params[2 * i + 1], l.activation)
            for i, l in enumerate(self.layers))
        return MlpModel(layers, dict(self.meta))

    def __call__(self, x):
        return forward(self, x)


def init_mlp(input_dim, hidden, output_dim, head="sigmoid", seed=0):
    """Glorot-uniform weights, zero biases, relu hidden layers."""
    rng = make_rng(seed)
    sizes = [int(input_dim), *[int(h) for h in hidden], int(output_dim)]
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        act = head if i == len(sizes) - 2 else "relu"
        layers.append(Layer(w, np.zeros(fan_out), act))
    return MlpModel(tuple(layers))


def embed_columns(model, columns, input_dim):
    """Lift a model trained on ``x[:, columns]`` to one that reads all of ``x``.

    The first layer gets zero weights for every other column, so outputs are
    unchanged and input gradients vanish outside ``columns``.
    """
    columns = [int(c) for c in columns]
    if len(columns) != model.input_dim or len(set(columns)) != len(columns):
        raise ContractError("columns must list one distinct index per model input")
    if min(columns, default=0) < 0 or max(columns, default=0) >= input_dim:
        raise ContractError("column index out of range")
    first = model.layers[0]
    w = np.zeros((first.fan_out, int(input_dim)))
    w[:, columns] = first.weight
    layers = (Layer(w, first.bias, first.activation), *model.layers[1:])
    return MlpModel(layers, dict(model.meta, columns=columns))


def _check_input(model, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.ndim != 2 or x2.shape[1] != model.input_dim:
        raise ContractError(
            f"model expects {model.input_dim} features, got shape {x.shape}")
    return x2, single


def forward_cache(model, x):
    """Forward pass keeping ``(input, pre-activation, output)`` per layer."""
    a = x
    cache = []
    for layer in model.layers:
        z = a @ layer.weight.T + layer.bias
        out = _activate(z, layer.activation)
        cache.append((a, z, out))
        a = out
    return cache


def forward(model, x):
    """Evaluate the network on one vector or a batch of row vectors."""
    x2, single = _check_input(model, x)
    out = forward_cache(model, x2)[-1][2]
    return out[0] if single else out


def logits(model, x):
    """Pre-activation output of the head layer."""
    x2, single = _check_input(model, x)
    out = forward_cache(model, x2)[-1][1]
    return out[0] if single else out


def backward(model, cache, grad_z_last, need_params=True):
    """Reverse pass from dL/dz of the head.

    Returns ``(param_grads, grad_x)`` where ``param_grads`` follows
    :meth:`MlpModel.params` ordering (or is ``None``).
    """
    grads = [None] * (2 * len(model.layers)) if need_params else None
    delta = grad_z_last
    for i in reversed(range(len(model.layers))):
        layer = model.layers[i]
        a_in = cache[i][0]
        if need_params:
            grads[2 * i] = delta.T @ a_in
            grads[2 * i + 1] = delta.sum(axis=0)
        grad_a = delta @ layer.weight
        if i > 0:
            prev = model.layers[i - 1]
            _, z_prev, a_prev = cache[i - 1]
            delta = _activation_backward(prev.activation, z_prev, a_prev, grad_a)
        else:
            delta = grad_a
    return grads, delta


def input_gradient(model, x, output_index=0, space="probability"):
    """d(output[output_index]) / dx by reverse mode.

    ``space="probability"`` differentiates the post-activation output,
    ``space="logit"`` the head's pre-activation. Accepts a single vector
    (returns ``(d,)``) or a batch (returns ``(n, d)``).
    """
    x2, single = _check_input(model, x)
    if not 0 <= output_index < model.output_dim:
        raise ContractError(
            f"output_index {output_index} out of range for {model.output_dim} outputs")
    cache = forward_cache(model, x2)
    _, z, a = cache[-1]
    seed = np.zeros_like(a)
    seed[:, output_index] = 1.0
    if space == "probability":
        dz = _activation_backward(model.head, z, a, seed)
    elif space == "logit":
        dz = seed
    else:
        raise ContractError(f"unknown gradient space {space!r}")
    _, gx = backward(model, cache, dz, need_params=False)
    return gx[0] if single else gx


def input_jacobian(model, x, outputs=None, space="probability"):
    """Stack of input gradients, shape ``(n, k, d)`` (or ``(k, d)``)."""
    if outputs is None:
        outputs = range(model.output_dim)
    grads = [input_gradient(model, x, j, space) for j in outputs]
    return np.stack(grads, axis=-2)


# -- serialization -----------------------------------------------------------

def to_dict(model):
    return {
        "input_dim": model.input_dim,
        "layers": [
            {
                "rows": l.fan_out,
                "cols": l.fan_in,
                "weights": [float(v) for v in l.weight.ravel()],
                "bias": [float(v) for v in l.bias],
                "activation": l.activation,
            }
            for l in model.layers
        ],
        "head": model.head,
    }


def from_dict(doc):
    layers = []
    for spec in doc["layers"]:
        w = np.array(spec["weights"], dtype=np.float64).reshape(spec["rows"], spec["cols"])
        layers.append(Layer(w, np.array(spec["bias"], dtype=np.float64), spec["activation"]))
    model = MlpModel(tuple(layers))
    if model.input_dim != doc["input_dim"]:
        raise ContractError("input_dim does not match the first layer")
    if doc.get("head", model.head) != model.head:
        raise ContractError("head does not match the last layer activation")
    return model


def dumps(model):
    # json writes floats with repr(), the shortest string that round-trips
    return json.dumps(to_dict(model), indent=1)


def loads(text):
    return from_dict(json.loads(text))
