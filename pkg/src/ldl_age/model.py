"""Fully-connected head mapping an embedding to K age logits.

The softmax is not part of the head; see :mod:`ldl_age.losses` and
:mod:`ldl_age.inference`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError, InvalidParameterError, InvalidStateError
from .grid import AgeGrid
from .losses import HybridLossConfig

CHECKPOINT_FORMAT = "ldl-age-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class Layer:
    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    relu: bool

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]


@dataclass
class ModelHead:
    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise InvalidParameterError("a head needs at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.out_dim,):
                raise InvalidParameterError(f"layer {i}: bad weight/bias shapes")
            if i and layer.in_dim != self.layers[i - 1].out_dim:
                raise InvalidParameterError(
                    f"layer {i} expects {layer.in_dim} inputs, "
                    f"previous layer gives {self.layers[i - 1].out_dim}"
                )
        if self.layers[-1].relu:
            raise InvalidParameterError("the output layer must be linear")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].out_dim

    @property
    def hidden_dims(self) -> list[int]:
        return [layer.out_dim for layer in self.layers[:-1]]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def copy(self) -> ModelHead:
        return ModelHead(
            [Layer(l.weight.copy(), l.bias.copy(), l.relu) for l in self.layers]
        )

    def equals(self, other: ModelHead) -> bool:
        """Bitwise equality of architecture and parameters."""
        if len(self.layers) != len(other.layers):
            return False
        return all(
            a.relu == b.relu
            and a.weight.shape == b.weight.shape
            and np.array_equal(a.weight, b.weight)
            and np.array_equal(a.bias, b.bias)
            for a, b in zip(self.layers, other.layers)
        )


@dataclass
class ForwardTrace:
    """Inputs to every layer plus the hidden pre-activations."""

    inputs: list[np.ndarray] = field(default_factory=list)
    pre_activations: list[np.ndarray] = field(default_factory=list)


@dataclass
class HeadGradient:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def init_head(in_dim: int, hidden_dims, K: int, seed: int = 0) -> ModelHead:
    """He-style initialization: ``W ~ N(0, 2 / fan_in)``, zero biases."""
    hidden_dims = list(hidden_dims)
    dims = [in_dim, *hidden_dims, K]
    if any(int(d) != d or d < 1 for d in dims):
        raise InvalidParameterError(f"layer sizes must be positive integers, got {dims}")
    if K < 2:
        raise InvalidParameterError(f"K must be >= 2, got {K}")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        w = rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in)
        layers.append(Layer(w, np.zeros(fan_out), relu=i < len(dims) - 2))
    return ModelHead(layers)


def forward(head: ModelHead, embedding):
    """Logits for one embedding ``(in_dim,)`` or a batch ``(N, in_dim)``."""
    x = np.asarray(embedding, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != head.in_dim:
        raise InvalidParameterError(
            f"embedding has shape {x.shape}, head expects last dim {head.in_dim}"
        )
    trace = ForwardTrace()
    h = x
    for layer in head.layers:
        trace.inputs.append(h)
        a = h @ layer.weight.T + layer.bias
        if layer.relu:
            trace.pre_activations.append(a)
            h = np.maximum(a, 0.0)
        else:
            h = a
    return h, trace


def backward(head: ModelHead, trace: ForwardTrace, dL_dlogits) -> HeadGradient:
    """Backpropagate ``dL/dlogits`` through the head.

    For a batched trace the gradients are summed over rows, so pass the
    gradient of the batch *mean* if that is what you want to minimize.
    """
    g = np.asarray(dL_dlogits, dtype=np.float64)
    n_relu = sum(layer.relu for layer in head.layers)
    if len(trace.inputs) != len(head.layers) or len(trace.pre_activations) != n_relu:
        raise InvalidStateError("trace does not come from this head")
    if g.shape[-1:] != (head.n_outputs,) or g.shape[:-1] != trace.inputs[0].shape[:-1]:
        raise InvalidStateError(
            f"gradient shape {g.shape} does not match the traced forward pass"
        )
    batched = g.ndim == 2
    weights, biases = [], []
    relu_idx = n_relu
    for layer, x in zip(reversed(head.layers), reversed(trace.inputs)):
        if layer.relu:
            relu_idx -= 1
            g = g * (trace.pre_activations[relu_idx] > 0)
        if x.shape[-1] != layer.in_dim:
            raise InvalidStateError("trace does not come from this head")
        if batched:
            weights.append(g.T @ x)
            biases.append(g.sum(axis=0))
        else:
            weights.append(np.outer(g, x))
            biases.append(g.copy())
        g = g @ layer.weight
    return HeadGradient(weights[::-1], biases[::-1])


# -- checkpoints -------------------------------------------------------------


def _array_text(a: np.ndarray) -> str:
    if a.ndim == 1:
        return "[" + ", ".join(format(float(v), ".17g") for v in a) + "]"
    return "[\n      " + ",\n      ".join(_array_text(row) for row in a) + "\n    ]"


def checkpoint_text(head: ModelHead, grid: AgeGrid, loss: HybridLossConfig | None = None,
                    method: str | None = None) -> str:
    if head.n_outputs != grid.K:
        raise InvalidParameterError(f"head has {head.n_outputs} outputs, grid has {grid.K}")
    arrays = {}
    layers = []
    for i, layer in enumerate(head.layers):
        wk, bk = f"@W{i}@", f"@b{i}@"
        arrays[wk], arrays[bk] = layer.weight, layer.bias
        layers.append({"in_dim": layer.in_dim, "out_dim": layer.out_dim,
                       "activation": "relu" if layer.relu else "identity",
                       "weight": wk, "bias": bk})
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "grid": {"a_min": grid.a_min, "a_max": grid.a_max},
        "architecture": {"in_dim": head.in_dim, "hidden_dims": head.hidden_dims, "K": grid.K},
        "method": method,
        "loss": loss.as_dict() if loss is not None else None,
        "layers": layers,
    }
    text = json.dumps(doc, indent=2)
    for key, arr in arrays.items():
        text = text.replace(json.dumps(key), _array_text(arr))
    return text + "\n"


def save_checkpoint(path, head: ModelHead, grid: AgeGrid, loss: HybridLossConfig | None = None,
                    method: str | None = None) -> Path:
    """Write a JSON checkpoint; floats carry 17 significant digits."""
    path = Path(path)
    path.write_text(checkpoint_text(head, grid, loss, method), encoding="utf-8")
    return path


@dataclass
class Checkpoint:
    head: ModelHead
    grid: AgeGrid
    loss: HybridLossConfig | None
    method: str | None


def load_checkpoint(path) -> Checkpoint:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: not a checkpoint ({exc.msg})", exc.lineno) from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise DataFormatError(f"{path}: not a checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise DataFormatError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    try:
        layers = [
            Layer(
                np.array(spec["weight"], dtype=np.float64).reshape(spec["out_dim"], spec["in_dim"]),
                np.array(spec["bias"], dtype=np.float64).reshape(spec["out_dim"]),
                spec["activation"] == "relu",
            )
            for spec in doc["layers"]
        ]
        grid = AgeGrid(doc["grid"]["a_min"], doc["grid"]["a_max"])
        loss = HybridLossConfig(**doc["loss"]) if doc.get("loss") else None
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: malformed checkpoint ({exc})") from exc
    head = ModelHead(layers)
    if head.n_outputs != grid.K:
        raise DataFormatError(f"{path}: head outputs {head.n_outputs} != grid size {grid.K}")
    return Checkpoint(head, grid, loss, doc.get("method"))
