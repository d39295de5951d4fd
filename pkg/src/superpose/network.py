"""Layered affine + nonlinearity networks, the compiled artifact.

A layer computes ``scale * act(W x + bias)``.  The weight may be stored as a
product of factors ``W = F[0] @ F[1] @ ...`` so that constructions such as
``W_in @ R`` keep their structure (and their cost) instead of being
multiplied out; :meth:`Layer.dense_weight` gives the plain matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensor import PreconditionError, read_sbmat, relu, staircase_relu_terms, staircase_round, write_sbmat


@dataclass(frozen=True)
class ActivationKind:
    name: str = "relu"
    a: int = 0

    def __post_init__(self):
        if self.name not in ("relu", "staircase", "identity"):
            raise PreconditionError(f"unknown activation {self.name!r}")
        if self.name == "staircase" and self.a < 1:
            raise PreconditionError("staircase activation needs a >= 1")

    def __call__(self, x):
        if self.name == "relu":
            return relu(x)
        if self.name == "staircase":
            return staircase_round(x, self.a)
        return x

    def to_json(self):
        return {"name": self.name, "a": self.a}


RELU = ActivationKind("relu")
IDENTITY = ActivationKind("identity")


def staircase(a: int = 2) -> ActivationKind:
    return ActivationKind("staircase", a)


@dataclass
class Layer:
    factors: list[np.ndarray]
    bias: np.ndarray
    activation: ActivationKind = RELU
    scale: float = 1.0
    name: str = ""

    def __post_init__(self):
        if isinstance(self.factors, np.ndarray):
            self.factors = [self.factors]
        self.factors = [np.asarray(f, dtype=np.float64) for f in self.factors]
        for a, b in zip(self.factors, self.factors[1:]):
            if a.shape[1] != b.shape[0]:
                raise PreconditionError(f"factor shapes {a.shape} and {b.shape} do not chain")
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.bias.shape[0] != self.out_dim:
            raise PreconditionError("bias length must equal layer output width")

    @property
    def in_dim(self) -> int:
        return self.factors[-1].shape[1]

    @property
    def out_dim(self) -> int:
        return self.factors[0].shape[0]

    def dense_weight(self) -> np.ndarray:
        w = self.factors[-1]
        for f in reversed(self.factors[:-1]):
            w = f @ w
        return w

    def preactivation(self, x: np.ndarray) -> np.ndarray:
        """``x`` is (in_dim,) or (batch, in_dim); returns matching shape."""
        h = np.asarray(x, dtype=np.float64).T
        for f in reversed(self.factors):
            h = f @ h
        return h.T + self.bias

    def __call__(self, x):
        return self.scale * self.activation(self.preactivation(x))


@dataclass
class MlpNetwork:
    layers: list[Layer] = field(default_factory=list)

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise PreconditionError(f"layer widths {a.out_dim} -> {b.in_dim} do not chain")

    def __len__(self):
        return len(self.layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def forward(self, x, upto: int | None = None):
        for layer in self.layers[:upto]:
            x = layer(x)
        return x

    def trace(self, x) -> list[np.ndarray]:
        """Activations after every layer (input excluded)."""
        out = []
        for layer in self.layers:
            x = layer(x)
            out.append(x)
        return out

    __call__ = forward

    def to_relu(self) -> "MlpNetwork":
        """Equivalent network whose hidden nonlinearities are all ReLU.

        Each staircase neuron becomes ``4a`` ReLU units; the summing weights
        and the layer scale are folded into the following layer, so the
        final layer keeps a trailing identity layer when it is a staircase.
        """
        out: list[Layer] = []
        pending = None  # (matrix mapping expanded units -> logical outputs)
        for layer in self.layers:
            factors = list(layer.factors)
            if pending is not None:
                factors = factors + [pending]
            if layer.activation.name == "staircase":
                coef, shift, sign = staircase_relu_terms(layer.activation.a)
                n = layer.out_dim
                # unit (j, term) computes relu(sign_t * pre_j + shift_t)
                expand = np.kron(np.eye(n), sign.reshape(-1, 1))
                out.append(Layer([expand] + factors, np.kron(layer.bias, sign) + np.tile(shift, n),
                                 RELU, 1.0, layer.name + "/relu"))
                pending = layer.scale * np.kron(np.eye(n), coef.reshape(1, -1))
            else:
                out.append(Layer(factors, layer.bias, layer.activation, layer.scale, layer.name))
                pending = None
        if pending is not None:
            out.append(Layer([pending], np.zeros(pending.shape[0]), IDENTITY, 1.0, "sum"))
        return MlpNetwork(out)

    def save(self, directory, manifest: dict | None = None) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        layers = []
        for i, layer in enumerate(self.layers):
            names = []
            for j, f in enumerate(layer.factors):
                fn = f"layer{i}_w{j}.sbmat"
                write_sbmat(d / fn, f)
                names.append(fn)
            bn = f"layer{i}_bias.sbmat"
            write_sbmat(d / bn, layer.bias)
            layers.append({"name": layer.name, "factors": names, "bias": bn,
                           "activation": layer.activation.to_json(), "scale": layer.scale})
        doc = dict(manifest or {})
        doc["layers"] = layers
        (d / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True))

    @classmethod
    def load(cls, directory) -> tuple["MlpNetwork", dict]:
        d = Path(directory)
        doc = json.loads((d / "manifest.json").read_text())
        layers = []
        for spec in doc["layers"]:
            act = ActivationKind(**spec["activation"])
            layers.append(Layer([read_sbmat(d / fn) for fn in spec["factors"]],
                                read_sbmat(d / spec["bias"]).reshape(-1), act, spec["scale"], spec["name"]))
        return cls(layers), doc
