"""Small convolutional feature extractor with per-stage activation taps.

Each stage is a run of 3x3 conv blocks; stages after the first enter at
stride 2. The final conv of every stage has no trailing ReLU, so the tapped
stage maps are signed; the activation is applied on the consuming side (next
stage entry, and before the pooling head). The head is a global average pool
into a dense layer producing the flat embedding.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, FormatError, ShapeError
from .tensor import Tensor, add, conv2d, matmul, relu, tmean

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class BackboneConfig:
    input_shape: tuple[int, int, int] = (3, 8, 8)
    stages: tuple[tuple[int, int], ...] = ((8, 1), (16, 1), (32, 1))
    embedding_dim: int = 32

    def __post_init__(self):
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ContractError(f"bad input_shape {self.input_shape}")
        if len(self.stages) < 2:
            raise ContractError("need at least 2 stages")
        for s in self.stages:
            if len(s) != 2 or s[0] < 1 or s[1] < 1:
                raise ContractError(f"bad stage spec {s}")
        if self.embedding_dim < 1:
            raise ContractError(f"embedding_dim must be >= 1, got {self.embedding_dim}")
        for c, w, h in self.stage_shapes():
            if w < 1 or h < 1:
                raise ContractError(
                    f"spatial extent collapses below 1x1 (stage gives {w}x{h})"
                )

    def stage_shapes(self) -> list[tuple[int, int, int]]:
        """(channels, width, height) of each stage's output map."""
        _, w, h = self.input_shape
        shapes = []
        for i, (filters, _blocks) in enumerate(self.stages):
            if i > 0:  # stride-2 entry, 3x3 kernel, padding 1
                w = (w - 1) // 2 + 1
                h = (h - 1) // 2 + 1
            shapes.append((filters, w, h))
        return shapes

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "stages": [list(s) for s in self.stages],
            "embedding_dim": self.embedding_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BackboneConfig":
        return cls(
            tuple(d["input_shape"]),
            tuple(tuple(s) for s in d["stages"]),
            d["embedding_dim"],
        )


@dataclass
class StageOutputs:
    """Signed end-of-stage maps plus the flat embedding of one forward pass."""

    stage_maps: list[Tensor] = field(default_factory=list)
    embedding: Tensor | None = None


def _kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Backbone:
    """Feature extractor; parameters are named tensors in ``self.params``."""

    def __init__(self, config: BackboneConfig, seed: int = 0):
        self.config = config
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed)
        c_in = config.input_shape[0]
        for i, (filters, blocks) in enumerate(config.stages):
            for j in range(blocks):
                shape = (filters, c_in, 3, 3)
                self.params[f"stage{i}.block{j}.weight"] = Tensor(
                    _kaiming_uniform(rng, shape, fan_in=c_in * 9), requires_grad=True
                )
                self.params[f"stage{i}.block{j}.bias"] = Tensor(
                    np.zeros(filters), requires_grad=True
                )
                c_in = filters
        self.params["head.weight"] = Tensor(
            _kaiming_uniform(rng, (c_in, config.embedding_dim), fan_in=c_in),
            requires_grad=True,
        )
        self.params["head.bias"] = Tensor(
            np.zeros(config.embedding_dim), requires_grad=True
        )

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def forward_with_stages(self, batch: Tensor) -> StageOutputs:
        """Run the extractor, returning every signed stage map and the embedding."""
        expected = self.config.input_shape
        if batch.data.ndim != 4 or batch.shape[1:] != expected:
            raise ShapeError(
                "backbone", f"batch shape {batch.shape} != (B, {expected})"
            )
        h = batch
        maps: list[Tensor] = []
        for i, (_filters, blocks) in enumerate(self.config.stages):
            if i > 0:
                h = relu(h)
            for j in range(blocks):
                h = conv2d(
                    h,
                    self.params[f"stage{i}.block{j}.weight"],
                    self.params[f"stage{i}.block{j}.bias"],
                    stride=2 if (i > 0 and j == 0) else 1,
                    padding=1,
                )
                if j < blocks - 1:
                    h = relu(h)
            maps.append(h)
        pooled = tmean(relu(h), axis=(2, 3))
        embedding = add(matmul(pooled, self.params["head.weight"]), self.params["head.bias"])
        return StageOutputs(stage_maps=maps, embedding=embedding)

    def embed(self, batch: Tensor) -> Tensor:
        return self.forward_with_stages(batch).embedding

    def clone_frozen(self) -> "Backbone":
        """Deep copy with gradient tracking disabled on every parameter."""
        return Backbone.from_params(
            self.config,
            {k: v.data.copy() for k, v in self.params.items()},
            requires_grad=False,
        )

    @classmethod
    def from_params(
        cls, config: BackboneConfig, values: dict[str, np.ndarray], requires_grad: bool = True
    ) -> "Backbone":
        model = cls(config, seed=0)
        if set(values) != set(model.params):
            missing = set(model.params) ^ set(values)
            raise ContractError(f"parameter names mismatch: {sorted(missing)}")
        for name, arr in values.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != model.params[name].shape:
                raise ContractError(
                    f"parameter {name}: shape {arr.shape} != {model.params[name].shape}"
                )
            model.params[name] = Tensor(arr.copy(), requires_grad=requires_grad)
        return model

    # -- checkpoint file (named parameter tensors, bit-exact round trip) ----

    def state(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "params": {
                name: {"shape": list(t.shape), "values": t.data.reshape(-1).tolist()}
                for name, t in self.params.items()
            },
        }

    @classmethod
    def from_state(cls, state: dict) -> "Backbone":
        if state.get("version") != CHECKPOINT_VERSION:
            raise FormatError(f"unsupported checkpoint version {state.get('version')}")
        config = BackboneConfig.from_dict(state["config"])
        values = {
            name: np.asarray(p["values"], dtype=np.float64).reshape(p["shape"])
            for name, p in state["params"].items()
        }
        return cls.from_params(config, values)

    def save(self, path: str) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            json.dump(self.state(), fh)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str) -> "Backbone":
        with open(path) as fh:
            return cls.from_state(json.load(fh))
