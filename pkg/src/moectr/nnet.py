"""Small affine-stack building blocks with explicit backward passes.

Used by the DNN expert, gate network, prediction tower, and the alignment
heads. Weight convention: layer computes x @ W.T + b with W of shape
(out, in), so rows of W are output units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def init_affine(in_dim: int, out_dim: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    scale = 1.0 / np.sqrt(in_dim)
    return rng.uniform(-scale, scale, size=(out_dim, in_dim)), np.zeros(out_dim)


@dataclass
class Mlp:
    """Affine layers with per-layer ReLU flags (True = rectified)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[bool]

    @classmethod
    def build(
        cls,
        in_dim: int,
        hidden: tuple[int, ...],
        out_dim: int | None,
        rng: np.random.Generator,
    ) -> "Mlp":
        """Hidden layers are rectified; a final out_dim layer (if any) is linear."""
        widths_in = [in_dim, *hidden]
        weights, biases, acts = [], [], []
        for i, w in enumerate(hidden):
            wm, bm = init_affine(widths_in[i], w, rng)
            weights.append(wm)
            biases.append(bm)
            acts.append(True)
        if out_dim is not None:
            wm, bm = init_affine(widths_in[-1], out_dim, rng)
            weights.append(wm)
            biases.append(bm)
            acts.append(False)
        if not weights:
            raise ValueError("Mlp needs at least one layer")
        return cls(weights, biases, acts)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        """Returns (output, cache); cache keeps layer inputs and pre-activations."""
        if x.shape[1] != self.in_dim:
            raise ValueError(
                f"input width {x.shape[1]} does not match first layer {self.in_dim}"
            )
        cache = []
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = x @ w.T + b  # (N, out)
            cache.append((x, z))
            x = relu(z) if act else z
        return x, cache

    def backward(self, cache: list, d_out: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
        """Returns (d_weights, d_biases, d_input)."""
        if len(cache) != len(self.weights):
            raise ValueError("cache does not match layer count")
        d_ws: list[np.ndarray] = [None] * len(self.weights)  # type: ignore[list-item]
        d_bs: list[np.ndarray] = [None] * len(self.weights)  # type: ignore[list-item]
        d = d_out
        for i in range(len(self.weights) - 1, -1, -1):
            x, z = cache[i]
            dz = d * (z > 0.0) if self.activations[i] else d
            d_ws[i] = dz.T @ x
            d_bs[i] = dz.sum(axis=0)
            d = dz @ self.weights[i]
        return d_ws, d_bs, d

    def param_items(self, prefix: str) -> list[tuple[str, np.ndarray]]:
        items = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            items.append((f"{prefix}.w{i}", w))
            items.append((f"{prefix}.b{i}", b))
        return items


@dataclass
class AlignmentHead:
    """Affine + ReLU map bringing a raw expert output to the common width."""

    w: np.ndarray  # (d_out, raw)
    b: np.ndarray  # (d_out,)

    @classmethod
    def build(cls, raw_dim: int, out_dim: int, rng: np.random.Generator) -> "AlignmentHead":
        w, b = init_affine(raw_dim, out_dim, rng)
        return cls(w, b)

    def forward(self, raw: np.ndarray) -> tuple[np.ndarray, tuple]:
        if raw.shape[1] != self.w.shape[1]:
            raise ValueError(
                f"raw width {raw.shape[1]} does not match alignment head {self.w.shape[1]}"
            )
        z = raw @ self.w.T + self.b
        return relu(z), (raw, z)

    def backward(self, cache: tuple, d_out: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns (d_w, d_b, d_raw)."""
        raw, z = cache
        dz = d_out * (z > 0.0)
        return dz.T @ raw, dz.sum(axis=0), dz @ self.w
