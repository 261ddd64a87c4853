"""Expert-independent gating: gating embedding -> MLP -> softmax weights ->
weighted sum of expert outputs.

The gate never sees any expert's own embedding; it reads the dedicated
gating table so no expert is favored by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nnet import Mlp
from .numerics import row_softmax, softmax_backward


@dataclass
class GatingNetwork:
    """MLP from the gating embedding to one logit per expert."""

    mlp: Mlp

    @classmethod
    def build(
        cls,
        gate_dim: int,
        hidden: tuple[int, ...],
        num_experts: int,
        rng: np.random.Generator,
    ) -> "GatingNetwork":
        mlp = Mlp.build(gate_dim, hidden, num_experts, rng)
        # zero final layer: every expert starts at weight 1/M, which keeps
        # early training from starving all but one expert
        mlp.weights[-1][...] = 0.0
        mlp.biases[-1][...] = 0.0
        return cls(mlp)

    @property
    def num_experts(self) -> int:
        return self.mlp.out_dim

    def param_items(self, prefix: str) -> list[tuple[str, np.ndarray]]:
        return self.mlp.param_items(prefix)


@dataclass
class GateOutput:
    weights: np.ndarray  # (B, M), rows sum to 1
    aggregated: np.ndarray  # (B, out_dim)


def gate_weights(gn: GatingNetwork, gate_embeds: np.ndarray) -> tuple[np.ndarray, tuple]:
    """Softmax over the gate MLP's per-expert logits."""
    logits, mlp_cache = gn.mlp.forward(gate_embeds)
    g = row_softmax(logits)
    return g, (gn, mlp_cache, g)


def aggregate_experts(
    g: np.ndarray, outputs: list[np.ndarray]
) -> tuple[np.ndarray, tuple]:
    """h_i = sum_m g[i, m] * O^(m)_i, rowwise over the batch."""
    if len(outputs) != g.shape[1]:
        raise ValueError(
            f"got {len(outputs)} expert outputs for {g.shape[1]} gate columns"
        )
    shape = outputs[0].shape
    for o in outputs:
        if o.shape != shape:
            raise ValueError("expert outputs must share one shape")
    h = np.zeros(shape)
    for m, o in enumerate(outputs):
        h += g[:, m : m + 1] * o
    return h, (g, outputs)


def gating_backward(
    gate_cache: tuple, agg_cache: tuple, d_h: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray, list[np.ndarray]]:
    """Adjoint through aggregation, softmax, and the gate MLP.

    Returns (gate param grads, d gating-embeds, per-expert d outputs).
    """
    gn, mlp_cache, g = gate_cache
    g_agg, outputs = agg_cache
    if g_agg is not g:
        raise ValueError("gate and aggregation caches are from different forwards")
    d_g = np.stack([(d_h * o).sum(axis=1) for o in outputs], axis=1)  # (B, M)
    d_outputs = [g[:, m : m + 1] * d_h for m in range(len(outputs))]
    d_logits = softmax_backward(g, d_g)
    d_ws, d_bs, d_gate_embeds = gn.mlp.backward(mlp_cache, d_logits)
    grads = {f"w{i}": w for i, w in enumerate(d_ws)}
    grads.update({f"b{i}": b for i, b in enumerate(d_bs)})
    return grads, d_gate_embeds, d_outputs
