"""Model assembly: embedding bank + experts + gating + tower as one bundle,
the full forward pass, a flat parameter registry, and versioned binary
persistence.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .data import DatasetSchema, FeatureField
from .embedding import EmbeddingBank, init_bank, lookup, lookup_gating
from .experts import Expert, ExpertConfig, make_expert
from .gating import GateOutput, GatingNetwork, aggregate_experts, gate_weights
from .losses import LossConfig
from .nnet import Mlp
from .numerics import sigmoid

MODEL_MAGIC = b"MOECTRBN"
MODEL_VERSION = 1


@dataclass
class ModelBundle:
    schema: DatasetSchema
    mode: str  # "se" | "me"
    bank: EmbeddingBank
    experts: list[Expert]
    gate: GatingNetwork
    tower: Mlp
    loss: LossConfig
    embed_dim: int
    gate_dim: int
    out_dim: int
    gate_hidden: tuple[int, ...]
    tower_hidden: tuple[int, ...]
    seed: int

    @property
    def num_experts(self) -> int:
        return len(self.experts)


def build_model(
    schema: DatasetSchema,
    mode: str,
    expert_configs: list[ExpertConfig],
    loss: LossConfig,
    embed_dim: int = 16,
    gate_dim: int | None = None,
    gate_hidden: tuple[int, ...] = (64,),
    tower_hidden: tuple[int, ...] = (500,),
    seed: int = 0,
) -> ModelBundle:
    """Deterministically initialize every component from one seed.

    Homogeneous vs heterogeneous is just the kind mix in expert_configs;
    shared vs multi embedding is the bank mode.
    """
    if not expert_configs:
        raise ValueError("expert list must be nonempty")
    out_dims = {c.out_dim for c in expert_configs}
    if len(out_dims) != 1:
        raise ValueError("all experts must share out_dim")
    out_dim = out_dims.pop()
    if loss.location == "intermediate":
        if any(c.kind != "crossnet" for c in expert_configs):
            raise ValueError(
                "intermediate loss location requires crossnet experts only"
            )
        if len({c.cross_layers for c in expert_configs}) != 1:
            raise ValueError(
                "intermediate loss location requires equal cross layer counts"
            )
    if gate_dim is None:
        gate_dim = embed_dim
    m = len(expert_configs)
    children = np.random.SeedSequence(seed).spawn(m + 3)
    bank = init_bank(schema, mode, m, embed_dim, gate_dim, children[0])
    experts = [
        make_expert(cfg, schema.num_fields, embed_dim, np.random.default_rng(children[1 + i]))
        for i, cfg in enumerate(expert_configs)
    ]
    gate = GatingNetwork.build(
        gate_dim * schema.num_fields, gate_hidden, m, np.random.default_rng(children[m + 1])
    )
    tower = Mlp.build(out_dim, tower_hidden, 1, np.random.default_rng(children[m + 2]))
    return ModelBundle(
        schema=schema,
        mode=mode,
        bank=bank,
        experts=experts,
        gate=gate,
        tower=tower,
        loss=loss,
        embed_dim=embed_dim,
        gate_dim=gate_dim,
        out_dim=out_dim,
        gate_hidden=tuple(gate_hidden),
        tower_hidden=tuple(tower_hidden),
        seed=seed,
    )


def named_params(model: ModelBundle) -> list[tuple[str, np.ndarray]]:
    """Every trainable array with a stable name, in a stable order."""
    items: list[tuple[str, np.ndarray]] = []
    for t, table in enumerate(model.bank.tables):
        for f, arr in enumerate(table.fields):
            items.append((f"bank.table{t}.field{f}", arr))
    for f, arr in enumerate(model.bank.gating_table.fields):
        items.append((f"bank.gating.field{f}", arr))
    for m, expert in enumerate(model.experts):
        items.extend(expert.param_items(f"expert.{m}"))
    items.extend(model.gate.param_items("gate"))
    items.extend(model.tower.param_items("tower"))
    return items


def param_count(model: ModelBundle) -> int:
    return sum(arr.size for _, arr in named_params(model))


@dataclass
class FullCache:
    """Everything the backward pass and the loss-location routing need."""

    indices: np.ndarray
    embeds: list[np.ndarray]  # e^(m), (B, F*d) per expert
    expert_caches: list
    outputs: list[np.ndarray]  # aligned O^(m), (B, out_dim)
    gate_embeds: np.ndarray
    gate_cache: tuple
    agg_cache: tuple
    gate_out: GateOutput
    tower_cache: list
    logits: np.ndarray  # (B, 1)
    y_hat: np.ndarray  # (B,)


def forward_full(model: ModelBundle, indices: np.ndarray) -> FullCache:
    """lookup -> experts (+alignment) -> gating -> tower -> sigmoid."""
    embeds = [lookup(model.bank, m, indices) for m in range(model.num_experts)]
    outputs = []
    expert_caches = []
    for m, expert in enumerate(model.experts):
        o, cache = expert.forward(embeds[m])
        outputs.append(o)
        expert_caches.append(cache)
    gate_embeds = lookup_gating(model.bank, indices)
    g, gate_cache = gate_weights(model.gate, gate_embeds)
    h, agg_cache = aggregate_experts(g, outputs)
    logits, tower_cache = model.tower.forward(h)
    y_hat = sigmoid(logits).ravel()
    return FullCache(
        indices=indices,
        embeds=embeds,
        expert_caches=expert_caches,
        outputs=outputs,
        gate_embeds=gate_embeds,
        gate_cache=gate_cache,
        agg_cache=agg_cache,
        gate_out=GateOutput(weights=g, aggregated=h),
        tower_cache=tower_cache,
        logits=logits,
        y_hat=y_hat,
    )


def predict(model: ModelBundle, indices: np.ndarray, batch_size: int = 8192) -> np.ndarray:
    """Click probabilities without retaining any caches."""
    parts = []
    for start in range(0, indices.shape[0], batch_size):
        parts.append(forward_full(model, indices[start : start + batch_size]).y_hat)
    return np.concatenate(parts) if parts else np.zeros(0)


def _config_echo(model: ModelBundle) -> dict:
    return {
        "schema": {
            "fields": [[f.name, f.cardinality] for f in model.schema.fields],
            "label": model.schema.label_column,
        },
        "mode": model.mode,
        "experts": [
            {
                "kind": c.kind,
                "out_dim": c.out_dim,
                "hidden": list(c.hidden),
                "dnn_out": c.dnn_out,
                "cross_layers": c.cross_layers,
                "cin_maps": list(c.cin_maps),
            }
            for c in (e.config for e in model.experts)
        ],
        "loss": {
            "form": model.loss.form,
            "alpha": model.loss.alpha,
            "location": model.loss.location,
        },
        "embed_dim": model.embed_dim,
        "gate_dim": model.gate_dim,
        "gate_hidden": list(model.gate_hidden),
        "tower_hidden": list(model.tower_hidden),
        "seed": model.seed,
    }


def _model_from_echo(echo: dict) -> ModelBundle:
    schema = DatasetSchema(
        fields=tuple(FeatureField(n, c) for n, c in echo["schema"]["fields"]),
        label_column=echo["schema"]["label"],
    )
    configs = [
        ExpertConfig(
            kind=e["kind"],
            out_dim=e["out_dim"],
            hidden=tuple(e["hidden"]),
            dnn_out=e["dnn_out"],
            cross_layers=e["cross_layers"],
            cin_maps=tuple(e["cin_maps"]),
        )
        for e in echo["experts"]
    ]
    loss = LossConfig(
        form=echo["loss"]["form"],
        alpha=echo["loss"]["alpha"],
        location=echo["loss"]["location"],
    )
    return build_model(
        schema,
        echo["mode"],
        configs,
        loss,
        embed_dim=echo["embed_dim"],
        gate_dim=echo["gate_dim"],
        gate_hidden=tuple(echo["gate_hidden"]),
        tower_hidden=tuple(echo["tower_hidden"]),
        seed=echo["seed"],
    )


def save_model(model: ModelBundle, path) -> None:
    """Versioned binary: magic, version, JSON config echo, then one named
    little-endian float64 block per parameter array."""
    items = named_params(model)
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_VERSION))
        blob = json.dumps(_config_echo(model)).encode("utf-8")
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(items)))
        for name, arr in items:
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise ValueError("truncated model file")
    return buf


def load_model(path) -> ModelBundle:
    """Rebuild from the config echo, then overwrite every parameter block.

    Loaded parameters are byte-for-byte what was saved, so evaluation
    after a round trip is bit-identical.
    """
    with open(path, "rb") as fh:
        if fh.read(len(MODEL_MAGIC)) != MODEL_MAGIC:
            raise ValueError("unrecognized model file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != MODEL_VERSION:
            raise ValueError(f"unsupported model file version: {version}")
        (blob_len,) = struct.unpack("<Q", _read_exact(fh, 8))
        echo = json.loads(_read_exact(fh, blob_len).decode("utf-8"))
        model = _model_from_echo(echo)
        params = dict(named_params(model))
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        if count != len(params):
            raise ValueError("parameter block count does not match config")
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
            name = _read_exact(fh, name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
            shape = tuple(
                struct.unpack("<Q", _read_exact(fh, 8))[0] for _ in range(ndim)
            )
            arr = params.get(name)
            if arr is None or arr.shape != shape:
                raise ValueError(f"unexpected parameter block {name!r}")
            data = _read_exact(fh, arr.size * 8)
            arr[...] = np.frombuffer(data, dtype="<f8").reshape(shape)
    return model
