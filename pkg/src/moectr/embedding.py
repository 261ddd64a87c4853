"""Embedding tables for the two input paradigms, plus the gating table.

Shared-embedding ("se") keeps one table that every expert reads;
multi-embedding ("me") gives each expert an exclusive table. The gating
table is always separate so gate weights are computed from an
expert-independent representation of the sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import DatasetSchema


@dataclass
class EmbeddingTable:
    """Per-field lookup arrays sharing one embedding width."""

    fields: list[np.ndarray]  # field f: (D_f, d)

    @property
    def dim(self) -> int:
        return self.fields[0].shape[1]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable([a.copy() for a in self.fields])


@dataclass
class EmbeddingBank:
    mode: str  # "se" | "me"
    tables: list[EmbeddingTable]  # length 1 (se) or M (me)
    gating_table: EmbeddingTable

    def table_for_expert(self, m: int) -> int:
        """Physical table index backing expert m (se maps every m to 0)."""
        if self.mode == "se":
            return 0
        if m >= len(self.tables):
            raise ValueError(f"expert index {m} out of range")
        return m


def _init_table(schema: DatasetSchema, dim: int, rng: np.random.Generator) -> EmbeddingTable:
    scale = 1.0 / np.sqrt(dim)
    return EmbeddingTable(
        [rng.uniform(-scale, scale, size=(card, dim)) for card in schema.cardinalities]
    )


def init_bank(
    schema: DatasetSchema,
    mode: str,
    num_experts: int,
    dim: int,
    gate_dim: int,
    seed: int | np.random.SeedSequence,
) -> EmbeddingBank:
    """Build the bank with uniform [-1/sqrt(d), 1/sqrt(d)] entries.

    Each table draws from its own child of the seed, so "me" tables start
    pairwise different while the whole bank is reproducible.
    """
    if num_experts < 1:
        raise ValueError("num_experts must be >= 1")
    if dim < 1 or gate_dim < 1:
        raise ValueError("embedding dims must be >= 1")
    if mode not in ("se", "me"):
        raise ValueError(f"unknown bank mode {mode!r}")
    n_tables = 1 if mode == "se" else num_experts
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    children = seed.spawn(n_tables + 1)
    tables = [
        _init_table(schema, dim, np.random.default_rng(children[t]))
        for t in range(n_tables)
    ]
    gating = _init_table(schema, gate_dim, np.random.default_rng(children[-1]))
    return EmbeddingBank(mode=mode, tables=tables, gating_table=gating)


def _gather(table: EmbeddingTable, indices: np.ndarray) -> np.ndarray:
    n, f = indices.shape
    d = table.dim
    out = np.empty((n, f * d), dtype=np.float64)
    for j in range(f):
        out[:, j * d : (j + 1) * d] = table.fields[j][indices[:, j]]
    return out


def lookup(bank: EmbeddingBank, table_index: int, batch_indices: np.ndarray) -> np.ndarray:
    """Concatenate per-field embedding rows: output row i is
    [emb(field 0), emb(field 1), ...] for sample i, in schema order."""
    return _gather(bank.tables[bank.table_for_expert(table_index)], batch_indices)


def lookup_gating(bank: EmbeddingBank, batch_indices: np.ndarray) -> np.ndarray:
    return _gather(bank.gating_table, batch_indices)


@dataclass
class SparseGrad:
    """Gradients for a subset of table rows, as parallel arrays.

    Entries may repeat the same (field, row) pair; consumers must sum
    duplicates before updating.
    """

    fields: np.ndarray  # (K,) int64
    rows: np.ndarray  # (K,) int64
    vecs: np.ndarray  # (K, d) float64

    @classmethod
    def from_dense_rows(cls, batch_indices: np.ndarray, d_embed: np.ndarray) -> "SparseGrad":
        """Adjoint carrier of lookup: one entry per (sample, field) pair.

        d_embed is the (B, F*d) upstream gradient of the concatenated
        lookup output.
        """
        n, f = batch_indices.shape
        d = d_embed.shape[1] // f
        fields = np.repeat(np.arange(f, dtype=np.int64), n)
        rows = batch_indices.T.reshape(-1).astype(np.int64)
        vecs = d_embed.reshape(n, f, d).transpose(1, 0, 2).reshape(n * f, d)
        return cls(fields, rows, np.ascontiguousarray(vecs))

    @classmethod
    def concat(cls, grads: list["SparseGrad"]) -> "SparseGrad":
        return cls(
            np.concatenate([g.fields for g in grads]),
            np.concatenate([g.rows for g in grads]),
            np.concatenate([g.vecs for g in grads]),
        )

    def to_dense(self, table: EmbeddingTable) -> list[np.ndarray]:
        """Scatter-add into zero arrays shaped like the table (oracle path)."""
        dense = [np.zeros_like(a) for a in table.fields]
        for f, r, v in zip(self.fields, self.rows, self.vecs):
            dense[f][r] += v
        return dense


UpdateRule = Callable[[int, np.ndarray, np.ndarray], None]


def apply_sparse_to_table(table: EmbeddingTable, grads: SparseGrad, update: UpdateRule) -> None:
    """Sum duplicate (field, row) entries, then hand each field's unique
    rows to the update rule as ``update(field, rows, summed_grads)``.

    The rule mutates the table rows (the optimizer step lives in the
    trainer); rows that received no gradient are never touched.
    """
    if not np.isfinite(grads.vecs).all():
        raise ValueError("non-finite gradient")
    if grads.rows.size == 0:
        return
    key = grads.fields * (grads.rows.max() + 1) + grads.rows
    uniq, first, inverse = np.unique(key, return_index=True, return_inverse=True)
    summed = np.zeros((uniq.size, grads.vecs.shape[1]))
    np.add.at(summed, inverse, grads.vecs)
    u_fields = grads.fields[first]
    u_rows = grads.rows[first]
    for f in range(len(table.fields)):
        mask = u_fields == f
        if mask.any():
            update(f, u_rows[mask], summed[mask])


def apply_sparse_grads(
    bank: EmbeddingBank, table_index: int, grads: SparseGrad, update: UpdateRule
) -> None:
    """apply_sparse_to_table on one of the bank's expert tables."""
    apply_sparse_to_table(bank.tables[table_index], grads, update)
