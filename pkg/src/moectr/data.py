"""Dataset schema, CSV ingestion with feature hashing, and a synthetic
click-log generator for desk-scale experiments.

File format: UTF-8 CSV, first line header, one label column holding literal
"0"/"1", every other referenced column treated as a categorical token and
hashed into its field's bucket range. Empty cells map to the sentinel token
"__MISSING__" and are hashed like any other token.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import sigmoid

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

MISSING_TOKEN = "__MISSING__"


def hash_token(token: str | bytes, cardinality: int) -> int:
    """FNV-1a 64-bit hash of the token bytes, reduced modulo cardinality.

    Bit-exact across runs and platforms; strings are hashed as UTF-8.
    """
    if cardinality < 1:
        raise ValueError("cardinality must be >= 1")
    if isinstance(token, str):
        token = token.encode("utf-8")
    h = FNV_OFFSET
    for b in token:
        h ^= b
        h = (h * FNV_PRIME) & _MASK64
    return h % cardinality


@dataclass(frozen=True)
class FeatureField:
    """One categorical column with its hash-bucket count."""

    name: str
    cardinality: int

    def __post_init__(self):
        if self.cardinality < 1:
            raise ValueError(f"field {self.name!r}: cardinality must be >= 1")


@dataclass(frozen=True)
class DatasetSchema:
    fields: tuple[FeatureField, ...]
    label_column: str = "label"

    def __post_init__(self):
        if len(self.fields) == 0:
            raise ValueError("schema needs at least one field")
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise ValueError("field names must be unique")
        if self.label_column in names:
            raise ValueError("label column must be distinct from feature columns")

    @property
    def field_names(self) -> list[str]:
        return [f.name for f in self.fields]

    @property
    def cardinalities(self) -> list[int]:
        return [f.cardinality for f in self.fields]

    @property
    def num_fields(self) -> int:
        return len(self.fields)


@dataclass
class EncodedDataset:
    """Hashed samples: indices[i, f] in [0, D_f), labels in {0, 1}."""

    schema: DatasetSchema
    indices: np.ndarray  # (N, F) int64
    labels: np.ndarray  # (N,) float64, values 0.0 / 1.0

    def __post_init__(self):
        self.indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.float64)
        if self.indices.ndim != 2 or self.indices.shape[1] != self.schema.num_fields:
            raise ValueError("indices shape does not match schema")
        if self.labels.shape != (self.indices.shape[0],):
            raise ValueError("labels length does not match indices")
        if not np.isin(self.labels, (0.0, 1.0)).all():
            raise ValueError("labels must be 0 or 1")
        cards = np.asarray(self.schema.cardinalities, dtype=np.int64)
        if (self.indices < 0).any() or (self.indices >= cards[None, :]).any():
            raise ValueError("index out of field cardinality range")

    def __len__(self) -> int:
        return self.indices.shape[0]

    def take(self, rows: np.ndarray) -> "EncodedDataset":
        return EncodedDataset(self.schema, self.indices[rows], self.labels[rows])


@dataclass
class Batch:
    """Row offsets into an EncodedDataset."""

    rows: np.ndarray  # (B,) int64

    def __post_init__(self):
        self.rows = np.ascontiguousarray(self.rows, dtype=np.int64)

    @property
    def size(self) -> int:
        return self.rows.shape[0]


def load_table(path, schema: DatasetSchema) -> EncodedDataset:
    """Read a CSV file and hash every categorical cell into its field range.

    Missing/empty cells become the "__MISSING__" sentinel. The label column
    must hold the literal strings "0" or "1". Row order is preserved.
    """
    names = schema.field_names
    cards = schema.cardinalities
    index_rows: list[list[int]] = []
    labels: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in names + [schema.label_column]:
            if col not in header:
                raise ValueError(f"missing column {col!r} in {path}")
        for row in reader:
            raw_label = row.get(schema.label_column)
            if raw_label not in ("0", "1"):
                raise ValueError(f"invalid label at line {reader.line_num}")
            labels.append(float(raw_label))
            encoded = []
            for name, card in zip(names, cards):
                token = row.get(name)
                if token is None or token == "":
                    token = MISSING_TOKEN
                encoded.append(hash_token(token, card))
            index_rows.append(encoded)
    n = len(labels)
    indices = np.asarray(index_rows, dtype=np.int64).reshape(n, schema.num_fields)
    return EncodedDataset(schema, indices, np.asarray(labels))


def save_table(ds: EncodedDataset, path) -> None:
    """Write hashed indices back out as CSV (tokens are the bucket ids).

    Loading such a file with cardinality D_f >= max bucket id does not
    reproduce the ids (they get re-hashed); this writer exists so synthetic
    datasets round-trip through the same CSV interface as real logs. Use
    load_synthetic_csv to read files written here.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ds.schema.field_names + [ds.schema.label_column])
        for i in range(len(ds)):
            writer.writerow(
                [str(v) for v in ds.indices[i]] + [str(int(ds.labels[i]))]
            )


def load_synthetic_csv(path, schema: DatasetSchema) -> EncodedDataset:
    """Read a CSV written by save_table, taking cells as literal bucket ids."""
    index_rows: list[list[int]] = []
    labels: list[float] = []
    names = schema.field_names
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in names + [schema.label_column]:
            if col not in header:
                raise ValueError(f"missing column {col!r} in {path}")
        for row in reader:
            raw_label = row[schema.label_column]
            if raw_label not in ("0", "1"):
                raise ValueError(f"invalid label at line {reader.line_num}")
            labels.append(float(raw_label))
            index_rows.append([int(row[name]) for name in names])
    indices = np.asarray(index_rows, dtype=np.int64).reshape(len(labels), len(names))
    return EncodedDataset(schema, indices, np.asarray(labels))


def split_dataset(
    ds: EncodedDataset, fractions: tuple[float, float, float], seed: int
) -> tuple[EncodedDataset, EncodedDataset, EncodedDataset]:
    """Deterministic shuffle then contiguous train/valid/test assignment.

    Sizes are floor(N * fraction) for each split; leftover rows go to train.
    The shuffle is ``np.random.default_rng(seed).permutation(N)`` and the
    permuted order is cut as [train | valid | test].
    """
    tr, va, te = fractions
    if tr <= 0 or va <= 0 or te <= 0:
        raise ValueError("fractions must be positive")
    if tr + va + te > 1.0 + 1e-9:
        raise ValueError("fractions exceed 1")
    n = len(ds)
    perm = np.random.default_rng(seed).permutation(n)
    n_tr = math.floor(n * tr)
    n_va = math.floor(n * va)
    n_te = math.floor(n * te)
    n_tr += n - (n_tr + n_va + n_te)  # remainder to train
    a, b = n_tr, n_tr + n_va
    return ds.take(perm[:a]), ds.take(perm[a:b]), ds.take(perm[b : b + n_te])


def make_batches(
    ds: EncodedDataset, batch_size: int, shuffle_seed: int | None = None
) -> list[Batch]:
    """Cut the dataset into batches covering every row exactly once.

    All batches have the requested size except possibly the last. With a
    shuffle seed the row order is a deterministic permutation.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(ds)
    order = np.arange(n, dtype=np.int64)
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(n)
    return [Batch(order[i : i + batch_size]) for i in range(0, n, batch_size)]


@dataclass
class SyntheticParams:
    """Ground-truth generator parameters, persisted for oracle computations.

    The click logit mixes two interaction mechanisms so that parallel
    experts have genuinely different patterns to specialize on:
      - pairwise:  sum over field pairs of <U[x_i], U[x_j]>
      - triple:    sum over field triples of V[x_i] * V[x_j] * V[x_k]
    """

    seed: int
    c0: float
    u: list[np.ndarray] = field(default_factory=list)  # field f: (D_f, d_u)
    v: list[np.ndarray] = field(default_factory=list)  # field f: (D_f,)

    def logits(self, indices: np.ndarray) -> np.ndarray:
        """True log-odds for each sample row of hashed feature ids."""
        n, f = indices.shape
        uvec = np.stack(
            [self.u[j][indices[:, j]] for j in range(f)], axis=1
        )  # (N, F, d_u)
        total = uvec.sum(axis=1)  # (N, d_u)
        pair = 0.5 * ((total**2).sum(axis=1) - (uvec**2).sum(axis=(1, 2)))
        vval = np.stack([self.v[j][indices[:, j]] for j in range(f)], axis=1)  # (N, F)
        p1 = vval.sum(axis=1)
        p2 = (vval**2).sum(axis=1)
        p3 = (vval**3).sum(axis=1)
        triple = (p1**3 - 3.0 * p1 * p2 + 2.0 * p3) / 6.0
        return self.c0 + pair + triple

    def click_probabilities(self, indices: np.ndarray) -> np.ndarray:
        return sigmoid(self.logits(indices))


def gen_synthetic(
    num_fields: int,
    cardinalities: list[int] | int,
    latent_dim: int,
    num_rows: int,
    seed: int,
    c0: float = 0.0,
    pair_strength: float = 1.0,
    triple_strength: float = 1.0,
) -> tuple[EncodedDataset, SyntheticParams]:
    """Draw a synthetic CTR dataset with two latent interaction mechanisms.

    Feature ids are uniform per field; labels are Bernoulli in the sigmoid
    of the SyntheticParams logit. Latent tables are scaled so the pairwise
    mechanism contributes logit std ~= pair_strength and the triple
    mechanism ~= triple_strength. Fully deterministic given the seed
    (fixed draw order: U tables, V tables, ids, label noise).
    """
    if num_fields < 2:
        raise ValueError("need at least 2 fields for a pairwise mechanism")
    if num_rows < 1:
        raise ValueError("num_rows must be >= 1")
    if isinstance(cardinalities, int):
        cardinalities = [cardinalities] * num_fields
    if len(cardinalities) != num_fields:
        raise ValueError("one cardinality per field required")
    rng = np.random.default_rng(seed)
    n_pairs = num_fields * (num_fields - 1) // 2
    n_triples = num_fields * (num_fields - 1) * (num_fields - 2) // 6
    u_scale = pair_strength**0.5 * (n_pairs * latent_dim) ** -0.25
    v_scale = (
        triple_strength ** (1.0 / 3.0) * n_triples ** (-1.0 / 6.0)
        if n_triples > 0
        else 0.0
    )
    params = SyntheticParams(seed=seed, c0=c0)
    for card in cardinalities:
        params.u.append(rng.normal(0.0, u_scale, size=(card, latent_dim)))
    for card in cardinalities:
        params.v.append(rng.normal(0.0, v_scale, size=card))
    indices = np.empty((num_rows, num_fields), dtype=np.int64)
    for j, card in enumerate(cardinalities):
        indices[:, j] = rng.integers(0, card, size=num_rows)
    probs = sigmoid(params.logits(indices))
    labels = (rng.random(num_rows) < probs).astype(np.float64)
    schema = DatasetSchema(
        fields=tuple(
            FeatureField(f"f{j}", card) for j, card in enumerate(cardinalities)
        ),
        label_column="label",
    )
    return EncodedDataset(schema, indices, labels), params


def save_synthetic_params(params: SyntheticParams, path) -> None:
    """Persist generator parameters as documented key-value text.

    Keys: seed, c0, fields, latent_dim, cardinality.<f>, u.<f> (row-major
    comma floats), v.<f>. Floats use %.17g so they round-trip exactly.
    """
    lines = [
        "# synthetic generator parameters",
        f"seed = {params.seed}",
        f"c0 = {params.c0!r}",
        f"fields = {len(params.u)}",
        f"latent_dim = {params.u[0].shape[1]}",
    ]
    for j, (u, v) in enumerate(zip(params.u, params.v)):
        lines.append(f"cardinality.{j} = {u.shape[0]}")
        lines.append(f"u.{j} = " + ",".join("%.17g" % x for x in u.ravel()))
        lines.append(f"v.{j} = " + ",".join("%.17g" % x for x in v.ravel()))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_synthetic_params(path) -> SyntheticParams:
    """Inverse of save_synthetic_params."""
    kv: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
    num_fields = int(kv["fields"])
    latent_dim = int(kv["latent_dim"])
    params = SyntheticParams(seed=int(kv["seed"]), c0=float(kv["c0"]))
    for j in range(num_fields):
        card = int(kv[f"cardinality.{j}"])
        u = np.array([float(x) for x in kv[f"u.{j}"].split(",")])
        params.u.append(u.reshape(card, latent_dim))
        params.v.append(np.array([float(x) for x in kv[f"v.{j}"].split(",")]))
    return params
