"""Training losses: binary cross-entropy, cross-expert de-correlation in its
correlation form and two covariance ablations, and the combined objective.

All pair losses act on two (N, d) output matrices and return the scalar
value together with exact gradients w.r.t. both inputs. The correlation
form standardizes columns with the unbiased std, which makes the value on
two identical single-column inputs exactly N - 1; the combined objective's
1/(|B|-1) factor cancels that growth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import as_matrix, standardize_backward, standardize_columns

LOSS_FORMS = ("corr", "cov_l1", "cov_l2", "none")
LOSS_LOCATIONS = ("input", "intermediate", "output")

BCE_EPS = 1e-7


@dataclass(frozen=True)
class LossConfig:
    form: str = "corr"
    alpha: float = 0.0
    location: str = "output"

    def __post_init__(self):
        if self.form not in LOSS_FORMS:
            raise ValueError(f"unknown loss form {self.form!r}")
        if self.location not in LOSS_LOCATIONS:
            raise ValueError(f"unknown loss location {self.location!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")

    @property
    def active(self) -> bool:
        return self.form != "none" and self.alpha > 0.0


def bce(y_hat: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy with probabilities clipped to
    [1e-7, 1 - 1e-7]; returns (value, dL/dy_hat)."""
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    n = y.size
    p = np.clip(y_hat, BCE_EPS, 1.0 - BCE_EPS)
    value = float(-(y * np.log(p) + (1.0 - y) * np.log1p(-p)).mean())
    inside = (y_hat > BCE_EPS) & (y_hat < 1.0 - BCE_EPS)
    grad = np.where(inside, (-(y / p) + (1.0 - y) / (1.0 - p)) / n, 0.0)
    return value, grad


def corr_loss_pair(
    o_p: np.ndarray, o_q: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Frobenius norm (scaled by 1/d^2) of the standardized cross matrix.

    Both inputs are column-standardized (unbiased std); the value is
    ||Z_p^T Z_q||_F / d^2. Constant columns standardize to zero and
    contribute zero gradient.
    """
    o_p, o_q = as_matrix(o_p), as_matrix(o_q)
    if o_p.shape != o_q.shape:
        raise ValueError("pair loss inputs must share one shape")
    d = o_p.shape[1]
    z_p, _, std_p = standardize_columns(o_p)
    z_q, _, std_q = standardize_columns(o_q)
    cross = z_p.T @ z_q  # (d, d)
    s = float(np.sqrt((cross**2).sum()))
    value = s / (d * d)
    if s == 0.0:
        return 0.0, np.zeros_like(o_p), np.zeros_like(o_q)
    g_cross = cross / (s * d * d)
    d_zp = z_q @ g_cross.T
    d_zq = z_p @ g_cross
    return (
        value,
        standardize_backward(d_zp, z_p, std_p),
        standardize_backward(d_zq, z_q, std_q),
    )


def cov_loss_pair(
    o_p: np.ndarray, o_q: np.ndarray, norm: str
) -> tuple[float, np.ndarray, np.ndarray]:
    """Entrywise L1 or L2 norm (scaled by 1/d^2) of the centered cross
    matrix C_p^T C_q, where C centers columns without scaling."""
    if norm not in ("l1", "l2"):
        raise ValueError(f"unknown norm {norm!r}")
    o_p, o_q = as_matrix(o_p), as_matrix(o_q)
    if o_p.shape != o_q.shape:
        raise ValueError("pair loss inputs must share one shape")
    d = o_p.shape[1]
    c_p = o_p - o_p.mean(axis=0, keepdims=True)
    c_q = o_q - o_q.mean(axis=0, keepdims=True)
    cross = c_p.T @ c_q
    if norm == "l1":
        value = float(np.abs(cross).sum()) / (d * d)
        g_cross = np.sign(cross) / (d * d)
    else:
        s = float(np.sqrt((cross**2).sum()))
        value = s / (d * d)
        if s == 0.0:
            return 0.0, np.zeros_like(o_p), np.zeros_like(o_q)
        g_cross = cross / (s * d * d)
    d_cp = c_q @ g_cross.T
    d_cq = c_p @ g_cross
    # centering adjoint: subtract the column mean of the upstream gradient
    d_op = d_cp - d_cp.mean(axis=0, keepdims=True)
    d_oq = d_cq - d_cq.mean(axis=0, keepdims=True)
    return value, d_op, d_oq


def pair_loss(
    o_p: np.ndarray, o_q: np.ndarray, form: str
) -> tuple[float, np.ndarray, np.ndarray]:
    if form == "corr":
        return corr_loss_pair(o_p, o_q)
    if form == "cov_l1":
        return cov_loss_pair(o_p, o_q, "l1")
    if form == "cov_l2":
        return cov_loss_pair(o_p, o_q, "l2")
    raise ValueError(f"unknown loss form {form!r}")


@dataclass
class PairLossValue:
    """Per-pair de-correlation losses, keyed by (m1, m2) with m1 < m2."""

    pairs: dict[tuple[int, int], float]

    @property
    def total(self) -> float:
        return float(sum(self.pairs.values()))


def decorrelation_pairs(outputs: list[np.ndarray], form: str) -> PairLossValue:
    """Pair-by-pair view of the de-correlation total (values only)."""
    m = len(outputs)
    values: dict[tuple[int, int], float] = {}
    if form != "none":
        for m1 in range(m):
            for m2 in range(m1 + 1, m):
                values[(m1, m2)] = pair_loss(outputs[m1], outputs[m2], form)[0]
    return PairLossValue(values)


def decorrelation_total(
    outputs: list[np.ndarray], form: str
) -> tuple[float, list[np.ndarray]]:
    """Sum of the selected pair loss over all expert pairs m1 < m2.

    Returns (total, per-expert gradient list). One expert means no pairs
    and a zero total.
    """
    m = len(outputs)
    grads = [np.zeros_like(np.asarray(o, dtype=np.float64)) for o in outputs]
    if form == "none" or m < 2:
        return 0.0, grads
    total = 0.0
    for m1 in range(m):
        for m2 in range(m1 + 1, m):
            value, d_p, d_q = pair_loss(outputs[m1], outputs[m2], form)
            total += value
            grads[m1] += d_p
            grads[m2] += d_q
    return total, grads


def total_objective(
    bce_value: float, decor_value: float, alpha: float, batch_size: int
) -> float:
    """L = BCE + alpha * decor / (|B| - 1)."""
    if alpha == 0.0:
        return bce_value
    if batch_size < 2:
        raise ValueError("batch too small for de-correlation")
    return bce_value + alpha * decor_value / (batch_size - 1)
