"""Dense float64 matrix primitives shared by every model component.

Matrices are plain 2-D ``numpy.ndarray`` objects in double precision. The
gradient checker here is the verification oracle for every hand-written
backward pass in the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


def as_matrix(x) -> np.ndarray:
    """Coerce input to a 2-D float64 array."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected 2-D array, got shape {a.shape}")
    return a


def row_softmax(logits) -> np.ndarray:
    """Softmax along axis 1, shifted by the row max so exp never overflows."""
    x = as_matrix(logits)
    if x.size == 0:
        raise ValueError("empty input")
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(weights: np.ndarray, d_weights: np.ndarray) -> np.ndarray:
    """Adjoint of row_softmax: d_logits = w * (dw - sum(dw * w))."""
    inner = (d_weights * weights).sum(axis=1, keepdims=True)
    return weights * (d_weights - inner)


def standardize_columns(x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center each column and scale to unbiased (ddof=1) std 1.

    Returns ``(z, mean, std)`` with mean/std of shape (1, d). Columns whose
    entries are all identical map to all-zero columns and report std 0
    instead of dividing by (numerically noisy) zero.
    """
    x = as_matrix(x)
    n = x.shape[0]
    if n < 2:
        raise ValueError("insufficient rows for std")
    constant = (x == x[0:1]).all(axis=0)
    mean = x.mean(axis=0, keepdims=True)
    std = x.std(axis=0, ddof=1, keepdims=True)
    std[0, constant] = 0.0
    safe = np.where(std > 0.0, std, 1.0)
    z = (x - mean) / safe
    z[:, constant] = 0.0
    return z, mean, std


def standardize_backward(d_z: np.ndarray, z: np.ndarray, std: np.ndarray) -> np.ndarray:
    """Adjoint of standardize_columns with respect to its input.

    Per column with upstream g = dL/dz:
        dL/dx = (g - mean(g) - z * sum(g * z) / (n - 1)) / std
    Constant columns (std 0) get zero gradient by convention.
    """
    n = z.shape[0]
    safe = np.where(std > 0.0, std, 1.0)
    w = (d_z * z).sum(axis=0, keepdims=True) / (n - 1.0)
    d_x = (d_z - d_z.mean(axis=0, keepdims=True) - z * w) / safe
    d_x[:, (std == 0.0).ravel()] = 0.0
    return d_x


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class GradCheckReport:
    """Outcome of a central-difference comparison."""

    max_relative_error: float
    worst_coordinate: int
    passed: bool


def central_diff_gradcheck(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    analytic_grad: np.ndarray,
    h: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare an analytic gradient of scalar f against central differences.

    For every coordinate k:
        fd  = (f(x + h e_k) - f(x - h e_k)) / (2 h)
        err = |fd - g_k| / max(1, |fd|, |g_k|)
    The report carries the max error over coordinates and whether it is
    below tol. f is called with a temporarily perturbed copy of x.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.float64).ravel().copy()
    g = np.asarray(analytic_grad, dtype=np.float64).ravel()
    if g.shape != x.shape:
        raise ValueError("analytic gradient shape mismatch")
    if x.size == 0:
        return GradCheckReport(0.0, 0, True)
    errs = np.empty(x.size)
    for k in range(x.size):
        orig = x[k]
        x[k] = orig + h
        f_plus = float(f(x))
        x[k] = orig - h
        f_minus = float(f(x))
        x[k] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise ValueError("objective not finite")
        fd = (f_plus - f_minus) / (2.0 * h)
        errs[k] = abs(fd - g[k]) / max(1.0, abs(fd), abs(g[k]))
    worst = int(np.argmax(errs))
    worst_err = float(errs[worst])
    return GradCheckReport(worst_err, worst, worst_err < tol)


def flatten_arrays(arrays: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate arrays into one flat vector (copy)."""
    if not arrays:
        return np.zeros(0)
    return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])


def write_arrays(arrays: Sequence[np.ndarray], vec: np.ndarray) -> None:
    """Scatter a flat vector back into the given arrays, in place."""
    offset = 0
    for a in arrays:
        a.flat[:] = vec[offset : offset + a.size]
        offset += a.size
    if offset != vec.size:
        raise ValueError("vector length does not match parameter sizes")
