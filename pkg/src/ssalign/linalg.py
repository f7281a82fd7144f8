"""Dense float64 primitives used across the package.

Matrices and vectors are plain ``numpy.ndarray`` objects of dtype float64.
The helpers here validate them and provide numerically stable reductions.
"""

import numpy as np

from .errors import DegenerateInputError, InputError, ParameterError, ShapeError


def as_vector(v, name="vector"):
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


def as_matrix(m, name="matrix"):
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise InputError(f"{name} has a non-finite entry at {tuple(int(i) for i in bad)}")
    return arr


def cosine_similarity(u, v):
    """Cosine of the angle between ``u`` and ``v``, clamped to [-1, 1]."""
    u = as_vector(u, "u")
    v = as_vector(v, "v")
    if u.shape != v.shape:
        raise ShapeError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateInputError("cosine similarity of a zero-norm vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def cosine_matrix(x, y):
    """Pairwise cosines between the rows of ``x`` (n, d) and ``y`` (m, d)."""
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if x.shape[1] != y.shape[1]:
        raise ShapeError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    nx = row_norms(x, "x")
    ny = row_norms(y, "y")
    return np.clip((x / nx[:, None]) @ (y / ny[:, None]).T, -1.0, 1.0)


def row_norms(x, name="matrix"):
    norms = np.linalg.norm(x, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DegenerateInputError(f"{name} row {int(zero[0])} has zero norm")
    return norms


def cosine_vjp(x, y, upstream):
    """Gradients of ``sum(upstream * cosine_matrix(x, y))`` w.r.t. ``x`` and ``y``.

    Uses d cos(u, v) / du = v / (|u||v|) - cos(u, v) u / |u|^2. The clamp in
    :func:`cosine_matrix` only guards rounding, so it is ignored here.
    """
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    g = as_matrix(upstream, "upstream")
    if g.shape != (x.shape[0], y.shape[0]):
        raise ShapeError(f"upstream has shape {g.shape}, expected {(x.shape[0], y.shape[0])}")
    nx = row_norms(x, "x")
    ny = row_norms(y, "y")
    xh = x / nx[:, None]
    yh = y / ny[:, None]
    cos = xh @ yh.T
    gx = (g @ yh - np.sum(g * cos, axis=1)[:, None] * xh) / nx[:, None]
    gy = (g.T @ xh - np.sum(g * cos, axis=0)[:, None] * yh) / ny[:, None]
    return gx, gy


def logsumexp(v, axis=None):
    """log(sum(exp(v))) using the max-shift trick.

    With ``axis=None`` the input must be a non-empty vector and a float is
    returned; otherwise the reduction runs along ``axis`` of an array.
    """
    arr = np.asarray(v, dtype=np.float64)
    if arr.size == 0:
        raise ShapeError("logsumexp of an empty vector")
    if axis is None:
        arr = as_vector(arr)
        m = arr.max()
        if not np.isfinite(m):
            return float(m)
        return float(m + np.log(np.sum(np.exp(arr - m))))
    m = np.max(arr, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = m + np.log(np.sum(np.exp(arr - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def log_softmax(logits, axis=-1):
    arr = np.asarray(logits, dtype=np.float64)
    return arr - np.expand_dims(logsumexp(arr, axis=axis), axis)


def softmax_row(v, temperature=1.0):
    """Softmax of ``v / temperature`` computed in the log domain."""
    if not temperature > 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    z = as_vector(v) / temperature
    if z.size == 0:
        raise ShapeError("softmax of an empty vector")
    p = np.exp(z - logsumexp(z))
    return p / p.sum()
