"""Token feature sets and the cosine-distance cost matrix between them."""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateInputError, ShapeError
from .linalg import as_matrix, cosine_matrix, cosine_vjp


class Modality(str, Enum):
    IMAGE = "image"
    TEXT = "text"


@dataclass(frozen=True)
class FeatureSet:
    """``count`` tokens of dimension ``dim`` for one modality.

    Every token must have non-zero norm, since costs are cosine based.
    """

    modality: Modality
    tokens: np.ndarray

    def __post_init__(self):
        tokens = as_matrix(self.tokens, f"{self.modality.value} tokens")
        if tokens.shape[0] < 1 or tokens.shape[1] < 1:
            raise ShapeError(f"feature set needs at least one token and one dim, got {tokens.shape}")
        norms = np.linalg.norm(tokens, axis=1)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise DegenerateInputError(
                f"{self.modality.value} token {int(zero[0])} has zero norm"
            )
        tokens = tokens.copy()
        tokens.setflags(write=False)
        object.__setattr__(self, "tokens", tokens)

    @property
    def count(self):
        return self.tokens.shape[0]

    @property
    def dim(self):
        return self.tokens.shape[1]

    @classmethod
    def image(cls, tokens):
        return cls(Modality.IMAGE, tokens)

    @classmethod
    def text(cls, tokens):
        return cls(Modality.TEXT, tokens)


def aggregate_global(fs):
    """Mean token of a feature set (may be the zero vector on cancellation)."""
    return fs.tokens.mean(axis=0)


def _check_pair(img, txt):
    if img.dim != txt.dim:
        raise ShapeError(f"feature dimension mismatch: image {img.dim} vs text {txt.dim}")


def build_cost_matrix(img, txt):
    """N x L matrix of ``1 - cos(img_i, txt_j)``; every entry lies in [0, 2]."""
    _check_pair(img, txt)
    return 1.0 - cosine_matrix(img.tokens, txt.tokens)


def cost_jacobian_vjp(img, txt, upstream):
    """Pull ``upstream`` = dLoss/dM back to (dLoss/d img.tokens, dLoss/d txt.tokens)."""
    _check_pair(img, txt)
    upstream = as_matrix(upstream, "upstream")
    if upstream.shape != (img.count, txt.count):
        raise ShapeError(
            f"upstream has shape {upstream.shape}, expected {(img.count, txt.count)}"
        )
    # dM/dcos = -1
    gx, gy = cosine_vjp(img.tokens, txt.tokens, -upstream)
    return gx, gy
