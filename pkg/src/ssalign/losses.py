"""Alignment losses: symmetric InfoNCE, symmetric OT matching cost, their
weighted combination, and the pixelwise BCE used for guidance."""

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ParameterError, ShapeError
from .features import build_cost_matrix
from .linalg import as_matrix, cosine_matrix, log_softmax, row_norms
from .ot import Marginals, SinkhornConfig, solve_symmetric

DEFAULT_TEMPERATURE = 0.07
DEFAULT_CLAMP_EPS = 1e-7


@dataclass(frozen=True)
class AlignmentConfig:
    lambda_global: float = 1.0
    lambda_local: float = 1.0
    temperature: float = DEFAULT_TEMPERATURE
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)

    def __post_init__(self):
        if self.lambda_global < 0 or self.lambda_local < 0:
            raise ParameterError("loss weights must be non-negative")
        if self.lambda_global == 0 and self.lambda_local == 0:
            raise ParameterError("at least one loss weight must be positive")
        if not self.temperature > 0:
            raise ParameterError(f"temperature must be positive, got {self.temperature}")


@dataclass(frozen=True)
class BatchFeatures:
    """Row ``i`` of ``image_globals`` is paired with row ``i`` of ``text_globals``."""

    image_globals: np.ndarray
    text_globals: np.ndarray

    def __post_init__(self):
        img = as_matrix(self.image_globals, "image_globals")
        txt = as_matrix(self.text_globals, "text_globals")
        if img.shape[0] != txt.shape[0]:
            raise ShapeError(f"batch sizes differ: {img.shape[0]} vs {txt.shape[0]}")
        if img.shape[1] != txt.shape[1]:
            raise ShapeError(f"feature dims differ: {img.shape[1]} vs {txt.shape[1]}")
        if img.shape[0] < 1:
            raise ShapeError("batch must contain at least one pair")
        row_norms(img, "image_globals")
        row_norms(txt, "text_globals")
        object.__setattr__(self, "image_globals", img)
        object.__setattr__(self, "text_globals", txt)

    @property
    def size(self):
        return self.image_globals.shape[0]

    def swapped(self):
        return BatchFeatures(self.text_globals, self.image_globals)


def similarity_logits(batch, temperature):
    if not temperature > 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    return cosine_matrix(batch.image_globals, batch.text_globals) / temperature


def infonce_symmetric(batch, temperature=DEFAULT_TEMPERATURE):
    """Mean of image-to-text and text-to-image cross-entropy, diagonal as target."""
    s = similarity_logits(batch, temperature)
    row_ce = -np.mean(np.diag(log_softmax(s, axis=1)))
    col_ce = -np.mean(np.diag(log_softmax(s, axis=0)))
    return float(0.5 * (row_ce + col_ce))


def local_ot_loss(cost, marg=None, cfg=None):
    """Average transport cost of the two directional plans.

    Returns ``(value, (T_it, T_ti))``.
    """
    cost = as_matrix(cost, "cost")
    forward, backward = solve_symmetric(cost, marg, cfg)
    value = 0.5 * (np.sum(forward.plan * cost) + np.sum(backward.plan * cost.T))
    return float(value), (forward, backward)


def combine(lambda_global, global_loss, lambda_local, local_loss):
    return lambda_global * global_loss + lambda_local * local_loss


def local_losses(token_pairs, cfg):
    values = []
    for img, txt in token_pairs:
        cost = build_cost_matrix(img, txt)
        value, _ = local_ot_loss(cost, Marginals.uniform(img.count, txt.count), cfg)
        values.append(value)
    return values


def align_loss(batch, token_pairs, cfg=None):
    """``lambda_global * InfoNCE + lambda_local * mean local OT loss``."""
    cfg = cfg or AlignmentConfig()
    if len(token_pairs) != batch.size:
        raise ShapeError(f"{len(token_pairs)} token pairs for a batch of {batch.size}")
    global_loss = infonce_symmetric(batch, cfg.temperature)
    local_loss = float(np.mean(local_losses(token_pairs, cfg.sinkhorn)))
    return combine(cfg.lambda_global, global_loss, cfg.lambda_local, local_loss)


def _check_unit_grids(pred, target):
    pred = as_matrix(pred, "pred")
    target = as_matrix(target, "target")
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {pred.shape} != target shape {target.shape}")
    for name, g in (("pred", pred), ("target", target)):
        if g.min() < 0.0 or g.max() > 1.0:
            raise InputError(f"{name} has entries outside [0, 1]")
    return pred, target


def bce(pred, target, clamp_eps=DEFAULT_CLAMP_EPS):
    """Mean binary cross-entropy with ``pred`` clamped to [eps, 1 - eps]."""
    pred, target = _check_unit_grids(pred, target)
    p = np.clip(pred, clamp_eps, 1.0 - clamp_eps)
    return float(np.mean(-(target * np.log(p) + (1.0 - target) * np.log1p(-p))))
