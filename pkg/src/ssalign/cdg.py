"""Composite directional guidance.

A caption's spatial keywords become a Gaussian prior. The prior is placed
inside a box cut from the attention map and multiplied into that map to give
the guidance mask, and the mask then builds a pseudo-target for the
prediction.

Grids are float64 arrays of shape (H, W) indexed ``[row, col]``; pixel
``(r, c)`` sits at coordinates ``y = r``, ``x = c``.
"""

import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InputError, ParameterError, ShapeError
from .linalg import as_matrix
from .losses import DEFAULT_CLAMP_EPS, bce


class Direction(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    UPPER = "upper"
    LOWER = "lower"
    BILATERAL = "bilateral"


class Combine(str, Enum):
    PRODUCT = "product"
    MAX = "max"
    SUM = "sum"


DEFAULT_LEXICON = {
    "left": Direction.LEFT,
    "right": Direction.RIGHT,
    "upper": Direction.UPPER,
    "lower": Direction.LOWER,
    "bilateral": Direction.BILATERAL,
    "superior": Direction.UPPER,
    "inferior": Direction.LOWER,
    "both lungs": Direction.BILATERAL,
}

# (x, y) as fractions of (W, H)
ANCHORS = {
    Direction.LEFT: (0.25, 0.5),
    Direction.RIGHT: (0.75, 0.5),
    Direction.UPPER: (0.5, 0.25),
    Direction.LOWER: (0.5, 0.75),
}


@dataclass(frozen=True)
class DirectionalCue:
    directions: frozenset = frozenset()
    matched_spans: tuple = ()

    def sorted_names(self):
        return sorted(d.value for d in self.directions)


@dataclass(frozen=True)
class GaussianPriorConfig:
    sigma_frac: float = 0.25
    combine: Combine = Combine.PRODUCT
    radiological_convention: bool = False

    def __post_init__(self):
        if not 0 < self.sigma_frac <= 1:
            raise ParameterError(f"sigma_frac must lie in (0, 1], got {self.sigma_frac}")
        object.__setattr__(self, "combine", Combine(self.combine))


@dataclass(frozen=True)
class BBox:
    row_min: int
    row_max: int
    col_min: int
    col_max: int

    @property
    def height(self):
        return self.row_max - self.row_min + 1

    @property
    def width(self):
        return self.col_max - self.col_min + 1

    def contains(self, other):
        return (
            self.row_min <= other.row_min
            and other.row_max <= self.row_max
            and self.col_min <= other.col_min
            and other.col_max <= self.col_max
        )

    def as_list(self):
        return [self.row_min, self.row_max, self.col_min, self.col_max]


def _lexicon_pattern(lexicon):
    # longest phrases first so "both lungs" wins over any single word inside it
    phrases = sorted(lexicon, key=len, reverse=True)
    alternatives = "|".join(r"\s+".join(map(re.escape, p.split())) for p in phrases)
    return re.compile(rf"\b(?:{alternatives})\b", re.IGNORECASE)


def parse_directions(text, lexicon=None):
    """Collect directional keywords from ``text``.

    Matching is case-insensitive on whole words. When a caption names both
    sides, or says "bilateral", the cue holds ``BILATERAL`` in place of
    ``LEFT`` and ``RIGHT``.
    """
    lexicon = {k.lower(): Direction(v) for k, v in (lexicon or DEFAULT_LEXICON).items()}
    found = set()
    spans = []
    for m in _lexicon_pattern(lexicon).finditer(text):
        key = " ".join(m.group(0).lower().split())
        found.add(lexicon[key])
        spans.append((m.start(), m.end()))
    if Direction.BILATERAL in found or {Direction.LEFT, Direction.RIGHT} <= found:
        found -= {Direction.LEFT, Direction.RIGHT}
        found.add(Direction.BILATERAL)
    return DirectionalCue(frozenset(found), tuple(spans))


def _gauss(coords, center, sigma):
    return np.exp(-((coords - center) ** 2) / (2.0 * sigma**2))


def _anchors(cfg):
    anchors = dict(ANCHORS)
    if cfg.radiological_convention:
        anchors[Direction.LEFT], anchors[Direction.RIGHT] = (
            anchors[Direction.RIGHT],
            anchors[Direction.LEFT],
        )
    return anchors


def _axis_factors(direction, anchors, ys, xs, H, W, sigma):
    """Column profile over x and row profile over y for one direction."""
    if direction is Direction.BILATERAL:
        lx = _gauss(xs, anchors[Direction.LEFT][0] * W, sigma)
        rx = _gauss(xs, anchors[Direction.RIGHT][0] * W, sigma)
        return np.maximum(lx, rx), _gauss(ys, 0.5 * H, sigma)
    fx, fy = anchors[direction]
    return _gauss(xs, fx * W, sigma), _gauss(ys, fy * H, sigma)


def gaussian_prior(cue, H, W, cfg=None):
    """Composite Gaussian prior over an H x W grid, peak rescaled to 1.

    PRODUCT intersects the directions. Each direction constrains only the
    axis it names (Left/Right/Bilateral pick the column, Upper/Lower the
    row). An axis no direction names falls back to a centred profile, so
    "left lower" peaks at (0.75 H, 0.25 W). MAX and SUM combine the full
    per-direction 2-D Gaussians instead.
    """
    cfg = cfg or GaussianPriorConfig()
    if H < 1 or W < 1:
        raise ShapeError(f"grid must be at least 1x1, got {H}x{W}")
    if not cue.directions:
        return np.ones((H, W))
    sigma = cfg.sigma_frac * min(H, W)
    ys = np.arange(H, dtype=np.float64)
    xs = np.arange(W, dtype=np.float64)
    anchors = _anchors(cfg)
    order = sorted(cue.directions, key=lambda d: d.value)

    if cfg.combine is Combine.PRODUCT:
        horizontal = {Direction.LEFT, Direction.RIGHT, Direction.BILATERAL}
        col = np.ones(W)
        row = np.ones(H)
        named_x = named_y = False
        for d in order:
            fx, fy = _axis_factors(d, anchors, ys, xs, H, W, sigma)
            if d in horizontal:
                col = col * fx
                named_x = True
            else:
                row = row * fy
                named_y = True
        if not named_x:
            col = _gauss(xs, 0.5 * W, sigma)
        if not named_y:
            row = _gauss(ys, 0.5 * H, sigma)
        grid = np.outer(row, col)
    else:
        layers = []
        for d in order:
            fx, fy = _axis_factors(d, anchors, ys, xs, H, W, sigma)
            layers.append(np.outer(fy, fx))
        stack = np.stack(layers)
        grid = stack.max(axis=0) if cfg.combine is Combine.MAX else stack.sum(axis=0)
    return grid / grid.max()


def normalize_attention(raw):
    """Min-max scale to [0, 1]; a constant map carries no evidence and becomes zeros."""
    raw = as_matrix(raw, "attention")
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo)


def attention_bbox(a_norm, threshold_frac=0.5):
    """Tightest box around pixels at or above ``threshold_frac * max``."""
    if not 0 < threshold_frac <= 1:
        raise ParameterError(f"threshold_frac must lie in (0, 1], got {threshold_frac}")
    a = as_matrix(a_norm, "a_norm")
    H, W = a.shape
    peak = a.max()
    if peak <= 0:
        return BBox(0, H - 1, 0, W - 1)
    rows, cols = np.nonzero(a >= threshold_frac * peak)
    return BBox(int(rows.min()), int(rows.max()), int(cols.min()), int(cols.max()))


def _bilinear_resize(src, out_h, out_w):
    # half-pixel centres, edge-clamped sampling
    h, w = src.shape

    def weights(n_out, n_in):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        lo = np.floor(pos).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    r0, r1, wr = weights(out_h, h)
    c0, c1, wc = weights(out_w, w)
    top = src[r0][:, c0] * (1 - wc) + src[r0][:, c1] * wc
    bottom = src[r1][:, c0] * (1 - wc) + src[r1][:, c1] * wc
    return top * (1 - wr)[:, None] + bottom * wr[:, None]


def inject_prior(prior, box, H, W):
    """Resample ``prior`` into ``box`` on an H x W canvas of ones."""
    prior = as_matrix(prior, "prior")
    if not (0 <= box.row_min <= box.row_max < H and 0 <= box.col_min <= box.col_max < W):
        raise ShapeError(f"box {box.as_list()} does not fit a {H}x{W} grid")
    out = np.ones((H, W))
    patch = _bilinear_resize(prior, box.height, box.width)
    out[box.row_min : box.row_max + 1, box.col_min : box.col_max + 1] = np.clip(patch, 0.0, 1.0)
    return out


def _same_shape(a, b, names):
    a = as_matrix(a, names[0])
    b = as_matrix(b, names[1])
    if a.shape != b.shape:
        raise ShapeError(f"{names[0]} shape {a.shape} != {names[1]} shape {b.shape}")
    return a, b


def fuse_guidance(a_norm, m_pri):
    a, m = _same_shape(a_norm, m_pri, ("a_norm", "m_pri"))
    for name, g in (("a_norm", a), ("m_pri", m)):
        if g.min() < 0 or g.max() > 1:
            raise InputError(f"{name} has entries outside [0, 1]")
    return a * m


def refine_prediction(p_pred, m_guide):
    """Prediction gated by the guidance mask, rescaled back to the prediction's peak."""
    p, m = _same_shape(p_pred, m_guide, ("p_pred", "m_guide"))
    if p.min() < 0 or p.max() > 1:
        raise InputError("p_pred has entries outside [0, 1]")
    fused = p * m
    peak = fused.max()
    if peak <= 0:
        return np.zeros_like(fused)
    return np.clip(fused * (p.max() / peak), 0.0, 1.0)


def guidance_loss(p_pred, m_guide, clamp_eps=DEFAULT_CLAMP_EPS):
    """BCE of the prediction against its refined pseudo-target (held constant)."""
    target = refine_prediction(p_pred, m_guide)
    return bce(p_pred, target, clamp_eps)


@dataclass
class GuidanceResult:
    cue: DirectionalCue
    a_norm: np.ndarray
    bbox: BBox
    prior: np.ndarray
    m_pri: np.ndarray
    m_guide: np.ndarray
    p_refined: np.ndarray
    loss: float
    extras: dict = field(default_factory=dict)


def run_guidance(text, attention, p_pred=None, cfg=None, threshold_frac=0.5):
    """Caption + raw attention map -> every intermediate grid and the loss.

    Without an explicit prediction the normalized attention stands in for it.
    """
    cue = parse_directions(text)
    a_norm = normalize_attention(attention)
    H, W = a_norm.shape
    box = attention_bbox(a_norm, threshold_frac)
    prior = gaussian_prior(cue, H, W, cfg)
    m_pri = inject_prior(prior, box, H, W)
    m_guide = fuse_guidance(a_norm, m_pri)
    pred = a_norm if p_pred is None else as_matrix(p_pred, "p_pred")
    p_refined = refine_prediction(pred, m_guide)
    loss = bce(pred, p_refined)
    return GuidanceResult(cue, a_norm, box, prior, m_pri, m_guide, p_refined, loss)


def quadrant_masses(grid):
    """Total mass in each quadrant, keyed UL, UR, LL, LR (image orientation)."""
    g = as_matrix(grid, "grid")
    H, W = g.shape
    h, w = H // 2, W // 2
    return {
        "UL": float(g[:h, :w].sum()),
        "UR": float(g[:h, w:].sum()),
        "LL": float(g[h:, :w].sum()),
        "LR": float(g[h:, w:].sum()),
    }
