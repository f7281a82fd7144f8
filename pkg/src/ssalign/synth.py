"""Seeded synthetic fixtures: clustered token pairs with known matchings,
blob attention maps and QaTa-style captions."""

import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .features import FeatureSet, aggregate_global
from .losses import BatchFeatures

QUADRANTS = ("LL", "LR", "UL", "UR", "Bilateral")

CAPTIONS = {
    "LL": "Unilateral pulmonary infection, one infected area, lower left lung.",
    "LR": "Unilateral pulmonary infection, one infected area, lower right lung.",
    "UL": "Unilateral pulmonary infection, one infected area, upper left lung.",
    "UR": "Unilateral pulmonary infection, one infected area, upper right lung.",
    "Bilateral": (
        "Bilateral pulmonary infection, two infected areas, "
        "lower left lung and lower right lung."
    ),
}

# blob centres as (row, col) fractions
_BLOB_ROW = {"L": 0.7, "U": 0.3}
_BLOB_COL = {"L": 0.25, "R": 0.75}
BLOB_SCALE_FRAC = 0.11
BLOB_ORDER = 4


def stream(seed, label):
    """Independent generator for one named field of a fixture."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(zlib.crc32(label.encode()),)))


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    batch: int = 8
    tokens_per_side: tuple = (6, 6)
    dim: int = 16
    cluster_noise: float = 0.05
    grid: tuple = (64, 64)
    quadrant: str = None
    permute: bool = True

    def __post_init__(self):
        n, m = self.tokens_per_side
        if min(self.batch, n, m, self.dim) < 1:
            raise ParameterError("batch, token counts and dim must all be >= 1")
        if self.cluster_noise < 0:
            raise ParameterError("cluster_noise must be >= 0")
        if min(self.grid) < 1:
            raise ParameterError("grid must be at least 1x1")
        if self.quadrant is not None and self.quadrant not in QUADRANTS:
            raise ParameterError(f"quadrant must be one of {QUADRANTS}")
        object.__setattr__(self, "tokens_per_side", tuple(int(k) for k in self.tokens_per_side))
        object.__setattr__(self, "grid", tuple(int(k) for k in self.grid))


@dataclass
class SynthInstance:
    batch_features: BatchFeatures
    token_pairs: list
    truth_matching: list
    attention: np.ndarray
    caption: str
    truth_quadrant: str


def blob_attention(H, W, blobs, scale_frac=BLOB_SCALE_FRAC, order=BLOB_ORDER):
    """Sum of flat-topped blobs ``weight * exp(-(r / s) ** order)``.

    ``blobs`` holds (row_frac, col_frac, weight); ``s = scale_frac * min(H, W)``.
    Order 2 is an ordinary Gaussian; higher orders give lesion-like plateaus.
    """
    ys = np.arange(H, dtype=np.float64)[:, None]
    xs = np.arange(W, dtype=np.float64)[None, :]
    scale = scale_frac * min(H, W)
    out = np.zeros((H, W))
    for rf, cf, weight in blobs:
        r = np.hypot(ys - rf * H, xs - cf * W)
        out += weight * np.exp(-((r / scale) ** order))
    return out


def two_blob_attention(H, W, row_frac=_BLOB_ROW["L"]):
    """Equal blobs over both lungs at one height."""
    return blob_attention(H, W, [(row_frac, _BLOB_COL["L"], 1.0), (row_frac, _BLOB_COL["R"], 1.0)])


def quadrant_attention(quadrant, H, W):
    """Attention covering both lungs at the height of ``quadrant``.

    Only the caption tells the lesion side apart, which is the case the
    directional prior exists for.
    """
    vertical = "L" if quadrant == "Bilateral" else quadrant[0]
    return two_blob_attention(H, W, _BLOB_ROW[vertical])


def _unit_rows(x):
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def make_aligned_tokens(spec):
    B = spec.batch
    N, L = spec.tokens_per_side
    D = spec.dim
    H, W = spec.grid

    centers = _unit_rows(stream(spec.seed, "centers").standard_normal((B, N, D)))
    perm_rng = stream(spec.seed, "perm")
    img_noise = stream(spec.seed, "img_noise").standard_normal((B, N, D))
    txt_noise = stream(spec.seed, "txt_noise").standard_normal((B, L, D))

    pairs, truth = [], []
    for b in range(B):
        if spec.permute:
            order = perm_rng.permutation(N)
        else:
            order = np.arange(N)
        if L <= N:
            source = order[:L]
        else:
            source = np.concatenate([order, perm_rng.integers(0, N, L - N)])
        img = centers[b] + spec.cluster_noise * img_noise[b]
        txt = centers[b][source] + spec.cluster_noise * txt_noise[b]
        # truth[i] = text index carrying image token i's centre, -1 if none
        match = np.full(N, -1)
        for j in range(L - 1, -1, -1):
            match[source[j]] = j
        pairs.append((FeatureSet.image(img), FeatureSet.text(txt)))
        truth.append(match)

    batch = BatchFeatures(
        np.stack([aggregate_global(i) for i, _ in pairs]),
        np.stack([aggregate_global(t) for _, t in pairs]),
    )
    quadrant = spec.quadrant
    if quadrant is None:
        quadrant = QUADRANTS[int(stream(spec.seed, "quadrant").integers(len(QUADRANTS)))]
    return SynthInstance(
        batch_features=batch,
        token_pairs=pairs,
        truth_matching=truth,
        attention=quadrant_attention(quadrant, H, W),
        caption=CAPTIONS[quadrant],
        truth_quadrant=quadrant,
    )
